#include <doctest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "magnn/error.hpp"
#include "magnn/graph.hpp"
#include "oracles.hpp"

using namespace magnn;

TEST_CASE("featureless types receive one-hot identity features") {
  GraphInput in;
  auto u = in.schema.add_node_type("U", "user");
  auto a = in.schema.add_node_type("A", "artist");
  in.schema.add_relation("U-A", u, a);
  in.node_counts = {2, 1};
  in.edges = {{RelationId(0), 0, 0}};
  auto g = build_graph(in);
  CHECK(g.features(u).is_identity());
  CHECK(g.features(u).to_dense() == Matrix::identity(2));
  CHECK(g.features(a).dim() == 1);
}

TEST_CASE("supplied features override the one-hot default") {
  GraphInput in;
  auto u = in.schema.add_node_type("U");
  in.node_counts = {2};
  in.features = {Matrix(2, 3, 0.5)};
  auto g = build_graph(in);
  CHECK_FALSE(g.features(u).is_identity());
  CHECK(g.features(u).dim() == 3);
  CHECK(g.features(u).values()(1, 2) == 0.5);
}

TEST_CASE("single type with no edges is a valid empty graph") {
  GraphInput in;
  auto t = in.schema.add_node_type("X");
  in.node_counts = {3};
  auto g = build_graph(in);
  CHECK(g.node_count(t) == 3);
  CHECK(g.num_relations() == 0);
}

TEST_CASE("schema violations are rejected") {
  GraphInput in;
  auto u = in.schema.add_node_type("U");
  auto a = in.schema.add_node_type("A");
  in.schema.add_relation("U-A", u, a);
  in.node_counts = {2, 1};

  SUBCASE("out of range source") {
    in.edges = {{RelationId(0), 5, 0}};
    CHECK_THROWS_AS(build_graph(in), SchemaError);
  }
  SUBCASE("undeclared relation") {
    in.edges = {{RelationId(3), 0, 0}};
    CHECK_THROWS_AS(build_graph(in), SchemaError);
  }
  SUBCASE("duplicate edge") {
    in.edges = {{RelationId(0), 1, 0}, {RelationId(0), 1, 0}};
    CHECK_THROWS_AS(build_graph(in), SchemaError);
  }
  SUBCASE("feature rows mismatch") {
    in.features = {Matrix(3, 2)};
    CHECK_THROWS_AS(build_graph(in), ShapeError);
  }
  SUBCASE("wrong node_counts length") {
    in.node_counts = {2};
    CHECK_THROWS_AS(build_graph(in), ShapeError);
  }
}

TEST_CASE("homogeneous relation treats (a,b) and (b,a) as the same edge") {
  GraphInput in;
  auto u = in.schema.add_node_type("U");
  in.schema.add_relation("U-U", u, u);
  in.node_counts = {3};
  in.edges = {{RelationId(0), 0, 1}, {RelationId(0), 1, 0}};
  CHECK_THROWS_AS(build_graph(in), SchemaError);
  in.edges = {{RelationId(0), 2, 1}, {RelationId(0), 0, 0}};
  auto g = build_graph(in);
  CHECK(g.neighbors(RelationId(0), u, 1).size() == 1);
  CHECK(g.neighbors(RelationId(0), u, 2)[0] == 1);
  CHECK(g.neighbors(RelationId(0), u, 0)[0] == 0);  // self loop stored once
  auto e = g.edges(RelationId(0));
  CHECK(e == std::vector<std::pair<std::uint32_t, std::uint32_t>>{{0, 0}, {1, 2}});
}

TEST_CASE("property: degree sums, transposition and edge round trip on random graphs") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = oracle::random_graph_input(rng, 4, 50);
    auto g = build_graph(in);
    for (std::size_t r = 0; r < g.num_relations(); ++r) {
      const auto rid = static_cast<RelationId>(r);
      const auto& rel = g.schema().relation(rid);
      const auto& fwd = g.forward(rid);
      const auto& rev = g.reverse(rid);
      // Round trip against the input, normalized.
      std::vector<std::pair<std::uint32_t, std::uint32_t>> expected;
      for (const auto& e : in.edges)
        if (e.relation == rid)
          expected.emplace_back(rel.is_homogeneous() ? std::min(e.source, e.target) : e.source,
                                rel.is_homogeneous() ? std::max(e.source, e.target) : e.target);
      std::sort(expected.begin(), expected.end());
      REQUIRE(g.edges(rid) == expected);
      CHECK(g.edge_count(rid) == expected.size());

      std::size_t fsum = fwd.neighbors.size(), rsum = rev.neighbors.size();
      if (rel.is_homogeneous()) {
        std::size_t loops = std::count_if(expected.begin(), expected.end(), [](auto p) { return p.first == p.second; });
        CHECK(fsum == 2 * expected.size() - loops);
      } else {
        CHECK(fsum == expected.size());
      }
      CHECK(fsum == rsum);
      // Reverse is the transpose of forward.
      for (std::uint32_t u = 0; u + 1 < fwd.offsets.size(); ++u)
        for (auto v : fwd.of(u)) {
          auto back = rev.of(v);
          CHECK(std::binary_search(back.begin(), back.end(), u));
        }
    }
  }
}

TEST_CASE("splits and labels") {
  GraphInput in;
  auto m = in.schema.add_node_type("M");
  in.node_counts = {4};
  in.labels = {std::vector<int>{0, 1, 2, -1}};
  in.splits = {std::vector<Split>{Split::Train, Split::Test, Split::Test, Split::None}};
  auto g = build_graph(in);
  CHECK(g.num_classes(m) == 3);
  CHECK(g.nodes_in_split(m, Split::Test) == std::vector<std::uint32_t>{1, 2});
}
