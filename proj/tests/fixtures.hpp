#pragma once

#include "magnn/graph.hpp"
#include "magnn/matrix.hpp"

namespace fixtures {

/// IMDb-shaped schema: M, D, A with relations M-D and M-A.
inline magnn::Schema imdb_schema() {
  magnn::Schema s;
  auto m = s.add_node_type("M", "movie");
  auto d = s.add_node_type("D", "director");
  auto a = s.add_node_type("A", "actor");
  s.add_relation("M-D", m, d);
  s.add_relation("M-A", m, a);
  return s;
}

/// Last.fm-shaped schema: U, A, T with relations U-U, U-A, A-T.
inline magnn::Schema lastfm_schema() {
  magnn::Schema s;
  auto u = s.add_node_type("U", "user");
  auto a = s.add_node_type("A", "artist");
  auto t = s.add_node_type("T", "tag");
  s.add_relation("U-U", u, u);
  s.add_relation("U-A", u, a);
  s.add_relation("A-T", a, t);
  return s;
}

/// DBLP-shaped schema: A, P, T, V with relations A-P, P-T, P-V.
inline magnn::Schema dblp_schema() {
  magnn::Schema s;
  auto a = s.add_node_type("A", "author");
  auto p = s.add_node_type("P", "paper");
  auto t = s.add_node_type("T", "term");
  auto v = s.add_node_type("V", "venue");
  s.add_relation("A-P", a, p);
  s.add_relation("P-T", p, t);
  s.add_relation("P-V", p, v);
  return s;
}

/// Users {Bob=0, Alice=1}, artists {Beatles=0, Queen=1}, tags {Rock=0}.
/// Bob listens to Beatles, Alice to Queen, both artists are tagged Rock.
inline magnn::GraphInput lastfm_toy() {
  magnn::GraphInput in;
  in.schema = lastfm_schema();
  in.node_counts = {2, 2, 1};
  in.edges = {{magnn::RelationId(1), 0, 0},
              {magnn::RelationId(1), 1, 1},
              {magnn::RelationId(2), 0, 0},
              {magnn::RelationId(2), 1, 0}};
  return in;
}

/// Two types A (2 nodes), B (1 node): A0 - B0 - A1.
inline magnn::GraphInput aba_toy() {
  magnn::GraphInput in;
  auto a = in.schema.add_node_type("A");
  auto b = in.schema.add_node_type("B");
  in.schema.add_relation("A-B", a, b);
  in.node_counts = {2, 1};
  in.edges = {{magnn::RelationId(0), 0, 0}, {magnn::RelationId(0), 1, 0}};
  return in;
}

/// Six-node IMDb-shaped graph: movies 0-2 (3-dim features), director 0,
/// actors 0-1. Movie 2 has no director.
inline magnn::GraphInput imdb_toy() {
  magnn::GraphInput in;
  in.schema = imdb_schema();
  in.node_counts = {3, 1, 2};
  in.edges = {{magnn::RelationId(0), 0, 0}, {magnn::RelationId(0), 1, 0}, {magnn::RelationId(1), 0, 0},
              {magnn::RelationId(1), 1, 1}, {magnn::RelationId(1), 2, 1}, {magnn::RelationId(1), 2, 0}};
  in.features = {magnn::Matrix(3, 3, {0.5, -1.0, 0.2, 0.0, 0.3, 0.9, -0.4, 0.1, 0.7})};
  return in;
}

}  // namespace fixtures
