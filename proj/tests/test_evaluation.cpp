#include <doctest.h>

#include <cmath>
#include <map>

#include "magnn/error.hpp"
#include "magnn/evaluation.hpp"

using namespace magnn;

namespace {

/// Pair-counting form of the adjusted Rand index (Hubert and Arabie),
/// computed over all O(n^2) point pairs.
double pair_counting_ari(const std::vector<int>& a, const std::vector<int>& b) {
  double ss = 0, sd = 0, ds = 0, dd = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      (sa ? (sb ? ss : sd) : (sb ? ds : dd)) += 1;
    }
  return 2 * (ss * dd - sd * ds) / ((ss + sd) * (sd + dd) + (ss + ds) * (ds + dd));
}

/// NMI from explicit probability tables.
double table_nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = double(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1 / n;
    pb[b[i]] += 1 / n;
    pab[{a[i], b[i]}] += 1 / n;
  }
  double mi = 0, ha = 0, hb = 0;
  for (auto& [k, p] : pab) mi += p * std::log2(p / (pa[k.first] * pb[k.second]));
  for (auto& [k, p] : pa) ha -= p * std::log2(p);
  for (auto& [k, p] : pb) hb -= p * std::log2(p);
  return mi / ((ha + hb) / 2);
}

/// Fraction of (positive, negative) pairs ordered correctly, ties half.
double pairwise_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double s = 0;
  for (double p : pos)
    for (double q : neg) s += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return s / double(pos.size() * neg.size());
}

Matrix blobs(Rng& rng, std::size_t per, const std::vector<std::vector<double>>& centers, double sd,
             std::vector<int>& labels) {
  Matrix m(per * centers.size(), centers[0].size());
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (std::size_t i = 0; i < per; ++i) {
      for (std::size_t j = 0; j < centers[c].size(); ++j) m(c * per + i, j) = centers[c][j] + sd * normal01(rng);
      labels.push_back(static_cast<int>(c));
    }
  return m;
}

}  // namespace

TEST_CASE("f1 scores against a hand confusion matrix") {
  std::vector<int> t{0, 0, 1, 1, 2, 2}, p{0, 1, 1, 1, 2, 0};
  auto s = f1_scores(t, p, 3);
  // class 0: tp 1 fp 1 fn 1 -> 0.5; class 1: tp 2 fp 1 -> 0.8; class 2: tp 1 fn 1 -> 2/3
  CHECK(s.macro == doctest::Approx((0.5 + 0.8 + 2.0 / 3) / 3).epsilon(1e-14));
  CHECK(s.micro == doctest::Approx(4.0 / 6).epsilon(1e-14));
  auto perfect = f1_scores(t, t, 3);
  CHECK(perfect.macro == 1.0);
  CHECK(perfect.micro == 1.0);
  CHECK_THROWS_AS(f1_scores(t, std::vector<int>{0}, 3), ShapeError);
}

TEST_CASE("linear probe: separable data and chance level") {
  Rng rng(1);
  std::vector<int> y;
  auto x = blobs(rng, 40, {{-3, 0}, {3, 0}}, 0.5, y);
  auto r = linear_probe(x, y, 0.5, 7);
  CHECK(r.mean.macro == doctest::Approx(1.0));
  CHECK(r.mean.micro == doctest::Approx(1.0));
  CHECK(r.runs == 10);

  std::vector<int> y3;
  Matrix noise(600, 4);
  for (auto& v : noise.data) v = normal01(rng);
  for (int i = 0; i < 600; ++i) y3.push_back(i % 3);
  auto c = linear_probe(noise, y3, 0.5, 3);
  CHECK(std::abs(c.mean.micro - 1.0 / 3) < 0.05);

  // A rare class forces redraws until the training split contains it.
  std::vector<int> rare(40, 0);
  rare[17] = 1;
  rare[33] = 1;
  Matrix z(40, 1);
  for (int i = 0; i < 40; ++i) z(i, 0) = rare[i] ? 5.0 : normal01(rng);
  CHECK_NOTHROW(linear_probe(z, rare, 0.2, 5));
  CHECK_THROWS_AS(linear_probe(z, rare, 1.0, 5), ConfigError);
}

TEST_CASE("property: probe metrics stay within [0, 1]") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> y;
    auto x = blobs(rng, 15, {{0, 0}, {1, 1}, {0, 1}}, 1.0, y);
    for (double f : {0.2, 0.4, 0.6, 0.8}) {
      auto r = linear_probe(x, y, f, trial, 3);
      CHECK(r.mean.macro >= 0.0);
      CHECK(r.mean.macro <= 1.0);
      CHECK(r.mean.micro <= 1.0);
    }
  }
}

TEST_CASE("cluster_eval: blobs and degenerate input") {
  Rng rng(2);
  std::vector<int> y;
  auto x = blobs(rng, 30, {{-10, -10}, {10, 10}}, 0.5, y);
  auto s = cluster_eval(x, y, 2, 1);
  CHECK(s.nmi == doctest::Approx(1.0));
  CHECK(s.ari == doctest::Approx(1.0));

  Matrix same(4, 2, 1.0);
  std::vector<int> two{0, 0, 1, 1};
  auto d = cluster_eval(same, two, 2, 1);
  CHECK(d.ari == 0.0);
  CHECK(std::isfinite(d.nmi));
  CHECK_THROWS_AS(cluster_eval(same, two, 5, 1), DataError);
  CHECK_THROWS_AS(cluster_eval(same, two, 1, 1), ConfigError);
}

TEST_CASE("kmeans ties go to the lowest centroid index") {
  // The middle point is equidistant from both clusters.
  Matrix x(5, 1, std::vector<double>{-2, -2, 0, 2, 2});
  auto r = kmeans(x, 2, 3);
  CHECK(r.assignment[2] == std::min(r.assignment[0], r.assignment[3]));
}

TEST_CASE("NMI and ARI on a 12-point hand dataset") {
  std::vector<int> truth{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  std::vector<int> found{0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 0};
  CHECK(ari(truth, found) == doctest::Approx(pair_counting_ari(truth, found)).epsilon(1e-12));
  CHECK(nmi(truth, found) == doctest::Approx(table_nmi(truth, found)).epsilon(1e-12));
  CHECK(ari(truth, truth) == 1.0);
  CHECK(nmi(truth, truth) == doctest::Approx(1.0));
  std::vector<int> single(12, 0);
  CHECK(ari(truth, single) == 0.0);
  CHECK(nmi(truth, single) == 0.0);
}

TEST_CASE("property: ARI matches pair counting and is label-permutation invariant") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + uniform_index(rng, 30);
    std::vector<int> a(n), b(n), relabeled(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(uniform_index(rng, 4));
      b[i] = static_cast<int>(uniform_index(rng, 3));
      relabeled[i] = 7 - b[i];
    }
    const double expect = pair_counting_ari(a, b);
    if (std::isfinite(expect)) CHECK(ari(a, b) == doctest::Approx(expect).epsilon(1e-10));
    CHECK(ari(a, b) == doctest::Approx(ari(a, relabeled)));
    CHECK(nmi(a, b) == doctest::Approx(nmi(a, relabeled)));
    CHECK(nmi(a, b) >= 0.0);
    CHECK(nmi(a, b) <= 1.0);
  }
}

TEST_CASE("AUC and AP examples") {
  std::vector<double> pos{0.9, 0.8}, neg{0.1, 0.2};
  CHECK(roc_auc(pos, neg) == 1.0);
  CHECK(average_precision(pos, neg) == 1.0);
  std::vector<double> flat(3, 0.5);
  CHECK(roc_auc(flat, flat) == 0.5);

  std::vector<double> p6{0.9, 0.4, 0.4}, n6{0.4, 0.7, 0.1};
  CHECK(roc_auc(p6, n6) == doctest::Approx(pairwise_auc(p6, n6)).epsilon(1e-15));

  // ranked: 0.9(+) 0.8(-) 0.6(+) 0.3(-) -> 0.5 * 1 + 0.5 * 2/3
  std::vector<double> pa{0.9, 0.6}, na{0.8, 0.3};
  CHECK(average_precision(pa, na) == doctest::Approx(0.5 + 1.0 / 3).epsilon(1e-15));
  CHECK_THROWS_AS(roc_auc({}, neg), DataError);
}

TEST_CASE("property: AUC equals the pairwise oracle and ignores monotone transforms") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(1 + uniform_index(rng, 10)), n(1 + uniform_index(rng, 10));
    for (auto& v : p) v = std::round(4 * normal01(rng)) / 2;  // coarse values produce ties
    for (auto& v : n) v = std::round(4 * normal01(rng)) / 2;
    const double auc = roc_auc(p, n);
    CHECK(auc == doctest::Approx(pairwise_auc(p, n)).epsilon(1e-14));
    auto tp = p, tn = n;
    for (auto& v : tp) v = std::exp(v) * 3 + 1;
    for (auto& v : tn) v = std::exp(v) * 3 + 1;
    CHECK(roc_auc(tp, tn) == doctest::Approx(auc).epsilon(1e-14));
    const double ap = average_precision(p, n);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);
  }
}

TEST_CASE("link_predict_eval scores dot products") {
  Matrix left(2, 2, {1, 0, 0, 1});
  Matrix right(2, 2, {1, 0, 0, 1});
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pos{{0, 0}, {1, 1}}, neg{{0, 1}, {1, 0}};
  auto s = link_predict_eval(left, right, pos, neg);
  CHECK(s.auc == 1.0);
  CHECK(s.ap == 1.0);
  // Large dot products would all saturate to sigmoid = 1; ranking still works.
  Matrix big(2, 1, {100, 90});
  Matrix one(1, 1, {1});
  std::vector<std::pair<std::uint32_t, std::uint32_t>> p1{{0, 0}}, n1{{1, 0}};
  CHECK(link_predict_eval(big, one, p1, n1).auc == 1.0);
}

TEST_CASE("synth_hetgraph structure") {
  SynthConfig c;
  c.seed = 4;
  auto in = synth_hetgraph(c);
  auto g = build_graph(in);
  const NodeTypeId m{0};
  CHECK(g.node_count(m) == 300);
  CHECK(g.nodes_in_split(m, Split::Train).size() == 30);
  CHECK(g.nodes_in_split(m, Split::Validation).size() == 30);
  CHECK(g.nodes_in_split(m, Split::Test).size() == 240);
  CHECK(g.num_classes(m) == 3);
  CHECK(g.features(m).dim() == 3);
  CHECK(g.features(NodeTypeId{2}).is_identity());

  auto again = synth_hetgraph(c);
  CHECK(again.edges.size() == in.edges.size());

  SUBCASE("p_out = 0 forces same-class neighborhoods") {
    c.p_out = 0.0;
    auto x = build_graph(synth_hetgraph(c));
    auto y = x.labels(m);
    for (RelationId r : {RelationId{0}, RelationId{1}})
      for (std::uint32_t other = 0; other < x.node_count(x.schema().relation(r).target); ++other) {
        auto movies = x.neighbors(r, x.schema().relation(r).target, other);
        for (auto v : movies) CHECK(y[v] == y[movies[0]]);
      }
  }
  SUBCASE("p_in = p_out leaves neighbor classes independent of the movie class") {
    c.p_in = c.p_out = 0.05;
    c.actors = 3000;
    auto x = synth_hetgraph(c);
    // With latent classes independent of edges, two movies sharing an actor
    // agree in class about 1/3 of the time.
    auto gx = build_graph(x);
    auto y = gx.labels(m);
    double same = 0, total = 0;
    for (std::uint32_t a = 0; a < gx.node_count(NodeTypeId{2}); ++a) {
      auto ms = gx.neighbors(RelationId{1}, NodeTypeId{2}, a);
      for (std::size_t i = 0; i < ms.size(); ++i)
        for (std::size_t j = i + 1; j < ms.size(); ++j) {
          same += y[ms[i]] == y[ms[j]];
          total += 1;
        }
    }
    CHECK(std::abs(same / total - 1.0 / 3) < 0.02);
  }
  SynthConfig bad;
  bad.p_in = 0.001;
  CHECK_THROWS_AS(synth_hetgraph(bad), ConfigError);
}

TEST_CASE("synth_bipartite plants denser blocks") {
  SynthLinkConfig c;
  auto in = synth_bipartite(c);
  auto g = build_graph(in);
  CHECK(g.node_count(NodeTypeId{0}) == 200);
  const double expected = 200.0 * (25 * c.p_in + 175 * c.p_out);
  CHECK(std::abs(double(in.edges.size()) - expected) < 5 * std::sqrt(expected));
}

TEST_CASE("EvalReport serializes metrics in order") {
  EvalReport r{"classify", "rot", 0.8, 10, {{"macro_f1", 0.5}, {"micro_f1", 0.25}}};
  CHECK(r.to_json() ==
        R"({"task":"classify","variant":"rot","train_fraction":0.8,"runs":10,"metrics":{"macro_f1":0.5,"micro_f1":0.25}})");
  CHECK(r.metric("micro_f1") == 0.25);
  CHECK_THROWS_AS(r.metric("auc"), ConfigError);
}
