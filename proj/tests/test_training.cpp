#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "fixtures.hpp"
#include "magnn/error.hpp"
#include "magnn/evaluation.hpp"
#include "magnn/training.hpp"
#include "model_support.hpp"

using namespace magnn;
using ad::Tensor;

namespace {

double scalar_log(double p) { return std::log(std::max(p, 1e-12)); }

double scalar_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Small labeled graph for end-to-end training checks.
struct Setup {
  HetGraph graph;
  ModelConfig model;
  std::vector<InstanceTable> tables;
};

Setup small_setup(double noise = 0.1, double p_out = 0.0) {
  SynthConfig sc;
  sc.movies = 60;
  sc.directors = 12;
  sc.actors = 30;
  sc.p_in = 0.2;
  sc.p_out = p_out;
  sc.feature_noise = noise;
  sc.train_fraction = 0.3;
  sc.validation_fraction = 0.2;
  sc.seed = 3;
  Setup s{build_graph(synth_hetgraph(sc)), {}, {}};
  s.model.hidden_dim = 8;
  s.model.heads = 2;
  s.model.attn_dim = 8;
  s.model.out_dim = 3;
  s.model.output_activation = Activation::Softmax;
  s.model.metapaths = {parse_metapath("M-D-M", s.graph.schema()), parse_metapath("M-A-M", s.graph.schema())};
  s.tables = support::tables_for(s.graph, s.model);
  return s;
}

}  // namespace

TEST_CASE("semi_supervised_loss examples") {
  auto perfect = Tensor::constant({2, 3}, {1, 0, 0, 0, 0, 1});
  std::vector<int> y{0, 2};
  std::vector<std::uint32_t> rows{0, 1};
  CHECK(semi_supervised_loss(perfect, y, rows).item() == 0.0);

  auto uniform = Tensor::constant({5, 3}, std::vector<double>(15, 1.0 / 3));
  std::vector<int> y5{0, 1, 2, 0, 1};
  std::vector<std::uint32_t> r5{0, 1, 2, 3, 4};
  CHECK(semi_supervised_loss(uniform, y5, r5).item() == doctest::Approx(5 * std::log(3.0)).epsilon(1e-14));
  CHECK(semi_supervised_loss(uniform, y5, r5).item() == doctest::Approx(5.4931).epsilon(1e-4));

  Rng rng(1);
  std::vector<double> p;
  for (int i = 0; i < 4; ++i) {
    std::vector<double> raw{uniform01(rng), uniform01(rng), uniform01(rng)};
    for (double v : oracle::softmax(raw)) p.push_back(v);
  }
  std::vector<int> y4{2, 0, 1, 1};
  std::vector<std::uint32_t> r4{0, 2, 3};
  double expect = 0.0;
  for (auto v : r4) expect -= scalar_log(p[v * 3 + y4[v]]);
  CHECK(semi_supervised_loss(Tensor::constant({4, 3}, p), y4, r4).item() == doctest::Approx(expect).epsilon(1e-14));

  std::vector<int> bad{0, 3};
  CHECK_THROWS_AS(semi_supervised_loss(perfect, bad, rows), DataError);
  CHECK_THROWS_AS(semi_supervised_loss(Tensor::constant({2, 3}, {1, 1, 0, 0, 0, 1}), y, rows), NumericError);
}

TEST_CASE("unsupervised_loss examples") {
  auto zero = Tensor::zeros({3, 2});
  std::vector<NodePair> pos{{0, 1}, {1, 2}}, neg{{2, 0}};
  CHECK(unsupervised_loss(zero, zero, pos, neg).item() == doctest::Approx(3 * std::log(2.0)).epsilon(1e-14));

  auto big = Tensor::constant({1, 1}, {100.0});
  std::vector<NodePair> one{{0, 0}};
  CHECK(unsupervised_loss(big, big, one, {}).item() < 1e-12);

  Rng rng(2);
  std::vector<double> a(8), b(6);
  for (auto& x : a) x = 2 * uniform01(rng) - 1;
  for (auto& x : b) x = 2 * uniform01(rng) - 1;
  std::vector<NodePair> p2{{0, 1}, {3, 2}}, n2{{1, 0}, {2, 2}, {3, 1}};
  auto dot = [&](NodePair pr) { return a[pr.first * 2] * b[pr.second * 2] + a[pr.first * 2 + 1] * b[pr.second * 2 + 1]; };
  double expect = 0.0;
  for (auto pr : p2) expect -= scalar_log(scalar_sigmoid(dot(pr)));
  for (auto pr : n2) expect -= scalar_log(scalar_sigmoid(-dot(pr)));
  CHECK(unsupervised_loss(Tensor::constant({4, 2}, a), Tensor::constant({3, 2}, b), p2, n2).item() ==
        doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("negative_sample") {
  PairSet pos(2, 2);
  pos.insert(0, 0);
  pos.insert(0, 1);
  pos.insert(1, 0);
  Rng rng(0);
  for (const auto& p : negative_sample(pos, 50, rng)) CHECK(p == NodePair{1, 1});

  Rng r1(9), r2(9);
  CHECK(negative_sample(pos, 20, r1) == negative_sample(pos, 20, r2));

  pos.insert(1, 1);
  CHECK_THROWS_AS(negative_sample(pos, 1, rng), DataError);

  SUBCASE("draws are uniform over unobserved pairs") {
    PairSet p(4, 5);
    p.insert(0, 0);
    p.insert(2, 3);
    p.insert(3, 4);
    const std::size_t draws = 100000, cells = 20 - 3;
    Rng r(4);
    std::map<NodePair, double> count;
    for (const auto& x : negative_sample(p, draws, r)) count[x] += 1;
    CHECK(count.size() == cells);
    const double expected = double(draws) / cells;
    double chi2 = 0.0;
    for (const auto& [k, c] : count) {
      CHECK_FALSE(p.contains(k.first, k.second));
      chi2 += (c - expected) * (c - expected) / expected;
    }
    // chi-square with 16 degrees of freedom: mean 16, sd sqrt(32); 3 sigma bound
    CHECK(chi2 < 16 + 3 * std::sqrt(32.0));
  }
}

TEST_CASE("Adam: L2 folded into the gradient equals an explicit penalty") {
  Rng rng(3);
  std::vector<double> init(6);
  for (auto& x : init) x = 2 * uniform01(rng) - 1;
  const double lambda = 0.1;
  auto make = [&] {
    ModelParams p;
    p.add("w", Tensor::parameter({6}, init));
    return p;
  };
  auto objective = [](const Tensor& w) { return ad::sum(ad::tanh(ad::mul(w, ad::scale(w, 1.5)))); };
  auto a = make(), b = make();
  Adam adam_a(a, 0.05, lambda), adam_b(b, 0.05, 0.0);
  for (int step = 0; step < 2; ++step) {
    a.zero_grad();
    ad::backward(objective(a.get("w")));
    adam_a.step(a);
    b.zero_grad();
    const auto& w = b.get("w");
    ad::backward(ad::add(objective(w), ad::scale(ad::sum(ad::mul(w, w)), lambda / 2)));
    adam_b.step(b);
  }
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(a.get("w").values()[i] == doctest::Approx(b.get("w").values()[i]).epsilon(1e-12));
}

TEST_CASE("one optimizer step with finite-difference gradients matches the analytic step") {
  auto s = small_setup();
  s.model.dropout = 0.0;
  auto labels = s.graph.labels(NodeTypeId(0));
  auto rows = s.graph.nodes_in_split(NodeTypeId(0), Split::Train);
  auto loss_of = [&](const ModelParams& p) {
    return semi_supervised_loss(forward(s.graph, s.tables, p, s.model).output[0], labels, rows);
  };
  auto analytic = init_params(s.graph, s.model, 1);
  auto numeric = analytic.clone();
  ad::backward(loss_of(analytic));
  // Finite-difference gradients written straight into the gradient buffers.
  const double h = 1e-6;
  for (auto& t : numeric.tensors()) {
    auto& g = t.node()->ensure_grad();
    auto data = const_cast<Tensor&>(t).data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + h;
      const double up = loss_of(numeric).item();
      data[i] = keep - h;
      const double down = loss_of(numeric).item();
      data[i] = keep;
      g[i] = (up - down) / (2 * h);
    }
  }
  // Plain SGD-like Adam step (first step moves each coordinate by ~lr*sign(g)),
  // so use a tiny rate where the sign is decided by clearly nonzero gradients.
  Adam oa(analytic, 1e-4, 0.0), on(numeric, 1e-4, 0.0);
  oa.step(analytic);
  on.step(numeric);
  CHECK(std::abs(loss_of(analytic).item() - loss_of(numeric).item()) < 1e-6);
}

TEST_CASE("train: learning rate 0 keeps parameters and losses constant") {
  auto s = small_setup();
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.weight_decay = 0.0;
  tc.dropout = 0.0;
  tc.epochs = 4;
  tc.patience = 4;
  tc.seed = 5;
  auto r = train(s.graph, s.tables, s.model, tc, NodeTypeId(0));
  auto init = init_params(s.graph, s.model, substream_seed(tc.seed, "init"));
  for (std::size_t i = 0; i < init.size(); ++i)
    CHECK(std::equal(init.tensors()[i].values().begin(), init.tensors()[i].values().end(),
                     r.params.tensors()[i].values().begin()));
  for (std::size_t e = 1; e < r.report.epochs_run(); ++e) {
    CHECK(r.report.train_loss[e] == r.report.train_loss[0]);
    CHECK(r.report.validation_loss[e] == r.report.validation_loss[0]);
  }
}

TEST_CASE("train: patience 1 with a constant loss stops at epoch 2") {
  auto s = small_setup();
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.weight_decay = 0.0;
  tc.dropout = 0.0;
  tc.patience = 1;
  auto r = train(s.graph, s.tables, s.model, tc, NodeTypeId(0));
  CHECK(r.report.epochs_run() == 2);
  CHECK(r.report.best_epoch == 1);
  CHECK(r.report.best_epoch <= r.report.epochs_run());
}

TEST_CASE("train: validation loss decreases over the first epochs on a separable graph") {
  auto s = small_setup(0.1, 0.0);
  TrainConfig tc;
  tc.epochs = 5;
  tc.patience = 5;
  tc.seed = 1;
  auto r = train(s.graph, s.tables, s.model, tc, NodeTypeId(0));
  REQUIRE(r.report.epochs_run() == 5);
  for (std::size_t e = 1; e < 5; ++e) CHECK(r.report.validation_loss[e] < r.report.validation_loss[e - 1]);
  for (double v : r.report.train_loss) CHECK(std::isfinite(v));
}

TEST_CASE("train: configuration errors") {
  auto s = small_setup();
  TrainConfig tc;
  tc.epochs = 2;
  tc.patience = 2;
  auto no_softmax = s.model;
  no_softmax.output_activation = Activation::Elu;
  CHECK_THROWS_AS(train(s.graph, s.tables, no_softmax, tc, NodeTypeId(0)), ConfigError);
  auto wrong_dim = s.model;
  wrong_dim.out_dim = 4;
  CHECK_THROWS_AS(train(s.graph, s.tables, wrong_dim, tc, NodeTypeId(0)), ConfigError);
  CHECK_THROWS_AS(train(s.graph, s.tables, s.model, tc, NodeTypeId(1)), DataError);
  CHECK_THROWS_AS(train(s.graph, s.tables, s.model, tc, std::nullopt), ConfigError);
  tc.mode = TrainMode::Unsupervised;
  CHECK_THROWS_AS(train(s.graph, s.tables, s.model, tc, std::nullopt), ConfigError);
  TrainConfig bad;
  bad.patience = 200;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("split_links holds out disjoint edge sets") {
  SynthLinkConfig lc;
  lc.users = 30;
  lc.artists = 30;
  lc.p_in = 0.3;
  auto in = synth_bipartite(lc);
  auto split = split_links(in, RelationId(0), 0.1, 0.2, 4);
  const auto& t = split.task;
  const std::size_t total = in.edges.size();
  CHECK(t.validation_positive.size() == static_cast<std::size_t>(std::llround(0.1 * total)));
  CHECK(t.test_positive.size() == static_cast<std::size_t>(std::llround(0.2 * total)));
  CHECK(t.train_positive.size() + t.validation_positive.size() + t.test_positive.size() == total);
  CHECK(split.train_graph.edges.size() == t.train_positive.size());
  std::set<NodePair> train(t.train_positive.begin(), t.train_positive.end());
  for (const auto& p : t.test_positive) CHECK(train.count(p) == 0);
  for (const auto& p : t.validation_positive) CHECK(train.count(p) == 0);
  CHECK(t.test_negative.size() == t.test_positive.size());
  for (const auto& p : t.test_negative) CHECK_FALSE(t.all_positive.contains(p.first, p.second));
  auto again = split_links(in, RelationId(0), 0.1, 0.2, 4);
  CHECK(again.task.test_positive == t.test_positive);
  CHECK(again.task.test_negative == t.test_negative);
}

TEST_CASE("unsupervised training reduces the link loss") {
  SynthLinkConfig lc;
  lc.users = 30;
  lc.artists = 30;
  lc.blocks = 3;
  lc.p_in = 0.3;
  auto split = split_links(synth_bipartite(lc), RelationId(0), 0.1, 0.1, 2);
  auto g = build_graph(split.train_graph);
  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.heads = 2;
  mc.attn_dim = 4;
  mc.out_dim = 8;
  mc.metapaths = {parse_metapath("U-A-U", g.schema()), parse_metapath("A-U-A", g.schema())};
  TrainConfig tc;
  tc.mode = TrainMode::Unsupervised;
  tc.epochs = 60;
  tc.patience = 60;
  tc.learning_rate = 0.01;
  tc.dropout = 0.0;
  auto r = train(g, support::tables_for(g, mc), mc, tc, std::nullopt, &split.task);
  CHECK(r.report.best_validation_loss < r.report.validation_loss.front());
  CHECK(r.report.train_loss.back() < r.report.train_loss.front());
}
