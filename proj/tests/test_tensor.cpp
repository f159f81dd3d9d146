#include <doctest.h>

#include <cmath>

#include "magnn/error.hpp"
#include "magnn/tensor.hpp"
#include "oracles.hpp"

using namespace magnn;
using namespace magnn::ad;

namespace {

Tensor random_param(Rng& rng, Shape shape, double scale = 1.0) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  std::vector<double> v(n);
  for (auto& x : v) x = scale * (2.0 * uniform01(rng) - 1.0);
  return Tensor::parameter(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("segment_softmax basics") {
  auto x = Tensor::constant({1, 1}, {3.7});
  CHECK(segment_softmax(x, SegmentLayout({0, 1})).item() == doctest::Approx(1.0).epsilon(1e-15));

  auto y = segment_softmax(Tensor::constant({3, 1}, {1, 2, 3}), SegmentLayout({0, 3}));
  auto expected = oracle::softmax({1, 2, 3});
  for (int i = 0; i < 3; ++i) CHECK(y.values()[i] == doctest::Approx(expected[i]).epsilon(1e-14));

  // empty segments are fine and produce nothing
  auto z = segment_softmax(Tensor::constant({2, 1}, {5, 6}), SegmentLayout({0, 0, 2, 2}));
  CHECK(z.values()[0] + z.values()[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(segment_softmax(Tensor::constant({2, 1}, {5, 6}), SegmentLayout({0, 1})), ShapeError);
}

TEST_CASE("property: segment softmax sums to one and stays positive") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> off{0};
    const std::size_t segs = 1 + uniform_index(rng, 6);
    for (std::size_t s = 0; s < segs; ++s) off.push_back(off.back() + uniform_index(rng, 7));
    const std::size_t k = 1 + uniform_index(rng, 3);
    std::vector<double> v(off.back() * k);
    for (auto& x : v) x = 20.0 * (uniform01(rng) - 0.5);
    auto y = segment_softmax(Tensor::constant({off.back(), k}, v), SegmentLayout(off));
    for (std::size_t s = 0; s < segs; ++s)
      for (std::size_t c = 0; c < k; ++c) {
        if (off[s] == off[s + 1]) continue;
        double total = 0.0;
        for (auto i = off[s]; i < off[s + 1]; ++i) {
          CHECK(y.at(i, c) > 0.0);
          total += y.at(i, c);
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
  }
}

TEST_CASE("complex_hadamard: multiplying by i rotates by a quarter turn") {
  auto y = complex_hadamard(Tensor::constant({2}, {1, 0}), Tensor::constant({2}, {0, 1}));
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 1.0);
  CHECK_THROWS_AS(complex_hadamard(Tensor::constant({3}, {1, 2, 3}), Tensor::constant({3}, {1, 2, 3})), ShapeError);
}

TEST_CASE("property: complex_hadamard algebra") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 * (1 + uniform_index(rng, 5));
    auto a = random_param(rng, {d});
    auto b = random_param(rng, {d});
    auto c = random_param(rng, {d});
    std::vector<double> one(d, 0.0);
    std::fill(one.begin(), one.begin() + d / 2, 1.0);
    auto id = Tensor::constant({d}, one);
    auto ab = complex_hadamard(a, b);
    auto ba = complex_hadamard(b, a);
    auto abc1 = complex_hadamard(ab, c);
    auto abc2 = complex_hadamard(a, complex_hadamard(b, c));
    auto a1 = complex_hadamard(a, id);
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(ab.values()[j] == doctest::Approx(ba.values()[j]).epsilon(1e-14));
      CHECK(std::abs(abc1.values()[j] - abc2.values()[j]) < 1e-12);
      CHECK(a1.values()[j] == a.values()[j]);
    }
    for (std::size_t j = 0; j < d / 2; ++j) {
      auto mod = [&](const Tensor& t) { return std::hypot(t.values()[j], t.values()[d / 2 + j]); };
      CHECK(std::abs(mod(ab) - mod(a) * mod(b)) < 1e-12);
    }
  }
}

TEST_CASE("unit_phasor has unit modulus") {
  Rng rng(1);
  auto th = random_param(rng, {5}, 4.0);
  auto r = unit_phasor(th);
  REQUIRE(r.size() == 10);
  for (int j = 0; j < 5; ++j) CHECK(std::hypot(r.values()[j], r.values()[5 + j]) == doctest::Approx(1.0));
}

TEST_CASE("dropout: identity when off, unbiased when on") {
  Rng rng(0);
  auto x = Tensor::constant({4}, {1.0, -2.0, 3.0, 0.5});
  auto same = dropout(x, 0.5, false, rng);
  CHECK(same.node() == x.node());
  CHECK(dropout(x, 0.0, true, rng).node() == x.node());
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), ShapeError);

  const int seeds = 20000;
  std::vector<double> mean(4, 0.0);
  for (int s = 0; s < seeds; ++s) {
    Rng r(static_cast<std::uint64_t>(s));
    auto y = dropout(x, 0.5, true, r);
    for (int j = 0; j < 4; ++j) mean[j] += y.values()[j] / seeds;
  }
  for (int j = 0; j < 4; ++j) CHECK(std::abs(mean[j] - x.values()[j]) <= 0.01 * std::abs(x.values()[j]) + 0.02);
}

TEST_CASE("backward: linear map and sigmoid") {
  auto W = Tensor::parameter({2, 3}, {1, 2, 3, 4, 5, 6});
  auto x = Tensor::constant({3, 1}, {0.5, -1.0, 2.0});
  backward(sum(matmul(W, x)));
  const std::vector<double> expected{0.5, -1.0, 2.0, 0.5, -1.0, 2.0};
  for (int i = 0; i < 6; ++i) CHECK(W.grad()[i] == expected[i]);

  auto z = Tensor::parameter({}, {0.0});
  backward(sigmoid(z));
  CHECK(z.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));

  CHECK_THROWS_AS(backward(matmul(W, x)), ShapeError);
}

TEST_CASE("backward is repeatable after re-recording") {
  Rng rng(4);
  auto W = random_param(rng, {3, 4});
  auto x = Tensor::constant({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto run = [&] {
    W.zero_grad();
    backward(sum(tanh(matmul_nt(x, W))));
    return std::vector<double>(W.grad().begin(), W.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("no-grad guard skips recording") {
  auto W = Tensor::parameter({1}, {2.0});
  NoGradGuard guard;
  auto y = scale(W, 3.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("grad_check: quadratic and kink exclusion") {
  auto w = Tensor::parameter({2}, {1.0, 2.0});
  auto res = grad_check([&] { return sum(mul(w, w)); }, {w});
  CHECK(res.max_relative_error < 1e-8);
  CHECK(res.checked == 2);

  auto k = Tensor::parameter({2}, {0.0, 0.7});
  auto kink = grad_check([&] { return sum(leaky_relu(k, 0.2)); }, {k});
  CHECK(kink.skipped == 1);
  CHECK(kink.checked == 1);
  CHECK(kink.max_relative_error < 1e-8);
}

TEST_CASE("property: every op passes grad_check on random small shapes") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 3), k = 2 * (1 + uniform_index(rng, 2)), m = 1 + uniform_index(rng, 3);
    auto A = random_param(rng, {n, k});
    auto B = random_param(rng, {k, m});
    auto C = random_param(rng, {m, k});
    auto D = random_param(rng, {n, k});
    auto b = random_param(rng, {k});
    auto th = random_param(rng, {k / 2}, 3.0);
    auto S = random_param(rng, {n + 2, 2});
    std::vector<std::uint32_t> rows{0, static_cast<std::uint32_t>(n - 1), 0};
    std::vector<std::uint32_t> cols{0, 1, static_cast<std::uint32_t>(k - 1)};
    SegmentLayout layout({0, 1, 1, n + 2});
    // fixed non-uniform mixing so losses are not plain sums
    auto mix = [](const Tensor& t) {
      std::vector<double> c(t.size());
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::sin(1.3 * static_cast<double>(i) + 0.4);
      return sum(mul(Tensor::constant(t.shape(), c), t));
    };
    std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
        {"matmul", [&] { return mix(matmul(A, B)); }},
        {"matmul_nt", [&] { return mix(matmul_nt(A, C)); }},
        {"transpose", [&] { return mix(transpose(A)); }},
        {"add/sub/mul", [&] { return mix(mul(add(A, D), sub(A, D))); }},
        {"scale", [&] { return mix(scale(A, -1.7)); }},
        {"add_row_vector", [&] { return mix(add_row_vector(A, b)); }},
        {"elu", [&] { return mix(elu(A)); }},
        {"leaky_relu", [&] { return mix(leaky_relu(A, 0.2)); }},
        {"tanh", [&] { return mix(tanh(A)); }},
        {"sigmoid", [&] { return mix(sigmoid(A)); }},
        {"exp", [&] { return mix(exp(A)); }},
        {"log_clamped", [&] { return mix(log_clamped(add(exp(A), exp(D)))); }},
        {"softmax_rows", [&] { return mix(softmax_rows(A)); }},
        {"mean_rows", [&] { return mix(mean_rows(A)); }},
        {"row_dot", [&] { return mix(row_dot(A, D)); }},
        {"concat_cols", [&] { return mix(concat_cols({A, D})); }},
        {"gather_rows", [&] { return mix(gather_rows(A, rows)); }},
        {"pick", [&] { return mix(pick(A, rows, cols)); }},
        {"weighted_sum", [&] { return mix(weighted_sum({A, D}, softmax_rows(mean_rows(S)))); }},
        {"segment_softmax", [&] { return mix(segment_softmax(S, layout)); }},
        {"segment_weighted_sum",
         [&] { return mix(segment_weighted_sum(gather_rows(A, std::vector<std::uint32_t>(n + 2, 1)), S, layout)); }},
        {"complex_hadamard", [&] { return mix(complex_hadamard(A, D)); }},
        {"complex_hadamard broadcast", [&] { return mix(complex_hadamard(A, unit_phasor(th))); }},
    };
    for (auto& [name, f] : cases) {
      auto res = grad_check(f, {A, B, C, D, b, th, S});
      INFO(name);
      CHECK(res.max_relative_error < 1e-4);
      CHECK(res.checked > 0);
    }
  }
}

TEST_CASE("grad_check on a random composed network") {
  Rng rng(12);
  auto X = Tensor::constant({5, 4}, std::vector<double>(20, 0.3));
  for (std::size_t i = 0; i < 20; ++i) X.data()[i] = uniform01(rng) - 0.5;
  auto W1 = random_param(rng, {6, 4});
  auto b1 = random_param(rng, {6});
  auto W2 = random_param(rng, {3, 6});
  auto f = [&] {
    auto h = elu(add_row_vector(matmul_nt(X, W1), b1));
    auto p = softmax_rows(matmul_nt(h, W2));
    std::vector<std::uint32_t> rows{0, 1, 2, 3, 4}, cols{0, 1, 2, 0, 1};
    return scale(sum(log_clamped(pick(p, rows, cols))), -1.0);
  };
  CHECK(grad_check(f, {W1, b1, W2}).max_relative_error < 1e-4);
}

TEST_CASE("shape errors") {
  auto a = Tensor::constant({2, 3}, std::vector<double>(6, 1.0));
  auto b = Tensor::constant({2, 2}, std::vector<double>(4, 1.0));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(Tensor::constant({2, 2}, {1.0}), ShapeError);
  CHECK_THROWS_AS(Tensor::constant({1, 1, 1, 1}, {1.0}), ShapeError);
}
