#include <cmath>
#include <numeric>

#include "magnn/error.hpp"
#include "magnn/evaluation.hpp"
#include "magnn/rng.hpp"

namespace magnn {

namespace {

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
}

std::vector<int> balanced_classes(std::size_t n, int classes, Rng& rng) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % std::size_t(classes));
  for (std::size_t i = n; i > 1; --i) std::swap(y[i - 1], y[uniform_index(rng, i)]);
  return y;
}

}  // namespace

GraphInput synth_hetgraph(const SynthConfig& cfg) {
  check_probability(cfg.p_in, "p_in");
  check_probability(cfg.p_out, "p_out");
  if (cfg.p_in < cfg.p_out) throw ConfigError("p_in must not be below p_out");
  if (cfg.classes < 2) throw ConfigError("at least two classes are required");
  if (cfg.movies == 0 || cfg.directors == 0 || cfg.actors == 0) throw ConfigError("every node type needs nodes");
  if (!(cfg.feature_noise >= 0.0)) throw ConfigError("feature noise must be non-negative");
  if (!(cfg.train_fraction > 0 && cfg.validation_fraction > 0 && cfg.train_fraction + cfg.validation_fraction < 1))
    throw ConfigError("train and validation fractions must be positive and sum below 1");

  auto rng = make_rng(cfg.seed, "synth");
  GraphInput in;
  const auto m = in.schema.add_node_type("M", "movie");
  const auto d = in.schema.add_node_type("D", "director");
  const auto a = in.schema.add_node_type("A", "actor");
  const auto md = in.schema.add_relation("M-D", m, d);
  const auto ma = in.schema.add_relation("M-A", m, a);
  in.node_counts = {cfg.movies, cfg.directors, cfg.actors};

  const auto ym = balanced_classes(cfg.movies, cfg.classes, rng);
  const auto yd = balanced_classes(cfg.directors, cfg.classes, rng);
  const auto ya = balanced_classes(cfg.actors, cfg.classes, rng);
  for (std::uint32_t i = 0; i < cfg.movies; ++i) {
    for (std::uint32_t j = 0; j < cfg.directors; ++j)
      if (uniform01(rng) < (ym[i] == yd[j] ? cfg.p_in : cfg.p_out)) in.edges.push_back({md, i, j});
    for (std::uint32_t j = 0; j < cfg.actors; ++j)
      if (uniform01(rng) < (ym[i] == ya[j] ? cfg.p_in : cfg.p_out)) in.edges.push_back({ma, i, j});
  }

  Matrix x(cfg.movies, std::size_t(cfg.classes));
  for (std::size_t i = 0; i < cfg.movies; ++i)
    for (int c = 0; c < cfg.classes; ++c) x(i, c) = (ym[i] == c ? 1.0 : 0.0) + cfg.feature_noise * normal01(rng);
  in.features = {std::move(x), std::nullopt, std::nullopt};
  in.labels = {ym, std::nullopt, std::nullopt};

  std::vector<std::size_t> perm(cfg.movies);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * double(cfg.movies)));
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * double(cfg.movies)));
  std::vector<Split> split(cfg.movies, Split::Test);
  for (std::size_t k = 0; k < n_train + n_val && k < perm.size(); ++k)
    split[perm[k]] = k < n_train ? Split::Train : Split::Validation;
  in.splits = {split, std::nullopt, std::nullopt};
  return in;
}

GraphInput synth_bipartite(const SynthLinkConfig& cfg) {
  check_probability(cfg.p_in, "p_in");
  check_probability(cfg.p_out, "p_out");
  if (cfg.p_in < cfg.p_out) throw ConfigError("p_in must not be below p_out");
  if (cfg.blocks < 1 || cfg.users == 0 || cfg.artists == 0) throw ConfigError("invalid bipartite generator sizes");
  auto rng = make_rng(cfg.seed, "synth-bipartite");
  GraphInput in;
  const auto u = in.schema.add_node_type("U", "user");
  const auto a = in.schema.add_node_type("A", "artist");
  const auto ua = in.schema.add_relation("U-A", u, a);
  in.node_counts = {cfg.users, cfg.artists};
  const auto bu = balanced_classes(cfg.users, cfg.blocks, rng);
  const auto ba = balanced_classes(cfg.artists, cfg.blocks, rng);
  for (std::uint32_t i = 0; i < cfg.users; ++i)
    for (std::uint32_t j = 0; j < cfg.artists; ++j)
      if (uniform01(rng) < (bu[i] == ba[j] ? cfg.p_in : cfg.p_out)) in.edges.push_back({ua, i, j});
  return in;
}

}  // namespace magnn
