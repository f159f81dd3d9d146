#include "magnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "magnn/error.hpp"

namespace magnn {

double EvalReport::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  throw ConfigError("report has no metric '" + name + "'");
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["variant"] = variant;
  if (train_fraction) j["train_fraction"] = *train_fraction;
  j["runs"] = runs;
  auto& m = j["metrics"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : metrics) m[k] = v;
  return j.dump();
}

F1Scores f1_scores(std::span<const int> y_true, std::span<const int> y_pred, int num_classes) {
  if (y_true.size() != y_pred.size()) throw ShapeError("prediction and label vectors differ in length");
  if (y_true.empty()) throw DataError("no predictions to score");
  std::vector<double> tp(num_classes), fp(num_classes), fn(num_classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) throw DataError("class index out of range");
    if (t == p) {
      tp[t] += 1;
    } else {
      fp[p] += 1;
      fn[t] += 1;
    }
  }
  F1Scores s;
  int counted = 0;
  double TP = 0, FP = 0, FN = 0;
  for (int c = 0; c < num_classes; ++c) {
    TP += tp[c];
    FP += fp[c];
    FN += fn[c];
    if (tp[c] + fp[c] + fn[c] == 0) continue;
    s.macro += 2 * tp[c] / (2 * tp[c] + fp[c] + fn[c]);
    ++counted;
  }
  s.macro /= counted;
  s.micro = 2 * TP / (2 * TP + FP + FN);
  return s;
}

void LogisticRegression::fit(const Matrix& x, std::span<const int> y, int num_classes,
                             const LogisticOptions& options) {
  const std::size_t n = x.rows, d = x.cols;
  if (y.size() != n) throw ShapeError("one label per training row is required");
  if (n == 0) throw DataError("cannot fit a classifier on zero rows");
  classes_ = num_classes;
  mean_.assign(d, 0.0);
  scale_.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean_[j] += x(i, j) / double(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) scale_[j] += (x(i, j) - mean_[j]) * (x(i, j) - mean_[j]) / double(n);
  for (auto& s : scale_) s = s > 1e-24 ? 1.0 / std::sqrt(s) : 1.0;

  const std::size_t w = d + 1;
  Matrix z(n, w, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) z(i, j) = (x(i, j) - mean_[j]) * scale_[j];
  weights_.assign(std::size_t(classes_) * w, 0.0);
  std::vector<double> grad(weights_.size()), p(classes_);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < classes_; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < w; ++j) s += weights_[c * w + j] * z(i, j);
        p[c] = s;
        mx = std::max(mx, s);
      }
      double total = 0.0;
      for (auto& v : p) total += (v = std::exp(v - mx));
      for (int c = 0; c < classes_; ++c) {
        const double g = p[c] / total - (c == y[i] ? 1.0 : 0.0);
        for (std::size_t j = 0; j < w; ++j) grad[c * w + j] += g * z(i, j) / double(n);
      }
    }
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      const bool bias = k % w == d;
      weights_[k] -= options.learning_rate * (grad[k] + (bias ? 0.0 : options.l2 * weights_[k]));
    }
  }
}

std::vector<int> LogisticRegression::predict(const Matrix& x) const {
  const std::size_t d = mean_.size(), w = d + 1;
  if (x.cols != d) throw ShapeError("classifier was fit on a different feature dimension");
  std::vector<int> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes_; ++c) {
      double s = weights_[c * w + d];
      for (std::size_t j = 0; j < d; ++j) s += weights_[c * w + j] * (x(i, j) - mean_[j]) * scale_[j];
      if (s > best) {
        best = s;
        out[i] = c;
      }
    }
  }
  return out;
}

ProbeResult linear_probe(const Matrix& embeddings, std::span<const int> labels, double train_fraction,
                         std::uint64_t seed, std::size_t runs, const LogisticOptions& options) {
  const std::size_t n = embeddings.rows;
  if (labels.size() != n) throw ShapeError("one label per embedding row is required");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  if (n < 2) throw DataError("linear probe needs at least two labeled rows");
  if (runs == 0) throw ConfigError("at least one probe run is required");
  std::set<int> present(labels.begin(), labels.end());
  if (*present.begin() < 0) throw DataError("linear probe rows must all be labeled");
  const int classes = *present.rbegin() + 1;
  const auto n_train = std::clamp<std::size_t>(std::llround(train_fraction * double(n)), 1, n - 1);

  std::vector<F1Scores> scores;
  for (std::size_t r = 0; r < runs; ++r) {
    auto rng = make_rng(substream_seed(seed, r), "probe-split");
    std::vector<std::size_t> perm(n);
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
      std::set<int> seen;
      for (std::size_t i = 0; i < n_train; ++i) seen.insert(labels[perm[i]]);
      ok = seen == present;
    }
    if (!ok) throw DataError("could not draw a probe training split containing every class");
    std::vector<std::size_t> tr(perm.begin(), perm.begin() + n_train), te(perm.begin() + n_train, perm.end());
    std::vector<int> ytr, yte;
    for (auto i : tr) ytr.push_back(labels[i]);
    for (auto i : te) yte.push_back(labels[i]);
    LogisticRegression clf;
    clf.fit(embeddings.select_rows(tr), ytr, classes, options);
    scores.push_back(f1_scores(yte, clf.predict(embeddings.select_rows(te)), classes));
  }
  ProbeResult out;
  out.runs = runs;
  for (const auto& s : scores) {
    out.mean.macro += s.macro / double(runs);
    out.mean.micro += s.micro / double(runs);
  }
  for (const auto& s : scores) {
    out.stddev.macro += (s.macro - out.mean.macro) * (s.macro - out.mean.macro) / double(runs);
    out.stddev.micro += (s.micro - out.mean.micro) * (s.micro - out.mean.micro) / double(runs);
  }
  out.stddev.macro = std::sqrt(out.stddev.macro);
  out.stddev.micro = std::sqrt(out.stddev.micro);
  return out;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

KMeansResult kmeans_once(const Matrix& x, std::size_t k, Rng& rng, std::size_t max_iterations) {
  const std::size_t n = x.rows, d = x.cols;
  Matrix c(k, d);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t pick = uniform_index(rng, n);
  for (std::size_t m = 0; m < k; ++m) {
    if (m > 0) {
      const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
      if (total > 0.0) {
        double r = uniform01(rng) * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          r -= dist[i];
          if (r < 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = uniform_index(rng, n);
      }
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), c.row(m).begin());
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], sq_dist(x.row(i), c.row(m)));
  }

  KMeansResult res;
  res.assignment.assign(n, -1);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(x.row(i), c.row(0));
      for (std::size_t m = 1; m < k; ++m) {
        const double dm = sq_dist(x.row(i), c.row(m));
        if (dm < bd) {
          bd = dm;
          best = static_cast<int>(m);
        }
      }
      if (res.assignment[i] != best) {
        res.assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sum(k, d);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[res.assignment[i]];
      for (std::size_t j = 0; j < d; ++j) sum(res.assignment[i], j) += x(i, j);
    }
    for (std::size_t m = 0; m < k; ++m)
      if (count[m] > 0)
        for (std::size_t j = 0; j < d; ++j) c(m, j) = sum(m, j) / double(count[m]);
  }
  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) res.inertia += sq_dist(x.row(i), c.row(res.assignment[i]));
  res.centroids = std::move(c);
  return res;
}

struct Contingency {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> left, right;
  double n = 0;
};

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ShapeError("partitions differ in length");
  Contingency c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.joint[{a[i], b[i]}] += 1;
    c.left[a[i]] += 1;
    c.right[b[i]] += 1;
  }
  c.n = double(a.size());
  return c;
}

double choose2(double x) { return x * (x - 1) / 2; }

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t restarts,
                    std::size_t max_iterations) {
  if (k == 0) throw ConfigError("k-means needs at least one cluster");
  if (k > points.rows)
    throw DataError("k-means with " + std::to_string(k) + " clusters on " + std::to_string(points.rows) + " points");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    auto rng = make_rng(substream_seed(seed, r), "kmeans");
    auto res = kmeans_once(points, k, rng, max_iterations);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

double nmi(std::span<const int> a, std::span<const int> b) {
  const auto c = contingency(a, b);
  if (c.n == 0) throw DataError("cannot compare empty partitions");
  double mi = 0.0, ha = 0.0, hb = 0.0;
  for (const auto& [key, nij] : c.joint)
    mi += nij / c.n * std::log(c.n * nij / (c.left.at(key.first) * c.right.at(key.second)));
  for (const auto& [k, v] : c.left) ha -= v / c.n * std::log(v / c.n);
  for (const auto& [k, v] : c.right) hb -= v / c.n * std::log(v / c.n);
  if (ha + hb <= 0.0) return 1.0;  // both partitions are a single cluster
  return std::clamp(2.0 * mi / (ha + hb), 0.0, 1.0);
}

double ari(std::span<const int> a, std::span<const int> b) {
  const auto c = contingency(a, b);
  if (c.n < 2) return 1.0;
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, nij] : c.joint) index += choose2(nij);
  for (const auto& [k, v] : c.left) sa += choose2(v);
  for (const auto& [k, v] : c.right) sb += choose2(v);
  const double expected = sa * sb / choose2(c.n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return c.joint.size() == c.left.size() && c.left.size() == c.right.size() ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

ClusterScores cluster_eval(const Matrix& embeddings, std::span<const int> labels, std::size_t k, std::uint64_t seed,
                           std::size_t restarts) {
  if (k < 2) throw ConfigError("clustering needs k >= 2");
  if (labels.size() != embeddings.rows) throw ShapeError("one label per embedding row is required");
  auto res = kmeans(embeddings, k, seed, restarts);
  return {nmi(labels, res.assignment), ari(labels, res.assignment)};
}

double roc_auc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw DataError("AUC needs at least one positive and one negative score");
  std::vector<std::pair<double, bool>> all;
  for (double s : pos) all.emplace_back(s, true);
  for (double s : neg) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg_rank = 0.5 * double(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t)
      if (all[t].second) rank_sum += avg_rank;
    i = j;
  }
  const double P = double(pos.size()), N = double(neg.size());
  return (rank_sum - P * (P + 1) / 2) / (P * N);
}

double average_precision(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty()) throw DataError("average precision needs at least one positive score");
  std::vector<std::pair<double, bool>> all;
  for (double s : pos) all.emplace_back(s, true);
  for (double s : neg) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  double tp = 0, fp = 0, ap = 0, prev_recall = 0;
  const double P = double(pos.size());
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    for (; j < all.size() && all[j].first == all[i].first; ++j) (all[j].second ? tp : fp) += 1;
    const double recall = tp / P;
    ap += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

LinkScores link_predict_eval(const Matrix& left, const Matrix& right,
                             std::span<const std::pair<std::uint32_t, std::uint32_t>> positives,
                             std::span<const std::pair<std::uint32_t, std::uint32_t>> negatives) {
  if (left.cols != right.cols) throw ShapeError("paired embeddings must share one dimension");
  // Ranking uses the dot product; sigmoid is strictly increasing, so ranks
  // are the same but large scores do not saturate into ties.
  auto score = [&](std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs) {
    std::vector<double> s;
    for (const auto& [u, v] : pairs) {
      if (u >= left.rows || v >= right.rows) throw DataError("link pair references an unknown node");
      double dot = 0.0;
      for (std::size_t j = 0; j < left.cols; ++j) dot += left(u, j) * right(v, j);
      s.push_back(dot);
    }
    return s;
  };
  const auto ps = score(positives), ns = score(negatives);
  return {roc_auc(ps, ns), average_precision(ps, ns)};
}

}  // namespace magnn
