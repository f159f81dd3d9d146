#include "magnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "magnn/error.hpp"

namespace magnn::ad {

namespace {

thread_local bool t_grad_enabled = true;

std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

std::size_t rows_of(const Shape& s) {
  return s.empty() ? 1 : shape_size(Shape(s.begin(), s.end() - 1));
}
std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.size() > 3) throw ShapeError("tensors support at most 3 axes, got " + shape_str(shape));
  if (shape_size(shape) != values.size())
    throw ShapeError("value buffer of " + std::to_string(values.size()) + " elements for shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

const std::shared_ptr<Node>& share(const Tensor& t) {
  if (!t.defined()) throw ShapeError("operation on an undefined tensor");
  return t.shared_node();
}

/// Wraps a forward result; keeps parents and the backward rule only when a
/// parent needs gradients and recording is enabled.
Tensor record(Shape shape, std::vector<double> values, std::vector<std::shared_ptr<Node>> parents,
              std::function<void(Node&)> rule) {
  bool needs = false;
  if (t_grad_enabled)
    for (const auto& p : parents) needs = needs || p->requires_grad;
  auto n = make_node(std::move(shape), std::move(values), needs);
  if (needs) {
    n->parents = std::move(parents);
    n->backward = std::move(rule);
  }
  return Tensor(std::move(n));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D df) {
  const auto x = a.values();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return record(a.shape(), std::move(y), {share(a)}, [df](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.value[i], self.value[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values), true));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

const Shape& Tensor::shape() const { return share(*this)->shape; }
std::size_t Tensor::size() const { return share(*this)->value.size(); }
std::size_t Tensor::rows() const { return rows_of(shape()); }
std::size_t Tensor::cols() const { return cols_of(shape()); }
std::span<const double> Tensor::values() const { return share(*this)->value; }
std::span<double> Tensor::data() { return share(*this)->value; }
std::span<const double> Tensor::grad() const { return share(*this)->grad; }
bool Tensor::requires_grad() const { return share(*this)->requires_grad; }

void Tensor::zero_grad() {
  auto& g = share(*this)->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on a tensor with " + std::to_string(size()) + " elements");
  return values()[0];
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

SegmentLayout::SegmentLayout(std::vector<std::size_t> offsets) : offsets_(std::move(offsets)) {
  if (offsets_.empty() || offsets_.front() != 0) throw ShapeError("segment offsets must start at 0");
  if (!std::is_sorted(offsets_.begin(), offsets_.end())) throw ShapeError("segment offsets must be nondecreasing");
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const auto A = a.values();
  const auto B = b.values();
  std::vector<double> C(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &B[p * m];
      double* crow = &C[i * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  return record({n, m}, std::move(C), {share(a), share(b)}, [n, k, m](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& G = self.grad;
    if (pa.requires_grad) {
      auto& gA = pa.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += G[i * m + j] * pb.value[p * m + j];
          gA[i * k + p] += s;
        }
    }
    if (pb.requires_grad) {
      auto& gB = pb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.value[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) gB[p * m + j] += aip * G[i * m + j];
        }
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k)
    throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  const auto A = a.values();
  const auto B = b.values();
  std::vector<double> C(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
      C[i * m + j] = s;
    }
  return record({n, m}, std::move(C), {share(a), share(b)}, [n, k, m](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& G = self.grad;
    if (pa.requires_grad) {
      auto& gA = pa.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double g = G[i * m + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) gA[i * k + p] += g * pb.value[j * k + p];
        }
    }
    if (pb.requires_grad) {
      auto& gB = pb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double g = G[i * m + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) gB[j * k + p] += g * pa.value[i * k + p];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  const auto A = a.values();
  std::vector<double> T(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) T[j * n + i] = A[i * m + j];
  return record({m, n}, std::move(T), {share(a)}, [n, m](Node& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[j * n + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  const auto A = a.values();
  const auto B = b.values();
  std::vector<double> C(A.size());
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] + B[i];
  return record(a.shape(), std::move(C), {share(a), share(b)}, [](Node& self) {
    for (auto* p : {self.parents[0].get(), self.parents[1].get()}) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  const auto A = a.values();
  const auto B = b.values();
  std::vector<double> C(A.size());
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] - B[i];
  return record(a.shape(), std::move(C), {share(a), share(b)}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  const auto A = a.values();
  const auto B = b.values();
  std::vector<double> C(A.size());
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] * B[i];
  return record(a.shape(), std::move(C), {share(a), share(b)}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_row_vector(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), m = a.cols();
  if (b.size() != m)
    throw ShapeError("add_row_vector: " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  const auto A = a.values();
  const auto B = b.values();
  std::vector<double> C(A.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) C[i * m + j] = A[i * m + j] + B[j];
  return record(a.shape(), std::move(C), {share(a), share(b)}, [n, m](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Activations

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& a, double alpha) {
  return unary(
      a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
      [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_clamped(const Tensor& a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  const auto X = a.values();
  std::vector<double> Y(X.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = &X[i * m];
    double* y = &Y[i * m];
    const double mx = *std::max_element(x, x + m);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < m; ++j) y[j] /= s;
  }
  return record(a.shape(), std::move(Y), {share(a)}, [n, m](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += self.grad[i * m + j] * self.value[i * m + j];
      for (std::size_t j = 0; j < m; ++j)
        g[i * m + j] += self.value[i * m + j] * (self.grad[i * m + j] - dot);
    }
  });
}

Tensor dropout(const Tensor& a, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ShapeError("dropout rate must lie in [0, 1)");
  if (!train || p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(a.size());
  for (auto& m : mask) m = uniform01(rng) < p ? 0.0 : keep_scale;
  const auto X = a.values();
  std::vector<double> Y(X.size());
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = X[i] * mask[i];
  return record(a.shape(), std::move(Y), {share(a)}, [mask = std::move(mask)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and restructuring

Tensor sum(const Tensor& a) {
  const auto X = a.values();
  double s = 0.0;
  for (double x : X) s += x;
  return record({}, {s}, {share(a)}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  if (n == 0) throw ShapeError("mean_rows of an empty tensor");
  const auto X = a.values();
  std::vector<double> Y(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) Y[j] += X[i * m + j];
  for (auto& y : Y) y /= static_cast<double>(n);
  return record({1, m}, std::move(Y), {share(a)}, [n, m](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[j] * inv;
  });
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  require_same(a, b, "row_dot");
  const std::size_t n = a.rows(), m = a.cols();
  const auto A = a.values();
  const auto B = b.values();
  std::vector<double> Y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) Y[i] += A[i * m + j] * B[i * m + j];
  return record({n, 1}, std::move(Y), {share(a), share(b)}, [n, m](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[i] * pb.value[i * m + j];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[i] * pa.value[i * m + j];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of no tensors");
  const std::size_t n = parts[0].rows();
  std::vector<std::size_t> widths;
  std::vector<std::shared_ptr<Node>> parents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
    parents.push_back(share(p));
  }
  std::vector<double> Y(n * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto X = parts[k].values();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(&X[i * widths[k]], widths[k], &Y[i * total + off]);
    off += widths[k];
  }
  return record({n, total}, std::move(Y), std::move(parents), [n, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::uint32_t> rows) {
  const std::size_t n = a.rows(), m = a.cols();
  const auto X = a.values();
  std::vector<double> Y(rows.size() * m);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(&X[rows[i] * m], m, &Y[i * m]);
  }
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return record({rows.size(), m}, std::move(Y), {share(a)}, [idx = std::move(idx), m](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double* dst = &g[idx[i] * m];
      const double* src = &self.grad[i * m];
      for (std::size_t j = 0; j < m; ++j) dst[j] += src[j];
    }
  });
}

Tensor pick(const Tensor& a, std::span<const std::uint32_t> rows, std::span<const std::uint32_t> cols) {
  if (rows.size() != cols.size()) throw ShapeError("pick: rows/cols length mismatch");
  const std::size_t n = a.rows(), m = a.cols();
  const auto X = a.values();
  std::vector<std::size_t> flat(rows.size());
  std::vector<double> Y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n || cols[i] >= m) throw ShapeError("pick: index out of range");
    flat[i] = rows[i] * m + cols[i];
    Y[i] = X[flat[i]];
  }
  return record({rows.size(), 1}, std::move(Y), {share(a)}, [flat = std::move(flat)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < flat.size(); ++i) g[flat[i]] += self.grad[i];
  });
}

Tensor weighted_sum(const std::vector<Tensor>& parts, const Tensor& w) {
  if (parts.empty()) throw ShapeError("weighted_sum of no tensors");
  if (w.size() != parts.size()) throw ShapeError("weighted_sum: weight count mismatch");
  std::vector<std::shared_ptr<Node>> parents{share(w)};
  for (const auto& p : parts) {
    require_same(p, parts[0], "weighted_sum");
    parents.push_back(share(p));
  }
  const auto W = w.values();
  std::vector<double> Y(parts[0].size(), 0.0);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto X = parts[k].values();
    for (std::size_t i = 0; i < Y.size(); ++i) Y[i] += W[k] * X[i];
  }
  return record(parts[0].shape(), std::move(Y), std::move(parents), [](Node& self) {
    auto& pw = *self.parents[0];
    for (std::size_t k = 1; k < self.parents.size(); ++k) {
      auto& px = *self.parents[k];
      if (px.requires_grad) {
        auto& g = px.ensure_grad();
        const double wk = pw.value[k - 1];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += wk * self.grad[i];
      }
      if (pw.requires_grad) {
        double dot = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * px.value[i];
        pw.ensure_grad()[k - 1] += dot;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Segment operations

Tensor segment_softmax(const Tensor& scores, const SegmentLayout& layout) {
  const std::size_t n = scores.rows(), k = scores.cols();
  if (layout.total() != n)
    throw ShapeError("segment_softmax: layout covers " + std::to_string(layout.total()) + " rows, scores have " +
                     std::to_string(n));
  const auto X = scores.values();
  std::vector<double> Y(X.size());
  for (std::size_t s = 0; s < layout.num_segments(); ++s) {
    const auto b = layout.begin(s), e = layout.end(s);
    if (b == e) continue;
    for (std::size_t c = 0; c < k; ++c) {
      double mx = -INFINITY;
      for (auto i = b; i < e; ++i) mx = std::max(mx, X[i * k + c]);
      double z = 0.0;
      for (auto i = b; i < e; ++i) z += (Y[i * k + c] = std::exp(X[i * k + c] - mx));
      for (auto i = b; i < e; ++i) Y[i * k + c] /= z;
    }
  }
  return record(scores.shape(), std::move(Y), {share(scores)}, [layout, k](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const auto& y = self.value;
    const auto& dy = self.grad;
    for (std::size_t s = 0; s < layout.num_segments(); ++s) {
      const auto b = layout.begin(s), e = layout.end(s);
      for (std::size_t c = 0; c < k; ++c) {
        double dot = 0.0;
        for (auto i = b; i < e; ++i) dot += y[i * k + c] * dy[i * k + c];
        for (auto i = b; i < e; ++i) g[i * k + c] += y[i * k + c] * (dy[i * k + c] - dot);
      }
    }
  });
}

Tensor segment_weighted_sum(const Tensor& values, const Tensor& weights, const SegmentLayout& layout) {
  const std::size_t n = values.rows(), d = values.cols(), k = weights.cols();
  if (weights.rows() != n) throw ShapeError("segment_weighted_sum: values/weights row mismatch");
  if (layout.total() != n) throw ShapeError("segment_weighted_sum: layout does not cover the rows");
  const std::size_t segs = layout.num_segments();
  const auto V = values.values();
  const auto W = weights.values();
  std::vector<double> Y(segs * k * d, 0.0);
  for (std::size_t s = 0; s < segs; ++s)
    for (auto i = layout.begin(s); i < layout.end(s); ++i)
      for (std::size_t h = 0; h < k; ++h) {
        const double w = W[i * k + h];
        double* y = &Y[(s * k + h) * d];
        const double* v = &V[i * d];
        for (std::size_t j = 0; j < d; ++j) y[j] += w * v[j];
      }
  return record({segs, k * d}, std::move(Y), {share(values), share(weights)}, [layout, d, k](Node& self) {
    auto& pv = *self.parents[0];
    auto& pw = *self.parents[1];
    const auto& G = self.grad;
    for (std::size_t s = 0; s < layout.num_segments(); ++s)
      for (auto i = layout.begin(s); i < layout.end(s); ++i)
        for (std::size_t h = 0; h < k; ++h) {
          const double* g = &G[(s * k + h) * d];
          if (pv.requires_grad) {
            auto& gv = pv.ensure_grad();
            const double w = pw.value[i * k + h];
            for (std::size_t j = 0; j < d; ++j) gv[i * d + j] += w * g[j];
          }
          if (pw.requires_grad) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += pv.value[i * d + j] * g[j];
            pw.ensure_grad()[i * k + h] += dot;
          }
        }
  });
}

// ---------------------------------------------------------------------------
// Complex helpers

Tensor complex_hadamard(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), d = a.cols();
  if (d % 2 != 0) throw ShapeError("complex_hadamard: vector length " + std::to_string(d) + " is odd");
  const bool broadcast = b.size() == d;  // one row shared by every row of a
  if (!broadcast && b.shape() != a.shape())
    throw ShapeError("complex_hadamard: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t h = d / 2;
  const auto A = a.values();
  const auto B = b.values();
  std::vector<double> Y(A.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = &A[i * d];
    const double* r = broadcast ? &B[0] : &B[i * d];
    double* y = &Y[i * d];
    for (std::size_t j = 0; j < h; ++j) {
      y[j] = x[j] * r[j] - x[h + j] * r[h + j];
      y[h + j] = x[j] * r[h + j] + x[h + j] * r[j];
    }
  }
  return record(a.shape(), std::move(Y), {share(a), share(b)}, [n, d, h, broadcast](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& G = self.grad;
    // d(x*r)/dx applied to g is g * conj(r); symmetric for r.
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = &pa.value[i * d];
      const double* r = broadcast ? &pb.value[0] : &pb.value[i * d];
      const double* g = &G[i * d];
      if (pa.requires_grad) {
        double* gx = &pa.ensure_grad()[i * d];
        for (std::size_t j = 0; j < h; ++j) {
          gx[j] += g[j] * r[j] + g[h + j] * r[h + j];
          gx[h + j] += -g[j] * r[h + j] + g[h + j] * r[j];
        }
      }
      if (pb.requires_grad) {
        double* gr = &pb.ensure_grad()[broadcast ? 0 : i * d];
        for (std::size_t j = 0; j < h; ++j) {
          gr[j] += g[j] * x[j] + g[h + j] * x[h + j];
          gr[h + j] += -g[j] * x[h + j] + g[h + j] * x[j];
        }
      }
    }
  });
}

Tensor unit_phasor(const Tensor& theta) {
  const std::size_t n = theta.rows(), m = theta.cols();
  const auto T = theta.values();
  std::vector<double> Y(n * 2 * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      Y[i * 2 * m + j] = std::cos(T[i * m + j]);
      Y[i * 2 * m + m + j] = std::sin(T[i * m + j]);
    }
  Shape shape = theta.shape();
  if (shape.empty()) shape = {1};
  shape.back() = 2 * m;
  return record(shape, std::move(Y), {share(theta)}, [n, m](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double c = self.value[i * 2 * m + j];
        const double s = self.value[i * 2 * m + m + j];
        g[i * m + j] += -s * self.grad[i * 2 * m + j] + c * self.grad[i * 2 * m + m + j];
      }
  });
}

// ---------------------------------------------------------------------------
// Reverse pass

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params_in,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ShapeError("grad_check step must be positive");
  auto params = params_in;
  for (auto& p : params) p.zero_grad();
  {
    const Tensor loss = f();
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.size(), 0.0);
  }

  NoGradGuard guard;
  const double f0 = f().item();
  const double h = options.step;
  Rng rng(options.seed);
  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto data = params[pi].data();
    std::vector<std::size_t> coords(data.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_param > 0 && coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
    }
    double worst = 0.0;
    for (auto c : coords) {
      const double orig = data[c];
      data[c] = orig + h;
      const double fp = f().item();
      data[c] = orig - h;
      const double fm = f().item();
      data[c] = orig;
      const double fwd = (fp - f0) / h;
      const double bwd = (f0 - fm) / h;
      if (std::abs(fwd - bwd) > options.kink_tolerance * std::max(std::abs(fwd), std::abs(bwd)) + 1e-6) {
        ++res.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi][c];
      const double err = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), options.scale_floor);
      worst = std::max(worst, err);
      ++res.checked;
    }
    res.per_param.push_back(worst);
    res.max_relative_error = std::max(res.max_relative_error, worst);
  }
  return res;
}

}  // namespace magnn::ad
