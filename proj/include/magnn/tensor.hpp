#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "magnn/rng.hpp"

namespace magnn::ad {

/// Up to three axes. Operations view a tensor as a matrix whose column count
/// is the last axis and whose row count is the product of the rest.
using Shape = std::vector<std::size_t>;

struct Node;

/// Handle to a dense float64 buffer that may take part in a recorded
/// computation graph. Copies share the same node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v) { return constant({}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Mutable access for optimizers and finite differences. Do not modify a
  /// tensor whose value has already been consumed by a live recording.
  std::span<double> data();
  std::span<const double> grad() const;
  bool requires_grad() const;
  void zero_grad();

  double item() const;
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared_node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until needed; same size as value otherwise
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // reads this->grad, accumulates into parents

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Disables recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Offsets delimiting variable-length groups of rows.
class SegmentLayout {
 public:
  SegmentLayout() : offsets_{0} {}
  explicit SegmentLayout(std::vector<std::size_t> offsets);

  std::size_t num_segments() const { return offsets_.size() - 1; }
  std::size_t total() const { return offsets_.back(); }
  std::size_t begin(std::size_t s) const { return offsets_[s]; }
  std::size_t end(std::size_t s) const { return offsets_[s + 1]; }
  std::span<const std::size_t> offsets() const { return offsets_; }

 private:
  std::vector<std::size_t> offsets_;
};

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);     // [n,k] x [k,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [n,k] x [m,k]^T
Tensor transpose(const Tensor& a);

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// a[n,m] + b broadcast over rows; b has m elements.
Tensor add_row_vector(const Tensor& a, const Tensor& b);

// Activations
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor elu(const Tensor& a, double alpha = 1.0);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
/// log(max(a, floor)); zero gradient where clamped.
Tensor log_clamped(const Tensor& a, double floor = 1e-12);
Tensor softmax_rows(const Tensor& a);
/// Inverted dropout: identity when !train or p == 0, else mask / (1 - p).
Tensor dropout(const Tensor& a, double p, bool train, Rng& rng);

// Reductions and restructuring
Tensor sum(const Tensor& a);        // scalar
Tensor mean_rows(const Tensor& a);  // [1, cols]
Tensor row_dot(const Tensor& a, const Tensor& b);  // [n, 1]
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& a, std::span<const std::uint32_t> rows);
/// Elements a[rows[i], cols[i]] as an [n, 1] column.
Tensor pick(const Tensor& a, std::span<const std::uint32_t> rows, std::span<const std::uint32_t> cols);
/// sum_m w[m] * parts[m]; w holds parts.size() elements.
Tensor weighted_sum(const std::vector<Tensor>& parts, const Tensor& w);

// Segment operations over rows
/// Softmax of every column within each segment; empty segments contribute nothing.
Tensor segment_softmax(const Tensor& scores, const SegmentLayout& layout);
/// values [N, D], weights [N, K] -> [segments, K*D], head k occupying columns [k*D, (k+1)*D).
Tensor segment_weighted_sum(const Tensor& values, const Tensor& weights, const SegmentLayout& layout);

// Complex-valued helpers; a real vector of even length d holds d/2 complex
// numbers with real parts first and imaginary parts second.
/// Elementwise complex product. b is either a's shape or one row broadcast over a's rows.
Tensor complex_hadamard(const Tensor& a, const Tensor& b);
/// theta [.., m] -> [.., 2m] = [cos theta | sin theta], i.e. exp(i theta).
Tensor unit_phasor(const Tensor& theta);

/// Populates gradients of every recorded leaf reachable from `loss`.
/// Gradients accumulate into leaves; call zero_grad between steps.
void backward(const Tensor& loss);

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t max_coords_per_param = 0;  // 0 checks every coordinate
  std::uint64_t seed = 0;
  double kink_tolerance = 1e-2;  // relative disagreement of one-sided slopes
  /// Gradients smaller than this are compared in absolute terms; below it a
  /// relative error only measures roundoff.
  double scale_floor = 1e-6;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates at nondifferentiable points
  std::vector<double> per_param;
};

/// Compares analytic gradients of f against central differences. f must
/// rebuild its recording from the current parameter values on every call.
/// Coordinates whose one-sided slopes disagree (a kink) are skipped.
GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace magnn::ad
