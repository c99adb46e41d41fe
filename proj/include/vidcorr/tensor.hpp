#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vidcorr/errors.hpp"

namespace vidcorr {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

class ComputationRecord;

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized like data iff requires_grad
  bool requires_grad = false;
  ComputationRecord* record = nullptr;  // record holding the producing op
  std::int64_t record_pos = -1;
};

}  // namespace detail

// Dense N-d array of doubles with an optional gradient buffer. Value-semantics
// handle: copies share the underlying node. Data is immutable after creation
// except through raw_data() (leaf weight updates) and the grad buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t size() const;
  bool requires_grad() const;

  std::span<const double> data() const;
  // Mutable access for leaf updates (optimizers, momentum blending). Op
  // outputs must not be mutated; the graph caches no copies.
  std::span<double> raw_data();

  std::span<const double> grad() const;
  void zero_grad();
  void accumulate_grad(std::span<const double> g);

  // Scalar convenience: requires size() == 1.
  double value() const;

  // Copy of the values as a leaf with no gradient.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
  friend Tensor wrap_node(std::shared_ptr<detail::TensorNode>);
};

namespace detail {

// Everything a backward rule needs: the output adjoint and values, plus the
// recorded inputs. grad_ptr(i) is null when input i takes no gradient.
struct BackwardCtx {
  std::span<const double> out_grad;
  std::span<const double> out_data;
  const std::vector<std::shared_ptr<TensorNode>>* inputs = nullptr;

  std::span<const double> in_data(std::size_t i) const { return (*inputs)[i]->data; }
  const Shape& in_shape(std::size_t i) const { return (*inputs)[i]->shape; }
  double* grad_ptr(std::size_t i) const {
    TensorNode& n = *(*inputs)[i];
    return n.requires_grad ? n.grad.data() : nullptr;
  }
};

using BackwardFn = std::function<void(const BackwardCtx&)>;

// Builds an op output, verifies it is finite, and appends a tape entry to the
// active record when any input requires a gradient and recording is enabled.
Tensor make_op(const char* name, std::vector<Tensor> inputs, Shape out_shape,
               std::vector<double> out_data, BackwardFn backward);

void check_finite(const char* op, std::span<const double> values);

}  // namespace detail

// Ordered tape of executed ops. Execution order is topological by
// construction; backward replays the rules in reverse, visiting each op once.
class ComputationRecord {
 public:
  ComputationRecord() = default;
  ComputationRecord(const ComputationRecord&) = delete;
  ComputationRecord& operator=(const ComputationRecord&) = delete;

  // Fills grad buffers with d(root)/d(leaf). Grads accumulate; callers clear
  // them between unrelated backward passes.
  void backward(const Tensor& root);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

  struct Entry {
    const char* op;
    std::vector<std::shared_ptr<detail::TensorNode>> inputs;
    std::shared_ptr<detail::TensorNode> output;
    detail::BackwardFn backward;
  };

  std::int64_t append(Entry entry);

 private:
  std::vector<Entry> entries_;
};

// Installs `record` as the destination for ops executed in this scope.
class RecordingScope {
 public:
  explicit RecordingScope(ComputationRecord& record);
  ~RecordingScope();
  RecordingScope(const RecordingScope&) = delete;
  RecordingScope& operator=(const RecordingScope&) = delete;
};

// Suppresses recording (teacher forwards, pseudo-label construction, probes).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
};

ComputationRecord* active_record();

// Backward through the record that produced `root`.
void backpropagate(const Tensor& root);

// ---- ops ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // (m,k) x (k,n) -> (m,n)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // (m,k) x (n,k) -> (m,n)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor relu(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);
Tensor l2_normalize_lastdim(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar
Tensor l1_diff(const Tensor& a, const Tensor& b);  // |a-b| elementwise
Tensor sq_diff(const Tensor& a, const Tensor& b);  // (a-b)^2 elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t len);
Tensor reshape(const Tensor& x, Shape new_shape);

inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }
inline Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

// ---- verification harness -------------------------------------------------

struct FiniteDifferenceReport {
  double max_rel_err = 0.0;
  std::int64_t worst_coord = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `f` must be deterministic; it receives a leaf tensor and returns a scalar.
FiniteDifferenceReport finite_difference_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

// Same check against several leaves at once: f is evaluated on the current
// values of `leaves` (the closure reads them), and the report is the max over
// all their coordinates.
FiniteDifferenceReport finite_difference_check_multi(
    const std::function<Tensor()>& f, std::span<Tensor> leaves, double eps);

}  // namespace vidcorr
