#include "vidcorr/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace vidcorr {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

namespace {

thread_local std::vector<ComputationRecord*> g_record_stack;
thread_local int g_nograd_depth = 0;

bool grad_enabled() { return g_nograd_depth == 0; }

std::shared_ptr<detail::TensorNode> new_node(Shape shape, std::vector<double> data,
                                             bool requires_grad) {
  const auto n = shape_numel(shape);
  if (static_cast<std::int64_t>(data.size()) != n) {
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->data.size(), 0.0);
  return node;
}

}  // namespace

Tensor wrap_node(std::shared_ptr<detail::TensorNode> node) { return Tensor(std::move(node)); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return wrap_node(new_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return wrap_node(new_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  return wrap_node(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ShapeError("tensor: use of undefined tensor");
  return node_->shape;
}

std::int64_t Tensor::size() const {
  return static_cast<std::int64_t>(node_ ? node_->data.size() : 0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const double> Tensor::data() const {
  if (!node_) throw ShapeError("tensor: use of undefined tensor");
  return node_->data;
}

std::span<double> Tensor::raw_data() {
  if (!node_) throw ShapeError("tensor: use of undefined tensor");
  return node_->data;
}

std::span<const double> Tensor::grad() const {
  if (!requires_grad()) throw ShapeError("tensor: grad requested on a tensor without gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> g) {
  if (!requires_grad()) throw ShapeError("tensor: accumulate_grad on a tensor without gradient");
  if (g.size() != node_->grad.size()) {
    throw ShapeError("tensor: gradient length mismatch");
  }
  for (std::size_t i = 0; i < g.size(); ++i) node_->grad[i] += g[i];
}

double Tensor::value() const {
  if (size() != 1) {
    throw ShapeError("tensor: value() requires a scalar, got shape " + shape_str(shape()));
  }
  return node_->data[0];
}

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  if (!node_) throw ShapeError("tensor: clone of undefined tensor");
  return from_data(node_->shape, node_->data, requires_grad);
}

namespace detail {

void check_finite(const char* op, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericFault(std::string("op ") + op + " produced a non-finite value");
    }
  }
}

Tensor make_op(const char* name, std::vector<Tensor> inputs, Shape out_shape,
               std::vector<double> out_data, BackwardFn backward) {
  check_finite(name, out_data);
  bool needs_grad = false;
  if (grad_enabled() && !g_record_stack.empty()) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) {
        needs_grad = true;
        break;
      }
    }
  }
  auto out = new_node(std::move(out_shape), std::move(out_data), needs_grad);
  if (needs_grad) {
    ComputationRecord* rec = g_record_stack.back();
    ComputationRecord::Entry entry;
    entry.op = name;
    entry.inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) entry.inputs.push_back(t.node());
    entry.output = out;
    entry.backward = std::move(backward);
    out->record = rec;
    out->record_pos = rec->append(std::move(entry));
  }
  return wrap_node(std::move(out));
}

}  // namespace detail

std::int64_t ComputationRecord::append(Entry entry) {
  entries_.push_back(std::move(entry));
  return static_cast<std::int64_t>(entries_.size()) - 1;
}

void ComputationRecord::backward(const Tensor& root) {
  if (root.size() != 1) {
    throw ShapeError("backpropagate: root must be a scalar, got shape " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    throw ShapeError("backpropagate: root is detached from any recorded computation");
  }
  auto root_node = root.node();
  if (root_node->record == nullptr) {
    // Leaf with requires_grad: d(root)/d(root) = 1.
    root_node->grad[0] += 1.0;
    return;
  }
  if (root_node->record != this) {
    throw ShapeError("backpropagate: root was recorded on a different ComputationRecord");
  }
  // Interior adjoints belong to this walk alone; only leaf grads accumulate
  // across calls.
  for (std::int64_t i = 0; i <= root_node->record_pos; ++i) {
    auto& g = entries_[static_cast<std::size_t>(i)].output->grad;
    std::fill(g.begin(), g.end(), 0.0);
  }
  root_node->grad[0] = 1.0;
  for (std::int64_t i = root_node->record_pos; i >= 0; --i) {
    Entry& e = entries_[static_cast<std::size_t>(i)];
    detail::BackwardCtx ctx;
    ctx.out_grad = e.output->grad;
    ctx.out_data = e.output->data;
    ctx.inputs = &e.inputs;
    e.backward(ctx);
  }
}

RecordingScope::RecordingScope(ComputationRecord& record) { g_record_stack.push_back(&record); }
RecordingScope::~RecordingScope() { g_record_stack.pop_back(); }

NoGradScope::NoGradScope() { ++g_nograd_depth; }
NoGradScope::~NoGradScope() { --g_nograd_depth; }

ComputationRecord* active_record() {
  if (!grad_enabled() || g_record_stack.empty()) return nullptr;
  return g_record_stack.back();
}

void backpropagate(const Tensor& root) {
  if (root.size() != 1) {
    throw ShapeError("backpropagate: root must be a scalar, got shape " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    throw ShapeError("backpropagate: root is detached from any recorded computation");
  }
  auto node = root.node();
  if (node->record == nullptr) {
    node->grad[0] += 1.0;
    return;
  }
  node->record->backward(root);
}

// ---- op kernels -----------------------------------------------------------

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const std::int64_t m = a.shape()[0], k = a.shape()[1];
  require(b.shape()[0] == k, "matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                                 shape_str(b.shape()));
  const std::int64_t n = b.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &bd[p * n];
      double* orow = &out[static_cast<std::size_t>(i * n)];
      for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return detail::make_op("matmul", {a, b}, {m, n}, std::move(out),
                         [m, k, n](const detail::BackwardCtx& ctx) {
                           const auto g = ctx.out_grad;
                           const auto ad = ctx.in_data(0);
                           const auto bd = ctx.in_data(1);
                           if (double* da = ctx.grad_ptr(0)) {
                             for (std::int64_t i = 0; i < m; ++i)
                               for (std::int64_t p = 0; p < k; ++p) {
                                 double acc = 0.0;
                                 for (std::int64_t j = 0; j < n; ++j)
                                   acc += g[i * n + j] * bd[p * n + j];
                                 da[i * k + p] += acc;
                               }
                           }
                           if (double* db = ctx.grad_ptr(1)) {
                             for (std::int64_t p = 0; p < k; ++p)
                               for (std::int64_t i = 0; i < m; ++i) {
                                 const double av = ad[i * k + p];
                                 if (av == 0.0) continue;
                                 for (std::int64_t j = 0; j < n; ++j)
                                   db[p * n + j] += av * g[i * n + j];
                               }
                           }
                         });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul_nt: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const std::int64_t m = a.shape()[0], k = a.shape()[1];
  require(b.shape()[1] == k, "matmul_nt: inner dimensions differ, " + shape_str(a.shape()) +
                                 " x " + shape_str(b.shape()) + "^T");
  const std::int64_t n = b.shape()[0];
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += ad[i * k + p] * bd[j * k + p];
      out[static_cast<std::size_t>(i * n + j)] = acc;
    }
  }
  return detail::make_op("matmul_nt", {a, b}, {m, n}, std::move(out),
                         [m, k, n](const detail::BackwardCtx& ctx) {
                           const auto g = ctx.out_grad;
                           const auto ad = ctx.in_data(0);
                           const auto bd = ctx.in_data(1);
                           if (double* da = ctx.grad_ptr(0)) {
                             for (std::int64_t i = 0; i < m; ++i)
                               for (std::int64_t j = 0; j < n; ++j) {
                                 const double gv = g[i * n + j];
                                 if (gv == 0.0) continue;
                                 for (std::int64_t p = 0; p < k; ++p)
                                   da[i * k + p] += gv * bd[j * k + p];
                               }
                           }
                           if (double* db = ctx.grad_ptr(1)) {
                             for (std::int64_t i = 0; i < m; ++i)
                               for (std::int64_t j = 0; j < n; ++j) {
                                 const double gv = g[i * n + j];
                                 if (gv == 0.0) continue;
                                 for (std::int64_t p = 0; p < k; ++p)
                                   db[j * k + p] += gv * ad[i * k + p];
                               }
                           }
                         });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  require(x.rank() == 3, "conv2d: input must be (H,W,C), got " + shape_str(x.shape()));
  require(w.rank() == 4, "conv2d: weight must be (kh,kw,Cin,Cout), got " + shape_str(w.shape()));
  require(b.rank() == 1, "conv2d: bias must be (Cout), got " + shape_str(b.shape()));
  require(stride >= 1, "conv2d: stride must be >= 1");
  const std::int64_t H = x.shape()[0], W = x.shape()[1], Ci = x.shape()[2];
  const std::int64_t kh = w.shape()[0], kw = w.shape()[1];
  require(w.shape()[2] == Ci, "conv2d: weight input channels " + shape_str(w.shape()) +
                                  " do not match input " + shape_str(x.shape()));
  const std::int64_t Co = w.shape()[3];
  require(b.shape()[0] == Co, "conv2d: bias " + shape_str(b.shape()) + " does not match weight " +
                                  shape_str(w.shape()));
  const std::int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const std::int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  require(Ho >= 1 && Wo >= 1, "conv2d: output would be empty");

  std::vector<double> out(static_cast<std::size_t>(Ho * Wo * Co));
  const auto xd = x.data();
  const auto wd = w.data();
  const auto bd = b.data();
  for (std::int64_t oy = 0; oy < Ho; ++oy) {
    for (std::int64_t ox = 0; ox < Wo; ++ox) {
      double* orow = &out[static_cast<std::size_t>((oy * Wo + ox) * Co)];
      for (std::int64_t c = 0; c < Co; ++c) orow[c] = bd[c];
      for (std::int64_t ky = 0; ky < kh; ++ky) {
        const std::int64_t iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= H) continue;
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          const std::int64_t ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= W) continue;
          const double* xrow = &xd[(iy * W + ix) * Ci];
          const double* wrow = &wd[((ky * kw + kx) * Ci) * Co];
          for (std::int64_t ci = 0; ci < Ci; ++ci) {
            const double xv = xrow[ci];
            if (xv == 0.0) continue;
            const double* wr = &wrow[ci * Co];
            for (std::int64_t c = 0; c < Co; ++c) orow[c] += xv * wr[c];
          }
        }
      }
    }
  }
  const std::int64_t s = stride, p = pad;
  return detail::make_op(
      "conv2d", {x, w, b}, {Ho, Wo, Co}, std::move(out),
      [H, W, Ci, kh, kw, Co, Ho, Wo, s, p](const detail::BackwardCtx& ctx) {
        const auto g = ctx.out_grad;
        const auto xd = ctx.in_data(0);
        const auto wd = ctx.in_data(1);
        double* dx = ctx.grad_ptr(0);
        double* dw = ctx.grad_ptr(1);
        double* db = ctx.grad_ptr(2);
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const double* grow = &g[(oy * Wo + ox) * Co];
            if (db) {
              for (std::int64_t c = 0; c < Co; ++c) db[c] += grow[c];
            }
            for (std::int64_t ky = 0; ky < kh; ++ky) {
              const std::int64_t iy = oy * s + ky - p;
              if (iy < 0 || iy >= H) continue;
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                const std::int64_t ix = ox * s + kx - p;
                if (ix < 0 || ix >= W) continue;
                const std::size_t xoff = static_cast<std::size_t>((iy * W + ix) * Ci);
                const std::size_t woff = static_cast<std::size_t>(((ky * kw + kx) * Ci) * Co);
                for (std::int64_t ci = 0; ci < Ci; ++ci) {
                  const double* wr = &wd[woff + static_cast<std::size_t>(ci * Co)];
                  if (dw) {
                    const double xv = xd[xoff + static_cast<std::size_t>(ci)];
                    if (xv != 0.0) {
                      double* dwr = &dw[woff + static_cast<std::size_t>(ci * Co)];
                      for (std::int64_t c = 0; c < Co; ++c) dwr[c] += xv * grow[c];
                    }
                  }
                  if (dx) {
                    double acc = 0.0;
                    for (std::int64_t c = 0; c < Co; ++c) acc += wr[c] * grow[c];
                    dx[xoff + static_cast<std::size_t>(ci)] += acc;
                  }
                }
              }
            }
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_op("relu", {x}, x.shape(), std::move(out),
                         [](const detail::BackwardCtx& ctx) {
                           if (double* dx = ctx.grad_ptr(0)) {
                             const auto xd = ctx.in_data(0);
                             const auto g = ctx.out_grad;
                             for (std::size_t i = 0; i < g.size(); ++i)
                               if (xd[i] > 0.0) dx[i] += g[i];
                           }
                         });
}

namespace {

std::int64_t lastdim_rows(const Tensor& x, const char* op, std::int64_t& row_len) {
  require(x.rank() >= 1, std::string(op) + ": needs rank >= 1, got " + shape_str(x.shape()));
  row_len = x.shape().back();
  require(row_len >= 1, std::string(op) + ": empty last dimension");
  return x.size() / row_len;
}

}  // namespace

Tensor softmax_lastdim(const Tensor& x) {
  std::int64_t n;
  const std::int64_t rows = lastdim_rows(x, "softmax_lastdim", n);
  std::vector<double> out(static_cast<std::size_t>(rows * n));
  const auto xd = x.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = &xd[r * n];
    double* o = &out[static_cast<std::size_t>(r * n)];
    double mx = in[0];
    for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::int64_t j = 0; j < n; ++j) o[j] /= z;
  }
  return detail::make_op("softmax_lastdim", {x}, x.shape(), std::move(out),
                         [rows, n](const detail::BackwardCtx& ctx) {
                           if (double* dx = ctx.grad_ptr(0)) {
                             const auto y = ctx.out_data;
                             const auto g = ctx.out_grad;
                             for (std::int64_t r = 0; r < rows; ++r) {
                               const double* yr = &y[r * n];
                               const double* gr = &g[r * n];
                               double s = 0.0;
                               for (std::int64_t j = 0; j < n; ++j) s += gr[j] * yr[j];
                               double* d = &dx[r * n];
                               for (std::int64_t j = 0; j < n; ++j) d[j] += yr[j] * (gr[j] - s);
                             }
                           }
                         });
}

Tensor l2_normalize_lastdim(const Tensor& x) {
  std::int64_t n;
  const std::int64_t rows = lastdim_rows(x, "l2_normalize_lastdim", n);
  std::vector<double> out(static_cast<std::size_t>(rows * n));
  std::vector<double> norms(static_cast<std::size_t>(rows));
  const auto xd = x.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = &xd[r * n];
    double sq = 0.0;
    for (std::int64_t j = 0; j < n; ++j) sq += in[j] * in[j];
    const double norm = std::sqrt(sq);
    if (norm == 0.0) throw NumericFault("l2_normalize_lastdim: zero-norm row");
    norms[static_cast<std::size_t>(r)] = norm;
    double* o = &out[static_cast<std::size_t>(r * n)];
    for (std::int64_t j = 0; j < n; ++j) o[j] = in[j] / norm;
  }
  return detail::make_op("l2_normalize_lastdim", {x}, x.shape(), std::move(out),
                         [rows, n, norms = std::move(norms)](const detail::BackwardCtx& ctx) {
                           if (double* dx = ctx.grad_ptr(0)) {
                             const auto y = ctx.out_data;
                             const auto g = ctx.out_grad;
                             for (std::int64_t r = 0; r < rows; ++r) {
                               const double* yr = &y[r * n];
                               const double* gr = &g[r * n];
                               double s = 0.0;
                               for (std::int64_t j = 0; j < n; ++j) s += gr[j] * yr[j];
                               const double inv = 1.0 / norms[static_cast<std::size_t>(r)];
                               double* d = &dx[r * n];
                               for (std::int64_t j = 0; j < n; ++j)
                                 d[j] += (gr[j] - yr[j] * s) * inv;
                             }
                           }
                         });
}

Tensor exp(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = std::exp(v);
  return detail::make_op("exp", {x}, x.shape(), std::move(out),
                         [](const detail::BackwardCtx& ctx) {
                           if (double* dx = ctx.grad_ptr(0)) {
                             const auto y = ctx.out_data;
                             const auto g = ctx.out_grad;
                             for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i];
                           }
                         });
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = std::log(v);
  return detail::make_op("log", {x}, x.shape(), std::move(out),
                         [](const detail::BackwardCtx& ctx) {
                           if (double* dx = ctx.grad_ptr(0)) {
                             const auto xd = ctx.in_data(0);
                             const auto g = ctx.out_grad;
                             for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / xd[i];
                           }
                         });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return detail::make_op("sum", {x}, {}, {acc}, [](const detail::BackwardCtx& ctx) {
    if (double* dx = ctx.grad_ptr(0)) {
      const double g = ctx.out_grad[0];
      const std::size_t n = ctx.in_data(0).size();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g;
    }
  });
}

Tensor mean(const Tensor& x) {
  require(x.size() >= 1, "mean: empty tensor");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  return detail::make_op("mean", {x}, {}, {acc * inv}, [inv](const detail::BackwardCtx& ctx) {
    if (double* dx = ctx.grad_ptr(0)) {
      const double g = ctx.out_grad[0] * inv;
      const std::size_t n = ctx.in_data(0).size();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g;
    }
  });
}

Tensor l1_diff(const Tensor& a, const Tensor& b) {
  require_same_shape("l1_diff", a, b);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = std::abs(ad[i] - bd[i]);
  return detail::make_op("l1_diff", {a, b}, a.shape(), std::move(out),
                         [](const detail::BackwardCtx& ctx) {
                           const auto ad = ctx.in_data(0);
                           const auto bd = ctx.in_data(1);
                           const auto g = ctx.out_grad;
                           double* da = ctx.grad_ptr(0);
                           double* db = ctx.grad_ptr(1);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const double d = ad[i] - bd[i];
                             const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                             if (da) da[i] += sgn * g[i];
                             if (db) db[i] -= sgn * g[i];
                           }
                         });
}

Tensor sq_diff(const Tensor& a, const Tensor& b) {
  require_same_shape("sq_diff", a, b);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = ad[i] - bd[i];
    out[i] = d * d;
  }
  return detail::make_op("sq_diff", {a, b}, a.shape(), std::move(out),
                         [](const detail::BackwardCtx& ctx) {
                           const auto ad = ctx.in_data(0);
                           const auto bd = ctx.in_data(1);
                           const auto g = ctx.out_grad;
                           double* da = ctx.grad_ptr(0);
                           double* db = ctx.grad_ptr(1);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const double d = 2.0 * (ad[i] - bd[i]) * g[i];
                             if (da) da[i] += d;
                             if (db) db[i] -= d;
                           }
                         });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  require_same_shape(name, a, b);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i], bd[i]);
  return detail::make_op(name, {a, b}, a.shape(), std::move(out),
                         [bwd](const detail::BackwardCtx& ctx) {
                           const auto ad = ctx.in_data(0);
                           const auto bd = ctx.in_data(1);
                           const auto g = ctx.out_grad;
                           double* da = ctx.grad_ptr(0);
                           double* db = ctx.grad_ptr(1);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             bwd(ad[i], bd[i], g[i], da ? &da[i] : nullptr, db ? &db[i] : nullptr);
                         });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double* da, double* db) {
        if (da) *da += g;
        if (db) *db += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double* da, double* db) {
        if (da) *da += g;
        if (db) *db -= g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double* da, double* db) {
        if (da) *da += g * y;
        if (db) *db += g * x;
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v += s;
  return detail::make_op("add_scalar", {a}, a.shape(), std::move(out),
                         [](const detail::BackwardCtx& ctx) {
                           if (double* da = ctx.grad_ptr(0)) {
                             const auto g = ctx.out_grad;
                             for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                           }
                         });
}

Tensor mul_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= s;
  return detail::make_op("mul_scalar", {a}, a.shape(), std::move(out),
                         [s](const detail::BackwardCtx& ctx) {
                           if (double* da = ctx.grad_ptr(0)) {
                             const auto g = ctx.out_grad;
                             for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * s;
                           }
                         });
}

namespace {

struct AxisGeom {
  std::int64_t outer = 1;
  std::int64_t axis_len = 1;
  std::int64_t inner = 1;
};

AxisGeom axis_geometry(const Shape& s, int axis, const char* op) {
  require(axis >= 0 && axis < static_cast<int>(s.size()),
          std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
              shape_str(s));
  AxisGeom g;
  for (int i = 0; i < axis; ++i) g.outer *= s[static_cast<std::size_t>(i)];
  g.axis_len = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) g.inner *= s[i];
  return g;
}

}  // namespace

Tensor concat(std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts[0].shape();
  const AxisGeom geom = axis_geometry(first, axis, "concat");
  std::int64_t total_axis = 0;
  for (const Tensor& t : parts) {
    require(t.rank() == parts[0].rank(), "concat: rank mismatch " + shape_str(t.shape()) +
                                             " vs " + shape_str(first));
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (static_cast<int>(i) == axis) continue;
      require(t.shape()[i] == first[i], "concat: shape mismatch off-axis " +
                                            shape_str(t.shape()) + " vs " + shape_str(first));
    }
    total_axis += t.shape()[static_cast<std::size_t>(axis)];
  }
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = total_axis;
  std::vector<double> out(static_cast<std::size_t>(geom.outer * total_axis * geom.inner));
  std::vector<std::int64_t> part_axis;
  std::int64_t off = 0;
  for (const Tensor& t : parts) {
    const std::int64_t len = t.shape()[static_cast<std::size_t>(axis)];
    part_axis.push_back(len);
    const auto src = t.data();
    for (std::int64_t o = 0; o < geom.outer; ++o) {
      std::copy_n(&src[o * len * geom.inner], static_cast<std::size_t>(len * geom.inner),
                  &out[static_cast<std::size_t>((o * total_axis + off) * geom.inner)]);
    }
    off += len;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return detail::make_op(
      "concat", std::move(inputs), std::move(out_shape), std::move(out),
      [geom, total_axis, part_axis](const detail::BackwardCtx& ctx) {
        const auto g = ctx.out_grad;
        std::int64_t off = 0;
        for (std::size_t p = 0; p < part_axis.size(); ++p) {
          const std::int64_t len = part_axis[p];
          if (double* dp = ctx.grad_ptr(p)) {
            for (std::int64_t o = 0; o < geom.outer; ++o) {
              const double* src = &g[(o * total_axis + off) * geom.inner];
              double* dst = &dp[o * len * geom.inner];
              for (std::int64_t i = 0; i < len * geom.inner; ++i) dst[i] += src[i];
            }
          }
          off += len;
        }
      });
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t len) {
  const AxisGeom geom = axis_geometry(x.shape(), axis, "slice");
  require(start >= 0 && len >= 1 && start + len <= geom.axis_len,
          "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
              ") out of bounds for axis length " + std::to_string(geom.axis_len));
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  std::vector<double> out(static_cast<std::size_t>(geom.outer * len * geom.inner));
  const auto xd = x.data();
  for (std::int64_t o = 0; o < geom.outer; ++o) {
    std::copy_n(&xd[(o * geom.axis_len + start) * geom.inner],
                static_cast<std::size_t>(len * geom.inner),
                &out[static_cast<std::size_t>(o * len * geom.inner)]);
  }
  const std::int64_t axis_len = geom.axis_len;
  return detail::make_op("slice", {x}, std::move(out_shape), std::move(out),
                         [geom, axis_len, start, len](const detail::BackwardCtx& ctx) {
                           if (double* dx = ctx.grad_ptr(0)) {
                             const auto g = ctx.out_grad;
                             for (std::int64_t o = 0; o < geom.outer; ++o) {
                               const double* src = &g[o * len * geom.inner];
                               double* dst = &dx[(o * axis_len + start) * geom.inner];
                               for (std::int64_t i = 0; i < len * geom.inner; ++i)
                                 dst[i] += src[i];
                             }
                           }
                         });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  require(shape_numel(new_shape) == x.size(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return detail::make_op("reshape", {x}, std::move(new_shape), std::move(out),
                         [](const detail::BackwardCtx& ctx) {
                           if (double* dx = ctx.grad_ptr(0)) {
                             const auto g = ctx.out_grad;
                             for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                           }
                         });
}

// ---- finite differences ----------------------------------------------------

FiniteDifferenceReport finite_difference_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor leaf = x.clone(true);
  auto closure = [&]() { return f(leaf); };
  std::array<Tensor, 1> leaves{leaf};
  return finite_difference_check_multi(closure, leaves, eps);
}

FiniteDifferenceReport finite_difference_check_multi(
    const std::function<Tensor()>& f, std::span<Tensor> leaves, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw std::invalid_argument("finite_difference_check: eps must be in (0, 1e-2]");
  }
  // Analytic pass.
  ComputationRecord record;
  std::vector<std::vector<double>> analytic;
  {
    RecordingScope scope(record);
    Tensor y = f();
    if (y.size() != 1) {
      throw ShapeError("finite_difference_check: f must return a scalar");
    }
    for (Tensor& leaf : leaves) leaf.zero_grad();
    record.backward(y);
    for (Tensor& leaf : leaves) {
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    }
  }

  FiniteDifferenceReport report;
  std::int64_t coord_base = 0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    auto values = leaf.raw_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double f_plus, f_minus;
      {
        NoGradScope no_grad;
        values[i] = saved + eps;
        f_plus = f().value();
        values[i] = saved - eps;
        f_minus = f().value();
        values[i] = saved;
      }
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw NumericFault("finite_difference_check: f non-finite at probe point");
      }
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[li][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_coord = coord_base + static_cast<std::int64_t>(i);
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
    coord_base += leaf.size();
  }
  return report;
}

}  // namespace vidcorr
