#pragma once
// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a graph node holding shape, row-major data,
// and (when gradients are tracked) a same-shape gradient accumulator plus a
// backprop closure. Graphs are built eagerly by the op functions below and
// torn down when the last handle goes out of scope. Rank 1 and rank 2 cover
// everything this project needs; routers flatten their node grids into
// (rows x cols) matrices.
//
// Gradient semantics: backward(loss) accumulates d(loss)/d(param) into every
// reachable leaf that tracks gradients. Repeated calls accumulate; zero_grad
// resets. Non-leaf gradient buffers are cleared at the start of each backward
// pass so several losses may share a subgraph.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "kern/error.hpp"
#include "kern/rng.hpp"

#if !defined(KERN_CHECK_FINITE)
#if defined(NDEBUG)
#define KERN_CHECK_FINITE 0
#else
#define KERN_CHECK_FINITE 1
#endif
#endif

namespace kern {

using Shape = std::vector<std::size_t>;

namespace detail {

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

// Thread-local switch: when false, ops produce detached results (inference).
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same size as data iff requires_grad
  bool requires_grad = false;
  std::uint64_t id = detail::next_node_id();
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // pushes this->grad into parents

  bool is_leaf() const { return parents.empty(); }
};

class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return make(std::move(shape), {}, false);
  }
  static Tensor full(Shape shape, double v) {
    auto t = make(std::move(shape), {}, false);
    std::fill(t.node_->data.begin(), t.node_->data.end(), v);
    return t;
  }
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (detail::shape_numel(shape) != data.size())
      throw dimension_error("tensor: shape " + detail::shape_str(shape) + " expects " +
                            std::to_string(detail::shape_numel(shape)) + " values, got " +
                            std::to_string(data.size()));
    auto t = make(std::move(shape), std::move(data), requires_grad);
    t.check_finite("from");
    return t;
  }
  static Tensor scalar(double v) { return from({1}, {v}); }
  static Tensor param(Shape shape, std::vector<double> data) {
    return from(std::move(shape), std::move(data), true);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[0]; }
  std::size_t cols() const { return rank() == 1 ? node_->shape[0] : node_->shape[1]; }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  double value() const {
    if (numel() != 1) throw validation_error("value(): tensor is not scalar");
    return node_->data[0];
  }
  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->data.at(r * cols() + c); }

  const std::vector<double>& grad() const {
    if (!node_->requires_grad)
      throw validation_error("grad(): tensor does not track gradients");
    return node_->grad;
  }
  void zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  // Deep copy detached from any graph.
  Tensor detach() const {
    return from(node_->shape, node_->data, false);
  }
  Tensor clone_param() const {
    return from(node_->shape, node_->data, true);
  }

  std::shared_ptr<TensorNode> node() const { return node_; }

  void check_finite(const char* where) const {
#if KERN_CHECK_FINITE
    for (double v : node_->data)
      if (!std::isfinite(v))
        throw numeric_error(std::string("non-finite value in ") + where);
#else
    (void)where;
#endif
  }

  friend void backward(const Tensor& loss);

  // Op implementation hook: result node with parent links and backprop fn.
  static Tensor make_op(Shape shape, std::vector<double> data,
                        std::vector<Tensor> inputs,
                        std::function<void(TensorNode&)> backprop,
                        const char* name) {
    bool track = false;
    if (detail::grad_mode())
      for (const auto& in : inputs) track = track || in.requires_grad();
    Tensor out = make(std::move(shape), std::move(data), track);
    if (track) {
      out.node_->parents.reserve(inputs.size());
      for (auto& in : inputs) out.node_->parents.push_back(in.node_);
      out.node_->backprop = std::move(backprop);
    }
    out.check_finite(name);
    return out;
  }

private:
  static Tensor make(Shape shape, std::vector<double> data, bool requires_grad) {
    Tensor t;
    t.node_ = std::make_shared<TensorNode>();
    t.node_->shape = std::move(shape);
    if (data.empty())
      t.node_->data.assign(detail::shape_numel(t.node_->shape), 0.0);
    else
      t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    if (requires_grad) t.node_->grad.assign(t.node_->data.size(), 0.0);
    return t;
  }

  std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw dimension_error(msg);
}

inline std::vector<double>& grad_of(TensorNode& n) { return n.grad; }

}  // namespace detail

// ---------------------------------------------------------------------------
// backward

inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw validation_error("backward: loss must be scalar, got shape " +
                           detail::shape_str(loss.shape()));
  auto root = loss.node();
  if (!root->requires_grad)
    throw validation_error("backward: loss was not produced by tracked operations");

  // Reachable subgraph. Node ids increase with creation order, so descending
  // id is a valid topological order and is bit-reproducible.
  std::vector<TensorNode*> nodes;
  {
    std::vector<TensorNode*> stack{root.get()};
    std::map<std::uint64_t, TensorNode*> seen;
    while (!stack.empty()) {
      TensorNode* n = stack.back();
      stack.pop_back();
      if (!seen.emplace(n->id, n).second) continue;
      for (auto& p : n->parents)
        if (p->requires_grad) stack.push_back(p.get());
    }
    nodes.reserve(seen.size());
    for (auto& [id, n] : seen) nodes.push_back(n);
    std::sort(nodes.begin(), nodes.end(),
              [](TensorNode* a, TensorNode* b) { return a->id > b->id; });
  }

  // Leaves accumulate across calls; interior buffers are per-pass scratch.
  for (TensorNode* n : nodes)
    if (!n->is_leaf()) std::fill(n->grad.begin(), n->grad.end(), 0.0);

  root->grad[0] += 1.0;
  for (TensorNode* n : nodes)
    if (n->backprop) n->backprop(*n);
}

// ---------------------------------------------------------------------------
// elementary operations

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() == 2 && b.rank() == 2,
                  "matmul: expects rank-2 operands, got " + detail::shape_str(a.shape()) +
                      " and " + detail::shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  detail::require(k == k2, "matmul: inner dimensions disagree: " +
                               detail::shape_str(a.shape()) + " x " +
                               detail::shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  const auto& A = a.data();
  const auto& B = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = A[i * k + l];
      if (ail == 0.0) continue;
      const double* brow = B.data() + l * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += ail * brow[j];
    }
  return Tensor::make_op(
      {m, n}, std::move(out), {a, b},
      [m, k, n](TensorNode& o) {
        const auto& G = o.grad;
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        if (pa.requires_grad) {
          auto& dA = pa.grad;
          const auto& B = pb.data;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < k; ++l) {
              double acc = 0.0;
              const double* grow = G.data() + i * n;
              const double* brow = B.data() + l * n;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              dA[i * k + l] += acc;
            }
        }
        if (pb.requires_grad) {
          auto& dB = pb.grad;
          const auto& A = pa.data;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < k; ++l) {
              const double ail = A[i * k + l];
              if (ail == 0.0) continue;
              const double* grow = G.data() + i * n;
              double* drow = dB.data() + l * n;
              for (std::size_t j = 0; j < n; ++j) drow[j] += ail * grow[j];
            }
        }
      },
      "matmul");
}

inline Tensor transpose(const Tensor& a) {
  detail::require(a.rank() == 2, "transpose: expects rank-2, got " +
                                     detail::shape_str(a.shape()));
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
  return Tensor::make_op(
      {c, r}, std::move(out), {a},
      [r, c](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += o.grad[j * r + i];
      },
      "transpose");
}

namespace detail {

// Broadcasting: equal shapes, or one side scalar (numel == 1).
enum class Bcast { equal, left_scalar, right_scalar };

inline Bcast bcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::equal;
  if (a.numel() == 1) return Bcast::left_scalar;
  if (b.numel() == 1) return Bcast::right_scalar;
  throw dimension_error(std::string(op) + ": incompatible shapes " +
                        shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  auto kind = detail::bcast_kind(a, b, "add");
  const Tensor& big = (kind == detail::Bcast::left_scalar) ? b : a;
  std::vector<double> out(big.numel());
  switch (kind) {
    case detail::Bcast::equal:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
      break;
    case detail::Bcast::left_scalar:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[0] + b.data()[i];
      break;
    case detail::Bcast::right_scalar:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[0];
      break;
  }
  return Tensor::make_op(
      big.shape(), std::move(out), {a, b},
      [kind](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        if (pa.requires_grad) {
          if (kind == detail::Bcast::left_scalar)
            pa.grad[0] += std::accumulate(o.grad.begin(), o.grad.end(), 0.0);
          else
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
        }
        if (pb.requires_grad) {
          if (kind == detail::Bcast::right_scalar)
            pb.grad[0] += std::accumulate(o.grad.begin(), o.grad.end(), 0.0);
          else
            for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] += o.grad[i];
        }
      },
      "add");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  auto kind = detail::bcast_kind(a, b, "mul");
  const Tensor& big = (kind == detail::Bcast::left_scalar) ? b : a;
  std::vector<double> out(big.numel());
  switch (kind) {
    case detail::Bcast::equal:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
      break;
    case detail::Bcast::left_scalar:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[0] * b.data()[i];
      break;
    case detail::Bcast::right_scalar:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[0];
      break;
  }
  return Tensor::make_op(
      big.shape(), std::move(out), {a, b},
      [kind](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        const auto& A = pa.data;
        const auto& B = pb.data;
        if (pa.requires_grad) {
          if (kind == detail::Bcast::left_scalar) {
            double acc = 0.0;
            for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * B[i];
            pa.grad[0] += acc;
          } else {
            for (std::size_t i = 0; i < o.grad.size(); ++i)
              pa.grad[i] += o.grad[i] * (kind == detail::Bcast::right_scalar ? B[0] : B[i]);
          }
        }
        if (pb.requires_grad) {
          if (kind == detail::Bcast::right_scalar) {
            double acc = 0.0;
            for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * A[i];
            pb.grad[0] += acc;
          } else {
            for (std::size_t i = 0; i < o.grad.size(); ++i)
              pb.grad[i] += o.grad[i] * (kind == detail::Bcast::left_scalar ? A[0] : A[i]);
          }
        }
      },
      "mul");
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  return Tensor::make_op(
      a.shape(), std::move(out), {a},
      [c](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i] * c;
      },
      "scale");
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }
inline Tensor add(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
inline Tensor mul(const Tensor& a, double c) { return scale(a, c); }

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  auto y = out;  // saved activation
  return Tensor::make_op(
      a.shape(), std::move(out), {a},
      [y = std::move(y)](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          p.grad[i] += o.grad[i] * y[i] * (1.0 - y[i]);
      },
      "sigmoid");
}

inline Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
  auto y = out;
  return Tensor::make_op(
      a.shape(), std::move(out), {a},
      [y = std::move(y)](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          p.grad[i] += o.grad[i] * (1.0 - y[i] * y[i]);
      },
      "tanh");
}

inline Tensor log(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
  return Tensor::make_op(
      a.shape(), std::move(out), {a},
      [](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i] / p.data[i];
      },
      "log");
}

// Row-wise softmax (a rank-1 tensor is one row). Max-subtracted for stability.
inline Tensor softmax(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  detail::require(c > 0, "softmax: empty row");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = a.data().data() + i * c;
    double* y = out.data() + i * c;
    double mx = x[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  auto y = out;
  return Tensor::make_op(
      a.shape(), std::move(out), {a},
      [y = std::move(y), r, c](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < r; ++i) {
          const double* g = o.grad.data() + i * c;
          const double* yr = y.data() + i * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[j] * yr[j];
          double* d = p.grad.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) d[j] += yr[j] * (g[j] - dot);
        }
      },
      "softmax");
}

inline Tensor sum(const Tensor& a) {
  double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  return Tensor::make_op(
      {1}, {s}, {a},
      [](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (double& g : p.grad) g += o.grad[0];
      },
      "sum");
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

inline Tensor reshape(const Tensor& a, Shape shape) {
  detail::require(detail::shape_numel(shape) == a.numel(),
                  "reshape: " + detail::shape_str(a.shape()) + " to " +
                      detail::shape_str(shape) + " changes element count");
  return Tensor::make_op(
      std::move(shape), a.data(), {a},
      [](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
      },
      "reshape");
}

// Concatenation. Rank-1 tensors concatenate along their only axis; rank-2
// along rows (axis 0) or columns (axis 1).
inline Tensor concat(const Tensor& a, const Tensor& b, int axis = 0) {
  if (a.rank() == 1 && b.rank() == 1) {
    detail::require(axis == 0, "concat: rank-1 tensors use axis 0");
    std::vector<double> out(a.numel() + b.numel());
    std::copy(a.data().begin(), a.data().end(), out.begin());
    std::copy(b.data().begin(), b.data().end(), out.begin() + a.numel());
    const std::size_t na = a.numel();
    return Tensor::make_op(
        {out.size()}, std::move(out), {a, b},
        [na](TensorNode& o) {
          auto& pa = *o.parents[0];
          auto& pb = *o.parents[1];
          if (pa.requires_grad)
            for (std::size_t i = 0; i < na; ++i) pa.grad[i] += o.grad[i];
          if (pb.requires_grad)
            for (std::size_t i = na; i < o.grad.size(); ++i) pb.grad[i - na] += o.grad[i];
        },
        "concat");
  }
  detail::require(a.rank() == 2 && b.rank() == 2,
                  "concat: ranks must match (both rank-1 or both rank-2)");
  if (axis == 0) {
    detail::require(a.cols() == b.cols(), "concat axis 0: column counts differ: " +
                                              detail::shape_str(a.shape()) + " vs " +
                                              detail::shape_str(b.shape()));
    std::vector<double> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    const std::size_t na = a.numel();
    return Tensor::make_op(
        {a.rows() + b.rows(), a.cols()}, std::move(out), {a, b},
        [na](TensorNode& o) {
          auto& pa = *o.parents[0];
          auto& pb = *o.parents[1];
          if (pa.requires_grad)
            for (std::size_t i = 0; i < na; ++i) pa.grad[i] += o.grad[i];
          if (pb.requires_grad)
            for (std::size_t i = na; i < o.grad.size(); ++i) pb.grad[i - na] += o.grad[i];
        },
        "concat");
  }
  detail::require(axis == 1, "concat: axis must be 0 or 1");
  detail::require(a.rows() == b.rows(), "concat axis 1: row counts differ: " +
                                            detail::shape_str(a.shape()) + " vs " +
                                            detail::shape_str(b.shape()));
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(r * (ca + cb));
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.data().data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(b.data().data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  return Tensor::make_op(
      {r, ca + cb}, std::move(out), {a, b},
      [r, ca, cb](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        for (std::size_t i = 0; i < r; ++i) {
          const double* g = o.grad.data() + i * (ca + cb);
          if (pa.requires_grad)
            for (std::size_t j = 0; j < ca; ++j) pa.grad[i * ca + j] += g[j];
          if (pb.requires_grad)
            for (std::size_t j = 0; j < cb; ++j) pb.grad[i * cb + j] += g[ca + j];
        }
      },
      "concat");
}

// Adds a rank-1 bias of length cols(m) to every row of m.
inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  detail::require(m.rank() == 2 && v.rank() == 1 && v.numel() == m.cols(),
                  "add_rowvec: " + detail::shape_str(m.shape()) + " + " +
                      detail::shape_str(v.shape()));
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(m.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m.data()[i * c + j] + v.data()[j];
  return Tensor::make_op(
      m.shape(), std::move(out), {m, v},
      [r, c](TensorNode& o) {
        auto& pm = *o.parents[0];
        auto& pv = *o.parents[1];
        if (pm.requires_grad)
          for (std::size_t i = 0; i < o.grad.size(); ++i) pm.grad[i] += o.grad[i];
        if (pv.requires_grad)
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) pv.grad[j] += o.grad[i * c + j];
      },
      "add_rowvec");
}

// Repeats every row of m `times` consecutive times: (r*times) x c.
inline Tensor repeat_rows(const Tensor& m, std::size_t times) {
  detail::require(m.rank() == 2 && times >= 1, "repeat_rows: rank-2 input, times >= 1");
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(r * times * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t t = 0; t < times; ++t)
      std::copy_n(m.data().data() + i * c, c, out.data() + (i * times + t) * c);
  return Tensor::make_op(
      {r * times, c}, std::move(out), {m},
      [r, c, times](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t t = 0; t < times; ++t) {
            const double* g = o.grad.data() + (i * times + t) * c;
            double* d = p.grad.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) d[j] += g[j];
          }
      },
      "repeat_rows");
}

// x @ W^T + b over rows of x; W is (out x in), b rank-1 of length out.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, transpose(w));
  if (b.defined()) y = add_rowvec(y, b);
  return y;
}

inline std::size_t argmax(const std::vector<double>& v, std::size_t begin = 0,
                          std::size_t end = 0) {
  if (end == 0) end = v.size();
  std::size_t best = begin;
  for (std::size_t i = begin + 1; i < end; ++i)
    if (v[i] > v[best]) best = i;  // ties keep the lowest index
  return best - begin;
}

// ---------------------------------------------------------------------------
// ParameterSet: named trainable tensors with deterministic (sorted) iteration.

class ParameterSet {
public:
  Tensor& add(const std::string& name, Tensor t) {
    if (!t.requires_grad())
      throw validation_error("ParameterSet: '" + name + "' must track gradients");
    auto [it, inserted] = params_.emplace(name, std::move(t));
    if (!inserted) throw validation_error("ParameterSet: duplicate name '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Tensor& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw validation_error("ParameterSet: no parameter '" + name + "'");
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw validation_error("ParameterSet: no parameter '" + name + "'");
    return it->second;
  }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
  }

  // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight, per the init policy.
  Tensor& add_weight(const std::string& name, std::size_t out, std::size_t in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(out * in);
    for (double& v : w) v = u(rng);
    return add(name, Tensor::param({out, in}, std::move(w)));
  }

  Tensor& add_bias(const std::string& name, std::size_t n) {
    return add(name, Tensor::param({n}, std::vector<double>(n, 0.0)));
  }

  // Adopt every entry of `other` under `prefix + name`. Handles are shared,
  // not copied, so gradients and optimizer updates see the same storage.
  void adopt(const std::string& prefix, ParameterSet& other) {
    for (auto& [name, t] : other) add(prefix + name, t);
  }

private:
  std::map<std::string, Tensor> params_;
};

}  // namespace kern
