#include "foley/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "foley/error.hpp"
#include "foley/rng.hpp"

namespace foley::ad {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? " x " : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value.assign(shape_size(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape_size(shape)) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " + shape_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  return s[axis];
}

const std::vector<double>& Tensor::value() const {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("tensor: item() on shape " + shape_string(shape()));
  return value()[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  if (!node_->leaf) throw InvalidArgument("tensor: set_requires_grad on a non-leaf");
  node_->requires_grad = on;
}

std::span<const double> Tensor::grad() const {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  return node_->ensure_grad();
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), value(), false); }

Tensor Tensor::clone(bool requires_grad) const { return from(shape(), value(), requires_grad); }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

// ---- graph plumbing ---------------------------------------------------------

namespace {

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericFault(std::string(op) + ": produced a non-finite value");
  }
}

/// Builds an op result. `backward` is only stored when some input needs grads.
Tensor make_result(const char* op, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(node);
}

std::vector<double>* grad_of(const NodePtr& p) { return p->requires_grad ? &p->ensure_grad() : nullptr; }

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch(op, a, b);
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(a.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_result(op, a.shape(), std::move(out), {a}, [deriv](Node& self) {
    const auto& px = self.parents[0];
    auto* gx = grad_of(px);
    if (!gx) return;
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      (*gx)[i] += self.grad[i] * deriv(px->value[i], self.value[i]);
    }
  });
}

// [outer, axis, inner] view of a shape around one axis.
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

void backward(const Tensor& loss) {
  if (!loss.defined()) throw InvalidArgument("backward: undefined loss");
  if (loss.size() != 1) throw InvalidArgument("backward: loss must be scalar, got " + shape_string(loss.shape()));
  const NodePtr& root = loss.node();
  if (!root->requires_grad) return;
  if (root->consumed) throw InvalidArgument("backward: graph already consumed by a previous backward pass");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        if (p->consumed) throw InvalidArgument("backward: graph already consumed by a previous backward pass");
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->leaf) continue;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->leaf) continue;
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->consumed = true;
  }
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) shape_mismatch("matmul", a, b);
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    const double* G = self.grad.data();
    if (auto* ga = grad_of(pa)) {
      const double* B = pb->value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[j] * brow[j];
          (*ga)[i * k + p] += acc;
        }
      }
    }
    if (auto* gb = grad_of(pb)) {
      const double* A = pa->value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* dst = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) dst[j] += av * g[j];
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (const auto& p : self.parents) {
      if (auto* g = grad_of(p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (auto* g = grad_of(pa)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * pb->value[i];
    }
    if (auto* g = grad_of(pb)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary("add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_rank("add_bias", bias, 1);
  if (a.rank() == 0 || a.shape().back() != bias.dim(0)) shape_mismatch("add_bias", a, bias);
  const std::size_t n = bias.dim(0);
  const auto x = a.data();
  const auto b = bias.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + b[i % n];
  return make_result("add_bias", a.shape(), std::move(out), {a, bias}, [n](Node& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % n] += self.grad[i];
    }
  });
}

Tensor add_n(std::span<const Tensor> terms) {
  if (terms.empty()) throw InvalidArgument("add_n: no terms");
  for (const auto& t : terms) require_same("add_n", terms[0], t);
  std::vector<double> out(terms[0].size(), 0.0);
  for (const auto& t : terms) {
    const auto x = t.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
  }
  return make_result("add_n", terms[0].shape(), std::move(out), {terms.begin(), terms.end()}, [](Node& self) {
    for (const auto& p : self.parents) {
      if (auto* g = grad_of(p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

// ---- structural ---------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw InvalidArgument("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) shape_mismatch("concat", parts[0], p);
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const auto view = axis_view(out_shape, axis);
  std::vector<double> out(shape_size(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    const std::size_t chunk = extents[k] * view.inner;
    for (std::size_t o = 0; o < view.outer; ++o) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * view.extent * view.inner + offset * view.inner));
    }
    offset += extents[k];
  }
  return make_result("concat", out_shape, std::move(out), {parts.begin(), parts.end()},
                     [view, extents](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         const std::size_t chunk = extents[k] * view.inner;
                         if (auto* g = grad_of(self.parents[k])) {
                           for (std::size_t o = 0; o < view.outer; ++o) {
                             const double* src = self.grad.data() + o * view.extent * view.inner + off * view.inner;
                             double* dst = g->data() + o * chunk;
                             for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                           }
                         }
                         off += extents[k];
                       }
                     });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) + ") on axis " +
                     std::to_string(axis) + " out of range for " + shape_string(s));
  }
  const auto view = axis_view(s, axis);
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::size_t chunk = length * view.inner;
  const auto src = a.data();
  std::vector<double> out(view.outer * chunk);
  for (std::size_t o = 0; o < view.outer; ++o) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * view.extent * view.inner + start * view.inner), chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  return make_result("slice", out_shape, std::move(out), {a}, [view, chunk, start](Node& self) {
    auto* g = grad_of(self.parents[0]);
    if (!g) return;
    for (std::size_t o = 0; o < view.outer; ++o) {
      double* dst = g->data() + o * view.extent * view.inner + start * view.inner;
      const double* src = self.grad.data() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank("gather_rows", a, 2);
  const std::size_t n = a.dim(0), d = a.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * d);
  const auto src = a.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) throw ShapeError("gather_rows: row " + std::to_string(idx[r]) + " out of range for " + shape_string(a.shape()));
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[r] * d), d, out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return make_result("gather_rows", {idx.size(), d}, std::move(out), {a}, [idx, d](Node& self) {
    auto* g = grad_of(self.parents[0]);
    if (!g) return;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = g->data() + idx[r] * d;
      const double* src = self.grad.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

// ---- elementwise ---------------------------------------------------------------

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---- normalizations ------------------------------------------------------------

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("softmax: rank-0 input");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.size() / n;
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = out.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  return make_result("softmax", a.shape(), std::move(out), {a}, [n, rows](Node& self) {
    auto* g = grad_of(self.parents[0]);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* gy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) (*g)[r * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("log_softmax: rank-0 input");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.size() / n;
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xr[j] - lse;
  }
  return make_result("log_softmax", a.shape(), std::move(out), {a}, [n, rows](Node& self) {
    auto* g = grad_of(self.parents[0]);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* gy = self.grad.data() + r * n;
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += gy[j];
      for (std::size_t j = 0; j < n; ++j) (*g)[r * n + j] += gy[j] - std::exp(y[j]) * total;
    }
  });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  if (a.rank() == 0) throw ShapeError("layer_norm: rank-0 input");
  const std::size_t n = a.shape().back();
  require_rank("layer_norm", gain, 1);
  require_rank("layer_norm", bias, 1);
  if (gain.dim(0) != n) shape_mismatch("layer_norm", a, gain);
  if (bias.dim(0) != n) shape_mismatch("layer_norm", a, bias);
  const std::size_t rows = a.size() / n;
  const auto x = a.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (xr[j] - mu) * inv_std[r];
      out[r * n + j] = gv[j] * xhat[r * n + j] + bv[j];
    }
  }
  return make_result("layer_norm", a.shape(), std::move(out), {a, gain, bias},
                     [n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const auto& pg = self.parents[1];
                       auto* gx = grad_of(self.parents[0]);
                       auto* gg = grad_of(pg);
                       auto* gb = grad_of(self.parents[2]);
                       const auto nd = static_cast<double>(n);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* dy = self.grad.data() + r * n;
                         const double* xh = xhat.data() + r * n;
                         if (gg || gb) {
                           for (std::size_t j = 0; j < n; ++j) {
                             if (gg) (*gg)[j] += dy[j] * xh[j];
                             if (gb) (*gb)[j] += dy[j];
                           }
                         }
                         if (!gx) continue;
                         double mean_d = 0.0;
                         double mean_dx = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double d = dy[j] * pg->value[j];
                           mean_d += d;
                           mean_dx += d * xh[j];
                         }
                         mean_d /= nd;
                         mean_dx /= nd;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double d = dy[j] * pg->value[j];
                           (*gx)[r * n + j] += inv_std[r] * (d - mean_d - xh[j] * mean_dx);
                         }
                       }
                     });
}

// ---- reductions ----------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("sum", {1}, {s}, {a}, [](Node& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (double& v : *g) v += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("mean", {1}, {s * inv}, {a}, [inv](Node& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (double& v : *g) v += self.grad[0] * inv;
    }
  });
}

Tensor row_sum(const Tensor& a) {
  require_rank("row_sum", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto x = a.data();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j];
  }
  return make_result("row_sum", {m}, std::move(out), {a}, [m, n](Node& self) {
    auto* g = grad_of(self.parents[0]);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[i];
    }
  });
}

Tensor l2_norm_rows(const Tensor& a) {
  require_rank("l2_norm_rows", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto x = a.data();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x[i * n + j] * x[i * n + j];
    out[i] = std::sqrt(s);
  }
  return make_result("l2_norm_rows", {m}, std::move(out), {a}, [m, n](Node& self) {
    const auto& px = self.parents[0];
    auto* g = grad_of(px);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      // Subgradient 0 at the origin.
      if (self.value[i] == 0.0) continue;
      const double s = self.grad[i] / self.value[i];
      for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += s * px->value[i * n + j];
    }
  });
}

// ---- convolution -----------------------------------------------------------------

Tensor conv2d_3x3(const Tensor& image, const Tensor& weight, const Tensor& bias) {
  require_rank("conv2d", image, 3);
  require_rank("conv2d", weight, 4);
  require_rank("conv2d", bias, 1);
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const std::size_t O = weight.dim(0);
  if (weight.dim(1) != C || weight.dim(2) != 3 || weight.dim(3) != 3) shape_mismatch("conv2d", image, weight);
  if (bias.dim(0) != O) shape_mismatch("conv2d", weight, bias);
  const double* X = image.data().data();
  const double* K = weight.data().data();
  const double* B = bias.data().data();
  const std::size_t plane = H * W;
  std::vector<double> out(O * plane);
  for (std::size_t o = 0; o < O; ++o) {
    double* y = out.data() + o * plane;
    std::fill(y, y + plane, B[o]);
    for (std::size_t c = 0; c < C; ++c) {
      const double* x = X + c * plane;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double w = K[((o * C + c) * 3 + ky) * 3 + kx];
          if (w == 0.0) continue;
          // output (r, q) reads input (r + ky - 1, q + kx - 1)
          const std::size_t r0 = ky == 0 ? 1 : 0, r1 = ky == 2 ? H - 1 : H;
          const std::size_t q0 = kx == 0 ? 1 : 0, q1 = kx == 2 ? W - 1 : W;
          for (std::size_t r = r0; r < r1; ++r) {
            double* yr = y + r * W;
            const double* xr = x + (r + ky - 1) * W - 1 + kx;
            for (std::size_t q = q0; q < q1; ++q) yr[q] += w * xr[q];
          }
        }
      }
    }
  }
  return make_result("conv2d", {O, H, W}, std::move(out), {image, weight, bias}, [C, H, W, O, plane](Node& self) {
    const auto& px = self.parents[0];
    const auto& pk = self.parents[1];
    auto* gx = grad_of(px);
    auto* gk = grad_of(pk);
    auto* gb = grad_of(self.parents[2]);
    const double* G = self.grad.data();
    for (std::size_t o = 0; o < O; ++o) {
      const double* gy = G + o * plane;
      if (gb) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += gy[i];
        (*gb)[o] += s;
      }
      for (std::size_t c = 0; c < C; ++c) {
        const double* x = px->value.data() + c * plane;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const std::size_t widx = ((o * C + c) * 3 + ky) * 3 + kx;
            const double w = pk->value[widx];
            const std::size_t r0 = ky == 0 ? 1 : 0, r1 = ky == 2 ? H - 1 : H;
            const std::size_t q0 = kx == 0 ? 1 : 0, q1 = kx == 2 ? W - 1 : W;
            double acc = 0.0;
            for (std::size_t r = r0; r < r1; ++r) {
              const double* gr = gy + r * W;
              const std::size_t off = (r + ky - 1) * W - 1 + kx;
              if (gk) {
                const double* xr = x + off;
                for (std::size_t q = q0; q < q1; ++q) acc += gr[q] * xr[q];
              }
              if (gx && w != 0.0) {
                double* dx = gx->data() + c * plane + off;
                for (std::size_t q = q0; q < q1; ++q) dx[q] += w * gr[q];
              }
            }
            if (gk) (*gk)[widx] += acc;
          }
        }
      }
    }
  });
}

Tensor avg_pool2(const Tensor& image) {
  require_rank("avg_pool2", image, 3);
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const std::size_t h = H / 2, w = W / 2;
  if (h == 0 || w == 0) throw ShapeError("avg_pool2: input " + shape_string(image.shape()) + " too small");
  const double* X = image.data().data();
  std::vector<double> out(C * h * w);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      const double* x0 = X + c * H * W + 2 * r * W;
      const double* x1 = x0 + W;
      double* y = out.data() + (c * h + r) * w;
      for (std::size_t q = 0; q < w; ++q) y[q] = 0.25 * (x0[2 * q] + x0[2 * q + 1] + x1[2 * q] + x1[2 * q + 1]);
    }
  }
  return make_result("avg_pool2", {C, h, w}, std::move(out), {image}, [C, H, W, h, w](Node& self) {
    auto* g = grad_of(self.parents[0]);
    if (!g) return;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t r = 0; r < h; ++r) {
        double* d0 = g->data() + c * H * W + 2 * r * W;
        double* d1 = d0 + W;
        const double* gy = self.grad.data() + (c * h + r) * w;
        for (std::size_t q = 0; q < w; ++q) {
          const double v = 0.25 * gy[q];
          d0[2 * q] += v;
          d0[2 * q + 1] += v;
          d1[2 * q] += v;
          d1[2 * q + 1] += v;
        }
      }
    }
  });
}

Tensor global_avg_pool(const Tensor& image) {
  require_rank("global_avg_pool", image, 3);
  const std::size_t C = image.dim(0), plane = image.dim(1) * image.dim(2);
  const double* X = image.data().data();
  std::vector<double> out(C, 0.0);
  const double inv = 1.0 / static_cast<double>(plane);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += X[c * plane + i];
    out[c] = s * inv;
  }
  return make_result("global_avg_pool", {C}, std::move(out), {image}, [C, plane, inv](Node& self) {
    auto* g = grad_of(self.parents[0]);
    if (!g) return;
    for (std::size_t c = 0; c < C; ++c) {
      const double v = self.grad[c] * inv;
      for (std::size_t i = 0; i < plane; ++i) (*g)[c * plane + i] += v;
    }
  });
}

// ---- dropout ---------------------------------------------------------------------

std::vector<double> dropout_mask(std::size_t n, double p, const MaskKey& key) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout: probability must be in [0, 1)");
  std::vector<double> mask(n, 1.0);
  if (p == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  const std::uint64_t base = hash_words({key.seed, key.layer, key.step, key.stream});
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = unit_from_bits(mix64(base ^ mix64(i))) < p ? 0.0 : keep_scale;
  }
  return mask;
}

Tensor dropout(const Tensor& a, double p, const MaskKey& key) {
  if (p == 0.0) return a;
  return mul(a, Tensor::from(a.shape(), dropout_mask(a.size(), p, key)));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + shape_string(logits.shape()));
  }
  std::vector<double> pick(b * c, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c) throw InvalidArgument("cross_entropy: class index " + std::to_string(labels[i]) + " out of range");
    pick[i * c + labels[i]] = -1.0 / static_cast<double>(b);
  }
  return sum(mul(log_softmax(logits), Tensor::from(logits.shape(), std::move(pick))));
}

}  // namespace foley::ad
