#pragma once

// Dense tensors with tape-free reverse-mode differentiation. Every op result
// keeps shared ownership of its inputs, so the graph lives exactly as long as
// the tensors that reference it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace foley::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return value().size(); }

  std::span<const double> data() const { return value(); }
  /// Direct write access, for optimizers and initializers acting on leaves.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return value()[i]; }

  bool requires_grad() const;
  /// Leaves only: toggles whether ops on this tensor record a graph.
  void set_requires_grad(bool on);
  /// Gradient accumulated by backward(); zeros if none has arrived yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Copy with its own storage, as a fresh leaf.
  Tensor clone(bool requires_grad) const;

  const char* op_name() const;

  // Internal: used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  const std::vector<double>& value() const;
  std::shared_ptr<detail::Node> node_;
};

/// Reverse pass from a scalar loss: accumulates d loss / d leaf into every
/// requires_grad leaf and releases the intermediate graph.
void backward(const Tensor& loss);

// ---- forward ops -----------------------------------------------------------
// Shapes are checked; mismatches raise ShapeError naming both shapes.
// Outputs are checked for NaN/Inf; a non-finite value raises NumericFault.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
/// a[..., n] + b[n]; the only broadcasting form supported.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor add_n(std::span<const Tensor> terms);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& a, Shape shape);
/// Rows of a 2-D tensor picked by index (repeats allowed).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);

/// Along the last axis.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
/// Normalizes the last axis to zero mean / unit variance, then gain * x + bias.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Scalar reductions (shape {1}).
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [m x n] -> [m].
Tensor row_sum(const Tensor& a);
Tensor l2_norm_rows(const Tensor& a);

/// 3x3 same-padded convolution of one image: [C x H x W] * [O x C x 3 x 3] + [O].
Tensor conv2d_3x3(const Tensor& image, const Tensor& weight, const Tensor& bias);
/// 2x2 mean pooling, stride 2: [C x H x W] -> [C x H/2 x W/2].
Tensor avg_pool2(const Tensor& image);
/// [C x H x W] -> [C].
Tensor global_avg_pool(const Tensor& image);

// ---- dropout ---------------------------------------------------------------

/// Counter-based mask address: identical keys give identical masks regardless
/// of call order or thread.
struct MaskKey {
  std::uint64_t seed = 0;
  std::uint64_t layer = 0;
  std::uint64_t step = 0;
  std::uint64_t stream = 0;
};

/// Inverted-dropout multipliers: 0 with probability p, else 1/(1-p).
std::vector<double> dropout_mask(std::size_t n, double p, const MaskKey& key);
/// x * dropout_mask(p, key); identity when p == 0.
Tensor dropout(const Tensor& a, double p, const MaskKey& key);

// ---- composites -----------------------------------------------------------

/// Mean softmax cross-entropy of [B x C] logits against class indices.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace foley::ad
