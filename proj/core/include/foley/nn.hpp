#pragma once

// Small building blocks shared by the trainable modules.

#include <cstddef>
#include <string>
#include <vector>

#include "foley/rng.hpp"
#include "foley/tensor.hpp"

namespace foley::nn {

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

std::vector<ad::Tensor> tensors_of(const ParamList& params);

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
ad::Tensor xavier_uniform(ad::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
/// Normal(0, sqrt(2 / fan_in)).
ad::Tensor he_normal(ad::Shape shape, std::size_t fan_in, Rng& rng);
/// rows x cols matrix with orthonormal rows or columns (whichever is fewer).
ad::Tensor orthogonal(std::size_t rows, std::size_t cols, Rng& rng);

/// y = x W + b with W stored [in x out].
struct Linear {
  ad::Tensor weight;
  ad::Tensor bias;

  static Linear xavier(std::size_t in, std::size_t out, Rng& rng);
  static Linear he(std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  ad::Tensor operator()(const ad::Tensor& x) const { return ad::add_bias(ad::matmul(x, weight), bias); }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Zeroes every parameter in place (used by structural tests).
void zero_all(const ParamList& params);

/// Linear interpolation matrix [target x source] mapping source-rate rows onto
/// target-rate rows with both endpoints aligned.
std::vector<double> time_resample_matrix(std::size_t source, std::size_t target);

}  // namespace foley::nn
