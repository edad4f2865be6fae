#pragma once

// Gradient-check fixtures for every differentiable tensor op. Each case builds
// its inputs from a seed and reduces the op output to a scalar through a fixed
// random projection, so outputs with constant sums (softmax) still carry signal.

#include <functional>
#include <string>
#include <vector>

#include "foley/optim.hpp"
#include "foley/rng.hpp"
#include "foley/tensor.hpp"

namespace foley::testing {

enum class Domain { any, positive, away_from_zero };

struct InputSpec {
  ad::Shape shape;
  Domain domain = Domain::any;
};

struct OpCase {
  std::string name;
  std::vector<InputSpec> inputs;
  std::function<ad::Tensor(std::span<const ad::Tensor>)> op;
};

inline ad::Tensor random_input(const InputSpec& spec, Rng& rng) {
  std::vector<double> v(ad::shape_size(spec.shape));
  for (double& x : v) {
    switch (spec.domain) {
      case Domain::any: x = rng.uniform(-1.0, 1.0); break;
      case Domain::positive: x = rng.uniform(0.5, 2.0); break;
      case Domain::away_from_zero: x = rng.uniform(0.2, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0); break;
    }
  }
  return ad::Tensor::from(spec.shape, std::move(v), true);
}

inline std::vector<OpCase> op_cases() {
  using ad::Tensor;
  using Args = std::span<const Tensor>;
  static const std::size_t picks[] = {2, 0, 2, 1};
  static const std::size_t labels[] = {0, 2, 1, 2};
  const std::vector<std::size_t> nchw{2, 4, 4};
  return {
      {"matmul", {{{2, 3}}, {{3, 4}}}, [](Args a) { return ad::matmul(a[0], a[1]); }},
      {"add", {{{3, 4}}, {{3, 4}}}, [](Args a) { return ad::add(a[0], a[1]); }},
      {"sub", {{{3, 4}}, {{3, 4}}}, [](Args a) { return ad::sub(a[0], a[1]); }},
      {"mul", {{{3, 4}}, {{3, 4}}}, [](Args a) { return ad::mul(a[0], a[1]); }},
      {"scale", {{{5}}}, [](Args a) { return ad::scale(a[0], -1.7); }},
      {"add_scalar", {{{5}}}, [](Args a) { return ad::add_scalar(a[0], 0.3); }},
      {"add_bias", {{{3, 4}}, {{4}}}, [](Args a) { return ad::add_bias(a[0], a[1]); }},
      {"add_n", {{{2, 3}}, {{2, 3}}, {{2, 3}}}, [](Args a) { return ad::add_n(a); }},
      {"concat_rows", {{{2, 3}}, {{1, 3}}}, [](Args a) { return ad::concat(a, 0); }},
      {"concat_cols", {{{2, 3}}, {{2, 2}}}, [](Args a) { return ad::concat(a, 1); }},
      {"slice", {{{3, 5}}}, [](Args a) { return ad::slice(a[0], 1, 1, 3); }},
      {"reshape", {{{2, 6}}}, [](Args a) { return ad::reshape(a[0], {3, 4}); }},
      {"gather_rows", {{{3, 2}}}, [](Args a) { return ad::gather_rows(a[0], picks); }},
      {"sigmoid", {{{4, 3}}}, [](Args a) { return ad::sigmoid(a[0]); }},
      {"tanh", {{{4, 3}}}, [](Args a) { return ad::tanh(a[0]); }},
      {"relu", {{{4, 3}, Domain::away_from_zero}}, [](Args a) { return ad::relu(a[0]); }},
      {"exp", {{{4, 3}}}, [](Args a) { return ad::exp(a[0]); }},
      {"log", {{{4, 3}, Domain::positive}}, [](Args a) { return ad::log(a[0]); }},
      {"sqrt", {{{4, 3}, Domain::positive}}, [](Args a) { return ad::sqrt(a[0]); }},
      {"square", {{{4, 3}}}, [](Args a) { return ad::square(a[0]); }},
      {"softmax", {{{3, 5}}}, [](Args a) { return ad::softmax(a[0]); }},
      {"log_softmax", {{{3, 5}}}, [](Args a) { return ad::log_softmax(a[0]); }},
      {"layer_norm", {{{3, 5}}, {{5}}, {{5}}}, [](Args a) { return ad::layer_norm(a[0], a[1], a[2]); }},
      {"sum", {{{3, 4}}}, [](Args a) { return ad::sum(a[0]); }},
      {"mean", {{{3, 4}}}, [](Args a) { return ad::mean(a[0]); }},
      {"row_sum", {{{3, 4}}}, [](Args a) { return ad::row_sum(a[0]); }},
      {"l2_norm_rows", {{{3, 4}, Domain::away_from_zero}}, [](Args a) { return ad::l2_norm_rows(a[0]); }},
      {"conv2d_3x3", {{{2, 5, 5}}, {{3, 2, 3, 3}}, {{3}}},
       [](Args a) { return ad::conv2d_3x3(a[0], a[1], a[2]); }},
      {"avg_pool2", {{nchw}}, [](Args a) { return ad::avg_pool2(a[0]); }},
      {"global_avg_pool", {{nchw}}, [](Args a) { return ad::global_avg_pool(a[0]); }},
      {"dropout", {{{4, 6}}}, [](Args a) { return ad::dropout(a[0], 0.3, {7, 1, 2, 3}); }},
      {"cross_entropy", {{{4, 3}}}, [](Args a) { return ad::cross_entropy(a[0], labels); }},
  };
}

/// Grad check of one case on inputs drawn from `seed`, reduced by a fixed projection.
inline ad::GradCheckReport check_op(const OpCase& c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ad::Tensor> inputs;
  for (const auto& spec : c.inputs) inputs.push_back(random_input(spec, rng));
  const auto probe = c.op(inputs);
  Rng wrng(seed ^ 0x9d2c5680ULL);
  std::vector<double> w(probe.size());
  for (double& x : w) x = wrng.uniform(-1.0, 1.0);
  const auto weights = ad::Tensor::from(probe.shape(), w);
  return ad::grad_check([&](std::span<const ad::Tensor> in) { return ad::sum(ad::mul(c.op(in), weights)); },
                        inputs, 1e-5, 1e-4);
}

}  // namespace foley::testing
