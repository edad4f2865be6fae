#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "foley/tensor.hpp"

namespace foley::ad {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. State is lazily sized on the first call; afterwards its shapes
/// must match `params` exactly.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& config = {});

/// Convenience owner of a parameter list and its Adam state.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {}

  void zero_grad();
  void step() { adam_step(params_, state_, config_); }
  /// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the pre-clip norm.
  double clip_grad_norm(double max_norm);

  const AdamState& state() const noexcept { return state_; }
  std::span<Tensor> params() noexcept { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  AdamState state_;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = false;
};

/// Compares reverse-mode gradients of a scalar function with central
/// differences. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const std::function<Tensor(std::span<const Tensor>)>& fn, std::vector<Tensor> inputs,
                           double eps = 1e-5, double tol = 1e-4, double floor = 1e-6);

/// Same check against parameters that `fn` reads directly, such as a
/// model's weights. Parameters are perturbed in place and restored; their
/// gradients are overwritten.
GradCheckReport grad_check_params(const std::function<Tensor()>& fn, std::span<const Tensor> params,
                                  double eps = 1e-5, double tol = 1e-4, double floor = 1e-6);

}  // namespace foley::ad
