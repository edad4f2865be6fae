#include "foley/optim.hpp"

#include <algorithm>
#include <cmath>

#include "foley/error.hpp"

namespace foley::ad {

void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& config) {
  if (state.first_moment.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam: state holds " + std::to_string(state.first_moment.size()) + " slots for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].size() || state.second_moment[i].size() != params[i].size()) {
      throw ShapeError("adam: state slot " + std::to_string(i) + " does not match parameter shape " +
                       shape_string(params[i].shape()));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].mutable_data();
    const auto g = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      theta[j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double Adam::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& p : params_) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params_) {
      for (double& g : p.mutable_grad()) g *= s;
    }
  }
  return norm;
}

namespace {

GradCheckReport compare_differences(std::span<Tensor> inputs, const std::vector<std::vector<double>>& analytic,
                                    const std::function<double()>& evaluate, double eps, double tol, double floor) {
  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto values = inputs[i].mutable_data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double orig = values[j];
      values[j] = orig + eps;
      const double up = evaluate();
      values[j] = orig - eps;
      const double down = evaluate();
      values[j] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel >= report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_input = i;
        report.worst_element = j;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error < tol;
  return report;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(std::span<const Tensor>)>& fn, std::vector<Tensor> inputs,
                           double eps, double tol, double floor) {
  // Fresh leaves so we own the gradients being compared.
  for (auto& t : inputs) t = t.clone(true);
  const Tensor loss = fn(inputs);
  if (loss.size() != 1) throw InvalidArgument("grad_check: function must return a scalar");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  const auto evaluate = [&]() {
    std::vector<Tensor> frozen;
    for (const auto& t : inputs) frozen.push_back(t.detach());
    return fn(frozen).item();
  };
  return compare_differences(inputs, analytic, evaluate, eps, tol, floor);
}

GradCheckReport grad_check_params(const std::function<Tensor()>& fn, std::span<const Tensor> params, double eps,
                                  double tol, double floor) {
  std::vector<Tensor> handles(params.begin(), params.end());
  for (auto& p : handles) {
    if (!p.requires_grad()) throw InvalidArgument("grad_check_params: parameter does not require gradients");
    p.zero_grad();
  }
  const Tensor loss = fn();
  if (loss.size() != 1) throw InvalidArgument("grad_check_params: function must return a scalar");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (const auto& p : handles) analytic.emplace_back(p.grad().begin(), p.grad().end());
  return compare_differences(handles, analytic, [&]() { return fn().item(); }, eps, tol, floor);
}

}  // namespace foley::ad
