#include "foley/nn.hpp"

#include <cmath>

#include "foley/error.hpp"

namespace foley::nn {

std::vector<ad::Tensor> tensors_of(const ParamList& params) {
  std::vector<ad::Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

ad::Tensor xavier_uniform(ad::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = rng.uniform(-a, a);
  return ad::Tensor::from(std::move(shape), std::move(v), true);
}

ad::Tensor he_normal(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = s * rng.normal();
  return ad::Tensor::from(std::move(shape), std::move(v), true);
}

ad::Tensor orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
  // Gram-Schmidt over the shorter dimension of a Gaussian matrix.
  const bool by_rows = rows <= cols;
  const std::size_t count = by_rows ? rows : cols;
  const std::size_t len = by_rows ? cols : rows;
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    std::vector<double> v(len);
    for (double& x : v) x = rng.normal();
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += v[i] * b[i];
        for (std::size_t i = 0; i < len; ++i) v[i] -= dot * b[i];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = by_rows ? basis[r][c] : basis[c][r];
  }
  return ad::Tensor::from({rows, cols}, std::move(out), true);
}

Linear Linear::xavier(std::size_t in, std::size_t out, Rng& rng) {
  return {xavier_uniform({in, out}, in, out, rng), ad::Tensor::zeros({out}, true)};
}

Linear Linear::he(std::size_t in, std::size_t out, Rng& rng) {
  return {he_normal({in, out}, in, rng), ad::Tensor::zeros({out}, true)};
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

void zero_all(const ParamList& params) {
  for (const auto& p : params) {
    auto t = p.tensor;
    for (double& v : t.mutable_data()) v = 0.0;
  }
}

std::vector<double> time_resample_matrix(std::size_t source, std::size_t target) {
  if (source == 0) throw InvalidArgument("time resample: source length must be >= 1");
  if (target == 0) throw InvalidArgument("time resample: target length must be >= 1");
  std::vector<double> m(target * source, 0.0);
  for (std::size_t t = 0; t < target; ++t) {
    if (source == 1) {
      m[t * source] = 1.0;
      continue;
    }
    if (target == 1) {
      m[t * source] = 1.0;
      continue;
    }
    const double pos = static_cast<double>(t) * static_cast<double>(source - 1) / static_cast<double>(target - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo >= source - 1) lo = source - 2;
    const double frac = pos - static_cast<double>(lo);
    m[t * source + lo] += 1.0 - frac;
    m[t * source + lo + 1] += frac;
  }
  return m;
}

}  // namespace foley::nn
