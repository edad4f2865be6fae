#include "foley/trn.hpp"

#include <algorithm>
#include <set>

#include "foley/error.hpp"

namespace foley::trn {

void TrnConfig::validate() const {
  if (max_scale < 2) throw ConfigError("trn: max_scale must be >= 2");
  if (subsets_per_scale == 0) throw ConfigError("trn: subsets_per_scale must be >= 1");
  if (input_dim == 0 || hidden_dim == 0 || num_classes == 0) throw ConfigError("trn: dimensions must be positive");
}

namespace {

/// min(C(r, q), limit + 1) without overflow.
std::size_t capped_binomial(std::size_t r, std::size_t q, std::size_t limit) {
  q = std::min(q, r - q);
  long double c = 1.0L;
  for (std::size_t i = 1; i <= q; ++i) {
    c = c * static_cast<long double>(r - q + i) / static_cast<long double>(i);
    if (c > static_cast<long double>(limit)) return limit + 1;
  }
  return static_cast<std::size_t>(c + 0.5L);
}

void enumerate(std::size_t r, std::size_t q, std::vector<Subset>& out) {
  Subset s(q);
  for (std::size_t i = 0; i < q; ++i) s[i] = i;
  while (true) {
    out.push_back(s);
    std::size_t i = q;
    while (i > 0 && s[i - 1] == r - q + (i - 1)) --i;
    if (i == 0) return;
    ++s[i - 1];
    for (std::size_t j = i; j < q; ++j) s[j] = s[j - 1] + 1;
  }
}

}  // namespace

std::vector<Subset> select_ordered_subsets(std::size_t r, std::size_t q, std::size_t cap, std::uint64_t seed) {
  if (q == 0) throw InvalidArgument("select_ordered_subsets: q must be >= 1");
  if (q > r) {
    throw InvalidArgument("select_ordered_subsets: scale " + std::to_string(q) + " exceeds " + std::to_string(r) +
                          " available frames");
  }
  if (cap == 0) throw InvalidArgument("select_ordered_subsets: cap must be >= 1");
  std::vector<Subset> out;
  if (capped_binomial(r, q, cap) <= cap) {
    enumerate(r, q, out);
    return out;
  }
  Rng rng(hash_words({seed, r, q, 0x74726eULL}));
  std::set<Subset> picked;
  std::vector<std::size_t> pool(r);
  while (picked.size() < cap) {
    for (std::size_t i = 0; i < r; ++i) pool[i] = i;
    for (std::size_t i = 0; i < q; ++i) std::swap(pool[i], pool[i + rng.index(r - i)]);
    Subset s(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(q));
    std::sort(s.begin(), s.end());
    picked.insert(std::move(s));
  }
  return {picked.begin(), picked.end()};
}

Trn::Trn(const TrnConfig& config) : config_(config) {
  config_.validate();
  Rng rng(hash_words({config_.seed, 0x72656c6174696f6eULL}));
  for (std::size_t q = 2; q <= config_.max_scale; ++q) {
    RelationScale s;
    s.scale = q;
    s.g1 = nn::Linear::he(q * config_.input_dim, config_.hidden_dim, rng);
    s.g2 = nn::Linear::he(config_.hidden_dim, config_.hidden_dim, rng);
    s.h = nn::Linear::xavier(config_.hidden_dim, config_.num_classes, rng);
    scales_.push_back(std::move(s));
  }
}

const RelationScale& Trn::scale(std::size_t q) const {
  if (q < 2 || q > config_.max_scale) {
    throw InvalidArgument("trn: scale " + std::to_string(q) + " outside [2, " + std::to_string(config_.max_scale) + "]");
  }
  return scales_[q - 2];
}

std::vector<Subset> Trn::subsets_for(std::size_t r, std::size_t q) const {
  return select_ordered_subsets(r, q, config_.subsets_per_scale, config_.seed);
}

std::size_t Trn::frames_per_clip(const ad::Tensor& features, std::size_t batch) const {
  if (features.rank() != 2 || features.dim(1) != config_.input_dim) {
    throw ShapeError("trn: features " + ad::shape_string(features.shape()) + " do not have width " +
                     std::to_string(config_.input_dim));
  }
  if (batch == 0 || features.dim(0) % batch != 0) {
    throw ShapeError("trn: " + std::to_string(features.dim(0)) + " feature rows do not split into " +
                     std::to_string(batch) + " clips");
  }
  return features.dim(0) / batch;
}

ad::Tensor Trn::relation_sum(const ad::Tensor& features, std::size_t batch, std::size_t q,
                             std::span<const Subset> subsets) const {
  const RelationScale& s = scale(q);
  const std::size_t r = frames_per_clip(features, batch);
  if (subsets.empty()) throw InvalidArgument("trn: no subsets");
  const std::size_t n = subsets.size();
  // Column block j of the relation input holds frame subset[j] of each (clip, subset) row.
  std::vector<ad::Tensor> blocks;
  blocks.reserve(q);
  std::vector<std::size_t> rows(batch * n);
  for (std::size_t j = 0; j < q; ++j) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < n; ++i) {
        if (subsets[i].size() != q || subsets[i][j] >= r) throw ShapeError("trn: subset does not fit the clip");
        rows[b * n + i] = b * r + subsets[i][j];
      }
    }
    blocks.push_back(ad::gather_rows(features, rows));
  }
  const auto joined = q == 1 ? blocks[0] : ad::concat(blocks, 1);
  const auto g = ad::relu(s.g2(ad::relu(s.g1(joined))));
  std::vector<double> pool(batch * batch * n, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) pool[b * batch * n + b * n + i] = 1.0;
  }
  return ad::matmul(ad::Tensor::from({batch, batch * n}, std::move(pool)), g);
}

ad::Tensor Trn::relation_scale_forward(const ad::Tensor& features, std::size_t batch, std::size_t q) const {
  const std::size_t r = frames_per_clip(features, batch);
  const auto subsets = subsets_for(r, q);
  return scale(q).h(relation_sum(features, batch, q, subsets));
}

ad::Tensor Trn::forward(const ad::Tensor& features, std::size_t batch) const {
  return forward_up_to(features, batch, config_.max_scale);
}

ad::Tensor Trn::forward_up_to(const ad::Tensor& features, std::size_t batch, std::size_t max_scale) const {
  const std::size_t r = frames_per_clip(features, batch);
  if (r < max_scale) {
    throw InvalidArgument("trn: " + std::to_string(r) + " sampled frames cannot support scale " +
                          std::to_string(max_scale) + "; lower max_scale or sample more frames");
  }
  std::vector<ad::Tensor> terms;
  for (std::size_t q = 2; q <= max_scale; ++q) terms.push_back(relation_scale_forward(features, batch, q));
  return terms.size() == 1 ? terms[0] : ad::add_n(terms);
}

void Trn::collect(nn::ParamList& out) const {
  for (const auto& s : scales_) {
    const std::string p = "scale" + std::to_string(s.scale);
    s.g1.collect(p + ".g1", out);
    s.g2.collect(p + ".g2", out);
    s.h.collect(p + ".h", out);
  }
}

ad::Tensor trn_loss(const ad::Tensor& scores, std::span<const std::size_t> labels) {
  return ad::cross_entropy(scores, labels);
}

}  // namespace foley::trn
