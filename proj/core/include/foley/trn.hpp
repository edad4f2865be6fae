#pragma once

// Multi-scale temporal relation network: for each scale q a relation MLP
// scores ordered q-frame subsets, their outputs are summed, mapped to class
// scores, and the per-scale scores are added for q = 2..Q.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "foley/nn.hpp"
#include "foley/tensor.hpp"

namespace foley::trn {

struct TrnConfig {
  std::size_t input_dim = 128;
  std::size_t max_scale = 8;
  std::size_t hidden_dim = 256;
  std::size_t num_classes = 12;
  std::size_t subsets_per_scale = 8;
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const TrnConfig&, const TrnConfig&) = default;
};

using Subset = std::vector<std::size_t>;

/// All strictly increasing q-tuples from [0, r) in lexicographic order when
/// there are at most `cap` of them; otherwise `cap` distinct tuples drawn
/// deterministically from `seed`, returned in lexicographic order.
std::vector<Subset> select_ordered_subsets(std::size_t r, std::size_t q, std::size_t cap, std::uint64_t seed);

/// Relation MLP g (two relu layers) and class map h of one scale.
struct RelationScale {
  std::size_t scale = 0;
  nn::Linear g1;
  nn::Linear g2;
  nn::Linear h;
};

class Trn {
 public:
  explicit Trn(const TrnConfig& config);

  const TrnConfig& config() const noexcept { return config_; }
  const RelationScale& scale(std::size_t q) const;

  /// Subsets used at scale q for clips with r frames.
  std::vector<Subset> subsets_for(std::size_t r, std::size_t q) const;

  /// Sum over `subsets` of g(concat of the subset's frame features).
  /// `features` stacks `batch` clips of r frames each: [batch*r x input_dim].
  /// Returns [batch x hidden].
  ad::Tensor relation_sum(const ad::Tensor& features, std::size_t batch, std::size_t q,
                          std::span<const Subset> subsets) const;
  /// h applied to relation_sum: [batch x classes].
  ad::Tensor relation_scale_forward(const ad::Tensor& features, std::size_t batch, std::size_t q) const;
  /// Sum of scale scores for q = 2..max_scale in ascending order: [batch x classes].
  ad::Tensor forward(const ad::Tensor& features, std::size_t batch) const;
  /// Same, stopping at `max_scale` (<= config max_scale).
  ad::Tensor forward_up_to(const ad::Tensor& features, std::size_t batch, std::size_t max_scale) const;

  void collect(nn::ParamList& out) const;

 private:
  std::size_t frames_per_clip(const ad::Tensor& features, std::size_t batch) const;

  TrnConfig config_;
  std::vector<RelationScale> scales_;
};

/// Softmax cross-entropy of [batch x classes] scores.
ad::Tensor trn_loss(const ad::Tensor& scores, std::span<const std::size_t> labels);

}  // namespace foley::trn
