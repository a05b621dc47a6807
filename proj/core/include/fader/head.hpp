#pragma once

#include <cstdint>
#include <optional>

#include "fader/checkpoint.hpp"
#include "fader/nn.hpp"

namespace fader::head {

using nn::Param;

// Flattened p x p x C patches in raster order: token i covers grid cell
// (i / grid_w, i % grid_w); within a token elements run (py, px, channel).
struct PatchTokens {
  Tensor tokens;  // (n, p*p*C)
  int64_t grid_h = 0, grid_w = 0;
  int64_t patch_size = 0;
  int64_t channels = 0;

  int64_t count() const { return grid_h * grid_w; }
};

PatchTokens tokenize(const Tensor& image, int64_t patch_size);
Tensor detokenize(const PatchTokens& tokens);

// Per-patch values laid out in the same raster order as PatchTokens.
struct LossVector {
  Tensor values;  // (n)
  int64_t grid_h = 0, grid_w = 0;
};

// Patch-wise mean squared difference between an image and its
// reconstruction; the label-free training target for the predictor.
LossVector gt_patch_losses(const Tensor& image, const Tensor& reconstruction, int64_t patch_size);

// Patch-grid attenuation coefficients in [0,1].
struct SoftMask {
  Tensor grid;  // (grid_h, grid_w)
  bool binary_provenance = false;
};

// m_i = 1 - (v_i - min) / (max - min); a constant input (no disparity
// between patches, i.e. nothing suspicious) yields the all-ones mask.
SoftMask soft_mask_from_losses(const LossVector& predicted);

// Hard-masking ablation: patches strictly above the keep_quantile quantile
// get 0, everything else 1. Constant inputs mask nothing.
SoftMask binary_mask_from_losses(const LossVector& predicted, double keep_quantile);

enum class PairStrategy { all_pairs, sampled };

std::string to_string(PairStrategy s);
PairStrategy pair_strategy_from_string(const std::string& s);

struct RankingConfig {
  double margin = 0.1;  // xi
  PairStrategy strategy = PairStrategy::all_pairs;
  int64_t pairs_per_image = 0;  // sampled only; 0 means 8n
  uint64_t seed = 0;

  void validate() const {
    if (!(margin > 0.0)) throw ConfigError("ranking margin must be > 0");
  }
};

// all_pairs for small grids, 8n sampled pairs otherwise
RankingConfig effective_ranking(RankingConfig cfg, int64_t n);

// Pairwise hinge on prediction order: for a pair (i,j) the contribution is
// max(0, -ind(l_i,l_j) * (p_i - p_j) + margin) with ind = +1 if l_i > l_j
// else -1; the result is the mean over evaluated ordered pairs (i != j).
// When grad is non-null it receives d(loss)/d(predicted).
double margin_ranking_loss(const Tensor& predicted, const Tensor& gt, const RankingConfig& cfg,
                           Tensor* grad = nullptr);

// Two-layer MLP scoring each token independently:
// layer2(leaky_relu(layer1(token))).
class LossPredictor {
 public:
  LossPredictor() = default;
  LossPredictor(int64_t input_dim, int64_t hidden, double slope, uint64_t seed);

  // inference path, no caching
  Tensor predict(const Tensor& tokens) const;  // (n, in) -> (n)

  // training path: caches activations; backward accumulates parameter grads
  Tensor forward(const Tensor& tokens);
  void backward(const Tensor& dpred);

  std::vector<Param<double>*> parameters() { return {&w1, &b1, &w2, &b2}; }
  int64_t input_dim() const { return w1.value.dim(1); }
  int64_t hidden_dim() const { return w1.value.dim(0); }
  double slope() const { return slope_; }

  void store_state(nn::Checkpoint& ckpt) const;
  static LossPredictor from_checkpoint(const nn::Checkpoint& ckpt);

  Param<double> w1, b1, w2, b2;

 private:
  double slope_ = 0.2;
  Tensor tokens_, pre1_, act1_;
};

}  // namespace fader::head
