#include "fader/head.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "fader/rng.hpp"

namespace fader::head {

namespace {
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
}  // namespace

PatchTokens tokenize(const Tensor& image, int64_t patch_size) {
  if (image.rank() != 3) throw ShapeError("tokenize: expected (H,W,C) image");
  const int64_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (patch_size < 1 || h % patch_size != 0 || w % patch_size != 0)
    throw ShapeError("tokenize: patch size " + std::to_string(patch_size) +
                     " must divide image size " + shape_string(image.shape()));
  PatchTokens out;
  out.grid_h = h / patch_size;
  out.grid_w = w / patch_size;
  out.patch_size = patch_size;
  out.channels = c;
  const int64_t dim = patch_size * patch_size * c;
  out.tokens = Tensor({out.count(), dim});
  for (int64_t gy = 0; gy < out.grid_h; ++gy)
    for (int64_t gx = 0; gx < out.grid_w; ++gx) {
      double* tok = out.tokens.data() + (gy * out.grid_w + gx) * dim;
      int64_t k = 0;
      for (int64_t py = 0; py < patch_size; ++py)
        for (int64_t px = 0; px < patch_size; ++px)
          for (int64_t ch = 0; ch < c; ++ch)
            tok[k++] = image.at(gy * patch_size + py, gx * patch_size + px, ch);
    }
  return out;
}

Tensor detokenize(const PatchTokens& tokens) {
  const int64_t p = tokens.patch_size, c = tokens.channels;
  Tensor image({tokens.grid_h * p, tokens.grid_w * p, c});
  const int64_t dim = p * p * c;
  for (int64_t gy = 0; gy < tokens.grid_h; ++gy)
    for (int64_t gx = 0; gx < tokens.grid_w; ++gx) {
      const double* tok = tokens.tokens.data() + (gy * tokens.grid_w + gx) * dim;
      int64_t k = 0;
      for (int64_t py = 0; py < p; ++py)
        for (int64_t px = 0; px < p; ++px)
          for (int64_t ch = 0; ch < c; ++ch) image.at(gy * p + py, gx * p + px, ch) = tok[k++];
    }
  return image;
}

LossVector gt_patch_losses(const Tensor& image, const Tensor& reconstruction, int64_t patch_size) {
  if (image.shape() != reconstruction.shape())
    throw ShapeError("gt_patch_losses: image/reconstruction shape mismatch");
  const PatchTokens a = tokenize(image, patch_size);
  const PatchTokens b = tokenize(reconstruction, patch_size);
  LossVector out;
  out.grid_h = a.grid_h;
  out.grid_w = a.grid_w;
  out.values = Tensor({a.count()});
  const int64_t dim = a.tokens.dim(1);
  for (int64_t i = 0; i < a.count(); ++i) {
    double s = 0.0;
    const double* ta = a.tokens.data() + i * dim;
    const double* tb = b.tokens.data() + i * dim;
    for (int64_t k = 0; k < dim; ++k) {
      const double d = ta[k] - tb[k];
      s += d * d;
    }
    out.values[i] = s / static_cast<double>(dim);
  }
  return out;
}

SoftMask soft_mask_from_losses(const LossVector& predicted) {
  if (predicted.values.numel() < 1) throw ShapeError("soft mask: empty loss vector");
  if (!tensor_all_finite(predicted.values))
    throw NumericError("soft mask: non-finite predicted losses");
  SoftMask out;
  out.grid = Tensor({predicted.grid_h, predicted.grid_w}, 1.0);
  const double lo = tensor_min(predicted.values), hi = tensor_max(predicted.values);
  if (hi > lo) {
    for (int64_t i = 0; i < predicted.values.numel(); ++i)
      out.grid[i] = 1.0 - (predicted.values[i] - lo) / (hi - lo);
  }
  // equal predictions everywhere read as anomaly-free: attenuate nothing
  return out;
}

SoftMask binary_mask_from_losses(const LossVector& predicted, double keep_quantile) {
  if (!(keep_quantile > 0.0 && keep_quantile < 1.0))
    throw ConfigError("keep_quantile must lie in (0,1)");
  if (!tensor_all_finite(predicted.values))
    throw NumericError("binary mask: non-finite predicted losses");
  const int64_t n = predicted.values.numel();
  std::vector<double> sorted(predicted.values.raw());
  std::sort(sorted.begin(), sorted.end());
  const int64_t idx = std::min<int64_t>(
      n - 1, std::max<int64_t>(0, static_cast<int64_t>(std::ceil(keep_quantile * n)) - 1));
  const double cutoff = sorted[static_cast<size_t>(idx)];

  SoftMask out;
  out.binary_provenance = true;
  out.grid = Tensor({predicted.grid_h, predicted.grid_w}, 1.0);
  for (int64_t i = 0; i < n; ++i)
    if (predicted.values[i] > cutoff) out.grid[i] = 0.0;  // strict: constant input masks nothing
  return out;
}

std::string to_string(PairStrategy s) { return s == PairStrategy::all_pairs ? "all_pairs" : "sampled"; }

PairStrategy pair_strategy_from_string(const std::string& s) {
  if (s == "all_pairs") return PairStrategy::all_pairs;
  if (s == "sampled") return PairStrategy::sampled;
  throw ConfigError("unknown pair strategy: '" + s + "'");
}

RankingConfig effective_ranking(RankingConfig cfg, int64_t n) {
  if (cfg.strategy == PairStrategy::all_pairs && n > 256) {
    cfg.strategy = PairStrategy::sampled;
    if (cfg.pairs_per_image == 0) cfg.pairs_per_image = 8 * n;
  }
  return cfg;
}

double margin_ranking_loss(const Tensor& predicted, const Tensor& gt, const RankingConfig& cfg,
                           Tensor* grad) {
  cfg.validate();
  const int64_t n = predicted.numel();
  if (n != gt.numel()) throw ShapeError("ranking loss: predicted/gt length mismatch");
  if (n < 2) throw InsufficientPatches("ranking loss needs at least 2 patches");
  if (grad) *grad = Tensor({n});

  double total = 0.0;
  int64_t pair_count = 0;
  const auto add_pair = [&](int64_t i, int64_t j, double weight_unused) {
    (void)weight_unused;
    const double ind = gt[i] > gt[j] ? 1.0 : -1.0;
    const double pre = -ind * (predicted[i] - predicted[j]) + cfg.margin;
    if (pre > 0.0) {
      total += pre;
      if (grad) {
        (*grad)[i] -= ind;
        (*grad)[j] += ind;
      }
    }
    ++pair_count;
  };

  if (cfg.strategy == PairStrategy::all_pairs) {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j)
        if (i != j) add_pair(i, j, 1.0);
  } else {
    const int64_t pairs = cfg.pairs_per_image > 0 ? cfg.pairs_per_image : 8 * n;
    auto rng = make_rng(cfg.seed, 0x9a17ULL);
    for (int64_t k = 0; k < pairs; ++k) {
      const int64_t i = rand_index(rng, n);
      int64_t j = rand_index(rng, n - 1);
      if (j >= i) ++j;
      add_pair(i, j, 1.0);
    }
  }

  if (grad)
    for (int64_t i = 0; i < n; ++i) (*grad)[i] /= static_cast<double>(pair_count);
  return total / static_cast<double>(pair_count);
}

LossPredictor::LossPredictor(int64_t input_dim, int64_t hidden, double slope, uint64_t seed)
    : slope_(slope) {
  if (input_dim < 1 || hidden < 1) throw ConfigError("loss predictor: dims must be >= 1");
  auto rng = make_rng(seed, 0x31f0ULL);
  w1.init("mlp.layer1.weight", {hidden, input_dim});
  b1.init("mlp.layer1.bias", {hidden});
  w2.init("mlp.layer2.weight", {1, hidden});
  b2.init("mlp.layer2.bias", {1});
  const double s1 = std::sqrt(2.0 / static_cast<double>(input_dim));
  for (int64_t i = 0; i < w1.value.numel(); ++i) w1.value[i] = s1 * rand_normal(rng);
  const double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
  for (int64_t i = 0; i < w2.value.numel(); ++i) w2.value[i] = s2 * rand_normal(rng);
}

Tensor LossPredictor::predict(const Tensor& tokens) const {
  const int64_t n = tokens.dim(0), in = tokens.dim(1), hid = w1.value.dim(0);
  if (in != w1.value.dim(1))
    throw ShapeError("loss predictor: token width " + std::to_string(in) + " != expected " +
                     std::to_string(w1.value.dim(1)));
  Tensor hidden({n, hid});
  ConstMatMap a(tokens.data(), n, in);
  ConstMatMap m1(w1.value.data(), hid, in);
  MatMap hm(hidden.data(), n, hid);
  hm.noalias() = a * m1.transpose();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < hid; ++j) {
      double v = hidden.at(i, j) + b1.value[j];
      hidden.at(i, j) = v > 0.0 ? v : slope_ * v;
    }
  Tensor out({n});
  ConstMatMap m2(w2.value.data(), 1, hid);
  MatMap om(out.data(), n, 1);
  om.noalias() = ConstMatMap(hidden.data(), n, hid) * m2.transpose();
  for (int64_t i = 0; i < n; ++i) out[i] += b2.value[0];
  return out;
}

Tensor LossPredictor::forward(const Tensor& tokens) {
  tokens_ = tokens;
  const int64_t n = tokens.dim(0), in = tokens.dim(1), hid = w1.value.dim(0);
  if (in != w1.value.dim(1)) throw ShapeError("loss predictor: token width mismatch");
  pre1_ = Tensor({n, hid});
  ConstMatMap a(tokens.data(), n, in);
  ConstMatMap m1(w1.value.data(), hid, in);
  MatMap(pre1_.data(), n, hid).noalias() = a * m1.transpose();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < hid; ++j) pre1_.at(i, j) += b1.value[j];
  act1_ = Tensor({n, hid});
  for (int64_t i = 0; i < pre1_.numel(); ++i)
    act1_[i] = pre1_[i] > 0.0 ? pre1_[i] : slope_ * pre1_[i];
  Tensor out({n});
  ConstMatMap m2(w2.value.data(), 1, hid);
  MatMap(out.data(), n, 1).noalias() = ConstMatMap(act1_.data(), n, hid) * m2.transpose();
  for (int64_t i = 0; i < n; ++i) out[i] += b2.value[0];
  return out;
}

void LossPredictor::backward(const Tensor& dpred) {
  const int64_t n = tokens_.dim(0), in = tokens_.dim(1), hid = w1.value.dim(0);
  // layer2
  ConstMatMap dy(dpred.data(), n, 1);
  ConstMatMap h(act1_.data(), n, hid);
  MatMap(w2.grad.data(), 1, hid).noalias() += dy.transpose() * h;
  for (int64_t i = 0; i < n; ++i) b2.grad[0] += dpred[i];
  // hidden
  Tensor dh({n, hid});
  ConstMatMap m2(w2.value.data(), 1, hid);
  MatMap(dh.data(), n, hid).noalias() = dy * m2;
  for (int64_t i = 0; i < dh.numel(); ++i) dh[i] *= pre1_[i] > 0.0 ? 1.0 : slope_;
  // layer1
  ConstMatMap a(tokens_.data(), n, in);
  MatMap(w1.grad.data(), hid, in).noalias() += ConstMatMap(dh.data(), n, hid).transpose() * a;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < hid; ++j) b1.grad[j] += dh.at(i, j);
}

void LossPredictor::store_state(nn::Checkpoint& ckpt) const {
  ckpt.config.set_int("mlp", "input_dim", w1.value.dim(1));
  ckpt.config.set_int("mlp", "hidden", w1.value.dim(0));
  ckpt.config.set_double("mlp", "leaky_slope", slope_);
  ckpt.store(w1.name, w1.value);
  ckpt.store(b1.name, b1.value);
  ckpt.store(w2.name, w2.value);
  ckpt.store(b2.name, b2.value);
}

LossPredictor LossPredictor::from_checkpoint(const nn::Checkpoint& ckpt) {
  LossPredictor mlp(ckpt.config.get_int("mlp", "input_dim"), ckpt.config.get_int("mlp", "hidden"),
                    ckpt.config.get_double("mlp", "leaky_slope"), 0);
  ckpt.restore_into(mlp.w1.name, mlp.w1.value);
  ckpt.restore_into(mlp.b1.name, mlp.b1.value);
  ckpt.restore_into(mlp.w2.name, mlp.w2.value);
  ckpt.restore_into(mlp.b2.name, mlp.b2.value);
  return mlp;
}

}  // namespace fader::head
