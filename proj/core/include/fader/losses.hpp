#pragma once

#include "fader/tensor.hpp"

namespace fader::nn {

// mean over all elements of (pred - target)^2
template <typename T>
T mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.shape() != target.shape()) throw ShapeError("mse_loss: shape mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    s += d * d;
  }
  return static_cast<T>(s / static_cast<double>(pred.numel()));
}

template <typename T>
BasicTensor<T> mse_loss_grad(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  BasicTensor<T> g(pred.shape());
  const T scale = T(2) / static_cast<T>(pred.numel());
  for (int64_t i = 0; i < pred.numel(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

// Differentiable multi-scale gradient-magnitude-similarity loss over NCHW
// batches: mean over levels of mean(1 - GMS_k), where level k compares the
// 2x-average-pooled pair k times. Gradients flow into `pred` only.
template <typename T>
class MsgmsLoss {
 public:
  explicit MsgmsLoss(int levels = 2, double c = 0.0026) : levels_(levels), c_(static_cast<T>(c)) {}

  T forward(const BasicTensor<T>& pred, const BasicTensor<T>& target);
  BasicTensor<T> backward();  // gradient w.r.t. pred

 private:
  struct Level {
    BasicTensor<T> lp, lt;          // pooled luminances (N, H, W)
    BasicTensor<T> px, py, tx, ty;  // Prewitt components
    BasicTensor<T> gp, gt;          // gradient magnitudes
  };

  static BasicTensor<T> channel_mean(const BasicTensor<T>& x);
  static BasicTensor<T> pool2(const BasicTensor<T>& lum);
  static void pool2_backward_add(const BasicTensor<T>& dpooled, BasicTensor<T>& dlum);
  static void prewitt(const BasicTensor<T>& lum, BasicTensor<T>& gx, BasicTensor<T>& gy);
  static void prewitt_transpose_add(const BasicTensor<T>& dgx, const BasicTensor<T>& dgy,
                                    BasicTensor<T>& dlum);

  int levels_;
  T c_;
  std::vector<Level> cache_;
  std::vector<int64_t> pred_shape_;
  int64_t channels_ = 0;
};

template <typename T>
BasicTensor<T> MsgmsLoss<T>::channel_mean(const BasicTensor<T>& x) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  BasicTensor<T> out({n, h, w});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* src = x.data() + (i * c + ch) * h * w;
      T* dst = out.data() + i * h * w;
      for (int64_t j = 0; j < h * w; ++j) dst[j] += src[j] / static_cast<T>(c);
    }
  return out;
}

template <typename T>
BasicTensor<T> MsgmsLoss<T>::pool2(const BasicTensor<T>& lum) {
  const int64_t n = lum.dim(0), h = lum.dim(1), w = lum.dim(2);
  BasicTensor<T> out({n, h / 2, w / 2});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t y = 0; y < h / 2; ++y)
      for (int64_t x = 0; x < w / 2; ++x)
        out.at(i, y, x) = (lum.at(i, 2 * y, 2 * x) + lum.at(i, 2 * y, 2 * x + 1) +
                           lum.at(i, 2 * y + 1, 2 * x) + lum.at(i, 2 * y + 1, 2 * x + 1)) /
                          T(4);
  return out;
}

template <typename T>
void MsgmsLoss<T>::pool2_backward_add(const BasicTensor<T>& dpooled, BasicTensor<T>& dlum) {
  const int64_t n = dpooled.dim(0), h = dpooled.dim(1), w = dpooled.dim(2);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const T g = dpooled.at(i, y, x) / T(4);
        dlum.at(i, 2 * y, 2 * x) += g;
        dlum.at(i, 2 * y, 2 * x + 1) += g;
        dlum.at(i, 2 * y + 1, 2 * x) += g;
        dlum.at(i, 2 * y + 1, 2 * x + 1) += g;
      }
}

template <typename T>
void MsgmsLoss<T>::prewitt(const BasicTensor<T>& lum, BasicTensor<T>& gx, BasicTensor<T>& gy) {
  const int64_t n = lum.dim(0), h = lum.dim(1), w = lum.dim(2);
  const auto cl = [](int64_t v, int64_t lim) { return std::min(lim - 1, std::max<int64_t>(0, v)); };
  gx = BasicTensor<T>({n, h, w});
  gy = BasicTensor<T>({n, h, w});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        T sx = T(0), sy = T(0);
        for (int64_t d = -1; d <= 1; ++d) {
          sx += lum.at(i, cl(y + d, h), cl(x + 1, w)) - lum.at(i, cl(y + d, h), cl(x - 1, w));
          sy += lum.at(i, cl(y + 1, h), cl(x + d, w)) - lum.at(i, cl(y - 1, h), cl(x + d, w));
        }
        gx.at(i, y, x) = sx / T(3);
        gy.at(i, y, x) = sy / T(3);
      }
}

template <typename T>
void MsgmsLoss<T>::prewitt_transpose_add(const BasicTensor<T>& dgx, const BasicTensor<T>& dgy,
                                         BasicTensor<T>& dlum) {
  const int64_t n = dgx.dim(0), h = dgx.dim(1), w = dgx.dim(2);
  const auto cl = [](int64_t v, int64_t lim) { return std::min(lim - 1, std::max<int64_t>(0, v)); };
  for (int64_t i = 0; i < n; ++i)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const T vx = dgx.at(i, y, x) / T(3);
        const T vy = dgy.at(i, y, x) / T(3);
        for (int64_t d = -1; d <= 1; ++d) {
          dlum.at(i, cl(y + d, h), cl(x + 1, w)) += vx;
          dlum.at(i, cl(y + d, h), cl(x - 1, w)) -= vx;
          dlum.at(i, cl(y + 1, h), cl(x + d, w)) += vy;
          dlum.at(i, cl(y - 1, h), cl(x + d, w)) -= vy;
        }
      }
}

template <typename T>
T MsgmsLoss<T>::forward(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.shape() != target.shape()) throw ShapeError("msgms loss: shape mismatch");
  const int64_t div = int64_t{1} << (levels_ - 1);
  if (pred.dim(2) % div != 0 || pred.dim(3) % div != 0)
    throw ShapeError("msgms loss: spatial size must be divisible by 2^(levels-1)");
  pred_shape_ = pred.shape();
  channels_ = pred.dim(1);
  cache_.assign(static_cast<size_t>(levels_), {});

  BasicTensor<T> lp = channel_mean(pred);
  BasicTensor<T> lt = channel_mean(target);
  double total = 0.0;
  for (int k = 0; k < levels_; ++k) {
    if (k > 0) {
      lp = pool2(lp);
      lt = pool2(lt);
    }
    Level& lv = cache_[static_cast<size_t>(k)];
    lv.lp = lp;
    lv.lt = lt;
    prewitt(lv.lp, lv.px, lv.py);
    prewitt(lv.lt, lv.tx, lv.ty);
    lv.gp = BasicTensor<T>(lv.lp.shape());
    lv.gt = BasicTensor<T>(lv.lp.shape());
    double level_sum = 0.0;
    for (int64_t j = 0; j < lv.lp.numel(); ++j) {
      lv.gp[j] = std::sqrt(lv.px[j] * lv.px[j] + lv.py[j] * lv.py[j]);
      lv.gt[j] = std::sqrt(lv.tx[j] * lv.tx[j] + lv.ty[j] * lv.ty[j]);
      const double gms = (2.0 * lv.gp[j] * lv.gt[j] + c_) /
                         (lv.gp[j] * lv.gp[j] + lv.gt[j] * lv.gt[j] + c_);
      level_sum += 1.0 - gms;
    }
    total += level_sum / static_cast<double>(lv.lp.numel());
  }
  return static_cast<T>(total / static_cast<double>(levels_));
}

template <typename T>
BasicTensor<T> MsgmsLoss<T>::backward() {
  BasicTensor<T> dlum;  // gradient w.r.t. the luminance at the current level
  for (int k = levels_ - 1; k >= 0; --k) {
    const Level& lv = cache_[static_cast<size_t>(k)];
    BasicTensor<T> dgx(lv.lp.shape()), dgy(lv.lp.shape());
    const T scale = T(-1) / (static_cast<T>(levels_) * static_cast<T>(lv.lp.numel()));
    for (int64_t j = 0; j < lv.lp.numel(); ++j) {
      const T gp = lv.gp[j], gt = lv.gt[j];
      const T denom = gp * gp + gt * gt + c_;
      // d(GMS)/d(gp); the loss contributes -GMS, folded into `scale`
      const T dgms_dgp = (T(2) * gt * denom - (T(2) * gp * gt + c_) * T(2) * gp) / (denom * denom);
      const T dgp = scale * dgms_dgp;
      const T safe_g = gp > T(1e-12) ? gp : T(1e-12);
      dgx[j] = dgp * lv.px[j] / safe_g;
      dgy[j] = dgp * lv.py[j] / safe_g;
    }
    BasicTensor<T> dl(lv.lp.shape());
    prewitt_transpose_add(dgx, dgy, dl);
    if (k == levels_ - 1) {
      dlum = std::move(dl);
    } else {
      // dlum currently refers to level k+1 (pooled); spread it up then add
      BasicTensor<T> up(lv.lp.shape());
      pool2_backward_add(dlum, up);
      for (int64_t j = 0; j < up.numel(); ++j) up[j] += dl[j];
      dlum = std::move(up);
    }
  }
  // luminance was the channel mean of pred
  BasicTensor<T> dpred(pred_shape_);
  const int64_t n = pred_shape_[0], c = channels_, h = pred_shape_[2], w = pred_shape_[3];
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* src = dlum.data() + i * h * w;
      T* dst = dpred.data() + (i * c + ch) * h * w;
      for (int64_t j = 0; j < h * w; ++j) dst[j] = src[j] / static_cast<T>(c);
    }
  return dpred;
}

}  // namespace fader::nn
