#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fader/rng.hpp"
#include "fader/tensor.hpp"

// Minimal CPU training layers over N x C x H x W activations. Every layer
// caches what its backward pass needs; backward accumulates parameter
// gradients and returns the input gradient. All batch reductions run in a
// fixed order so results are bit-reproducible for a given seed, independent
// of the OpenMP thread count.

namespace fader::nn {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
struct Param {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  void init(std::string n, std::vector<int64_t> shape) {
    name = std::move(n);
    value = BasicTensor<T>(shape);
    grad = BasicTensor<T>(std::move(shape));
  }
  void zero_grad() { grad.fill(T(0)); }
};

// ---------------------------------------------------------------------------
// im2col for 3x3 kernels with zero padding 1.

template <typename T>
void im2col_3x3(const T* x, int64_t c, int64_t h, int64_t w, int64_t stride, T* col,
                int64_t oh, int64_t ow) {
  const int64_t plane = h * w;
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t ky = 0; ky < 3; ++ky)
      for (int64_t kx = 0; kx < 3; ++kx) {
        T* dst = col + ((ch * 3 + ky) * 3 + kx) * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t sy = y * stride + ky - 1;
          if (sy < 0 || sy >= h) {
            for (int64_t xx = 0; xx < ow; ++xx) dst[y * ow + xx] = T(0);
            continue;
          }
          const T* src = x + ch * plane + sy * w;
          for (int64_t xx = 0; xx < ow; ++xx) {
            const int64_t sx = xx * stride + kx - 1;
            dst[y * ow + xx] = (sx >= 0 && sx < w) ? src[sx] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_3x3_add(const T* col, int64_t c, int64_t h, int64_t w, int64_t stride, T* dx,
                    int64_t oh, int64_t ow) {
  const int64_t plane = h * w;
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t ky = 0; ky < 3; ++ky)
      for (int64_t kx = 0; kx < 3; ++kx) {
        const T* src = col + ((ch * 3 + ky) * 3 + kx) * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t sy = y * stride + ky - 1;
          if (sy < 0 || sy >= h) continue;
          T* dst = dx + ch * plane + sy * w;
          for (int64_t xx = 0; xx < ow; ++xx) {
            const int64_t sx = xx * stride + kx - 1;
            if (sx >= 0 && sx < w) dst[sx] += src[y * ow + xx];
          }
        }
      }
}

// ---------------------------------------------------------------------------

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int64_t in_c, int64_t out_c, int64_t stride, std::mt19937_64& rng)
      : in_c_(in_c), out_c_(out_c), stride_(stride) {
    weight.init(name + ".weight", {out_c, in_c * 9});
    bias.init(name + ".bias", {out_c});
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in_c * 9));
    for (int64_t i = 0; i < weight.value.numel(); ++i)
      weight.value[i] = static_cast<T>(std_dev * rand_normal(rng));
  }

  BasicTensor<T> forward(const BasicTensor<T>& x) {
    x_ = x;
    const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t oh = out_size(h), ow = out_size(w);
    BasicTensor<T> y({n, out_c_, oh, ow});
    const int64_t k = in_c_ * 9, p = oh * ow;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
      std::vector<T> col(static_cast<size_t>(k * p));
      im2col_3x3(x.data() + i * in_c_ * h * w, in_c_, h, w, stride_, col.data(), oh, ow);
      ConstMatMap<T> wm(weight.value.data(), out_c_, k);
      ConstMatMap<T> cm(col.data(), k, p);
      MatMap<T> ym(y.data() + i * out_c_ * p, out_c_, p);
      ym.noalias() = wm * cm;
      for (int64_t oc = 0; oc < out_c_; ++oc) ym.row(oc).array() += bias.value[oc];
    }
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    const int64_t n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int64_t oh = out_size(h), ow = out_size(w);
    const int64_t k = in_c_ * 9, p = oh * ow;
    BasicTensor<T> dx(x_.shape());
    std::vector<std::vector<T>> dw_per(static_cast<size_t>(n));
    std::vector<std::vector<T>> db_per(static_cast<size_t>(n));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
      std::vector<T> col(static_cast<size_t>(k * p));
      im2col_3x3(x_.data() + i * in_c_ * h * w, in_c_, h, w, stride_, col.data(), oh, ow);
      ConstMatMap<T> cm(col.data(), k, p);
      ConstMatMap<T> dym(dy.data() + i * out_c_ * p, out_c_, p);

      auto& dw = dw_per[static_cast<size_t>(i)];
      dw.assign(static_cast<size_t>(out_c_ * k), T(0));
      MatMap<T>(dw.data(), out_c_, k).noalias() = dym * cm.transpose();

      auto& db = db_per[static_cast<size_t>(i)];
      db.assign(static_cast<size_t>(out_c_), T(0));
      for (int64_t oc = 0; oc < out_c_; ++oc) db[static_cast<size_t>(oc)] = dym.row(oc).sum();

      std::vector<T> dcol(static_cast<size_t>(k * p));
      ConstMatMap<T> wm(weight.value.data(), out_c_, k);
      MatMap<T>(dcol.data(), k, p).noalias() = wm.transpose() * dym;
      col2im_3x3_add(dcol.data(), in_c_, h, w, stride_, dx.data() + i * in_c_ * h * w, oh, ow);
    }
    // fixed-order reduction keeps gradients independent of thread scheduling
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < weight.grad.numel(); ++j)
        weight.grad[j] += dw_per[static_cast<size_t>(i)][static_cast<size_t>(j)];
      for (int64_t oc = 0; oc < out_c_; ++oc)
        bias.grad[oc] += db_per[static_cast<size_t>(i)][static_cast<size_t>(oc)];
    }
    return dx;
  }

  int64_t out_size(int64_t in) const { return (in + 2 - 3) / stride_ + 1; }

  Param<T> weight, bias;

 private:
  int64_t in_c_ = 0, out_c_ = 0, stride_ = 1;
  BasicTensor<T> x_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int64_t c) : c_(c) {
    gamma.init(name + ".gamma", {c});
    beta.init(name + ".beta", {c});
    gamma.value.fill(T(1));
    running_mean = BasicTensor<T>({c});
    running_var = BasicTensor<T>({c}, T(1));
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) {
    training_ = training;
    const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const T count = static_cast<T>(n * h * w);
    BasicTensor<T> y(x.shape());
    if (training) {
      mean_ = BasicTensor<T>({c_});
      var_ = BasicTensor<T>({c_});
      for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < c_; ++c) {
          const T* p = x.data() + (i * c_ + c) * h * w;
          T s = T(0);
          for (int64_t j = 0; j < h * w; ++j) s += p[j];
          mean_[c] += s;
        }
      for (int64_t c = 0; c < c_; ++c) mean_[c] /= count;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < c_; ++c) {
          const T* p = x.data() + (i * c_ + c) * h * w;
          T s = T(0);
          for (int64_t j = 0; j < h * w; ++j) {
            const T d = p[j] - mean_[c];
            s += d * d;
          }
          var_[c] += s;
        }
      for (int64_t c = 0; c < c_; ++c) var_[c] /= count;  // biased
      for (int64_t c = 0; c < c_; ++c) {
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean_[c];
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * var_[c];
      }
      inv_std_ = BasicTensor<T>({c_});
      for (int64_t c = 0; c < c_; ++c) inv_std_[c] = T(1) / std::sqrt(var_[c] + eps);
      xhat_ = BasicTensor<T>(x.shape());
      for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < c_; ++c) {
          const T* p = x.data() + (i * c_ + c) * h * w;
          T* xh = xhat_.data() + (i * c_ + c) * h * w;
          T* yp = y.data() + (i * c_ + c) * h * w;
          for (int64_t j = 0; j < h * w; ++j) {
            xh[j] = (p[j] - mean_[c]) * inv_std_[c];
            yp[j] = gamma.value[c] * xh[j] + beta.value[c];
          }
        }
    } else {
      for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < c_; ++c) {
          const T inv = T(1) / std::sqrt(running_var[c] + eps);
          const T* p = x.data() + (i * c_ + c) * h * w;
          T* yp = y.data() + (i * c_ + c) * h * w;
          for (int64_t j = 0; j < h * w; ++j)
            yp[j] = gamma.value[c] * (p[j] - running_mean[c]) * inv + beta.value[c];
        }
      eval_inv_std_ = BasicTensor<T>({c_});
      for (int64_t c = 0; c < c_; ++c) eval_inv_std_[c] = T(1) / std::sqrt(running_var[c] + eps);
      eval_x_ = x;
    }
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    const int64_t n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const T count = static_cast<T>(n * h * w);
    BasicTensor<T> dx(dy.shape());
    if (!training_) {
      for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < c_; ++c) {
          const T* dyp = dy.data() + (i * c_ + c) * h * w;
          const T* xp = eval_x_.data() + (i * c_ + c) * h * w;
          T* dxp = dx.data() + (i * c_ + c) * h * w;
          T dg = T(0), db = T(0);
          for (int64_t j = 0; j < h * w; ++j) {
            dxp[j] = dyp[j] * gamma.value[c] * eval_inv_std_[c];
            dg += dyp[j] * (xp[j] - running_mean[c]) * eval_inv_std_[c];
            db += dyp[j];
          }
          gamma.grad[c] += dg;
          beta.grad[c] += db;
        }
      return dx;
    }
    // training mode: gradients flow through the batch statistics
    BasicTensor<T> sum_dy({c_}), sum_dy_xhat({c_});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < c_; ++c) {
        const T* dyp = dy.data() + (i * c_ + c) * h * w;
        const T* xh = xhat_.data() + (i * c_ + c) * h * w;
        T s = T(0), sx = T(0);
        for (int64_t j = 0; j < h * w; ++j) {
          s += dyp[j];
          sx += dyp[j] * xh[j];
        }
        sum_dy[c] += s;
        sum_dy_xhat[c] += sx;
      }
    for (int64_t c = 0; c < c_; ++c) {
      gamma.grad[c] += sum_dy_xhat[c];
      beta.grad[c] += sum_dy[c];
    }
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < c_; ++c) {
        const T* dyp = dy.data() + (i * c_ + c) * h * w;
        const T* xh = xhat_.data() + (i * c_ + c) * h * w;
        T* dxp = dx.data() + (i * c_ + c) * h * w;
        const T scale = gamma.value[c] * inv_std_[c];
        for (int64_t j = 0; j < h * w; ++j)
          dxp[j] = scale * (dyp[j] - sum_dy[c] / count - xh[j] * sum_dy_xhat[c] / count);
      }
    return dx;
  }

  Param<T> gamma, beta;
  BasicTensor<T> running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

 private:
  int64_t c_ = 0;
  bool training_ = true;
  BasicTensor<T> mean_, var_, inv_std_, xhat_;
  BasicTensor<T> eval_inv_std_, eval_x_;
};

template <typename T>
class LeakyReLU {
 public:
  explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}

  // When set, every forward folds the pre-activation sign pattern into the
  // pointed-to hash. Finite-difference checks use it to detect (and exclude)
  // perturbations that cross an activation kink.
  uint64_t* sign_probe = nullptr;

  BasicTensor<T> forward(const BasicTensor<T>& x) {
    x_ = x;
    BasicTensor<T> y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : slope_ * x[i];
    if (sign_probe) {
      uint64_t h = *sign_probe;
      for (int64_t i = 0; i < x.numel(); ++i) h = (h * 0x100000001b3ULL) ^ (x[i] > T(0) ? 1u : 0u);
      *sign_probe = h;
    }
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    BasicTensor<T> dx(dy.shape());
    for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * (x_[i] > T(0) ? T(1) : slope_);
    return dx;
  }

 private:
  T slope_;
  BasicTensor<T> x_;
};

template <typename T>
class Sigmoid {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x) {
    y_ = BasicTensor<T>(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) y_[i] = T(1) / (T(1) + std::exp(-x[i]));
    return y_;
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    BasicTensor<T> dx(dy.shape());
    for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * y_[i] * (T(1) - y_[i]);
    return dx;
  }

 private:
  BasicTensor<T> y_;
};

template <typename T>
class NearestUpsample2 {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x) {
    in_shape_ = x.shape();
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    BasicTensor<T> y({n, c, 2 * h, 2 * w});
    for (int64_t i = 0; i < n * c; ++i) {
      const T* src = x.data() + i * h * w;
      T* dst = y.data() + i * 4 * h * w;
      for (int64_t yy = 0; yy < 2 * h; ++yy)
        for (int64_t xx = 0; xx < 2 * w; ++xx) dst[yy * 2 * w + xx] = src[(yy / 2) * w + xx / 2];
    }
    return y;
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    const int64_t n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    BasicTensor<T> dx(in_shape_);
    for (int64_t i = 0; i < n * c; ++i) {
      const T* src = dy.data() + i * 4 * h * w;
      T* dst = dx.data() + i * h * w;
      for (int64_t yy = 0; yy < 2 * h; ++yy)
        for (int64_t xx = 0; xx < 2 * w; ++xx) dst[(yy / 2) * w + xx / 2] += src[yy * 2 * w + xx];
    }
    return dx;
  }

 private:
  std::vector<int64_t> in_shape_;
};

// Channel concatenation of (first, second); backward splits accordingly.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: incompatible shapes " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  const int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  BasicTensor<T> y({n, ca + cb, h, w});
  for (int64_t i = 0; i < n; ++i) {
    std::copy(a.data() + i * ca * h * w, a.data() + (i + 1) * ca * h * w,
              y.data() + i * (ca + cb) * h * w);
    std::copy(b.data() + i * cb * h * w, b.data() + (i + 1) * cb * h * w,
              y.data() + (i * (ca + cb) + ca) * h * w);
  }
  return y;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& y, int64_t ca) {
  const int64_t n = y.dim(0), c = y.dim(1), h = y.dim(2), w = y.dim(3);
  const int64_t cb = c - ca;
  BasicTensor<T> a({n, ca, h, w}), b({n, cb, h, w});
  for (int64_t i = 0; i < n; ++i) {
    std::copy(y.data() + i * c * h * w, y.data() + (i * c + ca) * h * w, a.data() + i * ca * h * w);
    std::copy(y.data() + (i * c + ca) * h * w, y.data() + (i + 1) * c * h * w,
              b.data() + i * cb * h * w);
  }
  return {std::move(a), std::move(b)};
}

// Per-parameter adaptive step without momentum:
//   v <- rho v + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(v) + eps)
template <typename T>
class RmsProp {
 public:
  explicit RmsProp(T rho = T(0.9), T eps = T(1e-8)) : rho_(rho), eps_(eps) {}

  void attach(const std::vector<Param<T>*>& params) {
    params_ = params;
    state_.clear();
    for (auto* p : params_) state_.push_back(BasicTensor<T>(p->value.shape()));
  }

  void step(T lr) {
    for (size_t k = 0; k < params_.size(); ++k) {
      Param<T>& p = *params_[k];
      BasicTensor<T>& v = state_[k];
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        const T g = p.grad[i];
        v[i] = rho_ * v[i] + (T(1) - rho_) * g * g;
        p.value[i] -= lr * g / (std::sqrt(v[i]) + eps_);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  std::vector<BasicTensor<T>>& state() { return state_; }
  const std::vector<Param<T>*>& params() const { return params_; }

 private:
  T rho_, eps_;
  std::vector<Param<T>*> params_;
  std::vector<BasicTensor<T>> state_;
};

// Linear warm-up over the first `warmup_steps` optimizer steps, then flat.
template <typename T>
T warmup_lr(T base_lr, int64_t step, int64_t warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
  return base_lr * static_cast<T>(step + 1) / static_cast<T>(warmup_steps);
}

}  // namespace fader::nn
