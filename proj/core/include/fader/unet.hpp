#pragma once

#include <memory>
#include <optional>

#include "fader/nn.hpp"

namespace fader::nn {

enum class ScalingMode { nearest, bilinear };

std::string to_string(ScalingMode m);
ScalingMode scaling_mode_from_string(const std::string& s);

// Resizes a patch-grid attenuation mask to a skip resolution. Nearest keeps
// the exact value set (each grid cell fills an integer block when the sizes
// divide); bilinear interpolates with half-pixel centers, staying in [0,1].
Tensor scale_mask(const Tensor& grid, int64_t target_h, int64_t target_w, ScalingMode mode);

struct UNetConfig {
  int64_t depth = 5;
  int64_t base_channels = 32;  // doubled at each depth
  int64_t in_channels = 3;
  double leaky_slope = 0.2;

  void validate() const {
    if (depth < 2) throw ConfigError("unet depth must be >= 2");
    if (base_channels < 1 || in_channels < 1) throw ConfigError("unet channels must be >= 1");
  }
  int64_t channels_at(int64_t d) const { return base_channels << (d - 1); }  // d in 1..depth
};

// Per-image patch-grid attenuation coefficients in [0,1], applied to every
// skip connection after scaling to that skip's resolution.
struct Attenuation {
  Tensor grids;  // (N, grid_h, grid_w)
  ScalingMode mode = ScalingMode::nearest;
};

template <typename T>
struct ForwardTrace {
  std::vector<BasicTensor<T>> attenuated_skips;  // index d-1, d in 1..depth-1
  std::vector<BasicTensor<T>> decoder_inputs;    // concat fed to decoder block d (d < depth)
  std::vector<BasicTensor<T>> attenuation_maps;  // scaled maps per depth (N,1,H_d,W_d), empty if none
};

// encoder block: 3 x (conv3x3 -> BN -> leakyReLU), third conv has stride 2
template <typename T>
class EncoderBlock {
 public:
  EncoderBlock(const std::string& name, int64_t in_c, int64_t out_c, T slope, std::mt19937_64& rng)
      : conv1(name + ".conv1", in_c, out_c, 1, rng),
        conv2(name + ".conv2", out_c, out_c, 1, rng),
        conv3(name + ".conv3", out_c, out_c, 2, rng),
        bn1(name + ".bn1", out_c),
        bn2(name + ".bn2", out_c),
        bn3(name + ".bn3", out_c),
        act1(slope),
        act2(slope),
        act3(slope) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) {
    auto h = act1.forward(bn1.forward(conv1.forward(x), training));
    h = act2.forward(bn2.forward(conv2.forward(h), training));
    return act3.forward(bn3.forward(conv3.forward(h), training));
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    auto d = conv3.backward(bn3.backward(act3.backward(dy)));
    d = conv2.backward(bn2.backward(act2.backward(d)));
    return conv1.backward(bn1.backward(act1.backward(d)));
  }

  Conv2d<T> conv1, conv2, conv3;
  BatchNorm2d<T> bn1, bn2, bn3;
  LeakyReLU<T> act1, act2, act3;
};

// decoder block: nearest x2 upsample, then 3 x (conv3x3 -> BN -> leakyReLU)
template <typename T>
class DecoderBlock {
 public:
  DecoderBlock(const std::string& name, int64_t in_c, int64_t out_c, T slope, std::mt19937_64& rng)
      : conv1(name + ".conv1", in_c, out_c, 1, rng),
        conv2(name + ".conv2", out_c, out_c, 1, rng),
        conv3(name + ".conv3", out_c, out_c, 1, rng),
        bn1(name + ".bn1", out_c),
        bn2(name + ".bn2", out_c),
        bn3(name + ".bn3", out_c),
        act1(slope),
        act2(slope),
        act3(slope) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) {
    auto h = up.forward(x);
    h = act1.forward(bn1.forward(conv1.forward(h), training));
    h = act2.forward(bn2.forward(conv2.forward(h), training));
    return act3.forward(bn3.forward(conv3.forward(h), training));
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    auto d = conv3.backward(bn3.backward(act3.backward(dy)));
    d = conv2.backward(bn2.backward(act2.backward(d)));
    d = conv1.backward(bn1.backward(act1.backward(d)));
    return up.backward(d);
  }

  NearestUpsample2<T> up;
  Conv2d<T> conv1, conv2, conv3;
  BatchNorm2d<T> bn1, bn2, bn3;
  LeakyReLU<T> act1, act2, act3;
};

template <typename T>
class UNet {
 public:
  UNet(const UNetConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    auto rng = make_rng(init_seed, 0x0e7ULL);
    const int64_t D = cfg_.depth;
    for (int64_t d = 1; d <= D; ++d) {
      const int64_t in_c = d == 1 ? cfg_.in_channels : cfg_.channels_at(d - 1);
      enc_.push_back(std::make_unique<EncoderBlock<T>>("enc" + std::to_string(d), in_c,
                                                       cfg_.channels_at(d),
                                                       static_cast<T>(cfg_.leaky_slope), rng));
    }
    for (int64_t d = D; d >= 1; --d) {
      const int64_t out_c = d >= 2 ? cfg_.channels_at(d - 1) : cfg_.base_channels;
      const int64_t in_c =
          d == D ? cfg_.channels_at(D) : dec_out_channels(d + 1) + cfg_.channels_at(d);
      dec_.push_back(std::make_unique<DecoderBlock<T>>("dec" + std::to_string(d), in_c, out_c,
                                                       static_cast<T>(cfg_.leaky_slope), rng));
    }
    head_ = std::make_unique<Conv2d<T>>("head", cfg_.base_channels, cfg_.in_channels, 1, rng);
  }

  const UNetConfig& config() const { return cfg_; }
  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }
  // Runs encoder batch-norm layers in inference mode regardless of the
  // global flag; used while fine-tuning only the decoder.
  void set_freeze_encoder_stats(bool freeze) { freeze_encoder_stats_ = freeze; }

  BasicTensor<T> forward(const BasicTensor<T>& x, const Attenuation* attenuation = nullptr,
                         ForwardTrace<T>* trace = nullptr) {
    const int64_t D = cfg_.depth;
    if (x.rank() != 4 || x.dim(1) != cfg_.in_channels)
      throw ShapeError("unet: expected (N," + std::to_string(cfg_.in_channels) + ",H,W), got " +
                       shape_string(x.shape()));
    const int64_t div = int64_t{1} << D;
    if (x.dim(2) % div != 0 || x.dim(3) % div != 0)
      throw ShapeError("unet: spatial size must be divisible by 2^depth");
    if (attenuation && attenuation->grids.dim(0) != x.dim(0))
      throw ShapeError("unet: attenuation batch size mismatch");

    const bool enc_training = training_ && !freeze_encoder_stats_;
    skips_.assign(static_cast<size_t>(D - 1), {});
    att_maps_.assign(static_cast<size_t>(D - 1), {});
    BasicTensor<T> cur = x;
    for (int64_t d = 1; d <= D; ++d) {
      cur = enc_[static_cast<size_t>(d - 1)]->forward(cur, enc_training);
      if (d < D) skips_[static_cast<size_t>(d - 1)] = cur;
    }

    if (trace) {
      trace->attenuated_skips.clear();
      trace->decoder_inputs.clear();
      trace->attenuation_maps.clear();
    }

    for (int64_t d = D; d >= 1; --d) {
      if (d < D) {
        BasicTensor<T> skip = skips_[static_cast<size_t>(d - 1)];
        if (attenuation) {
          const BasicTensor<T> map = scaled_maps(*attenuation, skip.dim(2), skip.dim(3), x.dim(0));
          att_maps_[static_cast<size_t>(d - 1)] = map;
          skip = apply_map(skip, map);
          if (trace) trace->attenuation_maps.push_back(map);
        }
        if (trace) trace->attenuated_skips.push_back(skip);
        cur = concat_channels(cur, skip);
        if (trace) trace->decoder_inputs.push_back(cur);
      }
      cur = dec_[static_cast<size_t>(D - d)]->forward(cur, training_);
    }
    return out_act_.forward(head_->forward(cur));
  }

  // Backpropagates the output gradient; with decoder_only the encoder (and
  // the attenuation inputs) receive no gradient and encoder parameter grads
  // stay untouched. Returns the input gradient (empty when decoder_only).
  BasicTensor<T> backward(const BasicTensor<T>& dy, bool decoder_only = false) {
    const int64_t D = cfg_.depth;
    BasicTensor<T> d = head_->backward(out_act_.backward(dy));
    std::vector<BasicTensor<T>> skip_grads(static_cast<size_t>(D - 1));
    for (int64_t depth = 1; depth <= D; ++depth) {
      d = dec_[static_cast<size_t>(D - depth)]->backward(d);
      if (depth < D) {
        auto [d_next, d_skip] = split_channels(d, dec_out_channels(depth + 1));
        skip_grads[static_cast<size_t>(depth - 1)] = std::move(d_skip);
        d = std::move(d_next);
      }
    }
    if (decoder_only) return {};

    // encoder gradient: deepest decoder input plus attenuated skip branches
    BasicTensor<T> grad = std::move(d);
    for (int64_t depth = D; depth >= 1; --depth) {
      if (depth < D) {
        BasicTensor<T> ds = std::move(skip_grads[static_cast<size_t>(depth - 1)]);
        if (!att_maps_[static_cast<size_t>(depth - 1)].empty())
          ds = apply_map(ds, att_maps_[static_cast<size_t>(depth - 1)]);
        for (int64_t i = 0; i < grad.numel(); ++i) grad[i] += ds[i];
      }
      grad = enc_[static_cast<size_t>(depth - 1)]->backward(grad);
    }
    return grad;
  }

  std::vector<Param<T>*> encoder_parameters() {
    std::vector<Param<T>*> out;
    for (auto& b : enc_) collect_block(*b, out);
    return out;
  }

  std::vector<Param<T>*> decoder_parameters() {
    std::vector<Param<T>*> out;
    for (auto& b : dec_) collect_block(*b, out);
    out.push_back(&head_->weight);
    out.push_back(&head_->bias);
    return out;
  }

  std::vector<Param<T>*> parameters() {
    auto out = encoder_parameters();
    auto dec = decoder_parameters();
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
  }

  // Parameters plus batch-norm running statistics, for checkpointing.
  std::vector<std::pair<std::string, BasicTensor<T>*>> state_tensors() {
    std::vector<std::pair<std::string, BasicTensor<T>*>> out;
    for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
    auto add_bn = [&out](const std::string& name, BatchNorm2d<T>& bn) {
      out.emplace_back(name + ".running_mean", &bn.running_mean);
      out.emplace_back(name + ".running_var", &bn.running_var);
    };
    const int64_t D = cfg_.depth;
    for (int64_t d = 1; d <= D; ++d) {
      auto& b = *enc_[static_cast<size_t>(d - 1)];
      add_bn("enc" + std::to_string(d) + ".bn1", b.bn1);
      add_bn("enc" + std::to_string(d) + ".bn2", b.bn2);
      add_bn("enc" + std::to_string(d) + ".bn3", b.bn3);
    }
    for (int64_t d = D; d >= 1; --d) {
      auto& b = *dec_[static_cast<size_t>(D - d)];
      add_bn("dec" + std::to_string(d) + ".bn1", b.bn1);
      add_bn("dec" + std::to_string(d) + ".bn2", b.bn2);
      add_bn("dec" + std::to_string(d) + ".bn3", b.bn3);
    }
    return out;
  }

  int64_t dec_out_channels(int64_t d) const {
    return d >= 2 ? cfg_.channels_at(d - 1) : cfg_.base_channels;
  }

  void set_activation_sign_probe(uint64_t* probe) {
    for (auto& b : enc_) {
      b->act1.sign_probe = probe;
      b->act2.sign_probe = probe;
      b->act3.sign_probe = probe;
    }
    for (auto& b : dec_) {
      b->act1.sign_probe = probe;
      b->act2.sign_probe = probe;
      b->act3.sign_probe = probe;
    }
  }

 private:
  template <typename Block>
  void collect_block(Block& b, std::vector<Param<T>*>& out) {
    out.push_back(&b.conv1.weight);
    out.push_back(&b.conv1.bias);
    out.push_back(&b.bn1.gamma);
    out.push_back(&b.bn1.beta);
    out.push_back(&b.conv2.weight);
    out.push_back(&b.conv2.bias);
    out.push_back(&b.bn2.gamma);
    out.push_back(&b.bn2.beta);
    out.push_back(&b.conv3.weight);
    out.push_back(&b.conv3.bias);
    out.push_back(&b.bn3.gamma);
    out.push_back(&b.bn3.beta);
  }

  BasicTensor<T> scaled_maps(const Attenuation& att, int64_t h, int64_t w, int64_t n) {
    BasicTensor<T> maps({n, 1, h, w});
    for (int64_t i = 0; i < n; ++i) {
      Tensor grid({att.grids.dim(1), att.grids.dim(2)});
      for (int64_t j = 0; j < grid.numel(); ++j)
        grid[j] = att.grids[i * grid.numel() + j];
      const Tensor scaled = scale_mask(grid, h, w, att.mode);
      for (int64_t j = 0; j < h * w; ++j)
        maps[i * h * w + j] = static_cast<T>(scaled[j]);
    }
    return maps;
  }

  // broadcast multiply of (N,1,H,W) map over all channels
  static BasicTensor<T> apply_map(const BasicTensor<T>& x, const BasicTensor<T>& map) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    BasicTensor<T> y(x.shape());
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < c; ++ch) {
        const T* m = map.data() + i * h * w;
        const T* src = x.data() + (i * c + ch) * h * w;
        T* dst = y.data() + (i * c + ch) * h * w;
        for (int64_t j = 0; j < h * w; ++j) dst[j] = src[j] * m[j];
      }
    return y;
  }

  UNetConfig cfg_;
  bool training_ = true;
  bool freeze_encoder_stats_ = false;
  std::vector<std::unique_ptr<EncoderBlock<T>>> enc_;
  std::vector<std::unique_ptr<DecoderBlock<T>>> dec_;
  std::unique_ptr<Conv2d<T>> head_;
  Sigmoid<T> out_act_;
  std::vector<BasicTensor<T>> skips_;
  std::vector<BasicTensor<T>> att_maps_;
};

}  // namespace fader::nn
