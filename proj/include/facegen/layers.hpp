#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "facegen/autodiff.hpp"
#include "facegen/rng.hpp"

// Layer building blocks on top of the autodiff graph.
//
// Batched feature maps use a channel-major matrix layout: a map of shape
// (n, c, h, w) is stored as a c x (n*h*w) matrix whose column index is
// b*h*w + y*w + x. Convolutions become one gather (im2col) followed by one
// matrix product, so the whole network differentiates through the two
// primitive linear ops and stays exact under repeated backward passes.

namespace facegen::nets {

namespace ad = facegen::autodiff;

template <class S>
using Var = ad::Var<S>;
template <class S>
using DenseMat = ad::DenseMat<S>;

template <class S>
struct FeatureMap {
  Var<S> v;  // c x (n*h*w)
  int n = 0, c = 0, h = 0, w = 0;
};

using NamedParam = std::pair<std::string, int>;  // helper for manifests

template <class S>
using ParamList = std::vector<std::pair<std::string, Var<S>>>;

// ---------------------------------------------------------------------------
// Index-map builders (shared by graph ops and the plain-tensor helpers)
// ---------------------------------------------------------------------------

// im2col for a c x (n*h*w) source: output rows c*k*k, output cols n*oh*ow.
inline ad::IndexMap im2col_map(int n, int c, int h, int w, int k, int stride, int pad,
                               int* out_h, int* out_w) {
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  *out_h = oh;
  *out_w = ow;
  const std::int64_t rows = static_cast<std::int64_t>(c) * k * k;
  auto idx = std::make_shared<std::vector<std::int64_t>>(rows * n * oh * ow);
  std::int64_t i = 0;
  for (int b = 0; b < n; ++b)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ch = 0; ch < c; ++ch)
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const int sy = oy * stride - pad + dy;
              const int sx = ox * stride - pad + dx;
              // flat index into a c x (n*h*w) column-major matrix
              (*idx)[i++] = (sy < 0 || sy >= h || sx < 0 || sx >= w)
                                ? -1
                                : ch + static_cast<std::int64_t>(c) *
                                           (static_cast<std::int64_t>(b) * h * w + sy * w + sx);
            }
  return idx;
}

// Pixel shuffle index map, target layout c x (n*oh*ow):
//   out[c][y*r+i, x*r+j] = in[c*r*r + i*r + j][y, x]
inline ad::IndexMap pixel_shuffle_map(int n, int c_out, int h, int w, int r) {
  const int c_in = c_out * r * r;
  const int oh = h * r, ow = w * r;
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::int64_t>(c_out) * n * oh * ow);
  std::int64_t i = 0;
  for (int b = 0; b < n; ++b)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ch = 0; ch < c_out; ++ch) {
          const int sy = oy / r, ry = oy % r;
          const int sx = ox / r, rx = ox % r;
          const int src_ch = ch * r * r + ry * r + rx;
          (*idx)[i++] = src_ch + static_cast<std::int64_t>(c_in) *
                                     (static_cast<std::int64_t>(b) * h * w + sy * w + sx);
        }
  return idx;
}

// Feature map c x (n*h*w) -> flat (c*h*w) x n with channel-major rows.
inline ad::IndexMap flatten_map(int n, int c, int h, int w) {
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::int64_t>(c) * plane * n);
  std::int64_t i = 0;
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (std::int64_t s = 0; s < plane; ++s)
        (*idx)[i++] = ch + static_cast<std::int64_t>(c) * (static_cast<std::int64_t>(b) * plane + s);
  return idx;
}

// Flat (c*h*w) x n -> feature map c x (n*h*w).
inline ad::IndexMap unflatten_map(int n, int c, int h, int w) {
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::int64_t>(c) * plane * n);
  std::int64_t i = 0;
  for (int b = 0; b < n; ++b)
    for (std::int64_t s = 0; s < plane; ++s)
      for (int ch = 0; ch < c; ++ch)
        (*idx)[i++] = (ch * plane + s) + static_cast<std::int64_t>(c) * plane * b;
  return idx;
}

// Nearest-stride zero insertion: (h, w) -> (r*h, r*w) with zeros between
// samples. Composing with a regular convolution gives a fractional-stride
// (transposed) convolution.
inline ad::IndexMap zero_upsample_map(int n, int c, int h, int w, int r) {
  const int oh = h * r, ow = w * r;
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::int64_t>(c) * n * oh * ow);
  std::int64_t i = 0;
  for (int b = 0; b < n; ++b)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ch = 0; ch < c; ++ch)
          (*idx)[i++] = (oy % r != 0 || ox % r != 0)
                            ? -1
                            : ch + static_cast<std::int64_t>(c) *
                                       (static_cast<std::int64_t>(b) * h * w + (oy / r) * w + ox / r);
  return idx;
}

// ---------------------------------------------------------------------------
// Structural helpers on feature maps
// ---------------------------------------------------------------------------

template <class S>
FeatureMap<S> pixel_shuffle_fm(const FeatureMap<S>& x, int r) {
  if (r <= 0) throw ValidationError("pixel_shuffle: factor must be positive");
  if (x.c % (r * r) != 0)
    throw ValidationError("pixel_shuffle: channel count not divisible by r^2");
  const int c_out = x.c / (r * r);
  auto idx = pixel_shuffle_map(x.n, c_out, x.h, x.w, r);
  FeatureMap<S> out;
  out.v = ad::gather(x.v, idx, c_out, static_cast<Eigen::Index>(x.n) * x.h * r * x.w * r);
  out.n = x.n;
  out.c = c_out;
  out.h = x.h * r;
  out.w = x.w * r;
  return out;
}

// Plain-tensor pixel shuffle over one map stored as (c*r*r) x (h*w); shares
// the exact index mapping with the graph op.
template <class S>
DenseMat<S> pixel_shuffle(const DenseMat<S>& in, int h, int w, int r) {
  if (r <= 0) throw ValidationError("pixel_shuffle: factor must be positive");
  if (in.rows() % (r * r) != 0)
    throw ValidationError("pixel_shuffle: channel count not divisible by r^2");
  if (in.cols() != static_cast<Eigen::Index>(h) * w)
    throw ValidationError("pixel_shuffle: cols must equal h*w");
  const int c_out = static_cast<int>(in.rows()) / (r * r);
  auto idx = pixel_shuffle_map(1, c_out, h, w, r);
  DenseMat<S> out(c_out, static_cast<Eigen::Index>(h) * r * w * r);
  for (std::size_t i = 0; i < idx->size(); ++i) out.data()[i] = in.data()[(*idx)[i]];
  return out;
}

template <class S>
Var<S> flatten(const FeatureMap<S>& x) {
  auto idx = flatten_map(x.n, x.c, x.h, x.w);
  return ad::gather(x.v, idx, static_cast<Eigen::Index>(x.c) * x.h * x.w, x.n);
}

template <class S>
FeatureMap<S> unflatten(const Var<S>& flat, int c, int h, int w) {
  const int n = static_cast<int>(flat->value.cols());
  if (flat->value.rows() != static_cast<Eigen::Index>(c) * h * w)
    throw ValidationError("unflatten: rows must equal c*h*w");
  auto idx = unflatten_map(n, c, h, w);
  FeatureMap<S> out;
  out.v = ad::gather(flat, idx, c, static_cast<Eigen::Index>(n) * h * w);
  out.n = n;
  out.c = c;
  out.h = h;
  out.w = w;
  return out;
}

// ---------------------------------------------------------------------------
// Parameterized layers
// ---------------------------------------------------------------------------

template <class S>
class Dense {
 public:
  Dense() = default;
  Dense(int in_dim, int out_dim) {
    weight = ad::leaf<S>(DenseMat<S>::Zero(out_dim, in_dim));
    bias = ad::leaf<S>(DenseMat<S>::Zero(out_dim, 1));
  }

  void init(Rng& rng, S stddev) {
    for (Eigen::Index i = 0; i < weight->value.size(); ++i)
      weight->value.data()[i] = static_cast<S>(rng.normal(0.0, static_cast<double>(stddev)));
    bias->value.setZero();
  }

  Var<S> forward(const Var<S>& x) const { return ad::add_colvec(ad::matmul(weight, x), bias); }

  void collect(ParamList<S>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }

  Var<S> weight, bias;
};

template <class S>
class Conv2d {
 public:
  Conv2d() = default;
  // pad < 0 selects "same" padding (k/2) for stride 1.
  Conv2d(int in_ch, int out_ch, int k, int stride = 1, int pad = -1)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad < 0 ? k / 2 : pad) {
    weight = ad::leaf<S>(DenseMat<S>::Zero(out_ch, static_cast<Eigen::Index>(in_ch) * k * k));
    bias = ad::leaf<S>(DenseMat<S>::Zero(out_ch, 1));
  }

  void init(Rng& rng, S stddev) {
    for (Eigen::Index i = 0; i < weight->value.size(); ++i)
      weight->value.data()[i] = static_cast<S>(rng.normal(0.0, static_cast<double>(stddev)));
    bias->value.setZero();
  }

  FeatureMap<S> forward(const FeatureMap<S>& x) const {
    if (x.c != in_ch_) throw ValidationError("conv: channel mismatch");
    int oh = 0, ow = 0;
    auto idx = cached_map(x.n, x.h, x.w, &oh, &ow);
    auto patches = ad::gather(x.v, idx, static_cast<Eigen::Index>(in_ch_) * k_ * k_,
                              static_cast<Eigen::Index>(x.n) * oh * ow);
    FeatureMap<S> out;
    out.v = ad::add_colvec(ad::matmul(weight, patches), bias);
    out.n = x.n;
    out.c = out_ch_;
    out.h = oh;
    out.w = ow;
    return out;
  }

  void collect(ParamList<S>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }

  Var<S> weight, bias;

 private:
  // The map cache is shared between copies; layers are copyable so models
  // can live in plain containers.
  struct MapCache {
    std::mutex mutex;
    std::map<std::tuple<int, int, int>, ad::IndexMap> maps;
  };

  ad::IndexMap cached_map(int n, int h, int w, int* oh, int* ow) const {
    const auto key = std::make_tuple(n, h, w);
    std::lock_guard<std::mutex> lock(cache_->mutex);
    auto it = cache_->maps.find(key);
    if (it != cache_->maps.end()) {
      *oh = (h + 2 * pad_ - k_) / stride_ + 1;
      *ow = (w + 2 * pad_ - k_) / stride_ + 1;
      return it->second;
    }
    auto idx = im2col_map(n, in_ch_, h, w, k_, stride_, pad_, oh, ow);
    cache_->maps[key] = idx;
    return idx;
  }

  int in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  std::shared_ptr<MapCache> cache_ = std::make_shared<MapCache>();
};

// Per-channel batch normalization over batch and spatial positions. Training
// mode normalizes with batch statistics (built from differentiable ops);
// inference uses the tracked running averages as constants.
template <class S>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, S eps = S(1e-5), S momentum = S(0.9)) : eps_(eps), momentum_(momentum) {
    gamma = ad::leaf<S>(DenseMat<S>::Constant(channels, 1, S(1)));
    beta = ad::leaf<S>(DenseMat<S>::Zero(channels, 1));
    running_mean = DenseMat<S>::Zero(channels, 1);
    running_var = DenseMat<S>::Constant(channels, 1, S(1));
  }

  FeatureMap<S> forward(const FeatureMap<S>& x, bool train) {
    const Eigen::Index cols = x.v->value.cols();
    Var<S> normalized;
    if (train) {
      auto mean = ad::scalar_mul(ad::rowwise_sum(x.v), S(1) / S(cols));
      auto centered = ad::sub(x.v, ad::replicate_cols(mean, cols));
      auto var = ad::scalar_mul(ad::rowwise_sum(ad::mul(centered, centered)), S(1) / S(cols));
      auto stdev = ad::sqrt_(ad::scalar_add(var, eps_));
      normalized = ad::div(centered, ad::replicate_cols(stdev, cols));
      running_mean = momentum_ * running_mean + (S(1) - momentum_) * mean->value;
      running_var = momentum_ * running_var + (S(1) - momentum_) * var->value;
    } else {
      auto mean = ad::constant<S>(running_mean);
      auto stdev = ad::constant<S>((running_var.array() + eps_).sqrt().matrix());
      normalized = ad::div(ad::sub(x.v, ad::replicate_cols(mean, cols)), ad::replicate_cols(stdev, cols));
    }
    FeatureMap<S> out = x;
    out.v = ad::add(ad::mul(normalized, ad::replicate_cols(gamma, cols)), ad::replicate_cols(beta, cols));
    return out;
  }

  void collect(ParamList<S>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }

  Var<S> gamma, beta;
  DenseMat<S> running_mean, running_var;

 private:
  S eps_ = S(1e-5);
  S momentum_ = S(0.9);
};

template <class S>
FeatureMap<S> relu_fm(const FeatureMap<S>& x) {
  FeatureMap<S> out = x;
  out.v = ad::relu(x.v);
  return out;
}

template <class S>
FeatureMap<S> leaky_relu_fm(const FeatureMap<S>& x, S slope) {
  FeatureMap<S> out = x;
  out.v = ad::leaky_relu(x.v, slope);
  return out;
}

template <class S>
FeatureMap<S> add_fm(const FeatureMap<S>& a, const FeatureMap<S>& b) {
  if (a.c != b.c || a.h != b.h || a.w != b.w || a.n != b.n)
    throw ValidationError("add_fm: feature map shape mismatch");
  FeatureMap<S> out = a;
  out.v = ad::add(a.v, b.v);
  return out;
}

template <class S>
FeatureMap<S> zero_upsample_fm(const FeatureMap<S>& x, int r) {
  auto idx = zero_upsample_map(x.n, x.c, x.h, x.w, r);
  FeatureMap<S> out;
  out.v = ad::gather(x.v, idx, x.c, static_cast<Eigen::Index>(x.n) * x.h * r * x.w * r);
  out.n = x.n;
  out.c = x.c;
  out.h = x.h * r;
  out.w = x.w * r;
  return out;
}

}  // namespace facegen::nets
