/*
 * Copyright 2026 The REDS Toolkit Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "engine.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace reds {
namespace detail {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using OuterStride = Eigen::OuterStride<>;

struct PadInfo {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t hp = 0;
  std::size_t wp = 0;
};

PadInfo padding_for(const LayerSpec& s, Shape3 in, Shape3 out) {
  PadInfo p;
  if (s.padding == Padding::Valid) {
    p.hp = in.h;
    p.wp = in.w;
    return p;
  }
  const std::size_t need_h = (out.h - 1) * s.stride[0] + s.kernel[0];
  const std::size_t need_w = (out.w - 1) * s.stride[1] + s.kernel[1];
  const std::size_t th = need_h > in.h ? need_h - in.h : 0;
  const std::size_t tw = need_w > in.w ? need_w - in.w : 0;
  p.top = th / 2;
  p.left = tw / 2;
  p.hp = in.h + th;
  p.wp = in.w + tw;
  return p;
}

void pad_sample(const float* src, Shape3 in, std::size_t c, const PadInfo& p,
                std::vector<float>& dst) {
  dst.assign(p.hp * p.wp * c, 0.0f);
  for (std::size_t y = 0; y < in.h; ++y) {
    const float* row = src + y * in.w * c;
    std::copy(row, row + in.w * c,
              dst.begin() + ((y + p.top) * p.wp + p.left) * c);
  }
}

void unpad_sample(const std::vector<float>& src, Shape3 in, std::size_t c,
                  const PadInfo& p, float* dst) {
  for (std::size_t y = 0; y < in.h; ++y) {
    const auto begin = src.begin() + ((y + p.top) * p.wp + p.left) * c;
    std::copy(begin, begin + in.w * c, dst + y * in.w * c);
  }
}

void apply_activation(Activation act, std::vector<float>& v) {
  if (act == Activation::ReLU) {
    for (auto& x : v) x = x > 0.0f ? x : 0.0f;
  }
}

}  // namespace

Engine::Engine(const ModelGraph& g, const EngineOptions& options)
    : g_(g), opt_(options) {
  if (opt_.masked) {
    widths_ = resolve_widths(g_, nullptr);
    mask_ = resolve_widths(g_, opt_.points);
  } else {
    widths_ = resolve_widths(g_, opt_.points);
  }
}

Activations Engine::run(const Tensor& inputs) {
  const Shape3 in_shape = g_.input_shape();
  if (inputs.rank() != 2 || inputs.cols() != in_shape.size()) {
    fail(ErrorKind::Shape, "expected inputs [b x " +
                               std::to_string(in_shape.size()) + "]");
  }
  Activations a;
  a.shape = in_shape;
  a.count = inputs.rows();
  if (inputs.order() == StorageOrder::RowMajor) {
    a.data.assign(inputs.data().begin(), inputs.data().end());
  } else {
    const auto rm = inputs.with_order(StorageOrder::RowMajor);
    a.data.assign(rm.data().begin(), rm.data().end());
  }
  if (opt_.record) traces_.assign(g_.num_layers(), LayerTrace{});
  macs_ = 0;

  for (std::size_t l = 0; l < g_.num_layers(); ++l) {
    const auto& spec = g_.layer(l);
    apply_mask(l, a);
    LayerTrace scratch;
    LayerTrace& tr = opt_.record ? traces_[l] : scratch;
    if (opt_.record) tr.input = a;
    Activations y;
    switch (spec.kind) {
      case LayerKind::Dense: y = dense(l, a); break;
      case LayerKind::Conv2D:
      case LayerKind::PointwiseConv2D: y = conv(l, a); break;
      case LayerKind::DepthwiseConv2D: y = depthwise(l, a); break;
      case LayerKind::BatchNorm: y = batchnorm(l, a, tr); break;
      case LayerKind::Flatten: y = flatten(l, a); break;
    }
    apply_activation(spec.activation, y.data);
    if (opt_.record) tr.output = y;
    a = std::move(y);
  }
  if (opt_.mac_counter) *opt_.mac_counter += macs_;
  return a;
}

void Engine::apply_mask(std::size_t l, Activations& x) const {
  if (!opt_.masked || !has_weights(g_.layer(l).kind)) return;
  const std::size_t limit = mask_.in[l];
  if (g_.layer(l).kind == LayerKind::Dense) {
    if (l == 0) return;
    const std::size_t n = x.stride();
    for (std::size_t s = 0; s < x.count; ++s) {
      std::fill(x.data.begin() + s * n + limit, x.data.begin() + (s + 1) * n,
                0.0f);
    }
    return;
  }
  const std::size_t c = x.shape.c;
  if (limit >= c) return;
  for (std::size_t pos = 0; pos < x.count * x.shape.spatial(); ++pos) {
    std::fill(x.data.begin() + pos * c + limit, x.data.begin() + (pos + 1) * c,
              0.0f);
  }
}

Activations Engine::dense(std::size_t l, const Activations& x) {
  const auto& p = g_.params(l);
  const std::size_t in_a = widths_.in[l];
  const std::size_t out_a = widths_.out[l];
  const std::size_t b = x.count;
  if (x.stride() != in_a) {
    fail(ErrorKind::Shape, "dense layer " + std::to_string(l) + " expected " +
                               std::to_string(in_a) + " inputs");
  }
  // Sample-major activations are exactly X [in x b] in column-major order.
  const Tensor xs({in_a, b}, x.data, StorageOrder::ColMajor);
  const auto xv = full_view(xs);
  auto mm = [&](auto&& probe) {
    return p.transposed
               ? matmul_optimized(xv, slice_view(p.weight, out_a, in_a), probe)
               : matmul_basic(xv, slice_view(p.weight, in_a, out_a), probe);
  };
  Tensor h;
  if (opt_.mac_counter) {
    MacCounter counter;
    h = mm(counter);
    macs_ += counter.macs;
  } else {
    h = mm(NullProbe{});
  }
  Activations y;
  y.shape = Shape3{1, 1, out_a};
  y.count = b;
  y.data = std::move(h).take_data();
  const auto bias = p.bias.data();
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t j = 0; j < out_a; ++j) y.data[s * out_a + j] += bias[j];
  }
  return y;
}

Activations Engine::conv(std::size_t l, const Activations& x) {
  const auto& spec = g_.layer(l);
  const auto& p = g_.params(l);
  const Shape3 in_full = g_.layer_input_shape(l);
  const Shape3 out_full = g_.layer_output_shape(l);
  const std::size_t in_c = x.shape.c;
  const std::size_t out_c = widths_.out[l];
  const std::size_t c_full = p.weight.extent(3);
  const auto [kh, kw] = spec.kernel;
  const auto [sh, sw] = spec.stride;
  const PadInfo pad = padding_for(spec, in_full, out_full);
  const auto w = p.weight.data();
  const auto bias = p.bias.data();

  Activations y;
  y.shape = Shape3{out_full.h, out_full.w, out_c};
  y.count = x.count;
  y.data.assign(y.count * y.stride(), 0.0f);
  std::vector<float> padded;
  for (std::size_t s = 0; s < x.count; ++s) {
    pad_sample(x.data.data() + s * x.stride(), in_full, in_c, pad, padded);
    float* out = y.data.data() + s * y.stride();
    for (std::size_t oy = 0; oy < out_full.h; ++oy) {
      for (std::size_t ox = 0; ox < out_full.w; ++ox) {
        for (std::size_t f = 0; f < out_c; ++f) {
          double acc = bias[f];
          const float* wf = w.data() + f * kh * kw * c_full;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const float* px =
                  padded.data() + ((oy * sh + ky) * pad.wp + ox * sw + kx) * in_c;
              const float* pw = wf + (ky * kw + kx) * c_full;
              for (std::size_t c = 0; c < in_c; ++c) acc += double(px[c]) * pw[c];
            }
          }
          out[(oy * out_full.w + ox) * out_c + f] = static_cast<float>(acc);
        }
      }
    }
  }
  macs_ += x.count * out_full.spatial() * out_c * kh * kw * in_c;
  return y;
}

Activations Engine::depthwise(std::size_t l, const Activations& x) {
  const auto& spec = g_.layer(l);
  const auto& p = g_.params(l);
  const Shape3 in_full = g_.layer_input_shape(l);
  const Shape3 out_full = g_.layer_output_shape(l);
  const std::size_t c_a = x.shape.c;
  const auto [kh, kw] = spec.kernel;
  const auto [sh, sw] = spec.stride;
  const PadInfo pad = padding_for(spec, in_full, out_full);
  const auto w = p.weight.data();
  const auto bias = p.bias.data();

  Activations y;
  y.shape = Shape3{out_full.h, out_full.w, c_a};
  y.count = x.count;
  y.data.assign(y.count * y.stride(), 0.0f);
  std::vector<float> padded;
  for (std::size_t s = 0; s < x.count; ++s) {
    pad_sample(x.data.data() + s * x.stride(), in_full, c_a, pad, padded);
    float* out = y.data.data() + s * y.stride();
    for (std::size_t oy = 0; oy < out_full.h; ++oy) {
      for (std::size_t ox = 0; ox < out_full.w; ++ox) {
        float* o = out + (oy * out_full.w + ox) * c_a;
        for (std::size_t c = 0; c < c_a; ++c) o[c] = bias[c];
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const float* px =
                padded.data() + ((oy * sh + ky) * pad.wp + ox * sw + kx) * c_a;
            for (std::size_t c = 0; c < c_a; ++c) {
              o[c] += px[c] * w[(c * kh + ky) * kw + kx];
            }
          }
        }
      }
    }
  }
  macs_ += x.count * out_full.spatial() * c_a * kh * kw;
  return y;
}

Activations Engine::batchnorm(std::size_t l, const Activations& x,
                              LayerTrace& tr) {
  const auto& p = g_.params(l);
  const std::size_t c_a = x.shape.c;
  const std::size_t n = x.count * x.shape.spatial();
  const Tensor& rm = opt_.bn_stats ? opt_.bn_stats->mean[l] : p.running_mean;
  const Tensor& rv = opt_.bn_stats ? opt_.bn_stats->var[l] : p.running_var;
  std::vector<float> mean(c_a);
  std::vector<float> inv(c_a);
  const bool training = opt_.bn_mode == BnMode::Training;
  if (training) {
    std::vector<double> sum(c_a, 0.0);
    std::vector<double> sq(c_a, 0.0);
    for (std::size_t pos = 0; pos < n; ++pos) {
      for (std::size_t c = 0; c < c_a; ++c) {
        const double v = x.data[pos * c_a + c];
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    for (std::size_t c = 0; c < c_a; ++c) {
      const double mu = sum[c] / static_cast<double>(n);
      const double var = std::max(0.0, sq[c] / static_cast<double>(n) - mu * mu);
      mean[c] = static_cast<float>(mu);
      inv[c] = static_cast<float>(1.0 / std::sqrt(var + kBatchNormEpsilon));
      if (opt_.bn_stats) {
        auto m = opt_.bn_stats->mean[l].mutable_data();
        auto v = opt_.bn_stats->var[l].mutable_data();
        const float mom = opt_.bn_momentum;
        m[c] = mom * m[c] + (1.0f - mom) * static_cast<float>(mu);
        v[c] = mom * v[c] + (1.0f - mom) * static_cast<float>(var);
      }
    }
  } else {
    for (std::size_t c = 0; c < c_a; ++c) {
      mean[c] = rm.data()[c];
      inv[c] = 1.0f / std::sqrt(rv.data()[c] + kBatchNormEpsilon);
    }
  }

  const auto gamma = p.gamma.data();
  const auto beta = p.beta.data();
  Activations y;
  y.shape = x.shape;
  y.count = x.count;
  y.data.resize(x.data.size());
  if (opt_.record) tr.xhat.resize(x.data.size());
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t c = 0; c < c_a; ++c) {
      const std::size_t i = pos * c_a + c;
      const float xh = (x.data[i] - mean[c]) * inv[c];
      if (opt_.record) tr.xhat[i] = xh;
      y.data[i] = gamma[c] * xh + beta[c];
    }
  }
  tr.inv_std = std::move(inv);
  tr.batch_stats = training;
  return y;
}

Activations Engine::flatten(std::size_t, const Activations& x) {
  const std::size_t hw = x.shape.spatial();
  const std::size_t c = x.shape.c;
  Activations y;
  y.shape = Shape3{1, 1, hw * c};
  y.count = x.count;
  y.data.resize(x.data.size());
  for (std::size_t s = 0; s < x.count; ++s) {
    const float* in = x.data.data() + s * x.stride();
    float* out = y.data.data() + s * y.stride();
    for (std::size_t pos = 0; pos < hw; ++pos) {
      for (std::size_t k = 0; k < c; ++k) out[k * hw + pos] = in[pos * c + k];
    }
  }
  return y;
}

void Engine::backward(Activations grad, GradStore& grads) const {
  if (traces_.size() != g_.num_layers()) {
    fail(ErrorKind::Config, "backward needs a recorded forward pass");
  }
  for (std::size_t l = g_.num_layers(); l-- > 0;) {
    const auto& spec = g_.layer(l);
    const auto& tr = traces_[l];
    if (spec.activation == Activation::ReLU) {
      for (std::size_t i = 0; i < grad.data.size(); ++i) {
        if (!(tr.output.data[i] > 0.0f)) grad.data[i] = 0.0f;
      }
    }
    auto& lg = grads.layers[l];
    switch (spec.kind) {
      case LayerKind::Dense: grad = dense_back(l, grad, lg); break;
      case LayerKind::Conv2D:
      case LayerKind::PointwiseConv2D: grad = conv_back(l, grad, lg); break;
      case LayerKind::DepthwiseConv2D: grad = depthwise_back(l, grad, lg); break;
      case LayerKind::BatchNorm: grad = batchnorm_back(l, grad, lg); break;
      case LayerKind::Flatten: grad = flatten_back(l, grad); break;
    }
  }
}

Activations Engine::dense_back(std::size_t l, const Activations& g,
                               LayerGrads& out) const {
  const auto& p = g_.params(l);
  if (p.transposed) {
    fail(ErrorKind::Config, "backpropagation needs the standard weight layout");
  }
  const auto& x = traces_[l].input;
  const std::size_t b = x.count;
  const std::size_t in_a = x.stride();
  const std::size_t out_a = g.stride();
  const auto out_full = static_cast<Eigen::Index>(p.weight.cols());
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };

  Eigen::Map<const RowMat> xt(x.data.data(), ei(b), ei(in_a));
  Eigen::Map<const RowMat> d(g.data.data(), ei(b), ei(out_a));
  Eigen::Map<RowMat, 0, OuterStride> dw(out.weight.mutable_data().data(),
                                        ei(in_a), ei(out_a),
                                        OuterStride(out_full));
  dw.noalias() += xt.transpose() * d;
  Eigen::Map<Eigen::VectorXf> db(out.bias.mutable_data().data(), ei(out_a));
  db += d.colwise().sum().transpose();

  Eigen::Map<const RowMat, 0, OuterStride> w(p.weight.data().data(), ei(in_a),
                                             ei(out_a), OuterStride(out_full));
  Activations dx;
  dx.shape = x.shape;
  dx.count = b;
  dx.data.resize(b * in_a);
  Eigen::Map<RowMat> dxm(dx.data.data(), ei(b), ei(in_a));
  dxm.noalias() = d * w.transpose();
  return dx;
}

Activations Engine::conv_back(std::size_t l, const Activations& g,
                              LayerGrads& out) const {
  const auto& spec = g_.layer(l);
  const auto& p = g_.params(l);
  const auto& x = traces_[l].input;
  const Shape3 in_full = g_.layer_input_shape(l);
  const Shape3 out_full = g_.layer_output_shape(l);
  const std::size_t in_c = x.shape.c;
  const std::size_t out_c = g.shape.c;
  const std::size_t c_full = p.weight.extent(3);
  const auto [kh, kw] = spec.kernel;
  const auto [sh, sw] = spec.stride;
  const PadInfo pad = padding_for(spec, in_full, out_full);
  const auto w = p.weight.data();
  auto dw = out.weight.mutable_data();
  auto db = out.bias.mutable_data();

  Activations dx;
  dx.shape = x.shape;
  dx.count = x.count;
  dx.data.assign(x.data.size(), 0.0f);
  std::vector<float> padded;
  std::vector<float> dpad;
  for (std::size_t s = 0; s < x.count; ++s) {
    pad_sample(x.data.data() + s * x.stride(), in_full, in_c, pad, padded);
    dpad.assign(padded.size(), 0.0f);
    const float* gs = g.data.data() + s * g.stride();
    for (std::size_t oy = 0; oy < out_full.h; ++oy) {
      for (std::size_t ox = 0; ox < out_full.w; ++ox) {
        for (std::size_t f = 0; f < out_c; ++f) {
          const float gv = gs[(oy * out_full.w + ox) * out_c + f];
          if (gv == 0.0f) continue;
          db[f] += gv;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::size_t po = ((oy * sh + ky) * pad.wp + ox * sw + kx) * in_c;
              const std::size_t wo = f * kh * kw * c_full + (ky * kw + kx) * c_full;
              for (std::size_t c = 0; c < in_c; ++c) {
                dw[wo + c] += gv * padded[po + c];
                dpad[po + c] += gv * w[wo + c];
              }
            }
          }
        }
      }
    }
    unpad_sample(dpad, in_full, in_c, pad, dx.data.data() + s * dx.stride());
  }
  return dx;
}

Activations Engine::depthwise_back(std::size_t l, const Activations& g,
                                   LayerGrads& out) const {
  const auto& spec = g_.layer(l);
  const auto& p = g_.params(l);
  const auto& x = traces_[l].input;
  const Shape3 in_full = g_.layer_input_shape(l);
  const Shape3 out_full = g_.layer_output_shape(l);
  const std::size_t c_a = x.shape.c;
  const auto [kh, kw] = spec.kernel;
  const auto [sh, sw] = spec.stride;
  const PadInfo pad = padding_for(spec, in_full, out_full);
  const auto w = p.weight.data();
  auto dw = out.weight.mutable_data();
  auto db = out.bias.mutable_data();

  Activations dx;
  dx.shape = x.shape;
  dx.count = x.count;
  dx.data.assign(x.data.size(), 0.0f);
  std::vector<float> padded;
  std::vector<float> dpad;
  for (std::size_t s = 0; s < x.count; ++s) {
    pad_sample(x.data.data() + s * x.stride(), in_full, c_a, pad, padded);
    dpad.assign(padded.size(), 0.0f);
    const float* gs = g.data.data() + s * g.stride();
    for (std::size_t oy = 0; oy < out_full.h; ++oy) {
      for (std::size_t ox = 0; ox < out_full.w; ++ox) {
        const float* go = gs + (oy * out_full.w + ox) * c_a;
        for (std::size_t c = 0; c < c_a; ++c) db[c] += go[c];
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t po = ((oy * sh + ky) * pad.wp + ox * sw + kx) * c_a;
            for (std::size_t c = 0; c < c_a; ++c) {
              const std::size_t wi = (c * kh + ky) * kw + kx;
              dw[wi] += go[c] * padded[po + c];
              dpad[po + c] += go[c] * w[wi];
            }
          }
        }
      }
    }
    unpad_sample(dpad, in_full, c_a, pad, dx.data.data() + s * dx.stride());
  }
  return dx;
}

Activations Engine::batchnorm_back(std::size_t l, const Activations& g,
                                   LayerGrads& out) const {
  const auto& p = g_.params(l);
  const auto& tr = traces_[l];
  const std::size_t c_a = g.shape.c;
  const std::size_t n = g.count * g.shape.spatial();
  const auto gamma = p.gamma.data();
  auto dgamma = out.gamma.mutable_data();
  auto dbeta = out.beta.mutable_data();

  std::vector<double> s1(c_a, 0.0);
  std::vector<double> s2(c_a, 0.0);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t c = 0; c < c_a; ++c) {
      const std::size_t i = pos * c_a + c;
      s1[c] += g.data[i];
      s2[c] += static_cast<double>(g.data[i]) * tr.xhat[i];
    }
  }
  for (std::size_t c = 0; c < c_a; ++c) {
    dgamma[c] += static_cast<float>(s2[c]);
    dbeta[c] += static_cast<float>(s1[c]);
  }

  Activations dx;
  dx.shape = g.shape;
  dx.count = g.count;
  dx.data.resize(g.data.size());
  const double nn = static_cast<double>(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t c = 0; c < c_a; ++c) {
      const std::size_t i = pos * c_a + c;
      const double scale = static_cast<double>(gamma[c]) * tr.inv_std[c];
      if (tr.batch_stats) {
        dx.data[i] = static_cast<float>(
            scale / nn * (nn * g.data[i] - s1[c] - tr.xhat[i] * s2[c]));
      } else {
        dx.data[i] = static_cast<float>(scale * g.data[i]);
      }
    }
  }
  return dx;
}

Activations Engine::flatten_back(std::size_t l, const Activations& g) const {
  const auto& x = traces_[l].input;
  const std::size_t hw = x.shape.spatial();
  const std::size_t c = x.shape.c;
  Activations dx;
  dx.shape = x.shape;
  dx.count = x.count;
  dx.data.resize(g.data.size());
  for (std::size_t s = 0; s < x.count; ++s) {
    const float* in = g.data.data() + s * g.stride();
    float* out = dx.data.data() + s * dx.stride();
    for (std::size_t pos = 0; pos < hw; ++pos) {
      for (std::size_t k = 0; k < c; ++k) out[pos * c + k] = in[k * hw + pos];
    }
  }
  return dx;
}

}  // namespace detail

Tensor forward(const ModelGraph& g, const Tensor& x,
               const ForwardOptions& options) {
  detail::EngineOptions eo;
  eo.points = options.points;
  eo.masked = options.masked;
  eo.bn_mode = options.bn_mode;
  eo.bn_stats = options.bn_stats;
  eo.bn_momentum = options.bn_momentum;
  eo.mac_counter = options.mac_counter;
  detail::Engine engine(g, eo);
  auto out = engine.run(x);
  const std::size_t cols = out.stride();
  return Tensor({out.count, cols}, std::move(out.data));
}

std::vector<int> predict(const ModelGraph& g, const Tensor& x,
                         const ForwardOptions& options) {
  const Tensor logits = forward(g, x, options);
  std::vector<int> labels(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace reds
