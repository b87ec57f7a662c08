/*
 * Copyright 2026 The factorlab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "factorlab/nn/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "factorlab/error.hpp"

namespace factorlab::nn {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void kaiming_uniform(FloatBuffer& w, int fan_in, std::mt19937_64& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& v : w) v = dist(rng);
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding,
               std::mt19937_64& rng)
    : in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(padding),
      weight_(static_cast<size_t>(out_channels) * in_channels * kernel * kernel),
      bias_(static_cast<size_t>(out_channels)) {
  kaiming_uniform(weight_.value, in_ * k_ * k_, rng);
}

void Conv2d::im2col(const float* x, int h, int w, float* col) const {
  const int ho = out_size(h), wo = out_size(w);
  for (int ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        float* row = col + static_cast<size_t>((ci * k_ + ky) * k_ + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? x[(static_cast<size_t>(ci) * h + iy) * w + ix]
                                    : 0.0f;
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const float* col, int h, int w, float* dx) const {
  const int ho = out_size(h), wo = out_size(w);
  for (int ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const float* row = col + static_cast<size_t>((ci * k_ + ky) * k_ + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < w) dx[(static_cast<size_t>(ci) * h + iy) * w + ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.c != in_) throw InputError("conv2d: expected " + std::to_string(in_) + " input channels");
  const int ho = out_size(x.h), wo = out_size(x.w);
  const int kk = in_ * k_ * k_;
  Tensor y(x.n, out_, ho, wo);
  MatRM col(kk, ho * wo);
  CMapRM weight(weight_.value.data(), out_, kk);
  Eigen::Map<const Eigen::VectorXf> bias(bias_.value.data(), out_);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), x.h, x.w, col.data());
    MapRM out(y.sample(i), out_, ho * wo);
    out.noalias() = weight * col;
    out.colwise() += bias;
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) {
  const int ho = y.h, wo = y.w;
  const int kk = in_ * k_ * k_;
  MatRM col(kk, ho * wo);
  MatRM dcol;
  MapRM dweight(weight_.grad.data(), out_, kk);
  CMapRM weight(weight_.value.data(), out_, kk);
  Eigen::Map<Eigen::VectorXf> dbias(bias_.grad.data(), out_);
  Tensor dx;
  if (need_dx) {
    dx = Tensor(x.n, x.c, x.h, x.w);
    dcol.resize(kk, ho * wo);
  }
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), x.h, x.w, col.data());
    CMapRM g(dy.sample(i), out_, ho * wo);
    dweight.noalias() += g * col.transpose();
    dbias += g.rowwise().sum();
    if (need_dx) {
      dcol.noalias() = weight.transpose() * g;
      col2im(dcol.data(), x.h, x.w, dx.sample(i));
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features, std::mt19937_64& rng)
    : in_(in_features),
      out_(out_features),
      weight_(static_cast<size_t>(in_features) * out_features),
      bias_(static_cast<size_t>(out_features)) {
  kaiming_uniform(weight_.value, in_, rng);
}

Tensor Linear::forward(const Tensor& x) const {
  if (static_cast<int>(x.per_sample()) != in_)
    throw InputError("linear: expected " + std::to_string(in_) + " input features");
  Tensor y(x.n, out_);
  CMapRM in(x.data.data(), x.n, in_);
  CMapRM weight(weight_.value.data(), out_, in_);
  MapRM out(y.data.data(), x.n, out_);
  out.noalias() = in * weight.transpose();
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias_.value.data(), out_);
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor&, const Tensor& dy, bool need_dx) {
  CMapRM in(x.data.data(), x.n, in_);
  CMapRM g(dy.data.data(), x.n, out_);
  MapRM dweight(weight_.grad.data(), out_, in_);
  dweight.noalias() += g.transpose() * in;
  Eigen::Map<Eigen::RowVectorXf>(bias_.grad.data(), out_) += g.colwise().sum();
  Tensor dx;
  if (need_dx) {
    dx = Tensor(x.n, x.c, x.h, x.w);
    CMapRM weight(weight_.value.data(), out_, in_);
    MapRM(dx.data.data(), x.n, in_).noalias() = g * weight;
  }
  return dx;
}

// ---------------------------------------------------------------- activations

Tensor ReLU::forward(const Tensor& x) const {
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor ReLU::backward(const Tensor& x, const Tensor&, const Tensor& dy, bool) {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.size(); ++i)
    if (!(x.data[i] > 0.0f)) dx.data[i] = 0.0f;
  return dx;
}

Tensor LeakyReLU::forward(const Tensor& x) const {
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0f ? v : slope_ * v;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& x, const Tensor&, const Tensor& dy, bool) {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.size(); ++i)
    if (!(x.data[i] > 0.0f)) dx.data[i] *= slope_;
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x) const {
  Tensor y = x;
  for (auto& v : y.data) v = 1.0f / (1.0f + std::exp(-v));
  return y;
}

Tensor Sigmoid::backward(const Tensor&, const Tensor& y, const Tensor& dy, bool) {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.size(); ++i) dx.data[i] *= y.data[i] * (1.0f - y.data[i]);
  return dx;
}

Tensor Upsample2x::forward(const Tensor& x) const {
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c) {
      const float* src = x.sample(i) + static_cast<size_t>(c) * x.h * x.w;
      float* dst = y.sample(i) + static_cast<size_t>(c) * y.h * y.w;
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) dst[yy * y.w + xx] = src[(yy / 2) * x.w + xx / 2];
    }
  return y;
}

Tensor Upsample2x::backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool) {
  Tensor dx(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c) {
      const float* src = dy.sample(i) + static_cast<size_t>(c) * y.h * y.w;
      float* dst = dx.sample(i) + static_cast<size_t>(c) * x.h * x.w;
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) dst[(yy / 2) * x.w + xx / 2] += src[yy * y.w + xx];
    }
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) const {
  Tensor y(x.n, x.c);
  const int hw = x.h * x.w;
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c) {
      const float* src = x.sample(i) + static_cast<size_t>(c) * hw;
      double sum = 0.0;
      for (int k = 0; k < hw; ++k) sum += src[k];
      y(i, c) = static_cast<float>(sum / hw);
    }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& x, const Tensor&, const Tensor& dy, bool) {
  Tensor dx(x.n, x.c, x.h, x.w);
  const int hw = x.h * x.w;
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c) {
      const float g = dy(i, c) / static_cast<float>(hw);
      float* dst = dx.sample(i) + static_cast<size_t>(c) * hw;
      std::fill(dst, dst + hw, g);
    }
  return dx;
}

Tensor Reshape::forward(const Tensor& x) const {
  if (x.per_sample() != static_cast<size_t>(c_) * h_ * w_) throw InputError("reshape: size mismatch");
  Tensor y = x;
  y.c = c_;
  y.h = h_;
  y.w = w_;
  return y;
}

Tensor Reshape::backward(const Tensor& x, const Tensor&, const Tensor& dy, bool) {
  Tensor dx = dy;
  dx.c = x.c;
  dx.h = x.h;
  dx.w = x.w;
  return dx;
}

// ---------------------------------------------------------------- Sequential

Tensor Sequential::forward(const Tensor& x) const {
  Tensor cur = x;
  for (const auto& layer : layers_) cur = layer->forward(cur);
  return cur;
}

Tensor Sequential::forward(const Tensor& x, Tape& tape) const {
  tape.clear();
  tape.reserve(layers_.size() + 1);
  tape.push_back(x);
  for (const auto& layer : layers_) tape.push_back(layer->forward(tape.back()));
  return tape.back();
}

Tensor Sequential::backward(const Tape& tape, const Tensor& dy, bool need_dx) {
  Tensor grad = dy;
  for (size_t k = layers_.size(); k-- > 0;) {
    const bool want = need_dx || k > 0;
    grad = layers_[k]->backward(tape[k], tape[k + 1], grad, want);
  }
  return grad;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_)
    for (auto* p : layer->parameters()) out.push_back(p);
  return out;
}

size_t Sequential::num_parameters() {
  size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

void Sequential::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

// ---------------------------------------------------------------- Adam

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float step = static_cast<float>(lr_ * std::sqrt(c2) / c1);
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float eps = static_cast<float>(eps_ * std::sqrt(c2));
  for (size_t k = 0; k < params_.size(); ++k) {
    auto& value = params_[k]->value;
    const auto& grad = params_[k]->grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0f - b2) * grad[i] * grad[i];
      value[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

// ---------------------------------------------------------------- helpers

void write_parameters(std::ostream& out, std::span<Parameter* const> params) {
  const uint64_t count = params.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto* p : params) {
    const uint64_t n = p->value.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
  }
}

void read_parameters(std::istream& in, std::span<Parameter* const> params) {
  uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || count != params.size()) throw InputError("checkpoint: parameter count mismatch");
  for (auto* p : params) {
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n != p->value.size()) throw InputError("checkpoint: parameter shape mismatch");
    in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw InputError("checkpoint: truncated parameter data");
  }
}

std::vector<std::vector<double>> softmax_rows(const Tensor& logits) {
  const int k = static_cast<int>(logits.per_sample());
  std::vector<std::vector<double>> out(static_cast<size_t>(logits.n), std::vector<double>(k));
  for (int i = 0; i < logits.n; ++i) {
    const float* row = logits.sample(i);
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += out[i][j] = std::exp(row[j] - mx);
    for (int j = 0; j < k; ++j) out[i][j] /= z;
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw InputError("concat_channels: shape mismatch");
  Tensor y(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy_n(a.sample(i), a.per_sample(), y.sample(i));
    std::copy_n(b.sample(i), b.per_sample(), y.sample(i) + a.per_sample());
  }
  return y;
}

void split_channels(const Tensor& dy, int ca, Tensor& da, Tensor& db) {
  da = Tensor(dy.n, ca, dy.h, dy.w);
  db = Tensor(dy.n, dy.c - ca, dy.h, dy.w);
  for (int i = 0; i < dy.n; ++i) {
    std::copy_n(dy.sample(i), da.per_sample(), da.sample(i));
    std::copy_n(dy.sample(i) + da.per_sample(), db.per_sample(), db.sample(i));
  }
}

}  // namespace factorlab::nn
