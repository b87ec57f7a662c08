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

#pragma once

// Minimal CPU neural-network substrate: NCHW float tensors, layers with
// explicit backward passes, Adam. Forward passes are const and therefore safe
// to call concurrently; training records activations on a Tape.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <new>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace factorlab::nn {

// Cache-line aligned storage. Vectorized kernels choose their scalar
// prologue from the data address, so a fixed base alignment is what makes
// results independent of heap layout.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

struct Tensor {
  int n = 0, c = 0, h = 1, w = 1;
  FloatBuffer data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_ = 1, int w_ = 1, float fill = 0.0f)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  size_t size() const { return data.size(); }
  size_t per_sample() const { return static_cast<size_t>(c) * h * w; }
  float* sample(int i) { return data.data() + per_sample() * i; }
  const float* sample(int i) const { return data.data() + per_sample() * i; }
  float& operator()(int i, int j) { return data[per_sample() * i + j]; }
  float operator()(int i, int j) const { return data[per_sample() * i + j]; }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

struct Parameter {
  FloatBuffer value;
  FloatBuffer grad;

  explicit Parameter(size_t size = 0) : value(size, 0.0f), grad(size, 0.0f) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x) const = 0;
  // Accumulates parameter gradients; returns dL/dx when `need_dx`.
  virtual Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::string name() const = 0;
};

class Conv2d : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::string name() const override { return "conv2d"; }
  int out_channels() const { return out_; }

 private:
  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }
  void im2col(const float* x, int h, int w, float* col) const;
  void col2im(const float* col, int h, int w, float* dx) const;

  int in_, out_, k_, stride_, pad_;
  Parameter weight_;  // [out, in*k*k]
  Parameter bias_;
};

// Fully connected layer over the flattened per-sample features.
class Linear : public Layer {
 public:
  Linear(int in_features, int out_features, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::string name() const override { return "linear"; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_, out_;
  Parameter weight_;  // [out, in]
  Parameter bias_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) override;
  std::string name() const override { return "relu"; }
};

class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) override;
  std::string name() const override { return "leaky_relu"; }

 private:
  float slope_;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) override;
  std::string name() const override { return "sigmoid"; }
};

// Nearest-neighbour 2x upsampling.
class Upsample2x : public Layer {
 public:
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) override;
  std::string name() const override { return "upsample2x"; }
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) override;
  std::string name() const override { return "global_avg_pool"; }
};

class Reshape : public Layer {
 public:
  Reshape(int c, int h, int w) : c_(c), h_(h), w_(w) {}
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, bool need_dx) override;
  std::string name() const override { return "reshape"; }

 private:
  int c_, h_, w_;
};

// Activations recorded by a training forward pass: input of layer k at k,
// final output last.
using Tape = std::vector<Tensor>;

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x) const;
  Tensor forward(const Tensor& x, Tape& tape) const;
  Tensor backward(const Tape& tape, const Tensor& dy, bool need_dx);

  std::vector<Parameter*> parameters();
  size_t num_parameters();
  void zero_grad();
  size_t size() const { return layers_.size(); }
  Layer& layer(size_t i) { return *layers_[i]; }
  const Layer& layer(size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step();
  void zero_grad();
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<float>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Parameter blobs in order, each as a uint64 length followed by float32 data.
void write_parameters(std::ostream& out, std::span<Parameter* const> params);
void read_parameters(std::istream& in, std::span<Parameter* const> params);

// Row-wise softmax of [n, k] logits in double precision.
std::vector<std::vector<double>> softmax_rows(const Tensor& logits);

// Channel-wise concatenation of two tensors with equal n, h, w.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits dy of a concatenation back into the parts (first `ca` channels).
void split_channels(const Tensor& dy, int ca, Tensor& da, Tensor& db);

}  // namespace factorlab::nn
