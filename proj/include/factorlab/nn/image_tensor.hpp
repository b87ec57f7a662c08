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

#include <span>

#include "factorlab/error.hpp"
#include "factorlab/image.hpp"
#include "factorlab/nn/nn.hpp"

namespace factorlab::nn {

// HWC images -> NCHW batch. All images must be size x size.
inline Tensor images_to_tensor(std::span<const Image* const> images, int size) {
  Tensor t(static_cast<int>(images.size()), 3, size, size);
  const size_t plane = static_cast<size_t>(size) * size;
  for (size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    if (img.height != size || img.width != size)
      throw InputError("expected " + std::to_string(size) + "x" + std::to_string(size) + " images");
    float* dst = t.sample(static_cast<int>(i));
    for (size_t p = 0; p < plane; ++p)
      for (int c = 0; c < 3; ++c) dst[c * plane + p] = img.pixels[p * 3 + c];
  }
  return t;
}

inline Tensor images_to_tensor(std::span<const Image> images, int size) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return images_to_tensor(std::span<const Image* const>(ptrs), size);
}

inline Image tensor_to_image(const Tensor& t, int i) {
  Image img(t.h, t.w);
  const size_t plane = static_cast<size_t>(t.h) * t.w;
  const float* src = t.sample(i);
  for (size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) img.pixels[p * 3 + c] = src[c * plane + p];
  return img;
}

}  // namespace factorlab::nn
