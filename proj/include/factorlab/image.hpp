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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace factorlab {

// RGB image, interleaved height x width x 3, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int channel) {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + channel];
  }
  float at(int y, int x, int channel) const {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + channel];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// 8-bit RGB PNG. Values are clamped to [0,1] and rounded to the nearest level.
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

// Tiles row-major into a rows x cols grid. All tiles must share one size.
Image montage(std::span<const Image> tiles, int rows, int cols);

}  // namespace factorlab
