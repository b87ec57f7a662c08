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

#include "factorlab/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "factorlab/error.hpp"

namespace factorlab {

namespace {

constexpr char kMagic[] = "FACTORLAB-CKPT\n";

nlohmann::json read_header(std::istream& in, const std::filesystem::path& path) {
  std::string magic(sizeof(kMagic) - 1, '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kMagic) throw InputError(path.string() + " is not a factorlab checkpoint");
  uint64_t size = 0;
  in.read(reinterpret_cast<char*>(&size), sizeof(size));
  std::string header(size, '\0');
  in.read(header.data(), static_cast<std::streamsize>(size));
  if (!in) throw InputError(path.string() + ": truncated checkpoint header");
  auto meta = nlohmann::json::parse(header);
  if (meta.value("format_version", 0) != kCheckpointFormatVersion)
    throw InputError(path.string() + ": unsupported checkpoint format version");
  return meta;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, nlohmann::json metadata,
                      std::span<nn::Parameter* const> params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  metadata["format_version"] = kCheckpointFormatVersion;
  const std::string header = metadata.dump();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic) - 1);
    const uint64_t size = header.size();
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    out.write(header.data(), static_cast<std::streamsize>(size));
    nn::write_parameters(out, params);
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json read_checkpoint_metadata(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  return read_header(in, path);
}

nlohmann::json read_checkpoint(const std::filesystem::path& path,
                               std::span<nn::Parameter* const> params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  auto meta = read_header(in, path);
  nn::read_parameters(in, params);
  return meta;
}

std::string config_hash(const nlohmann::json& config) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace factorlab
