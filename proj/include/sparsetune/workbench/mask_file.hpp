// Copyright 2026 The sparsetune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sparsetune/allocation.hpp"
#include "sparsetune/workbench/binary_io.hpp"

namespace sparsetune::workbench {

// Mask file: "TEMK", u32 version, u32 layer count, then per layer
// u32 name_len, name, u32 rows, u32 cols, ceil(rows*cols/8) bytes of
// row-major bits, most significant bit first. Little-endian throughout.
inline constexpr char kMaskMagic[4] = {'T', 'E', 'M', 'K'};
inline constexpr std::uint32_t kMaskVersion = 1;

inline std::vector<std::uint8_t> mask_file_bytes(const MaskSet& masks) {
  ByteWriter w;
  w.str(std::string_view(kMaskMagic, 4));
  w.u32(kMaskVersion);
  w.u32(static_cast<std::uint32_t>(masks.layers.size()));
  for (const auto& m : masks.layers) {
    w.name(m.name());
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.raw(m.to_bytes());
  }
  return w.take();
}

/// Layer indices are recovered from "layer<k>" names; other names keep file order.
inline MaskSet parse_mask_file(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != std::string_view(kMaskMagic, 4)) throw IoError("not a mask file (bad magic)");
  const auto version = r.u32();
  if (version != kMaskVersion) throw IoError("unsupported mask file version " + std::to_string(version));
  const auto count = r.u32();
  MaskSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.name();
    const auto rows = r.u32();
    const auto cols = r.u32();
    const auto payload = r.raw((static_cast<std::size_t>(rows) * cols + 7) / 8);
    std::size_t layer = i;
    if (name.rfind("layer", 0) == 0 && name.size() > 5 &&
        name.find_first_not_of("0123456789", 5) == std::string::npos) {
      layer = std::stoul(name.substr(5));
    }
    out.layers.push_back(Mask::from_bytes(rows, cols, payload, layer, std::move(name)));
  }
  if (!r.done()) throw IoError("trailing bytes after mask file");
  return out;
}

inline void write_masks(const std::filesystem::path& path, const MaskSet& masks) {
  write_file(path, mask_file_bytes(masks));
}

inline MaskSet read_masks(const std::filesystem::path& path) { return parse_mask_file(read_file(path)); }

}  // namespace sparsetune::workbench
