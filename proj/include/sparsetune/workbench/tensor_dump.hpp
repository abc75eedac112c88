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
#include <string>
#include <vector>

#include "sparsetune/allocation.hpp"
#include "sparsetune/matrix.hpp"
#include "sparsetune/workbench/binary_io.hpp"

namespace sparsetune::workbench {

/// Named collection of f32/f64 matrices and bitsets.
///
/// Layout (all integers little-endian):
///   "TETD"  u32 version  u32 entry_count
///   per entry: u32 name_len, name bytes, u8 dtype (0 f32, 1 f64, 2 bitset),
///              u32 rows, u32 cols, payload
///   f32/f64 payloads are rows*cols IEEE values in row-major order; bitsets are
///   ceil(rows*cols/8) bytes, row-major, most significant bit first.
class TensorDump {
 public:
  static constexpr char kMagic[4] = {'T', 'E', 'T', 'D'};
  static constexpr std::uint32_t kVersion = 1;

  enum class DType : std::uint8_t { f32 = 0, f64 = 1, bitset = 2 };

  struct Entry {
    std::string name;
    DType dtype = DType::f32;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  void put(const std::string& name, const MatrixF& m) {
    ByteWriter w;
    for (float v : m.data()) w.f32(v);
    add({name, DType::f32, dim(m.rows()), dim(m.cols()), w.take()});
  }
  void put(const std::string& name, const MatrixD& m) {
    ByteWriter w;
    for (double v : m.data()) w.f64(v);
    add({name, DType::f64, dim(m.rows()), dim(m.cols()), w.take()});
  }
  void put(const std::string& name, const Mask& m) {
    add({name, DType::bitset, dim(m.rows()), dim(m.cols()), m.to_bytes()});
  }
  void put_vector(const std::string& name, std::span<const double> v) {
    put(name, MatrixD(1, v.size(), std::vector<double>(v.begin(), v.end())));
  }
  void put_vector(const std::string& name, std::span<const float> v) {
    put(name, MatrixF(1, v.size(), std::vector<float>(v.begin(), v.end())));
  }

  bool contains(const std::string& name) const noexcept { return find(name) != nullptr; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  MatrixF get_f32(const std::string& name) const {
    const Entry& e = require(name, DType::f32);
    ByteReader r(e.payload);
    std::vector<float> data(static_cast<std::size_t>(e.rows) * e.cols);
    for (auto& v : data) v = r.f32();
    return MatrixF(e.rows, e.cols, std::move(data));
  }
  MatrixD get_f64(const std::string& name) const {
    const Entry& e = require(name, DType::f64);
    ByteReader r(e.payload);
    std::vector<double> data(static_cast<std::size_t>(e.rows) * e.cols);
    for (auto& v : data) v = r.f64();
    return MatrixD(e.rows, e.cols, std::move(data));
  }
  Mask get_bitset(const std::string& name) const {
    const Entry& e = require(name, DType::bitset);
    return Mask::from_bytes(e.rows, e.cols, e.payload);
  }

  std::vector<std::uint8_t> to_bytes() const {
    ByteWriter w;
    w.str(std::string_view(kMagic, 4));
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
      w.name(e.name);
      w.u8(static_cast<std::uint8_t>(e.dtype));
      w.u32(e.rows);
      w.u32(e.cols);
      w.raw(e.payload);
    }
    return w.take();
  }

  static TensorDump from_bytes(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.str(4) != std::string_view(kMagic, 4)) throw IoError("not a tensor dump (bad magic)");
    const auto version = r.u32();
    if (version != kVersion) throw IoError("unsupported tensor dump version " + std::to_string(version));
    const auto count = r.u32();
    TensorDump out;
    for (std::uint32_t i = 0; i < count; ++i) {
      Entry e;
      e.name = r.name();
      const auto tag = r.u8();
      if (tag > 2) throw IoError("unknown dtype tag " + std::to_string(tag) + " for '" + e.name + "'");
      e.dtype = static_cast<DType>(tag);
      e.rows = r.u32();
      e.cols = r.u32();
      const std::size_t n = static_cast<std::size_t>(e.rows) * e.cols;
      const std::size_t len = e.dtype == DType::f32 ? n * 4 : e.dtype == DType::f64 ? n * 8 : (n + 7) / 8;
      const auto payload = r.raw(len);
      e.payload.assign(payload.begin(), payload.end());
      out.add(std::move(e));
    }
    if (!r.done()) throw IoError("trailing bytes after tensor dump");
    return out;
  }

  void write(const std::filesystem::path& path) const { write_file(path, to_bytes()); }
  static TensorDump read(const std::filesystem::path& path) { return from_bytes(read_file(path)); }

  friend bool operator==(const TensorDump&, const TensorDump&) = default;

 private:
  static std::uint32_t dim(std::size_t n) {
    if (n > UINT32_MAX) throw IoError("dimension exceeds 32 bits");
    return static_cast<std::uint32_t>(n);
  }

  void add(Entry e) {
    if (contains(e.name)) throw IoError("duplicate tensor name '" + e.name + "'");
    entries_.push_back(std::move(e));
  }

  const Entry* find(const std::string& name) const noexcept {
    for (const auto& e : entries_) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  const Entry& require(const std::string& name, DType dtype) const {
    const Entry* e = find(name);
    if (!e) throw IoError("tensor '" + name + "' not found");
    if (e->dtype != dtype) throw IoError("tensor '" + name + "' has a different dtype");
    return *e;
  }

  std::vector<Entry> entries_;
};

}  // namespace sparsetune::workbench
