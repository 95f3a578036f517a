#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "gunet/errors.hpp"
#include "gunet/tensor.hpp"

namespace gunet {

/// Binary tensor container. Layout (all integers little-endian):
///   magic "GUNT" | u32 version (=1) | records...
/// record:
///   u32 name length | name bytes | u8 dtype | u8 rank | u32 dims[rank] | payload
/// dtype codes: 0 = f32, 1 = f64, 2 = u8 (text/bytes records). Records are
/// stored sorted lexicographically by name; round-trips are bit-exact.
enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

struct CheckpointRecord {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::int64_t> dims;
  std::vector<std::uint8_t> payload;

  std::int64_t element_count() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

void write_checkpoint(const std::string& path, std::vector<CheckpointRecord> records);
std::vector<CheckpointRecord> read_checkpoint(const std::string& path);

std::size_t dtype_size(DType dtype);

template <typename T>
constexpr DType dtype_of() {
  if constexpr (sizeof(T) == 4) {
    return DType::f32;
  } else {
    return DType::f64;
  }
}

template <typename T>
CheckpointRecord make_tensor_record(const std::string& name, const Tensor<T>& t) {
  static_assert(std::is_floating_point_v<T>);
  CheckpointRecord rec;
  rec.name = name;
  rec.dtype = dtype_of<T>();
  rec.dims = t.dims();
  rec.payload.resize(static_cast<std::size_t>(t.size()) * sizeof(T));
  std::memcpy(rec.payload.data(), t.data(), rec.payload.size());
  return rec;
}

template <typename T>
Tensor<T> tensor_from_record(const CheckpointRecord& rec) {
  static_assert(std::is_floating_point_v<T>);
  if (rec.dtype != dtype_of<T>()) {
    throw StateError("record '" + rec.name + "' holds a different dtype");
  }
  Tensor<T> t(rec.dims);
  if (rec.payload.size() != static_cast<std::size_t>(t.size()) * sizeof(T)) {
    throw StateError("record '" + rec.name + "' payload size mismatch");
  }
  std::memcpy(t.data(), rec.payload.data(), rec.payload.size());
  return t;
}

CheckpointRecord make_text_record(const std::string& name, const std::string& text);
std::string text_from_record(const CheckpointRecord& rec);

}  // namespace gunet
