#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "searth/tensor.hpp"

namespace searth {

// Single-tensor binary container, little-endian regardless of host:
//   "GTEN" | version u32 | dtype u8 (0 f32, 1 f64) | ndim u32 | dims u32[ndim]
//   | row-major payload | payload byte count u64 (truncation check)
// Archive variant: u32 entry count, then per entry u16 name length, name
// bytes, one record as above.

enum class Gt1Dtype : uint8_t { f32 = 0, f64 = 1 };

inline constexpr uint32_t kGt1Version = 1;

struct Gt1Tensor {
    Gt1Dtype dtype = Gt1Dtype::f64;
    Shape dims;
    std::vector<float> f32;   // exactly one of these is populated,
    std::vector<double> f64;  // matching dtype

    template <class T>
    static Gt1Tensor from(const Tensor<T>& t);

    // Requires the stored dtype to match T; no silent conversion.
    template <class T>
    Tensor<T> to() const;

    int64_t element_count() const { return shape_numel(dims); }
};

void gt1_encode(std::ostream& os, const Gt1Tensor& t);
Gt1Tensor gt1_decode(std::istream& is);

void gt1_write(const std::string& path, const Gt1Tensor& t);
Gt1Tensor gt1_read(const std::string& path);

void gt1_write_archive(const std::string& path,
                       const std::vector<std::pair<std::string, Gt1Tensor>>& entries);
std::vector<std::pair<std::string, Gt1Tensor>> gt1_read_archive(const std::string& path);

}  // namespace searth
