#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "pr/tensor.hpp"

namespace pr {

// On-disk tensor container. Layout, little-endian throughout:
//   magic "PRTC" | version u8 (=1) | dtype u8 | ndim u8 | ndim x u32 shape |
//   payload (row-major raw values)
// dtype codes: 0 = float32, 1 = float64, 2 = uint8.
enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

using AnyTensor = std::variant<Tensor<float>, Tensor<double>, Tensor<std::uint8_t>>;

void save_container(const Tensor<float>& t, const std::string& path);
void save_container(const Tensor<double>& t, const std::string& path);
void save_container(const Tensor<std::uint8_t>& t, const std::string& path);

AnyTensor load_container(const std::string& path);

/// Typed load; throws if the stored dtype differs.
template <typename T>
Tensor<T> load_container_as(const std::string& path) {
    AnyTensor any = load_container(path);
    if (auto* p = std::get_if<Tensor<T>>(&any)) return std::move(*p);
    throw std::runtime_error("load_container: dtype mismatch for " + path);
}

}  // namespace pr
