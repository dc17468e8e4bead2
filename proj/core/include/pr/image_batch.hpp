#pragma once

#include <cstdint>
#include <string>

#include "pr/tensor.hpp"

namespace pr::data {

/// Batch of square images, shape (B, C, H, W), pixels in [-1, 1].
struct ImageBatch {
    Tensor<float> data;  // (B, C, H, W)
    int channel_count = 0;
    int resolution = 0;

    std::size_t count() const { return data.empty() ? 0 : data.dim(0); }
    std::size_t pixels_per_image() const {
        return static_cast<std::size_t>(channel_count) * resolution * resolution;
    }
};

/// Validates the ImageBatch invariants (non-empty, C in {1,3}, square,
/// values in [-1,1]); throws on violation.
void validate(const ImageBatch& b);

ImageBatch make_batch(Tensor<float> data);

/// x_norm = raw / 127.5 - 1
ImageBatch normalize_pixels(const Tensor<std::uint8_t>& raw);

/// round-to-nearest, clamped to [0, 255]
Tensor<std::uint8_t> denormalize_pixels(const ImageBatch& b);

/// 90-degree counter-clockwise rotation applied k times; k in {0,1,2,3}.
ImageBatch rotate_batch(const ImageBatch& b, int k);

/// View of one image as a (1, C, H, W) tensor copy.
Tensor<float> image_at(const ImageBatch& b, std::size_t index);

/// Concatenate along the batch axis; shapes must agree.
ImageBatch concat(const ImageBatch& a, const ImageBatch& b);

/// Select a subset of samples by index, in the given order.
ImageBatch take(const ImageBatch& b, const std::vector<std::size_t>& indices);

/// Stable per-sample identifier: FNV-1a over the image bytes. Used to key
/// noise draws so scores travel with samples under dataset permutation.
std::uint64_t sample_id(const ImageBatch& b, std::size_t index);

}  // namespace pr::data
