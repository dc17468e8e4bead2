#include "pr/image_batch.hpp"

#include <cmath>
#include <stdexcept>

#include "pr/hash.hpp"

namespace pr::data {

void validate(const ImageBatch& b) {
    if (b.data.ndim() != 4) {
        throw std::invalid_argument("ImageBatch: data must be 4-d (B,C,H,W)");
    }
    const auto& s = b.data.shape();
    if (s[0] < 1) throw std::invalid_argument("ImageBatch: B must be >= 1");
    if (s[1] != 1 && s[1] != 3) throw std::invalid_argument("ImageBatch: C must be 1 or 3");
    if (s[2] != s[3]) throw std::invalid_argument("ImageBatch: images must be square");
    if (static_cast<int>(s[1]) != b.channel_count ||
        static_cast<int>(s[2]) != b.resolution) {
        throw std::invalid_argument("ImageBatch: fields disagree with data shape");
    }
    for (float v : b.data) {
        if (!(v >= -1.0f && v <= 1.0f)) {
            throw std::invalid_argument("ImageBatch: pixel out of [-1,1]");
        }
    }
}

ImageBatch make_batch(Tensor<float> data) {
    if (data.ndim() != 4) throw std::invalid_argument("make_batch: need (B,C,H,W)");
    ImageBatch b;
    b.channel_count = static_cast<int>(data.dim(1));
    b.resolution = static_cast<int>(data.dim(2));
    b.data = std::move(data);
    validate(b);
    return b;
}

ImageBatch normalize_pixels(const Tensor<std::uint8_t>& raw) {
    if (raw.ndim() != 4) throw std::invalid_argument("normalize_pixels: need (B,C,H,W)");
    Tensor<float> out(raw.shape());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = static_cast<float>(raw[i]) / 127.5f - 1.0f;
    }
    return make_batch(std::move(out));
}

Tensor<std::uint8_t> denormalize_pixels(const ImageBatch& b) {
    Tensor<std::uint8_t> out(b.data.shape());
    for (std::size_t i = 0; i < b.data.size(); ++i) {
        float v = (b.data[i] + 1.0f) * 127.5f;
        long r = std::lround(v);
        if (r < 0) r = 0;
        if (r > 255) r = 255;
        out[i] = static_cast<std::uint8_t>(r);
    }
    return out;
}

ImageBatch rotate_batch(const ImageBatch& b, int k) {
    if (k < 0 || k > 3) {
        throw std::invalid_argument("rotate_batch: k must be in {0,1,2,3}, got " +
                                    std::to_string(k));
    }
    if (k == 0) return b;
    const std::size_t B = b.data.dim(0), C = b.data.dim(1);
    const std::size_t H = b.data.dim(2), W = b.data.dim(3);
    Tensor<float> cur = b.data;
    for (int r = 0; r < k; ++r) {
        Tensor<float> next({B, C, W, H});
        // counter-clockwise: out[i][j] = in[j][W-1-i]
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < W; ++i)
                    for (std::size_t j = 0; j < H; ++j)
                        next.at4(n, c, i, j) = cur.at4(n, c, j, W - 1 - i);
        cur = std::move(next);
    }
    ImageBatch out;
    out.channel_count = b.channel_count;
    out.resolution = b.resolution;
    out.data = std::move(cur);
    return out;
}

Tensor<float> image_at(const ImageBatch& b, std::size_t index) {
    if (index >= b.count()) throw std::out_of_range("image_at: index out of range");
    const std::size_t n = b.pixels_per_image();
    Tensor<float> out({1, static_cast<std::size_t>(b.channel_count),
                       static_cast<std::size_t>(b.resolution),
                       static_cast<std::size_t>(b.resolution)});
    const float* src = b.data.data() + index * n;
    std::copy(src, src + n, out.data());
    return out;
}

ImageBatch concat(const ImageBatch& a, const ImageBatch& b) {
    if (a.channel_count != b.channel_count || a.resolution != b.resolution) {
        throw std::invalid_argument("concat: incompatible batches");
    }
    Tensor<float> out({a.count() + b.count(),
                       static_cast<std::size_t>(a.channel_count),
                       static_cast<std::size_t>(a.resolution),
                       static_cast<std::size_t>(a.resolution)});
    std::copy(a.data.begin(), a.data.end(), out.data());
    std::copy(b.data.begin(), b.data.end(), out.data() + a.data.size());
    ImageBatch r;
    r.channel_count = a.channel_count;
    r.resolution = a.resolution;
    r.data = std::move(out);
    return r;
}

ImageBatch take(const ImageBatch& b, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("take: empty index list");
    const std::size_t n = b.pixels_per_image();
    Tensor<float> out({indices.size(), static_cast<std::size_t>(b.channel_count),
                       static_cast<std::size_t>(b.resolution),
                       static_cast<std::size_t>(b.resolution)});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= b.count()) throw std::out_of_range("take: index out of range");
        const float* src = b.data.data() + indices[i] * n;
        std::copy(src, src + n, out.data() + i * n);
    }
    ImageBatch r;
    r.channel_count = b.channel_count;
    r.resolution = b.resolution;
    r.data = std::move(out);
    return r;
}

std::uint64_t sample_id(const ImageBatch& b, std::size_t index) {
    if (index >= b.count()) throw std::out_of_range("sample_id: index out of range");
    const std::size_t n = b.pixels_per_image();
    return fnv1a(b.data.data() + index * n, n * sizeof(float));
}

}  // namespace pr::data
