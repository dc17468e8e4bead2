#include "pr/image_dir.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace pr::data {

ImageBatch load_image_dir(const std::string& path, int resolution, int channels) {
    if (channels != 1 && channels != 3) {
        throw std::invalid_argument("load_image_dir: channels must be 1 or 3");
    }
    if (resolution < 1) {
        throw std::invalid_argument("load_image_dir: resolution must be >= 1");
    }
    if (!fs::exists(path) || !fs::is_directory(path)) {
        throw std::runtime_error("load_image_dir: missing path " + path);
    }

    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path)) {
        if (e.is_regular_file()) files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());  // bytewise
    if (files.empty()) {
        throw std::runtime_error("load_image_dir: zero images found in " + path);
    }

    const auto B = files.size();
    const auto C = static_cast<std::size_t>(channels);
    const auto R = static_cast<std::size_t>(resolution);
    Tensor<std::uint8_t> raw({B, C, R, R});

    for (std::size_t n = 0; n < B; ++n) {
        cv::Mat img = cv::imread(files[n],
                                 channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
        if (img.empty()) {
            throw std::runtime_error("load_image_dir: undecodable file " + files[n]);
        }
        if (img.cols != resolution || img.rows != resolution) {
            cv::Mat resized;
            cv::resize(img, resized, cv::Size(resolution, resolution), 0, 0,
                       cv::INTER_AREA);
            img = resized;
        }
        if (channels == 3) {
            cv::Mat rgb;
            cv::cvtColor(img, rgb, cv::COLOR_BGR2RGB);
            img = rgb;
        }
        for (std::size_t y = 0; y < R; ++y) {
            const auto* row = img.ptr<std::uint8_t>(static_cast<int>(y));
            for (std::size_t x = 0; x < R; ++x) {
                for (std::size_t c = 0; c < C; ++c) {
                    raw.at4(n, c, y, x) = row[x * C + c];
                }
            }
        }
    }
    return normalize_pixels(raw);
}

}  // namespace pr::data
