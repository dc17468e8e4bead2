#pragma once

#include <string>

#include "pr/image_batch.hpp"

namespace pr::data {

/// Loads every decodable image file in `path` (bytewise filename order),
/// resizes to (resolution, resolution) and normalizes pixels to [-1, 1].
/// channels must be 1 or 3. Throws on a missing path, an undecodable file
/// (named in the message) or an empty directory.
ImageBatch load_image_dir(const std::string& path, int resolution, int channels);

}  // namespace pr::data
