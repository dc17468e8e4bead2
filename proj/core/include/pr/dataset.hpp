#pragma once

#include <string>

#include "pr/image_batch.hpp"

namespace pr::data {

/// Loads a dataset from a specifier string:
///   - "toy:resolution=24,classes=3,textures=4,per_class=64,seed=7,select=0+1"
///     synthetic shapes-on-texture corpus, optionally restricted to the
///     given semantic classes;
///   - a *.prtc path: a (B,C,H,W) tensor container, float32 in [-1,1] or
///     uint8 raw pixels;
///   - anything else: a directory of image files.
/// resolution/channels apply to image directories and are checked against
/// the other loaders' output.
ImageBatch load_dataset(const std::string& spec, int resolution, int channels);

}  // namespace pr::data
