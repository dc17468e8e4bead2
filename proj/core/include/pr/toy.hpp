#pragma once

#include <cstdint>
#include <vector>

#include "pr/image_batch.hpp"

namespace pr::data {

/// Synthetic shapes-on-texture corpus: procedural band-limited background
/// textures shared across semantic classes, plus a foreground shape whose
/// geometry is fixed by the semantic label. Built so that semantic-OOD
/// classes share background statistics with in-distribution ones.
struct ToySpec {
    int resolution = 24;
    int n_semantic_classes = 2;
    int n_background_textures = 4;
    int samples_per_class = 64;
    std::uint64_t seed = 0;
};

struct ToyDataset {
    ImageBatch images;
    std::vector<int> semantic_labels;
    std::vector<int> background_labels;
};

/// Pure function of the spec: identical spec => bit-identical output.
/// Samples are emitted class-major (all of class 0 first, ...).
ToyDataset gen_toy_dataset(const ToySpec& spec);

/// Subset of a toy dataset restricted to the given semantic classes.
ToyDataset filter_classes(const ToyDataset& d, const std::vector<int>& keep);

}  // namespace pr::data
