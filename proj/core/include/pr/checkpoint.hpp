#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pr/consistency.hpp"
#include "pr/diffusion.hpp"

namespace pr::ckpt {

// Checkpoint directory layout:
//   manifest.txt            ordered key=value fields, then one line per tensor
//   tensors/NNN_<name>.prtc one container file per parameter, manifest order
struct Manifest {
    std::vector<std::pair<std::string, std::string>> fields;
    struct TensorEntry {
        std::string name;
        std::string file;
        std::vector<std::size_t> shape;
    };
    std::vector<TensorEntry> tensors;

    const std::string& get(const std::string& key) const;
    bool has(const std::string& key) const;
    double get_double(const std::string& key) const;
    long get_long(const std::string& key) const;
};

std::string format_double(double v);  // round-trip exact

void write_manifest(const Manifest& m, const std::string& dir);
Manifest read_manifest(const std::string& dir);

void save_param_store(const nn::ParamStore<float>& ps, Manifest& m,
                      const std::string& dir);
void load_param_store(nn::ParamStore<float>& ps, const Manifest& m,
                      const std::string& dir);

/// "denoiser", "consistency" or "extractor"; throws if dir has no manifest.
std::string checkpoint_kind(const std::string& dir);

void save_denoiser(const diffusion::DenoiserModel<float>& m, const std::string& dir);
diffusion::DenoiserModel<float> load_denoiser(const std::string& dir);

void save_consistency(const consistency::ConsistencyModel<float>& m,
                      const std::string& dir);
consistency::ConsistencyModel<float> load_consistency(const std::string& dir);

}  // namespace pr::ckpt
