#pragma once

#include <memory>

#include "pr/checkpoint.hpp"
#include "pr/config.hpp"
#include "pr/dataset.hpp"
#include "pr/evaluation.hpp"

namespace pr::run {

/// Loaded models + metric context for one configured run. Checkpoints are
/// resolved from denoiser_checkpoint / cm_checkpoint, falling back to the
/// generic `checkpoint` key by manifest kind.
struct Session {
    std::unique_ptr<diffusion::DenoiserModel<float>> denoiser;
    std::unique_ptr<consistency::ConsistencyModel<float>> cm;
    std::unique_ptr<dist::FeatureExtractor<float>> extractor;

    static Session open(const config::RunConfig& cfg, bool need_denoiser, bool need_cm,
                        bool need_extractor);

    dist::DistanceFn metric(const config::RunConfig& cfg, const std::string& name,
                            std::uint64_t seed) const;
};

/// Resolves the ensemble key: "cifar" | "svhn" | "a:b,..." | "around:A,B,R".
std::vector<std::pair<int, int>> resolve_ensemble(const std::string& text,
                                                  int schedule_N);

/// Which models a score method needs.
bool method_needs_denoiser(const config::RunConfig& cfg, const std::string& method);
bool method_needs_cm(const config::RunConfig& cfg, const std::string& method);

/// Scores a dataset with the configured method ("pr", "pr-ensemble", "proj",
/// "msma"). msma requires fit vectors from `msma_fit`.
score::ScoreVector score_dataset(const Session& s, const config::RunConfig& cfg,
                                 const std::string& method,
                                 const data::ImageBatch& dataset,
                                 const data::ImageBatch* msma_fit, std::uint64_t seed);

}  // namespace pr::run
