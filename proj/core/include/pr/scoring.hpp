#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pr/distances.hpp"
#include "pr/image_batch.hpp"
#include "pr/projection.hpp"

namespace pr::score {

/// Projection-regret hyperparameters: projection level alpha, scoring level
/// beta, Monte-Carlo widths, and an optional ensemble of (alpha, beta) pairs.
struct PRConfig {
    int alpha = 9;
    int beta = 8;
    int n_alpha = 40;
    int n_beta = 10;
    std::vector<std::pair<int, int>> ensemble_C;
    std::string distance = "perceptual";
};

struct ScoreVector {
    std::vector<double> scores;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string method;
    std::string metric;
    std::vector<std::pair<std::string, std::string>> extra;
};

// Draw keying: every z is addressed by
//   (seed, sample_id, [alpha, beta,] role, draw index)
// so batched, looped and parallel evaluations see identical noise, and
// scores travel with samples when a dataset is permuted. Ensemble pairs key
// by their (alpha, beta) values, which makes the ensemble sum additive.

/// Mean over n fresh draws of d(x, project(x, i, z)); x is one (1,C,H,W)
/// image. Eq.(3)/(4)-style reconstruction score, backend chosen by the
/// projector.
double score_projection(const proj::Projector& project, const Tensor<float>& x,
                        std::uint64_t sample_id, int i, const dist::DistanceFn& d,
                        int n, std::uint64_t seed);

/// Projection Regret for one (alpha, beta) pair, batched exactly like the
/// reference pseudocode: dx uses n_alpha*n_beta draws at t_beta; dy projects
/// n_alpha intermediates at t_alpha and scores each with n_beta draws.
double score_pr(const proj::Projector& project, const Tensor<float>& x,
                std::uint64_t sample_id, const PRConfig& cfg, const dist::DistanceFn& d,
                std::uint64_t seed);

/// Unweighted sum of score_pr over cfg.ensemble_C, in order.
double score_pr_ensemble(const proj::Projector& project, const Tensor<float>& x,
                         std::uint64_t sample_id, const PRConfig& cfg,
                         const dist::DistanceFn& d, std::uint64_t seed);

/// Per-index Monte-Carlo estimates of E_z ||(pi(x, z, t_i) - x) / t_i||^2.
std::vector<double> score_msma(const diffusion::BatchDenoiseFn<float>& denoiser,
                               const diffusion::SigmaSchedule& sched,
                               const Tensor<float>& x, std::uint64_t sample_id,
                               const std::vector<int>& indices, int n,
                               std::uint64_t seed);

/// Mahalanobis distance of `test` under mean/covariance fitted on the
/// training vectors, with shrinkage `lambda` added to the covariance
/// diagonal. Throws if the shrunk covariance is still singular.
double msma_aggregate(const std::vector<std::vector<double>>& train_vectors,
                      const std::vector<double>& test, double lambda = 1e-3);

/// Per-sample scorer; receives the image as (1,C,H,W) plus its stable id.
using SampleScorer = std::function<double(const Tensor<float>&, std::uint64_t)>;

/// Scores every sample of the dataset (order preserved). `threads` > 1 fans
/// out across workers; keyed noise makes the result identical to the serial
/// run. Throws naming the sample index if a score is non-finite.
ScoreVector batch_score(const data::ImageBatch& dataset, const SampleScorer& scorer,
                        std::uint64_t seed, int threads = 1);

/// Score file = <path> (float64 container) + <path>.manifest.txt sidecar.
void save_score_vector(const ScoreVector& sv, const std::string& path);
ScoreVector load_score_vector(const std::string& path);

}  // namespace pr::score
