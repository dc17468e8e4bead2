#pragma once

#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "pr/scoring.hpp"

namespace pr::eval {

/// P(ood > id) + 0.5 P(ood = id) over all pairs, via rank statistics
/// (Mann-Whitney; ties get half credit). Positive class = OOD.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

/// True-negative rate at the threshold achieving at least `tpr` true-positive
/// rate. Positives = OOD; TPR = fraction of OOD above tau; TNR = fraction of
/// ID at or below tau. tau is the k-th smallest OOD score, k =
/// ceil((1-tpr)*|ood|), lowered to the largest feasible candidate under ties;
/// if no OOD score is feasible tau sits strictly below min(ood).
double tnr_at_tpr(std::span<const double> id_scores,
                  std::span<const double> ood_scores, double tpr = 0.95);

/// All pairs (a, b) with |a - center.first| <= radius and b in {a-1, a},
/// clipped to [0, N], deduplicated and sorted.
std::vector<std::pair<int, int>> build_ensemble_C(std::pair<int, int> center,
                                                  int radius, int schedule_N);

/// Published candidate sets: "cifar" (8 pairs) and "svhn" (4 pairs).
std::vector<std::pair<int, int>> ensemble_preset(const std::string& name);

/// "7:6,7:7,..." -> pair list.
std::vector<std::pair<int, int>> parse_pairs(const std::string& text);

/// Elementwise product of two score vectors. A vector containing negatives is
/// shifted up by -min first; the applied shifts are recorded in the result's
/// manifest fields.
score::ScoreVector combine_multiplicative(const score::ScoreVector& s1,
                                          const score::ScoreVector& s2);

struct HparamSelection {
    int alpha = 0;
    int beta = 0;
    std::vector<std::tuple<int, int, double>> table;  // (alpha, beta, auroc)
};

/// Scores ID against the pool of 90/180/270-degree rotations of ID with
/// S_PR per grid pair and returns the AUROC-maximizing pair (ties break to
/// the lexicographically smallest).
HparamSelection select_hparams_rotated(const proj::Projector& project,
                                       const data::ImageBatch& id_data,
                                       const std::vector<std::pair<int, int>>& grid,
                                       const dist::DistanceFn& metric, int n_alpha,
                                       int n_beta, std::uint64_t seed, int threads);

enum class SweepVariant { pi_l2, pi_perceptual, full_l2, full_perceptual };

const char* variant_name(SweepVariant v);
SweepVariant variant_from_name(const std::string& name);

struct SweepRow {
    std::string variant;
    int index = 0;
    double auroc = 0.0;
};

/// AUROC of the four projection-score variants per schedule index.
/// pi_* need the denoiser; full_* need the consistency model; *_perceptual
/// need the extractor. Missing models raise.
std::vector<SweepRow> sweep_timesteps(const diffusion::DenoiserModel<float>* denoiser,
                                      const consistency::ConsistencyModel<float>* cm,
                                      const dist::FeatureExtractor<float>* extractor,
                                      const data::ImageBatch& id_data,
                                      const data::ImageBatch& ood_data,
                                      const std::vector<SweepVariant>& variants, int n,
                                      std::uint64_t seed, int threads);

}  // namespace pr::eval
