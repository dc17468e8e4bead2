#include "pr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace pr::eval {

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
    if (id_scores.empty() || ood_scores.empty()) {
        throw std::invalid_argument("auroc: empty score set");
    }
    struct Item {
        double v;
        bool ood;
    };
    std::vector<Item> all;
    all.reserve(id_scores.size() + ood_scores.size());
    for (double v : id_scores) {
        if (!std::isfinite(v)) throw std::invalid_argument("auroc: non-finite score");
        all.push_back({v, false});
    }
    for (double v : ood_scores) {
        if (!std::isfinite(v)) throw std::invalid_argument("auroc: non-finite score");
        all.push_back({v, true});
    }
    std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });

    // average ranks over tie groups; rank sum of the OOD class gives U
    double rank_sum_ood = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].v == all[i].v) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].ood) rank_sum_ood += avg_rank;
        }
        i = j;
    }
    const double n_ood = static_cast<double>(ood_scores.size());
    const double n_id = static_cast<double>(id_scores.size());
    const double u = rank_sum_ood - n_ood * (n_ood + 1.0) / 2.0;
    return u / (n_id * n_ood);
}

double tnr_at_tpr(std::span<const double> id_scores,
                  std::span<const double> ood_scores, double tpr) {
    if (id_scores.empty() || ood_scores.empty()) {
        throw std::invalid_argument("tnr_at_tpr: empty score set");
    }
    if (!(tpr > 0.0 && tpr <= 1.0)) {
        throw std::invalid_argument("tnr_at_tpr: tpr must be in (0, 1]");
    }
    std::vector<double> ood(ood_scores.begin(), ood_scores.end());
    std::sort(ood.begin(), ood.end());
    const double n = static_cast<double>(ood.size());
    auto tpr_above = [&](double tau) {
        const auto above = ood.end() - std::upper_bound(ood.begin(), ood.end(), tau);
        return static_cast<double>(above) / n;
    };
    long k = static_cast<long>(std::ceil((1.0 - tpr) * n));
    if (k > static_cast<long>(ood.size())) k = static_cast<long>(ood.size());
    // lower k until the threshold actually admits >= tpr of the OOD scores
    while (k >= 1 && tpr_above(ood[static_cast<std::size_t>(k) - 1]) < tpr) --k;

    double tnr_count = 0.0;
    if (k >= 1) {
        const double tau = ood[static_cast<std::size_t>(k) - 1];
        for (double v : id_scores) {
            if (v <= tau) tnr_count += 1.0;
        }
    } else {
        // tau strictly below the smallest OOD score
        const double lo = ood.front();
        for (double v : id_scores) {
            if (v < lo) tnr_count += 1.0;
        }
    }
    return tnr_count / static_cast<double>(id_scores.size());
}

std::vector<std::pair<int, int>> build_ensemble_C(std::pair<int, int> center,
                                                  int radius, int schedule_N) {
    if (radius < 0) throw std::invalid_argument("build_ensemble_C: radius must be >= 0");
    std::set<std::pair<int, int>> out;
    for (int a = center.first - radius; a <= center.first + radius; ++a) {
        const int ac = std::clamp(a, 0, schedule_N);
        for (int b : {ac - 1, ac}) {
            out.emplace(ac, std::clamp(b, 0, schedule_N));
        }
    }
    return {out.begin(), out.end()};
}

std::vector<std::pair<int, int>> ensemble_preset(const std::string& name) {
    if (name == "cifar") {
        return {{7, 6}, {7, 7}, {8, 7}, {8, 8}, {9, 8}, {9, 9}, {10, 9}, {10, 10}};
    }
    if (name == "svhn") {
        return {{10, 10}, {11, 10}, {11, 11}, {12, 11}};
    }
    throw std::invalid_argument("ensemble_preset: unknown preset \"" + name + "\"");
}

std::vector<std::pair<int, int>> parse_pairs(const std::string& text) {
    std::vector<std::pair<int, int>> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        auto pos = tok.find(':');
        if (pos == std::string::npos) {
            throw std::invalid_argument("parse_pairs: expected a:b, got \"" + tok + "\"");
        }
        out.emplace_back(std::stoi(tok.substr(0, pos)), std::stoi(tok.substr(pos + 1)));
    }
    if (out.empty()) throw std::invalid_argument("parse_pairs: empty pair list");
    return out;
}

score::ScoreVector combine_multiplicative(const score::ScoreVector& s1,
                                          const score::ScoreVector& s2) {
    if (s1.scores.size() != s2.scores.size()) {
        throw std::invalid_argument("combine_multiplicative: length mismatch");
    }
    auto shift_of = [](const std::vector<double>& v) {
        double lo = *std::min_element(v.begin(), v.end());
        return lo < 0.0 ? -lo : 0.0;
    };
    const double sh1 = shift_of(s1.scores), sh2 = shift_of(s2.scores);
    score::ScoreVector out;
    out.seed = s1.seed;
    out.method = "combined";
    out.metric = s1.metric;
    out.config_hash = s1.config_hash;
    out.scores.resize(s1.scores.size());
    for (std::size_t i = 0; i < out.scores.size(); ++i) {
        out.scores[i] = (s1.scores[i] + sh1) * (s2.scores[i] + sh2);
    }
    out.extra.emplace_back("shift_s1", std::to_string(sh1));
    out.extra.emplace_back("shift_s2", std::to_string(sh2));
    out.extra.emplace_back("combined_from", s1.method + "*" + s2.method);
    return out;
}

HparamSelection select_hparams_rotated(const proj::Projector& project,
                                       const data::ImageBatch& id_data,
                                       const std::vector<std::pair<int, int>>& grid,
                                       const dist::DistanceFn& metric, int n_alpha,
                                       int n_beta, std::uint64_t seed, int threads) {
    if (grid.empty()) throw std::invalid_argument("select_hparams_rotated: empty grid");
    data::ImageBatch rotated = data::concat(
        data::concat(data::rotate_batch(id_data, 1), data::rotate_batch(id_data, 2)),
        data::rotate_batch(id_data, 3));

    HparamSelection sel;
    double best = -1.0;
    for (const auto& [a, b] : grid) {
        score::PRConfig cfg;
        cfg.alpha = a;
        cfg.beta = b;
        cfg.n_alpha = n_alpha;
        cfg.n_beta = n_beta;
        auto scorer = [&](const Tensor<float>& x, std::uint64_t sid) {
            return score::score_pr(project, x, sid, cfg, metric, seed);
        };
        score::ScoreVector sid = score::batch_score(id_data, scorer, seed, threads);
        score::ScoreVector sood = score::batch_score(rotated, scorer, seed, threads);
        const double a_uc = auroc(sid.scores, sood.scores);
        sel.table.emplace_back(a, b, a_uc);
        const bool better =
            a_uc > best ||
            (a_uc == best && std::make_pair(a, b) < std::make_pair(sel.alpha, sel.beta));
        if (better) {
            best = a_uc;
            sel.alpha = a;
            sel.beta = b;
        }
    }
    return sel;
}

const char* variant_name(SweepVariant v) {
    switch (v) {
        case SweepVariant::pi_l2: return "pi-l2";
        case SweepVariant::pi_perceptual: return "pi-perceptual";
        case SweepVariant::full_l2: return "full-l2";
        case SweepVariant::full_perceptual: return "full-perceptual";
    }
    throw std::logic_error("variant_name: bad variant");
}

SweepVariant variant_from_name(const std::string& name) {
    if (name == "pi-l2") return SweepVariant::pi_l2;
    if (name == "pi-perceptual") return SweepVariant::pi_perceptual;
    if (name == "full-l2") return SweepVariant::full_l2;
    if (name == "full-perceptual") return SweepVariant::full_perceptual;
    throw std::invalid_argument("sweep: unknown variant \"" + name + "\"");
}

std::vector<SweepRow> sweep_timesteps(const diffusion::DenoiserModel<float>* denoiser,
                                      const consistency::ConsistencyModel<float>* cm,
                                      const dist::FeatureExtractor<float>* extractor,
                                      const data::ImageBatch& id_data,
                                      const data::ImageBatch& ood_data,
                                      const std::vector<SweepVariant>& variants, int n,
                                      std::uint64_t seed, int threads) {
    if (variants.empty()) throw std::invalid_argument("sweep: no variants");
    const diffusion::SigmaSchedule* sched = nullptr;
    if (denoiser) sched = &denoiser->schedule;
    if (cm) {
        if (sched && cm->schedule.t != sched->t) {
            throw std::invalid_argument("sweep: model schedules differ");
        }
        sched = &cm->schedule;
    }
    if (!sched) throw std::invalid_argument("sweep: no model given");

    std::vector<SweepRow> rows;
    for (SweepVariant v : variants) {
        const bool is_pi = (v == SweepVariant::pi_l2 || v == SweepVariant::pi_perceptual);
        const bool is_perc =
            (v == SweepVariant::pi_perceptual || v == SweepVariant::full_perceptual);
        if (is_pi && !denoiser) {
            throw std::invalid_argument(std::string("sweep: variant ") + variant_name(v) +
                                        " needs a denoiser checkpoint");
        }
        if (!is_pi && !cm) {
            throw std::invalid_argument(std::string("sweep: variant ") + variant_name(v) +
                                        " needs a consistency checkpoint");
        }
        if (is_perc && !extractor) {
            throw std::invalid_argument(std::string("sweep: variant ") + variant_name(v) +
                                        " needs a feature extractor");
        }
        proj::Projector project = proj::make_projector(
            is_pi ? proj::Backend::single_step : proj::Backend::cm_full, denoiser, cm);
        dist::DistanceContext ctx;
        ctx.extractor = extractor;
        dist::DistanceFn d = dist::make_distance(is_perc ? "perceptual" : "l2", ctx);
        for (int i = 0; i <= sched->N; ++i) {
            auto scorer = [&](const Tensor<float>& x, std::uint64_t sid) {
                return score::score_projection(project, x, sid, i, d, n, seed);
            };
            score::ScoreVector sid = score::batch_score(id_data, scorer, seed, threads);
            score::ScoreVector sood = score::batch_score(ood_data, scorer, seed, threads);
            rows.push_back({variant_name(v), i, auroc(sid.scores, sood.scores)});
        }
    }
    return rows;
}

}  // namespace pr::eval
