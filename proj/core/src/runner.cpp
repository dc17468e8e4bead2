#include "pr/runner.hpp"

#include <filesystem>

namespace pr::run {
namespace {

std::string checkpoint_for(const config::RunConfig& cfg, const std::string& explicit_key,
                           const std::string& kind) {
    if (!cfg.empty(explicit_key)) return cfg.get(explicit_key);
    if (!cfg.empty("checkpoint") &&
        ckpt::checkpoint_kind(cfg.get("checkpoint")) == kind) {
        return cfg.get("checkpoint");
    }
    return "";
}

}  // namespace

Session Session::open(const config::RunConfig& cfg, bool need_denoiser, bool need_cm,
                      bool need_extractor) {
    Session s;
    const std::string den = checkpoint_for(cfg, "denoiser_checkpoint", "denoiser");
    const std::string cmp = checkpoint_for(cfg, "cm_checkpoint", "consistency");
    if (!den.empty()) {
        s.denoiser = std::make_unique<diffusion::DenoiserModel<float>>(
            ckpt::load_denoiser(den));
    }
    if (!cmp.empty()) {
        s.cm = std::make_unique<consistency::ConsistencyModel<float>>(
            ckpt::load_consistency(cmp));
    }
    if (need_denoiser && !s.denoiser) {
        throw std::runtime_error("missing denoiser checkpoint for the requested method");
    }
    if (need_cm && !s.cm) {
        throw std::runtime_error("missing consistency checkpoint for the requested method");
    }
    const bool metric_needs_extractor =
        need_extractor || cfg.get("metric") == "perceptual";
    if (metric_needs_extractor) {
        if (!cfg.empty("extractor_checkpoint")) {
            s.extractor = std::make_unique<dist::FeatureExtractor<float>>(
                dist::load_extractor(cfg.get("extractor_checkpoint")));
        } else {
            s.extractor = std::make_unique<dist::FeatureExtractor<float>>(
                static_cast<int>(cfg.get_int("data_channels")),
                static_cast<int>(cfg.get_int("data_resolution")),
                static_cast<std::uint64_t>(cfg.get_int("extractor_seed")));
        }
    }
    return s;
}

dist::DistanceFn Session::metric(const config::RunConfig& cfg, const std::string& name,
                                 std::uint64_t seed) const {
    dist::DistanceContext ctx;
    ctx.extractor = extractor.get();
    ctx.cm = cm.get();
    ctx.unet_gamma = static_cast<int>(cfg.get_int("unet_gamma"));
    ctx.unet_n_z = static_cast<int>(cfg.get_int("unet_n_z"));
    ctx.unet_key = rng::key(seed).with(0xD157);
    return dist::make_distance(name, ctx);
}

std::vector<std::pair<int, int>> resolve_ensemble(const std::string& text,
                                                  int schedule_N) {
    if (text == "cifar" || text == "svhn") return eval::ensemble_preset(text);
    if (text.rfind("around:", 0) == 0) {
        auto nums = text.substr(7);
        int a = 0, b = 0, r = 0;
        if (std::sscanf(nums.c_str(), "%d,%d,%d", &a, &b, &r) != 3) {
            throw std::invalid_argument("ensemble: expected around:A,B,R, got " + text);
        }
        return eval::build_ensemble_C({a, b}, r, schedule_N);
    }
    return eval::parse_pairs(text);
}

bool method_needs_denoiser(const config::RunConfig& cfg, const std::string& method) {
    if (method == "msma") return true;
    if (method == "proj") {
        return cfg.get("proj_mode") == "single" || cfg.get("proj_backend") == "ode";
    }
    return false;
}

bool method_needs_cm(const config::RunConfig& cfg, const std::string& method) {
    if (method == "pr" || method == "pr-ensemble") return true;
    if (method == "proj") {
        return cfg.get("proj_mode") == "full" && cfg.get("proj_backend") == "cm";
    }
    return cfg.get("metric") == "unet";
}

score::ScoreVector score_dataset(const Session& s, const config::RunConfig& cfg,
                                 const std::string& method,
                                 const data::ImageBatch& dataset,
                                 const data::ImageBatch* msma_fit, std::uint64_t seed) {
    const int threads = static_cast<int>(cfg.get_int("threads"));
    score::ScoreVector sv;

    if (method == "msma") {
        if (!s.denoiser) throw std::runtime_error("msma: denoiser checkpoint required");
        if (!msma_fit) throw std::runtime_error("msma: msma_fit_data required");
        const auto& sched = s.denoiser->schedule;
        std::vector<int> indices;
        if (cfg.get("msma_indices") == "all") {
            for (int i = 0; i <= sched.N; ++i) indices.push_back(i);
        } else {
            indices = cfg.get_int_list("msma_indices");
        }
        const int n = static_cast<int>(cfg.get_int("n_draws"));
        diffusion::BatchDenoiseFn<float> fn = diffusion::denoiser_fn(*s.denoiser);
        auto vec_of = [&](const Tensor<float>& x, std::uint64_t sid) {
            return score::score_msma(fn, sched, x, sid, indices, n, seed);
        };
        std::vector<std::vector<double>> fit_vectors(msma_fit->count());
        for (std::size_t i = 0; i < msma_fit->count(); ++i) {
            fit_vectors[i] = vec_of(data::image_at(*msma_fit, i),
                                    data::sample_id(*msma_fit, i));
        }
        auto scorer = [&](const Tensor<float>& x, std::uint64_t sid) {
            return score::msma_aggregate(fit_vectors, vec_of(x, sid));
        };
        sv = score::batch_score(dataset, scorer, seed, threads);
    } else if (method == "proj") {
        const bool single = cfg.get("proj_mode") == "single";
        proj::Backend backend =
            single ? proj::Backend::single_step
                   : (cfg.get("proj_backend") == "ode" ? proj::Backend::ode_full
                                                       : proj::Backend::cm_full);
        proj::Projector project =
            proj::make_projector(backend, s.denoiser.get(), s.cm.get());
        dist::DistanceFn d = s.metric(cfg, cfg.get("metric"), seed);
        const int i = static_cast<int>(cfg.get_int("timestep_index"));
        const int n = static_cast<int>(cfg.get_int("n_draws"));
        auto scorer = [&, i, n](const Tensor<float>& x, std::uint64_t sid) {
            return score::score_projection(project, x, sid, i, d, n, seed);
        };
        sv = score::batch_score(dataset, scorer, seed, threads);
    } else if (method == "pr" || method == "pr-ensemble") {
        if (!s.cm) throw std::runtime_error(method + ": consistency checkpoint required");
        proj::Projector project =
            proj::make_projector(proj::Backend::cm_full, s.denoiser.get(), s.cm.get());
        dist::DistanceFn d = s.metric(cfg, cfg.get("metric"), seed);
        score::PRConfig pc;
        pc.alpha = static_cast<int>(cfg.get_int("alpha"));
        pc.beta = static_cast<int>(cfg.get_int("beta"));
        pc.n_alpha = static_cast<int>(cfg.get_int("n_alpha"));
        pc.n_beta = static_cast<int>(cfg.get_int("n_beta"));
        pc.distance = cfg.get("metric");
        if (method == "pr-ensemble") {
            pc.ensemble_C = resolve_ensemble(cfg.get("ensemble"), s.cm->schedule.N);
        }
        auto scorer = [&, pc](const Tensor<float>& x, std::uint64_t sid) {
            return method == "pr-ensemble"
                       ? score::score_pr_ensemble(project, x, sid, pc, d, seed)
                       : score::score_pr(project, x, sid, pc, d, seed);
        };
        sv = score::batch_score(dataset, scorer, seed, threads);
    } else {
        throw std::invalid_argument("unknown score method \"" + method +
                                    "\" (expected pr | pr-ensemble | proj | msma)");
    }
    sv.method = method;
    sv.metric = cfg.get("metric");
    sv.config_hash = cfg.hash();
    sv.seed = seed;
    return sv;
}

}  // namespace pr::run
