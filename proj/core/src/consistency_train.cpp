#include <cstdio>

#include "pr/consistency.hpp"
#include "pr/distances.hpp"

namespace pr::consistency {

ConsistencyModel<float> train_consistency(const ConsistencyTrainConfig& cfg,
                                          const data::ImageBatch& data,
                                          const diffusion::DenoiserModel<float>* teacher) {
    if (data.count() < 1) throw std::invalid_argument("train_consistency: empty dataset");
    SigmaSchedule sched = diffusion::karras_schedule(cfg.schedule_N, cfg.schedule_eps,
                                                     cfg.schedule_T, cfg.schedule_rho);
    if (teacher && teacher->schedule.t != sched.t) {
        throw std::invalid_argument("train_consistency: teacher schedule differs");
    }

    ConsistencyModel<float> online(cfg.unet, sched, cfg.sigma_data);
    ConsistencyModel<float> target(cfg.unet, sched, cfg.sigma_data);
    target.net.params() = online.net.params();

    std::unique_ptr<dist::FeatureExtractor<float>> extractor;
    std::unique_ptr<TrainMetric<float>> metric;
    if (cfg.distance == TrainDistance::perceptual) {
        extractor = std::make_unique<dist::FeatureExtractor<float>>(
            cfg.unet.in_channels, cfg.unet.resolution, cfg.seed ^ 0x5eedull);
        metric = std::make_unique<dist::PerceptualTrainMetric<float>>(*extractor);
    } else {
        metric = std::make_unique<SquaredL2Metric<float>>();
    }

    net::Adam<float> opt(online.net.params(), cfg.lr);
    nn::Grads<float> grads(online.net.params());
    rng::Key run = rng::key(cfg.seed);

    for (int step = 0; step < cfg.steps; ++step) {
        rng::Key step_key = run.with(static_cast<std::uint64_t>(step));
        Tensor<float> mb = diffusion::gather_minibatch(data.data, step_key, cfg.batch_size);
        grads.zero();
        double loss;
        if (teacher) {
            loss = cd_loss_grad(online, target, mb, *metric, step_key, *teacher, grads);
        } else {
            loss = cm_loss_grad(online, target, mb, *metric, step_key, grads);
        }
        diffusion::guard_divergence(loss, step);
        opt.step(online.net.params(), grads);
        net::ema_update(target.net.params(), online.net.params(), cfg.ema_mu);
        if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
            std::printf("[%s] step %d loss %.6f\n",
                        teacher ? "distill" : "consistency-train", step, loss);
            std::fflush(stdout);
        }
    }
    return target;  // the EMA copy is the final model
}

}  // namespace pr::consistency
