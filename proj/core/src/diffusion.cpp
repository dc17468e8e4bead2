#include "pr/diffusion.hpp"

#include <cstdio>

namespace pr::diffusion {

DenoiserModel<float> train_diffusion(const DiffusionTrainConfig& cfg,
                                     const data::ImageBatch& data) {
    if (data.count() < 1) throw std::invalid_argument("train_diffusion: empty dataset");
    SigmaSchedule sched = karras_schedule(cfg.schedule_N, cfg.schedule_eps,
                                          cfg.schedule_T, cfg.schedule_rho);
    DenoiserModel<float> model(cfg.unet, sched, cfg.sigma_data);
    net::Adam<float> opt(model.net.params(), cfg.lr);
    nn::Grads<float> grads(model.net.params());
    rng::Key run = rng::key(cfg.seed);

    for (int step = 0; step < cfg.steps; ++step) {
        rng::Key step_key = run.with(static_cast<std::uint64_t>(step));
        Tensor<float> mb = gather_minibatch(data.data, step_key, cfg.batch_size);
        grads.zero();
        double loss = dsm_loss_grad(model, mb, step_key, cfg.weighting, grads);
        guard_divergence(loss, step);
        opt.step(model.net.params(), grads);
        if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
            std::printf("[train-diffusion] step %d loss %.6f\n", step, loss);
            std::fflush(stdout);
        }
    }
    return model;
}

}  // namespace pr::diffusion
