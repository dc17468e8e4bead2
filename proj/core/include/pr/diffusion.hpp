#pragma once

#include <functional>
#include <string>

#include "pr/image_batch.hpp"
#include "pr/optimizer.hpp"
#include "pr/rng.hpp"
#include "pr/schedule.hpp"
#include "pr/unet.hpp"

namespace pr::diffusion {

// EDM-style preconditioning around the raw network.
inline double c_skip(double sigma, double sigma_data) {
    return sigma_data * sigma_data / (sigma * sigma + sigma_data * sigma_data);
}
inline double c_out(double sigma, double sigma_data) {
    return sigma * sigma_data / std::sqrt(sigma * sigma + sigma_data * sigma_data);
}
inline double c_in(double sigma, double sigma_data) {
    return 1.0 / std::sqrt(sigma * sigma + sigma_data * sigma_data);
}
inline double c_noise(double sigma) { return std::log(sigma) / 4.0; }

/// Time-dependent denoiser D(x_t, t) = c_skip * x_t + c_out * net(c_in * x_t).
template <typename T>
struct DenoiserModel {
    net::UNet<T> net;
    double sigma_data = 0.5;
    SigmaSchedule schedule;

    DenoiserModel(net::UNetConfig cfg, SigmaSchedule sched, double sd = 0.5)
        : net(std::move(cfg)), sigma_data(sd), schedule(std::move(sched)) {
        net.init_params();
    }
};

/// Batched denoiser evaluation with one sigma per sample. Mock-friendly
/// alias used by the solver and the scoring layer.
template <typename T>
using BatchDenoiseFn =
    std::function<Tensor<T>(const Tensor<T>&, const std::vector<double>&)>;

template <typename T>
Tensor<T> denoise_batched(const DenoiserModel<T>& m, const Tensor<T>& x_noisy,
                          const std::vector<double>& sigmas) {
    if (sigmas.size() != x_noisy.dim(0)) {
        throw std::invalid_argument("denoise: sigma count != batch size");
    }
    for (double s : sigmas) {
        if (!(s > 0.0)) throw std::invalid_argument("denoise: sigma must be > 0");
    }
    const std::size_t B = x_noisy.dim(0);
    const std::size_t n = x_noisy.size() / B;
    Tensor<T> u(x_noisy.shape());
    std::vector<T> cn(B);
    for (std::size_t b = 0; b < B; ++b) {
        const T ci = static_cast<T>(c_in(sigmas[b], m.sigma_data));
        cn[b] = static_cast<T>(c_noise(sigmas[b]));
        const T* src = x_noisy.data() + b * n;
        T* dst = u.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) dst[i] = ci * src[i];
    }
    Tensor<T> o = m.net.forward(u, cn);
    Tensor<T> y(x_noisy.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const T cs = static_cast<T>(c_skip(sigmas[b], m.sigma_data));
        const T co = static_cast<T>(c_out(sigmas[b], m.sigma_data));
        const T* xb = x_noisy.data() + b * n;
        const T* ob = o.data() + b * n;
        T* yb = y.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) yb[i] = cs * xb[i] + co * ob[i];
    }
    return y;
}

template <typename T>
Tensor<T> denoise(const DenoiserModel<T>& m, const Tensor<T>& x_noisy, double sigma) {
    return denoise_batched(m, x_noisy, std::vector<double>(x_noisy.dim(0), sigma));
}

template <typename T>
BatchDenoiseFn<T> denoiser_fn(const DenoiserModel<T>& m) {
    return [&m](const Tensor<T>& x, const std::vector<double>& s) {
        return denoise_batched(m, x, s);
    };
}

// ---------------------------------------------------------------------------
// denoising score matching
// ---------------------------------------------------------------------------

enum class Weighting {
    uniform,        // sigma ~ U[eps, T], unit weight (the literal objective)
    edm_lognormal,  // ln sigma ~ N(-1.2, 1.2^2), weight (s^2+sd^2)/(s*sd)^2
};

template <typename T>
struct DsmDraws {
    std::vector<double> sigmas;
    std::vector<double> weights;
    Tensor<T> noise;
};

template <typename T>
DsmDraws<T> sample_dsm_draws(rng::Key step_key, const Tensor<T>& batch,
                             const SigmaSchedule& sched, double sigma_data,
                             Weighting w) {
    const std::size_t B = batch.dim(0);
    DsmDraws<T> d;
    d.sigmas.resize(B);
    d.weights.resize(B);
    d.noise = Tensor<T>(batch.shape());
    const std::size_t n = batch.size() / B;
    for (std::size_t b = 0; b < B; ++b) {
        rng::Stream ss(rng::with_role(step_key, rng::Role::train_sigma).with(b));
        if (w == Weighting::uniform) {
            d.sigmas[b] = sched.eps + (sched.T - sched.eps) * ss.next_uniform();
            d.weights[b] = 1.0;
        } else {
            double s = std::exp(-1.2 + 1.2 * ss.next_gaussian());
            d.sigmas[b] = s;
            d.weights[b] = (s * s + sigma_data * sigma_data) /
                           ((s * sigma_data) * (s * sigma_data));
        }
        rng::Stream zs(rng::with_role(step_key, rng::Role::train_noise).with(b));
        T* zp = d.noise.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) zp[i] = static_cast<T>(zs.next_gaussian());
    }
    return d;
}

/// Monte-Carlo value of the score-matching objective under a (possibly
/// mocked) denoiser: mean over the batch of w * ||D(x + s z, s) - x||^2.
template <typename T>
double dsm_loss_value(const BatchDenoiseFn<T>& fn, const Tensor<T>& batch,
                      rng::Key step_key, const SigmaSchedule& sched,
                      double sigma_data, Weighting w) {
    if (batch.dim(0) < 1) throw std::invalid_argument("dsm_loss: empty batch");
    DsmDraws<T> d = sample_dsm_draws(step_key, batch, sched, sigma_data, w);
    const std::size_t B = batch.dim(0);
    const std::size_t n = batch.size() / B;
    Tensor<T> x_noisy(batch.shape());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        x_noisy[i] = batch[i] + static_cast<T>(d.sigmas[i / n]) * d.noise[i];
    }
    Tensor<T> den = fn(x_noisy, d.sigmas);
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        double acc = 0.0;
        const T* dp = den.data() + b * n;
        const T* xp = batch.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) {
            double r = static_cast<double>(dp[i]) - static_cast<double>(xp[i]);
            acc += r * r;
        }
        loss += d.weights[b] * acc;
    }
    return loss / static_cast<double>(B);
}

template <typename T>
double dsm_loss_value(const DenoiserModel<T>& m, const Tensor<T>& batch,
                      rng::Key step_key, Weighting w) {
    return dsm_loss_value<T>(denoiser_fn(m), batch, step_key, m.schedule,
                             m.sigma_data, w);
}

/// Loss value plus parameter gradients (accumulated into `grads`).
template <typename T>
double dsm_loss_grad(const DenoiserModel<T>& m, const Tensor<T>& batch,
                     rng::Key step_key, Weighting w, nn::Grads<T>& grads) {
    if (batch.dim(0) < 1) throw std::invalid_argument("dsm_loss: empty batch");
    DsmDraws<T> d = sample_dsm_draws(step_key, batch, m.schedule, m.sigma_data, w);
    const std::size_t B = batch.dim(0);
    const std::size_t n = batch.size() / B;

    Tensor<T> x_noisy(batch.shape());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        x_noisy[i] = batch[i] + static_cast<T>(d.sigmas[i / n]) * d.noise[i];
    }
    Tensor<T> u(batch.shape());
    std::vector<T> cn(B);
    for (std::size_t b = 0; b < B; ++b) {
        const T ci = static_cast<T>(c_in(d.sigmas[b], m.sigma_data));
        cn[b] = static_cast<T>(c_noise(d.sigmas[b]));
        for (std::size_t i = 0; i < n; ++i) {
            u[b * n + i] = ci * x_noisy[b * n + i];
        }
    }
    nn::Tape<T> tape;
    Tensor<T> o = m.net.forward_train(u, cn, tape);

    double loss = 0.0;
    Tensor<T> dout(o.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const double cs = c_skip(d.sigmas[b], m.sigma_data);
        const double co = c_out(d.sigmas[b], m.sigma_data);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = b * n + i;
            double den = cs * static_cast<double>(x_noisy[j]) +
                         co * static_cast<double>(o[j]);
            double r = den - static_cast<double>(batch[j]);
            acc += r * r;
            dout[j] = static_cast<T>(2.0 * d.weights[b] * r * co /
                                     static_cast<double>(B));
        }
        loss += d.weights[b] * acc;
    }
    m.net.backward(dout, tape, grads);
    return loss / static_cast<double>(B);
}

// ---------------------------------------------------------------------------
// probability-flow ODE solver, Heun 2nd order
// ---------------------------------------------------------------------------

/// One solver interval from sigma_from down to sigma_to (per sample).
/// Heun corrector applied unless the sample's target is grid index 0.
template <typename T>
Tensor<T> heun_interval(const BatchDenoiseFn<T>& fn, const Tensor<T>& x,
                        const std::vector<double>& sigma_from,
                        const std::vector<double>& sigma_to,
                        const std::vector<bool>& euler_only) {
    const std::size_t B = x.dim(0);
    const std::size_t n = x.size() / B;
    Tensor<T> den = fn(x, sigma_from);
    Tensor<T> d1(x.shape());
    Tensor<T> xe(x.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const double sf = sigma_from[b], st = sigma_to[b];
        const double dt = st - sf;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = b * n + i;
            double drift = (static_cast<double>(x[j]) - static_cast<double>(den[j])) / sf;
            d1[j] = static_cast<T>(drift);
            xe[j] = static_cast<T>(static_cast<double>(x[j]) + dt * drift);
        }
    }
    bool all_euler = true;
    for (bool e : euler_only) all_euler = all_euler && e;
    if (all_euler) return xe;

    Tensor<T> den2 = fn(xe, sigma_to);
    Tensor<T> out(x.shape());
    for (std::size_t b = 0; b < B; ++b) {
        if (euler_only[b]) {
            std::copy(xe.data() + b * n, xe.data() + (b + 1) * n, out.data() + b * n);
            continue;
        }
        const double sf = sigma_from[b], st = sigma_to[b];
        const double dt = st - sf;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = b * n + i;
            double d2 = (static_cast<double>(xe[j]) - static_cast<double>(den2[j])) / st;
            out[j] = static_cast<T>(static_cast<double>(x[j]) +
                                    dt * 0.5 * (static_cast<double>(d1[j]) + d2));
        }
    }
    return out;
}

/// Integrates dx/dsigma = (x - D(x, sigma)) / sigma from t[from_idx] down to
/// t[to_idx] along the schedule grid. The last interval onto t_0 is a plain
/// Euler step; all other intervals use the 2nd-order corrector.
template <typename T>
Tensor<T> heun_solve(const BatchDenoiseFn<T>& fn, const SigmaSchedule& sched,
                     const Tensor<T>& x_start, int from_idx, int to_idx) {
    if (to_idx < 0 || from_idx > sched.N || to_idx > from_idx) {
        throw std::out_of_range("heun_solve: need 0 <= to_idx <= from_idx <= N");
    }
    const std::size_t B = x_start.dim(0);
    Tensor<T> x = x_start;
    for (int i = from_idx; i > to_idx; --i) {
        std::vector<double> sf(B, sched.t[static_cast<std::size_t>(i)]);
        std::vector<double> st(B, sched.t[static_cast<std::size_t>(i) - 1]);
        std::vector<bool> euler(B, i - 1 == 0);
        x = heun_interval(fn, x, sf, st, euler);
    }
    return x;
}

template <typename T>
Tensor<T> heun_solve(const DenoiserModel<T>& m, const Tensor<T>& x_start, int from_idx,
                     int to_idx) {
    return heun_solve<T>(denoiser_fn(m), m.schedule, x_start, from_idx, to_idx);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct DiffusionTrainConfig {
    net::UNetConfig unet;
    int schedule_N = 17;
    double schedule_eps = 0.002;
    double schedule_T = 80.0;
    double schedule_rho = 7.0;
    double sigma_data = 0.5;
    int steps = 2000;
    int batch_size = 16;
    double lr = 1e-4;
    Weighting weighting = Weighting::edm_lognormal;
    std::uint64_t seed = 0;
    int log_every = 0;  // 0 = silent
};

struct TrainingDiverged : std::runtime_error {
    int step;
    explicit TrainingDiverged(int s, double loss)
        : std::runtime_error("training diverged at step " + std::to_string(s) +
                             " (loss " + std::to_string(loss) + ")"),
          step(s) {}
};

template <typename T>
Tensor<T> gather_minibatch(const Tensor<T>& data, rng::Key step_key, int batch_size) {
    const std::size_t B = data.dim(0);
    const std::size_t n = data.size() / B;
    Tensor<T> mb({static_cast<std::size_t>(batch_size), data.dim(1), data.dim(2),
                  data.dim(3)});
    rng::Stream s(rng::with_role(step_key, rng::Role::train_batch));
    for (int k = 0; k < batch_size; ++k) {
        std::size_t idx = s.next_below(B);
        std::copy(data.data() + idx * n, data.data() + (idx + 1) * n,
                  mb.data() + static_cast<std::size_t>(k) * n);
    }
    return mb;
}

inline void guard_divergence(double loss, int step) {
    if (!std::isfinite(loss) || loss > 1e6) throw TrainingDiverged(step, loss);
}

DenoiserModel<float> train_diffusion(const DiffusionTrainConfig& cfg,
                                     const data::ImageBatch& data);

}  // namespace pr::diffusion
