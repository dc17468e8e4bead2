#pragma once

#include <memory>
#include <optional>

#include "pr/diffusion.hpp"

namespace pr::consistency {

using diffusion::SigmaSchedule;

// Boundary-exact parametrization: c_skip(eps) = 1 and c_out(eps) = 0
// by construction, so f(x, eps) = x for any network.
inline double c_skip_t(double t, double eps, double sigma_data) {
    const double d = t - eps;
    return sigma_data * sigma_data / (d * d + sigma_data * sigma_data);
}
inline double c_out_t(double t, double eps, double sigma_data) {
    return sigma_data * (t - eps) / std::sqrt(t * t + sigma_data * sigma_data);
}

template <typename T>
struct ConsistencyModel {
    net::UNet<T> net;
    double sigma_data = 0.5;
    SigmaSchedule schedule;

    ConsistencyModel(net::UNetConfig cfg, SigmaSchedule sched, double sd = 0.5)
        : net(std::move(cfg)), sigma_data(sd), schedule(std::move(sched)) {
        net.init_params();
    }

    double eps() const { return schedule.eps; }
};

template <typename T>
Tensor<T> consistency_apply(const ConsistencyModel<T>& m, const Tensor<T>& x_noisy,
                            const std::vector<double>& ts,
                            net::FeatureMaps<T>* taps = nullptr) {
    if (ts.size() != x_noisy.dim(0)) {
        throw std::invalid_argument("consistency_apply: t count != batch size");
    }
    const double eps = m.eps();
    for (double t : ts) {
        if (t < eps) {
            throw std::invalid_argument("consistency_apply: t below boundary eps");
        }
    }
    const std::size_t B = x_noisy.dim(0);
    const std::size_t n = x_noisy.size() / B;
    Tensor<T> u(x_noisy.shape());
    std::vector<T> cn(B);
    for (std::size_t b = 0; b < B; ++b) {
        const T ci = static_cast<T>(diffusion::c_in(ts[b], m.sigma_data));
        cn[b] = static_cast<T>(diffusion::c_noise(ts[b]));
        for (std::size_t i = 0; i < n; ++i) u[b * n + i] = ci * x_noisy[b * n + i];
    }
    Tensor<T> o = m.net.forward(u, cn, taps);
    Tensor<T> y(x_noisy.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const T cs = static_cast<T>(c_skip_t(ts[b], eps, m.sigma_data));
        const T co = static_cast<T>(c_out_t(ts[b], eps, m.sigma_data));
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = b * n + i;
            y[j] = cs * x_noisy[j] + co * o[j];
        }
    }
    return y;
}

/// f(x_t, t): one-evaluation map back to the trajectory start.
template <typename T>
Tensor<T> consistency_forward(const ConsistencyModel<T>& m, const Tensor<T>& x_noisy,
                              double t) {
    return consistency_apply(m, x_noisy, std::vector<double>(x_noisy.dim(0), t));
}

template <typename T>
diffusion::BatchDenoiseFn<T> consistency_fn(const ConsistencyModel<T>& m) {
    return [&m](const Tensor<T>& x, const std::vector<double>& ts) {
        return consistency_apply(m, x, ts);
    };
}

// ---------------------------------------------------------------------------
// training metrics (distance + gradient in its second argument)
// ---------------------------------------------------------------------------

template <typename T>
struct TrainMetric {
    virtual ~TrainMetric() = default;
    /// Sum over the batch of the per-sample distance d(a_b, b_b).
    virtual double value(const Tensor<T>& a, const Tensor<T>& b) const = 0;
    /// d/d(b) of value(a, b).
    virtual Tensor<T> grad_second(const Tensor<T>& a, const Tensor<T>& b) const = 0;
};

template <typename T>
struct SquaredL2Metric final : TrainMetric<T> {
    double value(const Tensor<T>& a, const Tensor<T>& b) const override {
        check_same_shape(a, b, "SquaredL2Metric");
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double r = static_cast<double>(b[i]) - static_cast<double>(a[i]);
            s += r * r;
        }
        return s;
    }
    Tensor<T> grad_second(const Tensor<T>& a, const Tensor<T>& b) const override {
        Tensor<T> g(b.shape());
        for (std::size_t i = 0; i < b.size(); ++i) g[i] = T{2} * (b[i] - a[i]);
        return g;
    }
};

struct ZeroMetricTag {};  // for tests: d == 0 everywhere

template <typename T>
struct ZeroMetric final : TrainMetric<T> {
    double value(const Tensor<T>&, const Tensor<T>&) const override { return 0.0; }
    Tensor<T> grad_second(const Tensor<T>&, const Tensor<T>& b) const override {
        return Tensor<T>(b.shape());
    }
};

// ---------------------------------------------------------------------------
// consistency training / distillation losses
// ---------------------------------------------------------------------------

template <typename T>
struct CmDraws {
    std::vector<int> idx;  // i_b uniform in {0..N-1}
    Tensor<T> noise;       // shared z per sample across both noise levels
};

template <typename T>
CmDraws<T> sample_cm_draws(rng::Key step_key, const Tensor<T>& batch, int N) {
    const std::size_t B = batch.dim(0);
    const std::size_t n = batch.size() / B;
    CmDraws<T> d;
    d.idx.resize(B);
    d.noise = Tensor<T>(batch.shape());
    for (std::size_t b = 0; b < B; ++b) {
        rng::Stream is(rng::with_role(step_key, rng::Role::train_index).with(b));
        d.idx[b] = static_cast<int>(is.next_below(static_cast<std::uint64_t>(N)));
        rng::Stream zs(rng::with_role(step_key, rng::Role::train_noise).with(b));
        T* zp = d.noise.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) zp[i] = static_cast<T>(zs.next_gaussian());
    }
    return d;
}

namespace detail {

// Adjacent-level inputs for the consistency objective. The target branch sees
// t_i (optionally pushed there by one teacher solver step from t_{i+1}); the
// online branch sees t_{i+1}. The same z is used on both sides.
template <typename T>
struct CmInputs {
    Tensor<T> x_target;
    Tensor<T> x_online;
    std::vector<double> t_lo, t_hi;
};

template <typename T>
CmInputs<T> make_cm_inputs(const Tensor<T>& batch, const CmDraws<T>& d,
                           const SigmaSchedule& sched,
                           const diffusion::BatchDenoiseFn<T>* teacher) {
    const std::size_t B = batch.dim(0);
    const std::size_t n = batch.size() / B;
    CmInputs<T> in;
    in.t_lo.resize(B);
    in.t_hi.resize(B);
    in.x_online = Tensor<T>(batch.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const int i = d.idx[b];
        in.t_lo[b] = sched.t[static_cast<std::size_t>(i)];
        in.t_hi[b] = sched.t[static_cast<std::size_t>(i) + 1];
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t j = b * n + k;
            in.x_online[j] = batch[j] + static_cast<T>(in.t_hi[b]) * d.noise[j];
        }
    }
    if (teacher) {
        std::vector<bool> euler(B);
        for (std::size_t b = 0; b < B; ++b) euler[b] = (d.idx[b] == 0);
        in.x_target = diffusion::heun_interval(*teacher, in.x_online, in.t_hi,
                                               in.t_lo, euler);
    } else {
        in.x_target = Tensor<T>(batch.shape());
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t j = b * n + k;
                in.x_target[j] = batch[j] + static_cast<T>(in.t_lo[b]) * d.noise[j];
            }
        }
    }
    return in;
}

template <typename T>
double consistency_loss_value(const diffusion::BatchDenoiseFn<T>& online,
                              const diffusion::BatchDenoiseFn<T>& target,
                              const Tensor<T>& batch, const SigmaSchedule& sched,
                              const TrainMetric<T>& metric, rng::Key step_key,
                              const diffusion::BatchDenoiseFn<T>* teacher) {
    if (batch.dim(0) < 1) throw std::invalid_argument("consistency loss: empty batch");
    CmDraws<T> d = sample_cm_draws(step_key, batch, sched.N);
    CmInputs<T> in = make_cm_inputs(batch, d, sched, teacher);
    Tensor<T> a = target(in.x_target, in.t_lo);
    Tensor<T> b = online(in.x_online, in.t_hi);
    return metric.value(a, b) / static_cast<double>(batch.dim(0));
}

template <typename T>
double consistency_loss_grad(const ConsistencyModel<T>& online,
                             const ConsistencyModel<T>& target, const Tensor<T>& batch,
                             const TrainMetric<T>& metric, rng::Key step_key,
                             const diffusion::BatchDenoiseFn<T>* teacher,
                             nn::Grads<T>& grads) {
    if (batch.dim(0) < 1) throw std::invalid_argument("consistency loss: empty batch");
    const SigmaSchedule& sched = online.schedule;
    const std::size_t B = batch.dim(0);
    const std::size_t n = batch.size() / B;
    CmDraws<T> d = sample_cm_draws(step_key, batch, sched.N);
    CmInputs<T> in = make_cm_inputs(batch, d, sched, teacher);

    // target branch: EMA parameters, no gradient flows here
    Tensor<T> a = consistency_apply(target, in.x_target, in.t_lo);

    // online branch with tape
    const double eps = online.eps();
    Tensor<T> u(batch.shape());
    std::vector<T> cn(B);
    for (std::size_t b = 0; b < B; ++b) {
        const T ci = static_cast<T>(diffusion::c_in(in.t_hi[b], online.sigma_data));
        cn[b] = static_cast<T>(diffusion::c_noise(in.t_hi[b]));
        for (std::size_t k = 0; k < n; ++k) {
            u[b * n + k] = ci * in.x_online[b * n + k];
        }
    }
    nn::Tape<T> tape;
    Tensor<T> o = online.net.forward_train(u, cn, tape);
    Tensor<T> bval(batch.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const T cs = static_cast<T>(c_skip_t(in.t_hi[b], eps, online.sigma_data));
        const T co = static_cast<T>(c_out_t(in.t_hi[b], eps, online.sigma_data));
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t j = b * n + k;
            bval[j] = cs * in.x_online[j] + co * o[j];
        }
    }
    const double loss = metric.value(a, bval) / static_cast<double>(B);
    Tensor<T> db = metric.grad_second(a, bval);
    Tensor<T> dout(o.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const T co = static_cast<T>(c_out_t(in.t_hi[b], eps, online.sigma_data));
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t j = b * n + k;
            dout[j] = db[j] * co / static_cast<T>(B);
        }
    }
    online.net.backward(dout, tape, grads);
    return loss;
}

}  // namespace detail

/// Consistency-training objective: d(f_target(x + t_i z, t_i),
/// f_online(x + t_{i+1} z, t_{i+1})), i uniform, same z on both sides.
template <typename T>
double cm_loss_value(const diffusion::BatchDenoiseFn<T>& online,
                     const diffusion::BatchDenoiseFn<T>& target, const Tensor<T>& batch,
                     const SigmaSchedule& sched, const TrainMetric<T>& metric,
                     rng::Key step_key) {
    return detail::consistency_loss_value(
        online, target, batch, sched, metric, step_key,
        static_cast<const diffusion::BatchDenoiseFn<T>*>(nullptr));
}

template <typename T>
double cm_loss_grad(const ConsistencyModel<T>& online, const ConsistencyModel<T>& target,
                    const Tensor<T>& batch, const TrainMetric<T>& metric,
                    rng::Key step_key, nn::Grads<T>& grads) {
    return detail::consistency_loss_grad(
        online, target, batch, metric, step_key,
        static_cast<const diffusion::BatchDenoiseFn<T>*>(nullptr), grads);
}

/// Distillation objective: the target input at t_i is one teacher solver step
/// of (x + t_{i+1} z) down from t_{i+1}.
template <typename T>
double cd_loss_value(const diffusion::BatchDenoiseFn<T>& online,
                     const diffusion::BatchDenoiseFn<T>& target, const Tensor<T>& batch,
                     const SigmaSchedule& sched, const TrainMetric<T>& metric,
                     rng::Key step_key, const diffusion::BatchDenoiseFn<T>& teacher) {
    return detail::consistency_loss_value(online, target, batch, sched, metric,
                                          step_key, &teacher);
}

template <typename T>
double cd_loss_grad(const ConsistencyModel<T>& online, const ConsistencyModel<T>& target,
                    const Tensor<T>& batch, const TrainMetric<T>& metric,
                    rng::Key step_key, const diffusion::DenoiserModel<T>& teacher,
                    nn::Grads<T>& grads) {
    diffusion::BatchDenoiseFn<T> tfn = diffusion::denoiser_fn(teacher);
    return detail::consistency_loss_grad(online, target, batch, metric, step_key,
                                         &tfn, grads);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

enum class TrainDistance { l2, perceptual };

struct ConsistencyTrainConfig {
    net::UNetConfig unet;
    int schedule_N = 17;
    double schedule_eps = 0.002;
    double schedule_T = 80.0;
    double schedule_rho = 7.0;
    double sigma_data = 0.5;
    int steps = 4000;
    int batch_size = 16;
    double lr = 1e-4;
    double ema_mu = 0.99;
    TrainDistance distance = TrainDistance::l2;
    std::uint64_t seed = 0;
    int log_every = 0;
};

/// Consistency training (no teacher) or consistency distillation (teacher
/// given). The EMA target copy is updated every step and is the returned
/// model.
ConsistencyModel<float> train_consistency(
    const ConsistencyTrainConfig& cfg, const data::ImageBatch& data,
    const diffusion::DenoiserModel<float>* teacher);

}  // namespace pr::consistency
