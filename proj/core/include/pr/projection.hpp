#pragma once

#include <functional>
#include <optional>

#include "pr/consistency.hpp"
#include "pr/diffusion.hpp"

namespace pr::proj {

enum class Backend { single_step, cm_full, ode_full };

/// One projection request: diffuse to schedule level i with noise z (or a
/// fresh keyed draw when z is absent) and map back with the chosen backend.
struct ProjectionRequest {
    int timestep_index = 0;
    std::optional<Tensor<float>> z;  // nullopt = fresh draw, keyed by the caller
    Backend backend = Backend::cm_full;
};

/// Batched projector: (clean x, level i, noise z shaped like x) -> image.
/// The three backends below and the mocks in tests all fit this signature.
using Projector =
    std::function<Tensor<float>(const Tensor<float>&, int, const Tensor<float>&)>;

namespace detail {

template <typename T>
Tensor<T> add_noise(const Tensor<T>& x, const Tensor<T>& z, double t) {
    check_same_shape(x, z, "projection");
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] + static_cast<T>(t) * z[i];
    }
    return out;
}

inline void check_index(int i, int N) {
    if (i < 0 || i > N) {
        throw std::out_of_range("projection: timestep index " + std::to_string(i) +
                                " outside [0, " + std::to_string(N) + "]");
    }
}

}  // namespace detail

/// Single-step projection: D(x + t_i z, t_i).
template <typename T>
Tensor<T> project_single(const diffusion::DenoiserModel<T>& m, const Tensor<T>& x,
                         int i, const Tensor<T>& z) {
    detail::check_index(i, m.schedule.N);
    const double t = m.schedule.t[static_cast<std::size_t>(i)];
    return denoise_batched(m, detail::add_noise(x, z, t),
                           std::vector<double>(x.dim(0), t));
}

/// Full-step projection with the consistency model: f(x + t_i z, t_i).
template <typename T>
Tensor<T> project_full_cm(const consistency::ConsistencyModel<T>& m, const Tensor<T>& x,
                          int i, const Tensor<T>& z) {
    detail::check_index(i, m.schedule.N);
    const double t = m.schedule.t[static_cast<std::size_t>(i)];
    return consistency_apply(m, detail::add_noise(x, z, t),
                             std::vector<double>(x.dim(0), t));
}

/// Full-step projection by solving the reverse ODE from level i down to 0.
template <typename T>
Tensor<T> project_full_ode(const diffusion::DenoiserModel<T>& m, const Tensor<T>& x,
                           int i, const Tensor<T>& z) {
    detail::check_index(i, m.schedule.N);
    const double t = m.schedule.t[static_cast<std::size_t>(i)];
    return heun_solve(m, detail::add_noise(x, z, t), i, 0);
}

// fn-based variants for mocked models
template <typename T>
Tensor<T> project_single(const diffusion::BatchDenoiseFn<T>& fn,
                         const diffusion::SigmaSchedule& sched, const Tensor<T>& x,
                         int i, const Tensor<T>& z) {
    detail::check_index(i, sched.N);
    const double t = sched.t[static_cast<std::size_t>(i)];
    return fn(detail::add_noise(x, z, t), std::vector<double>(x.dim(0), t));
}

template <typename T>
Tensor<T> project_full_ode(const diffusion::BatchDenoiseFn<T>& fn,
                           const diffusion::SigmaSchedule& sched, const Tensor<T>& x,
                           int i, const Tensor<T>& z) {
    detail::check_index(i, sched.N);
    const double t = sched.t[static_cast<std::size_t>(i)];
    return heun_solve(fn, sched, detail::add_noise(x, z, t), i, 0);
}

Projector make_projector(Backend backend, const diffusion::DenoiserModel<float>* denoiser,
                         const consistency::ConsistencyModel<float>* cm);

/// Dispatches a ProjectionRequest; fresh noise is keyed by `fresh_key`.
Tensor<float> run_projection(const ProjectionRequest& req,
                             const diffusion::DenoiserModel<float>* denoiser,
                             const consistency::ConsistencyModel<float>* cm,
                             const Tensor<float>& x, rng::Key fresh_key);

}  // namespace pr::proj
