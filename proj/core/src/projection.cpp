#include "pr/projection.hpp"

namespace pr::proj {

Projector make_projector(Backend backend, const diffusion::DenoiserModel<float>* denoiser,
                         const consistency::ConsistencyModel<float>* cm) {
    switch (backend) {
        case Backend::single_step:
            if (!denoiser) {
                throw std::invalid_argument("projector: single_step needs a denoiser");
            }
            return [denoiser](const Tensor<float>& x, int i, const Tensor<float>& z) {
                return project_single(*denoiser, x, i, z);
            };
        case Backend::cm_full:
            if (!cm) {
                throw std::invalid_argument("projector: cm_full needs a consistency model");
            }
            return [cm](const Tensor<float>& x, int i, const Tensor<float>& z) {
                return project_full_cm(*cm, x, i, z);
            };
        case Backend::ode_full:
            if (!denoiser) {
                throw std::invalid_argument("projector: ode_full needs a denoiser");
            }
            return [denoiser](const Tensor<float>& x, int i, const Tensor<float>& z) {
                return project_full_ode(*denoiser, x, i, z);
            };
    }
    throw std::logic_error("projector: unknown backend");
}

Tensor<float> run_projection(const ProjectionRequest& req,
                             const diffusion::DenoiserModel<float>* denoiser,
                             const consistency::ConsistencyModel<float>* cm,
                             const Tensor<float>& x, rng::Key fresh_key) {
    Projector p = make_projector(req.backend, denoiser, cm);
    if (req.z) {
        return p(x, req.timestep_index, *req.z);
    }
    Tensor<float> z = rng::gaussian_like_shape<float>(
        rng::with_role(fresh_key, rng::Role::projection), x.shape());
    return p(x, req.timestep_index, z);
}

}  // namespace pr::proj
