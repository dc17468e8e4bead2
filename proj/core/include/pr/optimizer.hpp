#pragma once

#include <cmath>

#include "pr/nn.hpp"

namespace pr::net {

/// Adam with bias correction; state tensors mirror the parameter store.
template <typename T>
class Adam {
public:
    explicit Adam(const nn::ParamStore<T>& ps, double lr = 1e-4, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& v : ps.values) {
            m_.emplace_back(v.shape());
            v_.emplace_back(v.shape());
        }
    }

    void step(nn::ParamStore<T>& ps, const nn::Grads<T>& g) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < ps.values.size(); ++i) {
            auto& p = ps.values[i];
            auto& m = m_[i];
            auto& v = v_[i];
            const auto& gr = g.values[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                double gj = static_cast<double>(gr[j]);
                double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * gj;
                double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * gj * gj;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                p[j] -= static_cast<T>(lr_ * (mj / bc1) / (std::sqrt(vj / bc2) + eps_));
            }
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace pr::net
