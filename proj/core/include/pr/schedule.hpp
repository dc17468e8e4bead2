#pragma once

#include <vector>

namespace pr::diffusion {

/// Discretized noise levels eps = t_0 < t_1 < ... < t_N = T.
struct SigmaSchedule {
    std::vector<double> t;
    double eps = 0.0;
    double T = 0.0;
    double rho = 0.0;
    int N = 0;
};

/// t_i = (eps^(1/rho) + (i/N) * (T^(1/rho) - eps^(1/rho)))^rho, endpoints
/// pinned exactly. Karras-style ascending grid.
SigmaSchedule karras_schedule(int N, double eps, double T, double rho);

/// Schedule used throughout unless configured otherwise: N=17, eps=0.002,
/// T=80, rho=7.
SigmaSchedule default_schedule();

}  // namespace pr::diffusion
