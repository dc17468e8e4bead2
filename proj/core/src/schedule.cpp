#include "pr/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pr::diffusion {

SigmaSchedule karras_schedule(int N, double eps, double T, double rho) {
    if (N < 1) throw std::invalid_argument("karras_schedule: N must be >= 1");
    if (!(eps > 0.0) || !(eps < T)) {
        throw std::invalid_argument("karras_schedule: need 0 < eps < T");
    }
    if (!(rho >= 1.0)) throw std::invalid_argument("karras_schedule: rho must be >= 1");

    SigmaSchedule s;
    s.N = N;
    s.eps = eps;
    s.T = T;
    s.rho = rho;
    s.t.resize(static_cast<std::size_t>(N) + 1);
    const double lo = std::pow(eps, 1.0 / rho);
    const double hi = std::pow(T, 1.0 / rho);
    for (int i = 1; i < N; ++i) {
        double u = static_cast<double>(i) / N;
        s.t[static_cast<std::size_t>(i)] = std::pow(lo + u * (hi - lo), rho);
    }
    s.t.front() = eps;
    s.t.back() = T;
    for (int i = 0; i < N; ++i) {
        if (!(s.t[static_cast<std::size_t>(i)] < s.t[static_cast<std::size_t>(i) + 1])) {
            throw std::runtime_error("karras_schedule: grid not strictly increasing at i=" +
                                     std::to_string(i));
        }
    }
    return s;
}

SigmaSchedule default_schedule() { return karras_schedule(17, 0.002, 80.0, 7.0); }

}  // namespace pr::diffusion
