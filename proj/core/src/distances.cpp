#include "pr/distances.hpp"

#include <filesystem>

#include "pr/checkpoint.hpp"
#include "pr/container.hpp"

namespace pr::dist {
namespace {

// population moments over a 7x7 box at (i0, j0) of a single-channel image
struct WindowMoments {
    double mx, my, vx, vy, cxy;
};

WindowMoments window_moments(const std::vector<double>& gx, const std::vector<double>& gy,
                             std::size_t W, std::size_t i0, std::size_t j0) {
    constexpr int K = 7;
    constexpr double inv = 1.0 / (K * K);
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int di = 0; di < K; ++di) {
        const double* rx = gx.data() + (i0 + di) * W + j0;
        const double* ry = gy.data() + (i0 + di) * W + j0;
        for (int dj = 0; dj < K; ++dj) {
            sx += rx[dj];
            sy += ry[dj];
            sxx += rx[dj] * rx[dj];
            syy += ry[dj] * ry[dj];
            sxy += rx[dj] * ry[dj];
        }
    }
    WindowMoments m;
    m.mx = sx * inv;
    m.my = sy * inv;
    m.vx = sxx * inv - m.mx * m.mx;
    m.vy = syy * inv - m.my * m.my;
    m.cxy = sxy * inv - m.mx * m.my;
    return m;
}

}  // namespace

std::vector<double> dist_neg_ssim(const Tensor<float>& x, const Tensor<float>& y) {
    check_same_shape(x, y, "dist_neg_ssim");
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    constexpr int K = 7;
    if (H < K || W < K) {
        throw std::invalid_argument("dist_neg_ssim: image smaller than the 7x7 window");
    }
    constexpr double L = 2.0;  // pixel range [-1, 1]
    constexpr double C1 = (0.01 * L) * (0.01 * L);
    constexpr double C2 = (0.03 * L) * (0.03 * L);

    std::vector<double> out(B);
    std::vector<double> gx(H * W), gy(H * W);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < H * W; ++i) {
            double ax = 0, ay = 0;
            for (std::size_t c = 0; c < C; ++c) {
                ax += x[(b * C + c) * H * W + i];
                ay += y[(b * C + c) * H * W + i];
            }
            gx[i] = ax / static_cast<double>(C);
            gy[i] = ay / static_cast<double>(C);
        }
        double acc = 0.0;
        const std::size_t nh = H - K + 1, nw = W - K + 1;
        for (std::size_t i0 = 0; i0 < nh; ++i0) {
            for (std::size_t j0 = 0; j0 < nw; ++j0) {
                WindowMoments m = window_moments(gx, gy, W, i0, j0);
                double num = (2.0 * m.mx * m.my + C1) * (2.0 * m.cxy + C2);
                double den = (m.mx * m.mx + m.my * m.my + C1) * (m.vx + m.vy + C2);
                acc += num / den;
            }
        }
        out[b] = -(acc / static_cast<double>(nh * nw));
    }
    return out;
}

namespace {

template <typename T>
double cosine_sq_impl(std::span<const T> u, std::span<const T> v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("cosine_sq_distance: length mismatch");
    }
    double nu = 0, nv = 0, dot = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = static_cast<double>(u[i]);
        const double b = static_cast<double>(v[i]);
        nu += a * a;
        nv += b * b;
        dot += a * b;
    }
    if (nu == 0.0 || nv == 0.0) {
        throw std::invalid_argument("cosine_sq_distance: zero vector");
    }
    double c = dot / std::sqrt(nu * nv);
    c = std::clamp(c, -1.0, 1.0);
    return 2.0 - 2.0 * c;
}

}  // namespace

double cosine_sq_distance(std::span<const float> u, std::span<const float> v) {
    return cosine_sq_impl(u, v);
}
double cosine_sq_distance(std::span<const double> u, std::span<const double> v) {
    return cosine_sq_impl(u, v);
}

std::vector<double> dist_unet(const consistency::ConsistencyModel<float>& m,
                              const Tensor<float>& x, const Tensor<float>& y,
                              int gamma, int n_z, rng::Key key) {
    check_same_shape(x, y, "dist_unet");
    if (gamma < 0 || gamma > m.schedule.N) {
        throw std::out_of_range("dist_unet: gamma outside the schedule");
    }
    if (n_z < 1) throw std::invalid_argument("dist_unet: n_z must be >= 1");
    const double t_gamma = m.schedule.t[static_cast<std::size_t>(gamma)];
    const std::size_t B = x.dim(0);
    const std::size_t n = x.size() / B;
    std::vector<double> out(B, 0.0);

    Tensor<float> xn(x.shape()), yn(y.shape());
    std::vector<float> col_x, col_y;
    for (int draw = 0; draw < n_z; ++draw) {
        rng::Stream zs(rng::with_role(key, rng::Role::dist_unet).with(draw));
        for (std::size_t i = 0; i < x.size(); ++i) {
            float z = static_cast<float>(zs.next_gaussian());
            xn[i] = x[i] + static_cast<float>(t_gamma) * z;
            yn[i] = y[i] + static_cast<float>(t_gamma) * z;
        }
        net::FeatureMaps<float> fx, fy;
        std::vector<double> tx(B, t_gamma);
        consistency_apply(m, xn, tx, &fx);
        consistency_apply(m, yn, tx, &fy);
        for (std::size_t l = 0; l < fx.levels.size(); ++l) {
            const std::size_t C = fx.levels[l].dim(1);
            const std::size_t hw = fx.levels[l].dim(2) * fx.levels[l].dim(3);
            col_x.resize(C);
            col_y.resize(C);
            for (std::size_t b = 0; b < B; ++b) {
                const float* fxp = fx.levels[l].data() + b * C * hw;
                const float* fyp = fy.levels[l].data() + b * C * hw;
                double acc = 0.0;
                for (std::size_t p = 0; p < hw; ++p) {
                    for (std::size_t c = 0; c < C; ++c) {
                        col_x[c] = fxp[c * hw + p];
                        col_y[c] = fyp[c * hw + p];
                    }
                    try {
                        acc += cosine_sq_distance(std::span<const float>(col_x),
                                                  std::span<const float>(col_y));
                    } catch (const std::invalid_argument&) {
                        throw std::runtime_error(
                            "dist_unet: zero feature vector at level " +
                            std::to_string(l) + ", position (" +
                            std::to_string(p / fx.levels[l].dim(3)) + "," +
                            std::to_string(p % fx.levels[l].dim(3)) + ")");
                    }
                }
                out[b] += acc / static_cast<double>(hw);
            }
        }
    }
    for (double& v : out) v /= static_cast<double>(n_z);
    (void)n;
    return out;
}

DistanceFn make_distance(const std::string& name, const DistanceContext& ctx) {
    if (name == "l2") {
        return [](const Tensor<float>& x, const Tensor<float>& y) {
            return dist_l2(x, y);
        };
    }
    if (name == "ssim") {
        return [](const Tensor<float>& x, const Tensor<float>& y) {
            std::vector<double> v = dist_neg_ssim(x, y);
            for (double& s : v) s += 1.0;  // 1 - SSIM, keeps d(x,x) = 0
            return v;
        };
    }
    if (name == "perceptual") {
        if (!ctx.extractor) {
            throw std::invalid_argument("make_distance: perceptual needs an extractor");
        }
        const FeatureExtractor<float>* ex = ctx.extractor;
        return [ex](const Tensor<float>& x, const Tensor<float>& y) {
            return dist_feature_perceptual(*ex, x, y);
        };
    }
    if (name == "unet") {
        if (!ctx.cm) {
            throw std::invalid_argument("make_distance: unet needs a consistency model");
        }
        const consistency::ConsistencyModel<float>* cm = ctx.cm;
        const int gamma = ctx.unet_gamma, nz = ctx.unet_n_z;
        const rng::Key key = ctx.unet_key;
        return [cm, gamma, nz, key](const Tensor<float>& x, const Tensor<float>& y) {
            return dist_unet(*cm, x, y, gamma, nz, key);
        };
    }
    throw std::invalid_argument("make_distance: unknown metric \"" + name +
                                "\" (expected l2|ssim|perceptual|unet)");
}

void save_extractor(const FeatureExtractor<float>& ex, const std::string& dir) {
    std::filesystem::create_directories(dir);
    ckpt::Manifest mf;
    mf.fields.emplace_back("kind", "extractor");
    mf.fields.emplace_back("in_channels", std::to_string(ex.in_channels()));
    mf.fields.emplace_back("resolution", std::to_string(ex.resolution()));
    mf.fields.emplace_back("seed", std::to_string(ex.seed()));
    nn::ParamStore<float> all = ex.params();
    for (std::size_t l = 0; l < ex.layer_weights().size(); ++l) {
        all.names.push_back("layer" + std::to_string(l) + ".channel_weights");
        all.values.push_back(ex.layer_weights()[l]);
    }
    ckpt::save_param_store(all, mf, dir);
    ckpt::write_manifest(mf, dir);
}

FeatureExtractor<float> load_extractor(const std::string& dir) {
    ckpt::Manifest mf = ckpt::read_manifest(dir);
    if (mf.get("kind") != "extractor") {
        throw std::runtime_error("load_extractor: checkpoint kind is " + mf.get("kind"));
    }
    FeatureExtractor<float> ex(static_cast<int>(mf.get_long("in_channels")),
                               static_cast<int>(mf.get_long("resolution")),
                               static_cast<std::uint64_t>(mf.get_long("seed")));
    nn::ParamStore<float> all = ex.params();
    for (std::size_t l = 0; l < ex.layer_weights().size(); ++l) {
        all.names.push_back("layer" + std::to_string(l) + ".channel_weights");
        all.values.push_back(ex.layer_weights()[l]);
    }
    ckpt::load_param_store(all, mf, dir);
    const std::size_t n_core = ex.params().values.size();
    for (std::size_t i = 0; i < n_core; ++i) ex.params().values[i] = all.values[i];
    for (std::size_t l = 0; l < ex.layer_weights().size(); ++l) {
        ex.layer_weights()[l] = all.values[n_core + l];
    }
    return ex;
}

}  // namespace pr::dist
