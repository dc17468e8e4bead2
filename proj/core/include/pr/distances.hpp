#pragma once

#include <functional>
#include <span>
#include <string>

#include "pr/consistency.hpp"
#include "pr/nn.hpp"
#include "pr/rng.hpp"

namespace pr::dist {

/// Per-sample squared L2: sum over all pixels of (x - y)^2.
template <typename T>
std::vector<double> dist_l2(const Tensor<T>& x, const Tensor<T>& y) {
    check_same_shape(x, y, "dist_l2");
    const std::size_t B = x.dim(0);
    const std::size_t n = x.size() / B;
    std::vector<double> out(B);
    for (std::size_t b = 0; b < B; ++b) {
        double s = 0.0;
        const T* xp = x.data() + b * n;
        const T* yp = y.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) {
            double r = static_cast<double>(xp[i]) - static_cast<double>(yp[i]);
            s += r * r;
        }
        out[b] = s;
    }
    return out;
}

/// Negative SSIM with a uniform 7x7 window over valid positions,
/// K1 = 0.01, K2 = 0.03, data range 2; RGB reduced by channel mean.
std::vector<double> dist_neg_ssim(const Tensor<float>& x, const Tensor<float>& y);

/// ||u/|u| - v/|v|||^2 = 2 - 2 cos(u, v), clamped into [0, 4].
double cosine_sq_distance(std::span<const float> u, std::span<const float> v);
double cosine_sq_distance(std::span<const double> u, std::span<const double> v);

// ---------------------------------------------------------------------------
// frozen-feature perceptual distance
// ---------------------------------------------------------------------------

/// Three-scale frozen convolutional feature extractor. Weights are either
/// randomly initialized (keyed by seed) or loaded from a checkpoint, never
/// trained here. Features are channel-unit-normalized per spatial position
/// and compared with per-layer channel weights.
template <typename T>
class FeatureExtractor {
public:
    static constexpr int kLayerChannels[3] = {16, 32, 64};

    FeatureExtractor(int in_channels, int resolution, std::uint64_t seed)
        : in_channels_(in_channels), resolution_(resolution), seed_(seed) {
        if (resolution % 4 != 0 || resolution < 8) {
            throw std::invalid_argument(
                "FeatureExtractor: resolution must be a multiple of 4 and >= 8");
        }
        int cin = in_channels;
        for (int l = 0; l < 3; ++l) {
            nn::ConvRef cv;
            cv.k = 3;
            cv.w = ps_.add("layer" + std::to_string(l) + ".weight",
                           {static_cast<std::size_t>(kLayerChannels[l]),
                            static_cast<std::size_t>(cin), 3, 3});
            cv.b = ps_.add("layer" + std::to_string(l) + ".bias",
                           {static_cast<std::size_t>(kLayerChannels[l])});
            convs_[l] = cv;
            weights_.push_back(Tensor<T>::full(
                {static_cast<std::size_t>(kLayerChannels[l])},
                static_cast<T>(1.0 / kLayerChannels[l])));
            cin = kLayerChannels[l];
        }
        rng::Key base = rng::with_role(rng::key(seed), rng::Role::perceptual_init);
        for (std::size_t i = 0; i < ps_.values.size(); ++i) {
            auto& v = ps_.values[i];
            if (ps_.names[i].ends_with(".bias")) {
                std::fill(v.begin(), v.end(), T{0});
            } else {
                double std = std::sqrt(2.0 / static_cast<double>(v.size() / v.dim(0)));
                rng::Stream s(base.with(i));
                s.fill_gaussian(v, std);
            }
        }
    }

    int in_channels() const { return in_channels_; }
    int resolution() const { return resolution_; }
    std::uint64_t seed() const { return seed_; }
    nn::ParamStore<T>& params() { return ps_; }
    const nn::ParamStore<T>& params() const { return ps_; }
    std::vector<Tensor<T>>& layer_weights() { return weights_; }
    const std::vector<Tensor<T>>& layer_weights() const { return weights_; }

    void check_input(const Tensor<T>& x) const {
        if (x.ndim() != 4 || static_cast<int>(x.dim(1)) != in_channels_ ||
            static_cast<int>(x.dim(2)) != resolution_ ||
            static_cast<int>(x.dim(3)) != resolution_) {
            throw std::invalid_argument("FeatureExtractor: resolution mismatch, got " +
                                        shape_string(x));
        }
    }

    std::vector<Tensor<T>> features(const Tensor<T>& x, nn::Tape<T>* tape = nullptr) const {
        check_input(x);
        std::vector<Tensor<T>> taps;
        Tensor<T> h = x;
        for (int l = 0; l < 3; ++l) {
            if (l > 0) h = nn::avgpool2_fwd(h);
            h = nn::conv2d_fwd(ps_, convs_[l], h, tape);
            h = nn::silu_fwd(h, tape);
            taps.push_back(h);
        }
        return taps;
    }

    /// dL/dx given per-layer gradients dL/dF_l; consumes the tape.
    Tensor<T> backward(const std::vector<Tensor<T>>& dtaps, nn::Tape<T>& tape) const {
        nn::Grads<T> scratch(ps_);  // weights are frozen; gradients discarded
        Tensor<T> g = dtaps[2];
        for (int l = 2; l >= 0; --l) {
            g = nn::silu_bwd(g, tape);
            g = nn::conv2d_bwd(ps_, convs_[l], g, tape, scratch);
            if (l > 0) {
                g = nn::avgpool2_bwd(g);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] += dtaps[static_cast<std::size_t>(l) - 1][i];
                }
            }
        }
        return g;
    }

private:
    int in_channels_, resolution_;
    std::uint64_t seed_;
    nn::ParamStore<T> ps_;
    nn::ConvRef convs_[3];
    std::vector<Tensor<T>> weights_;
};

namespace detail {

inline constexpr double kNormEps = 1e-10;

// normalized feature column at (i, j): v / (||v|| + eps)
template <typename T>
void unit_normalize_position(const T* f, std::size_t C, std::size_t hw, std::size_t pos,
                             std::vector<double>& out) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        double v = static_cast<double>(f[c * hw + pos]);
        n2 += v * v;
    }
    double inv = 1.0 / (std::sqrt(n2) + kNormEps);
    for (std::size_t c = 0; c < C; ++c) {
        out[c] = static_cast<double>(f[c * hw + pos]) * inv;
    }
}

}  // namespace detail

/// Sum over layers of the mean over positions of the weighted squared
/// difference of channel-unit-normalized feature vectors.
template <typename T>
std::vector<double> dist_feature_perceptual(const FeatureExtractor<T>& ex,
                                            const Tensor<T>& x, const Tensor<T>& y) {
    check_same_shape(x, y, "dist_feature_perceptual");
    auto fx = ex.features(x);
    auto fy = ex.features(y);
    const std::size_t B = x.dim(0);
    std::vector<double> out(B, 0.0);
    std::vector<double> vx, vy;
    for (std::size_t l = 0; l < fx.size(); ++l) {
        const std::size_t C = fx[l].dim(1), H = fx[l].dim(2), W = fx[l].dim(3);
        const std::size_t hw = H * W;
        const auto& wl = ex.layer_weights()[l];
        vx.resize(C);
        vy.resize(C);
        for (std::size_t b = 0; b < B; ++b) {
            const T* fxp = fx[l].data() + b * C * hw;
            const T* fyp = fy[l].data() + b * C * hw;
            double acc = 0.0;
            for (std::size_t p = 0; p < hw; ++p) {
                detail::unit_normalize_position(fxp, C, hw, p, vx);
                detail::unit_normalize_position(fyp, C, hw, p, vy);
                for (std::size_t c = 0; c < C; ++c) {
                    double d = vx[c] - vy[c];
                    acc += static_cast<double>(wl[c]) * d * d;
                }
            }
            out[b] += acc / static_cast<double>(hw);
        }
    }
    return out;
}

/// Training adapter: perceptual distance with a gradient in its second
/// argument, backpropagated through the frozen extractor.
template <typename T>
class PerceptualTrainMetric final : public consistency::TrainMetric<T> {
public:
    explicit PerceptualTrainMetric(const FeatureExtractor<T>& ex) : ex_(ex) {}

    double value(const Tensor<T>& a, const Tensor<T>& b) const override {
        auto v = dist_feature_perceptual(ex_, a, b);
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }

    Tensor<T> grad_second(const Tensor<T>& a, const Tensor<T>& b) const override {
        auto fa = ex_.features(a);
        nn::Tape<T> tape;
        auto fb = ex_.features(b, &tape);
        const std::size_t B = a.dim(0);
        std::vector<Tensor<T>> dtaps;
        std::vector<double> va, vb;
        for (std::size_t l = 0; l < fb.size(); ++l) {
            const std::size_t C = fb[l].dim(1), hw = fb[l].dim(2) * fb[l].dim(3);
            const auto& wl = ex_.layer_weights()[l];
            Tensor<T> dF(fb[l].shape());
            va.resize(C);
            vb.resize(C);
            for (std::size_t bi = 0; bi < B; ++bi) {
                const T* fap = fa[l].data() + bi * C * hw;
                const T* fbp = fb[l].data() + bi * C * hw;
                T* dp = dF.data() + bi * C * hw;
                for (std::size_t p = 0; p < hw; ++p) {
                    detail::unit_normalize_position(fap, C, hw, p, va);
                    double n2 = 0.0;
                    for (std::size_t c = 0; c < C; ++c) {
                        double v = static_cast<double>(fbp[c * hw + p]);
                        n2 += v * v;
                    }
                    const double norm = std::sqrt(n2);
                    const double inv = 1.0 / (norm + detail::kNormEps);
                    for (std::size_t c = 0; c < C; ++c) {
                        vb[c] = static_cast<double>(fbp[c * hw + p]) * inv;
                    }
                    // dL/dvb_c = -2 w_c (va_c - vb_c) / hw; project through
                    // the normalization jacobian
                    double dot = 0.0;
                    std::vector<double> dvb(C);
                    for (std::size_t c = 0; c < C; ++c) {
                        dvb[c] = -2.0 * static_cast<double>(wl[c]) * (va[c] - vb[c]) /
                                 static_cast<double>(hw);
                        dot += dvb[c] * vb[c];
                    }
                    const double denom = norm > 0.0 ? norm * (norm + detail::kNormEps) : 1.0;
                    for (std::size_t c = 0; c < C; ++c) {
                        double dv = dvb[c] * inv -
                                    static_cast<double>(fbp[c * hw + p]) * dot / denom * inv;
                        dp[c * hw + p] = static_cast<T>(dv);
                    }
                }
            }
            dtaps.push_back(std::move(dF));
        }
        return ex_.backward(dtaps, tape);
    }

private:
    const FeatureExtractor<T>& ex_;
};

// ---------------------------------------------------------------------------
// consistency-model decoder-feature distance
// ---------------------------------------------------------------------------

/// Monte-Carlo (n_z draws) of the per-position cosine distance between the
/// decoder feature maps of f(. + t_gamma z, t_gamma), summed over decoder
/// stages, spatially averaged per stage. The same z is applied to both
/// images within a draw. Throws if a feature column is exactly zero.
std::vector<double> dist_unet(const consistency::ConsistencyModel<float>& m,
                              const Tensor<float>& x, const Tensor<float>& y,
                              int gamma, int n_z, rng::Key key);

// ---------------------------------------------------------------------------
// name-based registry
// ---------------------------------------------------------------------------

/// Batched per-sample distance; every registered function satisfies
/// d(x,x) = 0, symmetry and nonnegativity.
using DistanceFn =
    std::function<std::vector<double>(const Tensor<float>&, const Tensor<float>&)>;

struct DistanceContext {
    const FeatureExtractor<float>* extractor = nullptr;
    const consistency::ConsistencyModel<float>* cm = nullptr;
    int unet_gamma = 3;  // schedule index of the small feature noise level
    int unet_n_z = 1;
    rng::Key unet_key;
};

/// name: "l2" | "ssim" | "perceptual" | "unet". The registered "ssim" entry
/// is 1 - SSIM (the shift keeps registered metrics nonnegative with
/// d(x,x) = 0 and cancels inside score differences).
DistanceFn make_distance(const std::string& name, const DistanceContext& ctx);

void save_extractor(const FeatureExtractor<float>& ex, const std::string& dir);
FeatureExtractor<float> load_extractor(const std::string& dir);

}  // namespace pr::dist
