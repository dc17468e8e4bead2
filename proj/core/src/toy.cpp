#include "pr/toy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pr/rng.hpp"

namespace pr::data {
namespace {

struct Wave {
    double kx, ky, amp;
};

struct TextureFamily {
    std::vector<Wave> waves;
    double tint[3];  // per-channel gain around 1
};

TextureFamily make_family(rng::Key base, int label) {
    rng::Stream s(base.with(0xBAC0).with(static_cast<std::uint64_t>(label)));
    TextureFamily fam;
    const int n_waves = 3;
    for (int w = 0; w < n_waves; ++w) {
        double freq = 1.5 + 3.0 * s.next_uniform();  // cycles per image
        double theta = 2.0 * M_PI * s.next_uniform();
        double amp = 0.14 + 0.10 * s.next_uniform();
        fam.waves.push_back({freq * std::cos(theta), freq * std::sin(theta), amp});
    }
    for (double& t : fam.tint) t = 0.85 + 0.3 * s.next_uniform();
    return fam;
}

// signed distance to a regular n-gon (circumradius r, rotation theta)
double sdf_polygon(double px, double py, double r, int n, double theta) {
    double apothem = r * std::cos(M_PI / n);
    double d = -1e9;
    for (int i = 0; i < n; ++i) {
        double psi = theta + 2.0 * M_PI * i / n;
        d = std::max(d, px * std::cos(psi) + py * std::sin(psi) - apothem);
    }
    return d;
}

double sdf_ellipse(double px, double py, double a, double b) {
    double q = std::sqrt((px / a) * (px / a) + (py / b) * (py / b));
    return (q - 1.0) * std::min(a, b);
}

double sdf_rect(double px, double py, double hw, double hh, double theta) {
    double c = std::cos(theta), s = std::sin(theta);
    double x = std::abs(c * px + s * py) - hw;
    double y = std::abs(-s * px + c * py) - hh;
    double ox = std::max(x, 0.0), oy = std::max(y, 0.0);
    return std::sqrt(ox * ox + oy * oy) + std::min(std::max(x, y), 0.0);
}

struct ShapeParams {
    int klass;
    double cx, cy;     // center, pixels
    double size;       // radius scale, pixels
    double rot;
    double aspect;     // ellipses only
    double color[3];
};

double shape_sdf(const ShapeParams& p, double x, double y) {
    double px = x - p.cx, py = y - p.cy;
    switch (p.klass) {
        case 0: return sdf_ellipse(px, py, p.size * p.aspect, p.size / p.aspect);
        case 1: return sdf_polygon(px, py, p.size * 1.15, 3, p.rot);
        case 2: {  // cross: two crossing bars
            double bar = p.size * 0.30;
            double d1 = sdf_rect(px, py, p.size, bar, p.rot);
            double d2 = sdf_rect(px, py, bar, p.size, p.rot);
            return std::min(d1, d2);
        }
        case 3: return sdf_polygon(px, py, p.size * 1.05, 4, p.rot);
        default: return sdf_polygon(px, py, p.size, p.klass + 2, p.rot);
    }
}

}  // namespace

ToyDataset gen_toy_dataset(const ToySpec& spec) {
    if (spec.resolution < 8) throw std::invalid_argument("ToySpec: resolution must be >= 8");
    if (spec.n_semantic_classes < 1 || spec.n_background_textures < 1 ||
        spec.samples_per_class < 1) {
        throw std::invalid_argument("ToySpec: all counts must be >= 1");
    }

    const int R = spec.resolution;
    const std::size_t total = static_cast<std::size_t>(spec.n_semantic_classes) *
                              spec.samples_per_class;
    rng::Key bg_base = rng::with_role(rng::key(spec.seed), rng::Role::toy_background);
    rng::Key fg_base = rng::with_role(rng::key(spec.seed), rng::Role::toy_foreground);

    std::vector<TextureFamily> families;
    families.reserve(spec.n_background_textures);
    for (int b = 0; b < spec.n_background_textures; ++b) {
        families.push_back(make_family(bg_base, b));
    }

    ToyDataset out;
    out.images.channel_count = 3;
    out.images.resolution = R;
    out.images.data = Tensor<float>({total, 3, static_cast<std::size_t>(R),
                                     static_cast<std::size_t>(R)});
    out.semantic_labels.resize(total);
    out.background_labels.resize(total);

    for (std::size_t i = 0; i < total; ++i) {
        const int klass = static_cast<int>(i) / spec.samples_per_class;
        rng::Stream pick(bg_base.with(0x1ABE).with(i));
        const int bg_label = static_cast<int>(pick.next_below(spec.n_background_textures));
        out.semantic_labels[i] = klass;
        out.background_labels[i] = bg_label;

        const TextureFamily& fam = families[bg_label];
        rng::Stream ph(bg_base.with(0x2FA5).with(i));
        std::vector<double> phases(fam.waves.size());
        for (double& p : phases) p = 2.0 * M_PI * ph.next_uniform();

        rng::Stream fg(fg_base.with(i));
        ShapeParams sp;
        sp.klass = klass;
        sp.cx = (R - 1) / 2.0 + (fg.next_uniform() - 0.5) * 0.12 * R;
        sp.cy = (R - 1) / 2.0 + (fg.next_uniform() - 0.5) * 0.12 * R;
        sp.size = (0.24 + 0.06 * fg.next_uniform()) * R;
        sp.rot = (fg.next_uniform() - 0.5) * (M_PI / 6.0);
        sp.aspect = 0.85 + 0.3 * fg.next_uniform();
        for (double& c : sp.color) c = 0.68 + 0.2 * fg.next_uniform();

        for (int y = 0; y < R; ++y) {
            for (int x = 0; x < R; ++x) {
                double lum = 0.0;
                for (std::size_t w = 0; w < fam.waves.size(); ++w) {
                    lum += fam.waves[w].amp *
                           std::cos(2.0 * M_PI *
                                        (fam.waves[w].kx * x + fam.waves[w].ky * y) / R +
                                    phases[w]);
                }
                double d = shape_sdf(sp, x, y);
                double alpha = std::clamp(0.5 - d, 0.0, 1.0);  // 1px anti-aliased edge
                for (int c = 0; c < 3; ++c) {
                    double bgv = lum * fam.tint[c];
                    double v = (1.0 - alpha) * bgv + alpha * sp.color[c];
                    out.images.data.at4(i, c, y, x) =
                        static_cast<float>(std::clamp(v, -1.0, 1.0));
                }
            }
        }
    }
    return out;
}

ToyDataset filter_classes(const ToyDataset& d, const std::vector<int>& keep) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < d.semantic_labels.size(); ++i) {
        if (std::find(keep.begin(), keep.end(), d.semantic_labels[i]) != keep.end()) {
            idx.push_back(i);
        }
    }
    if (idx.empty()) throw std::invalid_argument("filter_classes: no samples kept");
    ToyDataset out;
    out.images = take(d.images, idx);
    for (std::size_t i : idx) {
        out.semantic_labels.push_back(d.semantic_labels[i]);
        out.background_labels.push_back(d.background_labels[i]);
    }
    return out;
}

}  // namespace pr::data
