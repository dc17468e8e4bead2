#include "pr/scoring.hpp"

#include <Eigen/Cholesky>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include "pr/container.hpp"

namespace pr::score {
namespace {

constexpr std::size_t kChunk = 64;  // network batch cap inside scorers

Tensor<float> repeat_image(const Tensor<float>& x, std::size_t n) {
    const std::size_t m = x.size();
    Tensor<float> out({n, x.dim(1), x.dim(2), x.dim(3)});
    for (std::size_t k = 0; k < n; ++k) {
        std::copy(x.data(), x.data() + m, out.data() + k * m);
    }
    return out;
}

// z tensor for draw indices [k0, k0+count) under a role key
Tensor<float> keyed_noise(rng::Key base, rng::Role role, std::size_t k0,
                          std::size_t count, const std::vector<std::size_t>& img_shape) {
    Tensor<float> z({count, img_shape[1], img_shape[2], img_shape[3]});
    const std::size_t m = img_shape[1] * img_shape[2] * img_shape[3];
    for (std::size_t k = 0; k < count; ++k) {
        rng::Stream s(rng::with_role(base, role).with(k0 + k));
        for (std::size_t i = 0; i < m; ++i) {
            z[k * m + i] = static_cast<float>(s.next_gaussian());
        }
    }
    return z;
}

}  // namespace

double score_projection(const proj::Projector& project, const Tensor<float>& x,
                        std::uint64_t sample_id, int i, const dist::DistanceFn& d,
                        int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("score_projection: n must be >= 1");
    if (x.dim(0) != 1) throw std::invalid_argument("score_projection: x must be (1,C,H,W)");
    rng::Key base = rng::key(seed).with(sample_id);
    double acc = 0.0;
    for (std::size_t k0 = 0; k0 < static_cast<std::size_t>(n); k0 += kChunk) {
        const std::size_t m = std::min(kChunk, static_cast<std::size_t>(n) - k0);
        Tensor<float> z = keyed_noise(base, rng::Role::score_dx, k0, m, x.shape());
        Tensor<float> xr = repeat_image(x, m);
        Tensor<float> out = project(xr, i, z);
        std::vector<double> dv = d(xr, out);
        for (double v : dv) acc += v;
    }
    return acc / static_cast<double>(n);
}

namespace {

// shared by score_pr: mean over draw indices [0, count) of
// d(inputs[row], project(inputs[row], level, z_row)), rows keyed role/draw.
double projected_distance_mean(const proj::Projector& project, rng::Key base,
                               rng::Role role, const Tensor<float>& inputs, int level,
                               const dist::DistanceFn& d) {
    const std::size_t count = inputs.dim(0);
    const std::size_t m = inputs.size() / count;
    double acc = 0.0;
    for (std::size_t k0 = 0; k0 < count; k0 += kChunk) {
        const std::size_t c = std::min(kChunk, count - k0);
        Tensor<float> chunk({c, inputs.dim(1), inputs.dim(2), inputs.dim(3)});
        std::copy(inputs.data() + k0 * m, inputs.data() + (k0 + c) * m, chunk.data());
        Tensor<float> z = keyed_noise(base, role, k0, c, chunk.shape());
        Tensor<float> out = project(chunk, level, z);
        std::vector<double> dv = d(chunk, out);
        for (double v : dv) acc += v;
    }
    return acc / static_cast<double>(count);
}

}  // namespace

double score_pr(const proj::Projector& project, const Tensor<float>& x,
                std::uint64_t sample_id, const PRConfig& cfg, const dist::DistanceFn& d,
                std::uint64_t seed) {
    if (x.dim(0) != 1) throw std::invalid_argument("score_pr: x must be (1,C,H,W)");
    if (cfg.n_alpha < 1 || cfg.n_beta < 1) {
        throw std::invalid_argument("score_pr: n_alpha and n_beta must be >= 1");
    }
    const std::size_t na = static_cast<std::size_t>(cfg.n_alpha);
    const std::size_t nb = static_cast<std::size_t>(cfg.n_beta);
    rng::Key base = rng::key(seed)
                        .with(sample_id)
                        .with(static_cast<std::uint64_t>(cfg.alpha))
                        .with(static_cast<std::uint64_t>(cfg.beta));

    // dx = mean over n_alpha*n_beta draws of d(x, P_beta(x))
    Tensor<float> x_rep = repeat_image(x, na * nb);
    const double dx =
        projected_distance_mean(project, base, rng::Role::score_dx, x_rep, cfg.beta, d);

    // y_j = P_alpha(x), j = 0..n_alpha-1
    Tensor<float> x_rep_a = repeat_image(x, na);
    Tensor<float> zy = keyed_noise(base, rng::Role::score_y, 0, na, x_rep_a.shape());
    Tensor<float> y = project(x_rep_a, cfg.alpha, zy);

    // dy = mean over (j, k) of d(y_j, P_beta(y_j)); draw index = j*n_beta + k
    const std::size_t m = x.size();
    Tensor<float> y_big({na * nb, x.dim(1), x.dim(2), x.dim(3)});
    for (std::size_t j = 0; j < na; ++j) {
        for (std::size_t k = 0; k < nb; ++k) {
            std::copy(y.data() + j * m, y.data() + (j + 1) * m,
                      y_big.data() + (j * nb + k) * m);
        }
    }
    const double dy = projected_distance_mean(project, base, rng::Role::score_y_proj,
                                              y_big, cfg.beta, d);
    return dx - dy;
}

double score_pr_ensemble(const proj::Projector& project, const Tensor<float>& x,
                         std::uint64_t sample_id, const PRConfig& cfg,
                         const dist::DistanceFn& d, std::uint64_t seed) {
    if (cfg.ensemble_C.empty()) {
        throw std::invalid_argument("score_pr_ensemble: empty candidate set C");
    }
    double total = 0.0;
    for (const auto& [a, b] : cfg.ensemble_C) {
        PRConfig one = cfg;
        one.alpha = a;
        one.beta = b;
        total += score_pr(project, x, sample_id, one, d, seed);
    }
    return total;
}

std::vector<double> score_msma(const diffusion::BatchDenoiseFn<float>& denoiser,
                               const diffusion::SigmaSchedule& sched,
                               const Tensor<float>& x, std::uint64_t sample_id,
                               const std::vector<int>& indices, int n,
                               std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("score_msma: n must be >= 1");
    if (x.dim(0) != 1) throw std::invalid_argument("score_msma: x must be (1,C,H,W)");
    const std::size_t m = x.size();
    rng::Key base = rng::key(seed).with(sample_id);
    std::vector<double> out;
    out.reserve(indices.size());
    for (int idx : indices) {
        if (idx < 0 || idx > sched.N) {
            throw std::out_of_range("score_msma: index outside the schedule");
        }
        const double t = sched.t[static_cast<std::size_t>(idx)];
        rng::Key ik = rng::with_role(base, rng::Role::msma)
                          .with(static_cast<std::uint64_t>(idx));
        double acc = 0.0;
        for (std::size_t k0 = 0; k0 < static_cast<std::size_t>(n); k0 += kChunk) {
            const std::size_t c = std::min(kChunk, static_cast<std::size_t>(n) - k0);
            Tensor<float> z({c, x.dim(1), x.dim(2), x.dim(3)});
            for (std::size_t k = 0; k < c; ++k) {
                rng::Stream s(ik.with(k0 + k));
                for (std::size_t i = 0; i < m; ++i) {
                    z[k * m + i] = static_cast<float>(s.next_gaussian());
                }
            }
            Tensor<float> xr = repeat_image(x, c);
            Tensor<float> noisy(xr.shape());
            for (std::size_t i = 0; i < xr.size(); ++i) {
                noisy[i] = xr[i] + static_cast<float>(t) * z[i];
            }
            Tensor<float> den = denoiser(noisy, std::vector<double>(c, t));
            for (std::size_t k = 0; k < c; ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    double r = (static_cast<double>(den[k * m + i]) -
                                static_cast<double>(x[i])) /
                               t;
                    s += r * r;
                }
                acc += s;
            }
        }
        out.push_back(acc / static_cast<double>(n));
    }
    return out;
}

double msma_aggregate(const std::vector<std::vector<double>>& train_vectors,
                      const std::vector<double>& test, double lambda) {
    if (train_vectors.size() < 2) {
        throw std::invalid_argument("msma_aggregate: need at least 2 training vectors");
    }
    const std::size_t D = test.size();
    for (const auto& v : train_vectors) {
        if (v.size() != D) {
            throw std::invalid_argument("msma_aggregate: vector length mismatch");
        }
    }
    const std::size_t n = train_vectors.size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(D));
    for (const auto& v : train_vectors) {
        for (std::size_t j = 0; j < D; ++j) mean[static_cast<Eigen::Index>(j)] += v[j];
    }
    mean /= static_cast<double>(n);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D),
                                                static_cast<Eigen::Index>(D));
    for (const auto& v : train_vectors) {
        Eigen::VectorXd c(static_cast<Eigen::Index>(D));
        for (std::size_t j = 0; j < D; ++j) {
            c[static_cast<Eigen::Index>(j)] = v[j] - mean[static_cast<Eigen::Index>(j)];
        }
        cov.noalias() += c * c.transpose();
    }
    cov /= static_cast<double>(n - 1);
    cov.diagonal().array() += lambda;

    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("msma_aggregate: singular covariance after shrinkage");
    }
    Eigen::VectorXd diff(static_cast<Eigen::Index>(D));
    for (std::size_t j = 0; j < D; ++j) {
        diff[static_cast<Eigen::Index>(j)] = test[j] - mean[static_cast<Eigen::Index>(j)];
    }
    const double q = diff.dot(llt.solve(diff));
    return std::sqrt(std::max(0.0, q));
}

ScoreVector batch_score(const data::ImageBatch& dataset, const SampleScorer& scorer,
                        std::uint64_t seed, int threads) {
    const std::size_t B = dataset.count();
    if (B < 1) throw std::invalid_argument("batch_score: empty dataset");
    if (threads < 1) threads = 1;

    ScoreVector sv;
    sv.seed = seed;
    sv.scores.assign(B, 0.0);

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Tensor<float> xi = data::image_at(dataset, i);
            sv.scores[i] = scorer(xi, data::sample_id(dataset, i));
        }
    };
    if (threads == 1 || B == 1) {
        work(0, B);
    } else {
        const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), B);
        std::vector<std::thread> pool;
        const std::size_t per = (B + nt - 1) / nt;
        for (std::size_t t = 0; t < nt; ++t) {
            const std::size_t b0 = t * per, b1 = std::min(B, b0 + per);
            if (b0 >= b1) break;
            pool.emplace_back(work, b0, b1);
        }
        for (auto& th : pool) th.join();
    }
    for (std::size_t i = 0; i < B; ++i) {
        if (!std::isfinite(sv.scores[i])) {
            throw std::runtime_error("batch_score: non-finite score at sample index " +
                                     std::to_string(i));
        }
    }
    return sv;
}

void save_score_vector(const ScoreVector& sv, const std::string& path) {
    Tensor<double> t({sv.scores.size()});
    std::copy(sv.scores.begin(), sv.scores.end(), t.data());
    save_container(t, path);
    std::ofstream f(path + ".manifest.txt", std::ios::trunc);
    if (!f) throw std::runtime_error("save_score_vector: cannot open manifest for " + path);
    f << "config_hash=" << sv.config_hash << "\n";
    f << "seed=" << sv.seed << "\n";
    f << "method=" << sv.method << "\n";
    f << "metric=" << sv.metric << "\n";
    f << "count=" << sv.scores.size() << "\n";
    for (const auto& [k, v] : sv.extra) f << k << "=" << v << "\n";
}

ScoreVector load_score_vector(const std::string& path) {
    ScoreVector sv;
    Tensor<double> t = load_container_as<double>(path);
    if (t.ndim() != 1) throw std::runtime_error("load_score_vector: expected 1-d scores");
    sv.scores.assign(t.data(), t.data() + t.size());
    std::ifstream f(path + ".manifest.txt");
    if (f) {
        std::string line;
        while (std::getline(f, line)) {
            auto pos = line.find('=');
            if (pos == std::string::npos) continue;
            std::string k = line.substr(0, pos), v = line.substr(pos + 1);
            if (k == "config_hash") sv.config_hash = v;
            else if (k == "seed") sv.seed = std::stoull(v);
            else if (k == "method") sv.method = v;
            else if (k == "metric") sv.metric = v;
            else if (k != "count") sv.extra.emplace_back(k, v);
        }
    }
    return sv;
}

}  // namespace pr::score
