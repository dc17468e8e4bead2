#include "pr/report.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "pr/checkpoint.hpp"
#include "pr/hash.hpp"
#include "pr/runner.hpp"
#include "pr/version.hpp"

namespace fs = std::filesystem;

namespace pr::eval {
namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

std::string metrics_csv(const EvalReport& r) {
    std::string out = "method,task,seed,auroc,tnr95\n";
    for (const auto& row : r.rows) {
        out += row.method + "," + row.task + "," + row.seed_label + "," +
               fmt(row.auroc) + "," + fmt(row.tnr95) + "\n";
    }
    return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "variant,timestep_index,auroc\n";
    for (const auto& row : rows) {
        out += row.variant + "," + std::to_string(row.index) + "," + fmt(row.auroc) + "\n";
    }
    return out;
}

std::string sweep_svg(const std::vector<SweepRow>& rows) {
    // minimal line chart, one polyline per variant
    const int W = 640, H = 400, ml = 50, mb = 30, mt = 15, mr = 15;
    std::map<std::string, std::vector<std::pair<int, double>>> series;
    int max_idx = 1;
    for (const auto& r : rows) {
        series[r.variant].emplace_back(r.index, r.auroc);
        max_idx = std::max(max_idx, r.index);
    }
    const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b"};
    std::string svg = "<svg xmlns='http://www.w3.org/2000/svg' width='" +
                      std::to_string(W) + "' height='" + std::to_string(H) + "'>\n";
    svg += "<rect width='100%' height='100%' fill='white'/>\n";
    auto xmap = [&](double i) { return ml + i / max_idx * (W - ml - mr); };
    auto ymap = [&](double a) { return H - mb - a * (H - mb - mt); };
    for (int g = 0; g <= 10; ++g) {
        double y = ymap(g / 10.0);
        svg += "<line x1='" + std::to_string(ml) + "' y1='" + fmt(y) + "' x2='" +
               std::to_string(W - mr) + "' y2='" + fmt(y) +
               "' stroke='#eeeeee'/>\n";
        svg += "<text x='4' y='" + fmt(y + 4) + "' font-size='11'>" + fmt(g / 10.0) +
               "</text>\n";
    }
    int ci = 0;
    int ly = mt + 12;
    for (const auto& [name, pts] : series) {
        std::string poly;
        for (const auto& [i, a] : pts) {
            poly += fmt(xmap(i)) + "," + fmt(ymap(a)) + " ";
        }
        const char* color = colors[ci % 5];
        svg += "<polyline fill='none' stroke='" + std::string(color) +
               "' stroke-width='1.5' points='" + poly + "'/>\n";
        svg += "<text x='" + std::to_string(ml + 8) + "' y='" + std::to_string(ly) +
               "' font-size='12' fill='" + color + "'>" + name + "</text>\n";
        ly += 14;
        ++ci;
    }
    svg += "<text x='" + std::to_string(W / 2) + "' y='" + std::to_string(H - 6) +
           "' font-size='11'>timestep index</text>\n</svg>\n";
    return svg;
}

void write_report(const EvalReport& r, const std::string& dir,
                  const std::string& resolved_config, bool emit_plot) {
    if (fs::exists(fs::path(dir) / "metrics.csv")) {
        throw std::runtime_error("report: refusing to overwrite existing report in " +
                                 dir);
    }
    fs::create_directories(dir);
    {
        std::ofstream f(fs::path(dir) / "metrics.csv", std::ios::trunc);
        f << metrics_csv(r);
    }
    {
        std::ofstream f(fs::path(dir) / "config.txt", std::ios::trunc);
        f << resolved_config;
    }
    {
        std::ofstream f(fs::path(dir) / "manifest.txt", std::ios::trunc);
        f << "version=" << kVersionString << "\n";
        f << "config_hash=" << hash_hex(fnv1a(resolved_config)) << "\n";
        for (const auto& [k, v] : r.provenance) f << k << "=" << v << "\n";
    }
    if (!r.sweep.empty()) {
        fs::create_directories(fs::path(dir) / "sweeps");
        std::ofstream f(fs::path(dir) / "sweeps" / "sweep.csv", std::ios::trunc);
        f << sweep_csv(r.sweep);
        if (emit_plot) {
            std::ofstream p(fs::path(dir) / "sweeps" / "sweep.svg", std::ios::trunc);
            p << sweep_svg(r.sweep);
        }
    }
    {
        std::ofstream f(fs::path(dir) / "report.txt", std::ios::trunc);
        f << kVersionString << " evaluation report\n";
        f << "wall_seconds=" << fmt(r.wall_seconds) << "\n\n";
        f << "method                    task                      seed      auroc     tnr95\n";
        for (const auto& row : r.rows) {
            char line[256];
            std::snprintf(line, sizeof(line), "%-25s %-25s %-8s %9.6f %9.6f\n",
                          row.method.c_str(), row.task.c_str(), row.seed_label.c_str(),
                          row.auroc, row.tnr95);
            f << line;
        }
    }
}

EvalReport run_benchmark(const config::RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    EvalReport report;
    report.provenance.emplace_back("seed", cfg.get("seed"));
    const double tpr = cfg.get_double("tpr");
    const std::string out_dir = cfg.get("out_dir");
    if (out_dir.empty()) throw std::runtime_error("run_benchmark: out_dir required");
    if (fs::exists(out_dir)) {
        throw std::runtime_error("report: refusing to overwrite existing directory " +
                                 out_dir);
    }

    // metric-only mode on two precomputed score files
    if (!cfg.empty("id_scores") || !cfg.empty("ood_scores")) {
        if (cfg.empty("id_scores") || cfg.empty("ood_scores")) {
            throw std::runtime_error("run_benchmark: need both id_scores and ood_scores");
        }
        score::ScoreVector sid = score::load_score_vector(cfg.get("id_scores"));
        score::ScoreVector sood = score::load_score_vector(cfg.get("ood_scores"));
        MetricRow row;
        row.method = sid.method.empty() ? "scores" : sid.method;
        row.task = "id-vs-ood";
        row.seed_label = std::to_string(sid.seed);
        row.auroc = auroc(sid.scores, sood.scores);
        row.tnr95 = tnr_at_tpr(sid.scores, sood.scores, tpr);
        report.rows.push_back(row);
        report.provenance.emplace_back("score_file " + cfg.get("id_scores"),
                                       hash_hex(hash_file(cfg.get("id_scores"))));
        report.provenance.emplace_back("score_file " + cfg.get("ood_scores"),
                                       hash_hex(hash_file(cfg.get("ood_scores"))));
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return report;
    }

    // full mode: compute scores from checkpoints + datasets
    if (cfg.empty("id_data")) throw std::runtime_error("run_benchmark: id_data required");
    if (cfg.empty("ood_data")) throw std::runtime_error("run_benchmark: ood_data required");
    const int res = static_cast<int>(cfg.get_int("data_resolution"));
    const int ch = static_cast<int>(cfg.get_int("data_channels"));
    data::ImageBatch id_data = data::load_dataset(cfg.get("id_data"), res, ch);
    std::vector<std::string> ood_specs = cfg.get_list("ood_data");
    std::vector<std::string> ood_names = cfg.get_list("ood_names");
    if (ood_names.empty()) ood_names = ood_specs;
    if (ood_names.size() != ood_specs.size()) {
        throw std::runtime_error("run_benchmark: ood_names length mismatch");
    }

    std::vector<std::string> methods = cfg.get_list("methods");
    if (methods.empty()) throw std::runtime_error("run_benchmark: no methods configured");
    bool need_den = false, need_cm = false, need_msma_fit = false;
    for (const auto& m : methods) {
        need_den = need_den || run::method_needs_denoiser(cfg, m);
        need_cm = need_cm || run::method_needs_cm(cfg, m);
        need_msma_fit = need_msma_fit || m == "msma";
    }
    run::Session session = run::Session::open(cfg, need_den, need_cm, false);
    std::unique_ptr<data::ImageBatch> msma_fit;
    if (need_msma_fit) {
        if (cfg.empty("msma_fit_data")) {
            throw std::runtime_error("run_benchmark: msma needs msma_fit_data");
        }
        msma_fit = std::make_unique<data::ImageBatch>(
            data::load_dataset(cfg.get("msma_fit_data"), res, ch));
    }

    std::vector<std::uint64_t> seeds;
    if (!cfg.empty("seeds")) {
        for (int s : cfg.get_int_list("seeds")) {
            seeds.push_back(static_cast<std::uint64_t>(s));
        }
    } else {
        seeds.push_back(cfg.get_seed());
    }

    fs::create_directories(fs::path(out_dir) / "scores");
    auto persist = [&](const score::ScoreVector& sv, const std::string& label) {
        const std::string path = (fs::path(out_dir) / "scores" / (label + ".prtc")).string();
        score::save_score_vector(sv, path);
        report.provenance.emplace_back("score_file scores/" + label + ".prtc",
                                       hash_hex(hash_file(path)));
    };

    for (const auto& method : methods) {
        std::map<std::string, std::pair<double, double>> sums;  // task -> (auroc, tnr)
        for (std::uint64_t seed : seeds) {
            score::ScoreVector sid =
                run::score_dataset(session, cfg, method, id_data, msma_fit.get(), seed);
            persist(sid, method + "_id_seed" + std::to_string(seed));
            for (std::size_t k = 0; k < ood_specs.size(); ++k) {
                data::ImageBatch ood = data::load_dataset(ood_specs[k], res, ch);
                score::ScoreVector sood = run::score_dataset(session, cfg, method, ood,
                                                             msma_fit.get(), seed);
                persist(sood, method + "_" + std::to_string(k) + "_ood_seed" +
                                  std::to_string(seed));
                MetricRow row;
                row.method = method;
                row.task = ood_names[k];
                row.seed_label = std::to_string(seed);
                row.auroc = auroc(sid.scores, sood.scores);
                row.tnr95 = tnr_at_tpr(sid.scores, sood.scores, tpr);
                report.rows.push_back(row);
                sums[row.task].first += row.auroc;
                sums[row.task].second += row.tnr95;
            }
        }
        if (seeds.size() > 1) {
            for (const auto& [task, acc] : sums) {
                MetricRow row;
                row.method = method;
                row.task = task;
                row.seed_label = "mean";
                row.auroc = acc.first / static_cast<double>(seeds.size());
                row.tnr95 = acc.second / static_cast<double>(seeds.size());
                report.rows.push_back(row);
            }
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace pr::eval
