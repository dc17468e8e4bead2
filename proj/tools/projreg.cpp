// projreg: train small variance-exploding diffusion / consistency models and
// run projection-based novelty-detection benchmarks on them.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pr/report.hpp"
#include "pr/runner.hpp"
#include "pr/version.hpp"

namespace fs = std::filesystem;
using pr::config::RunConfig;

namespace {

struct CommandArgs {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
};

void register_command(CLI::App& app, const std::string& name, const std::string& help,
                      std::map<std::string, CommandArgs>& args) {
    CLI::App* sub = app.add_subcommand(name, help);
    CommandArgs& a = args[name];
    sub->add_option("config", a.config_path, "plain-text config file (key = value)");
    for (const auto& key : pr::config::schema()) {
        sub->add_option_function<std::string>(
            "--" + std::string(key.name),
            [&a, key](const std::string& v) { a.overrides.emplace_back(key.name, v); },
            key.help);
    }
}

RunConfig resolve_config(const CommandArgs& a) {
    RunConfig cfg = a.config_path.empty() ? RunConfig::defaults()
                                          : RunConfig::from_file(a.config_path);
    for (const auto& [k, v] : a.overrides) cfg.set(k, v);
    cfg.apply_env_overrides();
    return cfg;
}

void write_resolved_config(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream f(dir / "config.txt", std::ios::trunc);
    f << "# " << pr::kVersionString << "\n" << cfg.resolved_text();
}

pr::net::UNetConfig unet_config(const RunConfig& cfg) {
    pr::net::UNetConfig u;
    u.base_channels = static_cast<int>(cfg.get_int("unet_base_channels"));
    u.channel_multipliers = cfg.get_int_list("unet_channel_multipliers");
    u.n_res_blocks_per_stage = static_cast<int>(cfg.get_int("unet_res_blocks"));
    u.in_channels = static_cast<int>(cfg.get_int("data_channels"));
    u.resolution = static_cast<int>(cfg.get_int("data_resolution"));
    u.seed = cfg.get_seed();
    return u;
}

std::string require(const RunConfig& cfg, const std::string& key) {
    if (cfg.empty(key)) throw std::runtime_error("config key '" + key + "' is required");
    return cfg.get(key);
}

int cmd_train_diffusion(const RunConfig& cfg) {
    const std::string out = require(cfg, "checkpoint");
    pr::data::ImageBatch data = pr::data::load_dataset(
        require(cfg, "data"), static_cast<int>(cfg.get_int("data_resolution")),
        static_cast<int>(cfg.get_int("data_channels")));
    pr::diffusion::DiffusionTrainConfig tc;
    tc.unet = unet_config(cfg);
    tc.schedule_N = static_cast<int>(cfg.get_int("schedule_N"));
    tc.schedule_eps = cfg.get_double("schedule_eps");
    tc.schedule_T = cfg.get_double("schedule_T");
    tc.schedule_rho = cfg.get_double("schedule_rho");
    tc.sigma_data = cfg.get_double("sigma_data");
    tc.steps = static_cast<int>(cfg.get_int("steps"));
    tc.batch_size = static_cast<int>(cfg.get_int("batch_size"));
    tc.lr = cfg.get_double("lr");
    tc.seed = cfg.get_seed();
    tc.log_every = static_cast<int>(cfg.get_int("log_every"));
    const std::string w = cfg.get("dsm_weighting");
    if (w == "edm") tc.weighting = pr::diffusion::Weighting::edm_lognormal;
    else if (w == "uniform") tc.weighting = pr::diffusion::Weighting::uniform;
    else throw std::runtime_error("dsm_weighting must be edm or uniform");

    auto model = pr::diffusion::train_diffusion(tc, data);
    pr::ckpt::save_denoiser(model, out);
    write_resolved_config(cfg, out);
    std::printf("%s\n", out.c_str());
    return 0;
}

int cmd_distill(const RunConfig& cfg) {
    const std::string out = require(cfg, "checkpoint");
    pr::data::ImageBatch data = pr::data::load_dataset(
        require(cfg, "data"), static_cast<int>(cfg.get_int("data_resolution")),
        static_cast<int>(cfg.get_int("data_channels")));
    pr::consistency::ConsistencyTrainConfig tc;
    tc.unet = unet_config(cfg);
    tc.schedule_N = static_cast<int>(cfg.get_int("schedule_N"));
    tc.schedule_eps = cfg.get_double("schedule_eps");
    tc.schedule_T = cfg.get_double("schedule_T");
    tc.schedule_rho = cfg.get_double("schedule_rho");
    tc.sigma_data = cfg.get_double("sigma_data");
    tc.steps = static_cast<int>(cfg.get_int("steps"));
    tc.batch_size = static_cast<int>(cfg.get_int("batch_size"));
    tc.lr = cfg.get_double("lr");
    tc.ema_mu = cfg.get_double("ema_mu");
    tc.seed = cfg.get_seed();
    tc.log_every = static_cast<int>(cfg.get_int("log_every"));
    const std::string td = cfg.get("train_distance");
    if (td == "l2") tc.distance = pr::consistency::TrainDistance::l2;
    else if (td == "perceptual") tc.distance = pr::consistency::TrainDistance::perceptual;
    else throw std::runtime_error("train_distance must be l2 or perceptual");

    std::unique_ptr<pr::diffusion::DenoiserModel<float>> teacher;
    if (!cfg.empty("teacher_checkpoint")) {
        teacher = std::make_unique<pr::diffusion::DenoiserModel<float>>(
            pr::ckpt::load_denoiser(cfg.get("teacher_checkpoint")));
    }
    auto model = pr::consistency::train_consistency(tc, data, teacher.get());
    pr::ckpt::save_consistency(model, out);
    write_resolved_config(cfg, out);
    std::printf("%s\n", out.c_str());
    return 0;
}

int cmd_score(const RunConfig& cfg) {
    const std::string out = require(cfg, "score_out");
    const std::string method = cfg.get("method");
    const int res = static_cast<int>(cfg.get_int("data_resolution"));
    const int ch = static_cast<int>(cfg.get_int("data_channels"));
    pr::data::ImageBatch data = pr::data::load_dataset(require(cfg, "data"), res, ch);
    pr::run::Session session = pr::run::Session::open(
        cfg, pr::run::method_needs_denoiser(cfg, method),
        pr::run::method_needs_cm(cfg, method), false);
    std::unique_ptr<pr::data::ImageBatch> fit;
    if (method == "msma") {
        fit = std::make_unique<pr::data::ImageBatch>(
            pr::data::load_dataset(require(cfg, "msma_fit_data"), res, ch));
    }
    pr::score::ScoreVector sv =
        pr::run::score_dataset(session, cfg, method, data, fit.get(), cfg.get_seed());
    fs::create_directories(fs::path(out).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(out).parent_path());
    pr::score::save_score_vector(sv, out);
    {
        std::ofstream f(out + ".config.txt", std::ios::trunc);
        f << "# " << pr::kVersionString << "\n" << cfg.resolved_text();
    }
    std::printf("%s\n", out.c_str());
    return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
    pr::eval::EvalReport report = pr::eval::run_benchmark(cfg);
    pr::eval::write_report(report, cfg.get("out_dir"),
                           "# " + std::string(pr::kVersionString) + "\n" +
                               cfg.resolved_text());
    for (const auto& row : report.rows) {
        std::printf("%s %s seed=%s auroc=%.6f tnr95=%.6f\n", row.method.c_str(),
                    row.task.c_str(), row.seed_label.c_str(), row.auroc, row.tnr95);
    }
    std::printf("%s\n", cfg.get("out_dir").c_str());
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    const std::string out = require(cfg, "out_dir");
    const int res = static_cast<int>(cfg.get_int("data_resolution"));
    const int ch = static_cast<int>(cfg.get_int("data_channels"));
    pr::data::ImageBatch id_data = pr::data::load_dataset(require(cfg, "id_data"), res, ch);
    pr::data::ImageBatch ood_data =
        pr::data::load_dataset(require(cfg, "ood_data"), res, ch);

    std::vector<pr::eval::SweepVariant> variants;
    bool needs_pi = false, needs_full = false, needs_perc = false;
    for (const auto& name : cfg.get_list("sweep_variants")) {
        auto v = pr::eval::variant_from_name(name);
        variants.push_back(v);
        needs_pi = needs_pi || name.rfind("pi-", 0) == 0;
        needs_full = needs_full || name.rfind("full-", 0) == 0;
        needs_perc = needs_perc || name.find("perceptual") != std::string::npos;
    }
    pr::run::Session session = pr::run::Session::open(cfg, needs_pi, needs_full, needs_perc);
    auto rows = pr::eval::sweep_timesteps(
        session.denoiser.get(), session.cm.get(), session.extractor.get(), id_data,
        ood_data, variants, static_cast<int>(cfg.get_int("sweep_n")), cfg.get_seed(),
        static_cast<int>(cfg.get_int("threads")));
    pr::eval::EvalReport report;
    report.sweep = rows;
    pr::eval::write_report(report, out,
                           "# " + std::string(pr::kVersionString) + "\n" +
                               cfg.resolved_text(),
                           cfg.get_bool("plot"));
    std::printf("%s\n", (fs::path(out) / "sweeps" / "sweep.csv").string().c_str());
    return 0;
}

int cmd_select_hparams(const RunConfig& cfg) {
    const int res = static_cast<int>(cfg.get_int("data_resolution"));
    const int ch = static_cast<int>(cfg.get_int("data_channels"));
    pr::data::ImageBatch id_data = pr::data::load_dataset(require(cfg, "id_data"), res, ch);
    pr::run::Session session = pr::run::Session::open(cfg, false, true, false);

    std::vector<std::pair<int, int>> grid;
    const std::string g = cfg.get("grid");
    if (g.rfind("preset:", 0) == 0) {
        grid = pr::eval::ensemble_preset(g.substr(7));
    } else {
        grid = pr::run::resolve_ensemble(g, session.cm->schedule.N);
    }
    pr::proj::Projector project =
        pr::proj::make_projector(pr::proj::Backend::cm_full, nullptr, session.cm.get());
    pr::dist::DistanceFn d = session.metric(cfg, cfg.get("metric"), cfg.get_seed());
    pr::eval::HparamSelection sel = pr::eval::select_hparams_rotated(
        project, id_data, grid, d, static_cast<int>(cfg.get_int("n_alpha")),
        static_cast<int>(cfg.get_int("n_beta")), cfg.get_seed(),
        static_cast<int>(cfg.get_int("threads")));

    if (!cfg.empty("out_dir")) {
        const fs::path out = cfg.get("out_dir");
        write_resolved_config(cfg, out);
        std::ofstream f(out / "selected.txt", std::ios::trunc);
        f << "alpha=" << sel.alpha << "\n" << "beta=" << sel.beta << "\n";
        std::ofstream t(out / "grid.csv", std::ios::trunc);
        t << "alpha,beta,auroc\n";
        for (const auto& [a, b, v] : sel.table) {
            char line[64];
            std::snprintf(line, sizeof(line), "%d,%d,%.12g\n", a, b, v);
            t << line;
        }
    }
    std::printf("alpha=%d beta=%d\n", sel.alpha, sel.beta);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(pr::kVersionString) +
                 " - projection-based novelty detection workbench"};
    app.require_subcommand(1);
    std::map<std::string, CommandArgs> args;
    register_command(app, "train-diffusion", "train the denoiser backbone", args);
    register_command(app, "distill", "train a consistency model (teacher optional)", args);
    register_command(app, "score", "score a dataset, writing a score vector", args);
    register_command(app, "evaluate", "compute AUROC/TNR tables into a report dir", args);
    register_command(app, "sweep", "AUROC per timestep for the score variants", args);
    register_command(app, "select-hparams", "pick (alpha, beta) on rotated ID data", args);

    CLI11_PARSE(app, argc, argv);
    const std::string name = app.get_subcommands().front()->get_name();
    try {
        RunConfig cfg = resolve_config(args[name]);
        if (name == "train-diffusion") return cmd_train_diffusion(cfg);
        if (name == "distill") return cmd_distill(cfg);
        if (name == "score") return cmd_score(cfg);
        if (name == "evaluate") return cmd_evaluate(cfg);
        if (name == "sweep") return cmd_sweep(cfg);
        if (name == "select-hparams") return cmd_select_hparams(cfg);
        std::fprintf(stderr, "projreg: unknown command %s\n", name.c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "projreg %s: %s\n", name.c_str(), e.what());
        return 1;
    }
}
