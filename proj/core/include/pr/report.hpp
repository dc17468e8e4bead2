#pragma once

#include <string>
#include <vector>

#include "pr/config.hpp"
#include "pr/evaluation.hpp"

namespace pr::eval {

struct MetricRow {
    std::string method;
    std::string task;
    std::string seed_label;  // a seed value or "mean"
    double auroc = 0.0;
    double tnr95 = 0.0;
};

/// Report directory: report.txt, metrics.csv, manifest.txt (provenance),
/// config.txt (the resolved run config), scores/ (score vectors referenced
/// by hash), sweeps/ when sweep rows are present.
struct EvalReport {
    std::vector<MetricRow> rows;
    std::vector<SweepRow> sweep;
    std::vector<std::pair<std::string, std::string>> provenance;
    double wall_seconds = 0.0;
};

/// Writes the report; refuses to reuse an existing directory.
void write_report(const EvalReport& r, const std::string& dir,
                  const std::string& resolved_config, bool emit_plot = false);

std::string metrics_csv(const EvalReport& r);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string sweep_svg(const std::vector<SweepRow>& rows);

/// Full benchmark orchestration from a run config: loads checkpoints and
/// datasets, scores every (method, task, seed) cell, persists every score
/// vector, and returns the metric table (per-seed rows plus a mean row when
/// several seeds are configured).
EvalReport run_benchmark(const config::RunConfig& cfg);

}  // namespace pr::eval
