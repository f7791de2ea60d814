#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rdm/config.hpp"
#include "rdm/trainer.hpp"

namespace rdm {

/// Process exit codes used by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // training aborted, a run failed or a check failed
inline constexpr int kExitUsage = 2;    // bad arguments, missing or malformed config

struct CliContext {
  std::string config;                  // path or name under configs/
  std::vector<std::string> overrides;  // key=value
  std::optional<std::string> out;      // overrides the configured output directory
  std::ostream* log = nullptr;         // progress lines; null silences them
  std::ostream* err = nullptr;         // error messages; null silences them
};

/// Writes `ckpt/<iter>/{student,fake,rng}` under `root`.
void write_checkpoint(const std::filesystem::path& root, const TrainState& state, const TrainConfig& cfg);
/// Reads a directory written by write_checkpoint. Throws std::runtime_error with the path on failure.
TrainState read_checkpoint(const std::filesystem::path& dir);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast structural checks on a trained state: gradient identity, finite
/// differences, GN statistics, fake-update isolation and on-policy clipping.
std::vector<CheckResult> invariant_suite(const TrainState& state, const TrainConfig& cfg);

/// train: runs the configured training into <out>/ (metrics.csv, ckpt/, summary.txt,
/// config.cfg, incidents.log, plots). `resume` continues from a checkpoint directory.
int cli_train(const CliContext& ctx, const std::optional<std::string>& resume = {});

/// ablate: runs the cross product of the [ablate] grid plus any `grid` entries
/// (each "key=v1,v2"), one subdirectory per run, then writes comparison.csv,
/// runs.csv and one ablate_<key>.svg per axis.
int cli_ablate(const CliContext& ctx, const std::vector<std::string>& grid = {});

/// diagnose: R_s variance-vs-t' curve (variance.csv, variance.svg) and the
/// gradient-equivalence suite (equivalence.txt).
int cli_diagnose(const CliContext& ctx);

/// plot: renders the SVG families for an existing metrics.csv into `out_dir`.
int cli_plot(const std::filesystem::path& metrics_csv, const std::filesystem::path& out_dir, std::ostream* err);

/// Parsed metrics.csv: header names and numeric rows ("nan" becomes NaN).
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  /// Column values by name. Throws std::out_of_range for an unknown column.
  std::vector<double> column(const std::string& name) const;
};
MetricsTable read_metrics_csv(const std::filesystem::path& path);

/// Teacher mixture with each mean moved by `shift` along its own angular
/// direction (rotation in the first two coordinates) used as a stand-in fake.
GmmSpec perturbed_mixture(const GmmSpec& teacher, double shift);

}  // namespace rdm
