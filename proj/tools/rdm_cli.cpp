#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rdm/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Distribution-matching distillation as a group-normalized RL reward, on Gaussian-mixture teachers"};
  app.require_subcommand(1);

  rdm::CliContext ctx;
  ctx.log = &std::cout;
  ctx.err = &std::cerr;
  std::string out;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config,-c", ctx.config, "Config file path or name under configs/")->required();
    sub->add_option("--set", ctx.overrides, "Override a setting as key=value (repeatable)");
    sub->add_option("--out,-o", out, "Output directory");
  };

  auto* train = app.add_subcommand("train", "Run one training job");
  add_common(train);
  std::string resume;
  train->add_option("--resume", resume, "Continue from a checkpoint directory (ckpt/<iter>)");

  auto* ablate = app.add_subcommand("ablate", "Run the cross product of an ablation grid");
  add_common(ablate);
  std::vector<std::string> grid;
  ablate->add_option("--grid", grid, "Extra ablation axis as key=v1,v2 (repeatable)");

  auto* diagnose = app.add_subcommand("diagnose", "Score-difference variance curve and gradient identity check");
  add_common(diagnose);

  auto* plot = app.add_subcommand("plot", "Render SVG plots from a metrics.csv");
  std::string metrics;
  plot->add_option("metrics", metrics, "metrics.csv to plot")->required();
  plot->add_option("--out,-o", out, "Output directory (default: alongside the CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? rdm::kExitOk : rdm::kExitUsage;
  }
  if (!out.empty()) ctx.out = out;

  if (*train) return rdm::cli_train(ctx, resume.empty() ? std::nullopt : std::optional<std::string>(resume));
  if (*ablate) return rdm::cli_ablate(ctx, grid);
  if (*diagnose) return rdm::cli_diagnose(ctx);
  const std::filesystem::path csv(metrics);
  return rdm::cli_plot(csv, out.empty() ? csv.parent_path() : std::filesystem::path(out), &std::cerr);
}
