#include "rdm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <locale>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rdm/plot.hpp"

namespace rdm {

namespace fs = std::filesystem;

namespace {

void say(std::ostream* os, const std::string& line) {
  if (os) *os << line << '\n' << std::flush;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::binary | mode);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.imbue(std::locale::classic());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw std::runtime_error("error writing '" + path.string() + "'");
}

std::string fmt(double v, int precision = 10) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(precision) << v;
  return os.str();
}

// Loads and finalizes a config, applying overrides and the --out argument.
ExperimentConfig prepare(const CliContext& ctx) {
  ExperimentConfig cfg = load_config(resolve_config_path(ctx.config));
  for (const auto& o : ctx.overrides) apply_override(cfg, o);
  if (ctx.out) cfg.out_dir = *ctx.out;
  cfg.finalize();
  return cfg;
}

void emit_metric_plots(const MetricsTable& table, const fs::path& dir) {
  const auto iters = table.column("iter");
  auto family = [&](const std::string& title, const std::string& ylabel, const std::vector<std::string>& names,
                    const std::string& file) {
    PlotSpec spec{title, "iteration", ylabel, {}};
    for (const auto& n : names) spec.series.push_back({n, iters, table.column(n)});
    emit_plot(spec, dir / file);
  };
  family("Energy distance", "energy distance", {"energy_dist", "energy_dist_sd"}, "energy.svg");
  std::vector<std::string> cov;
  for (const auto& c : table.columns)
    if (c.rfind("coverage_", 0) == 0) cov.push_back(c);
  family("Mode coverage", "fraction", cov, "coverage.svg");
  family("Auxiliary reward", "mean reward", {"aux_reward_mean"}, "aux_reward.svg");
  family("Training statistics", "value", {"rs_abs_mean", "clip_frac", "ratio_mean", "beta_dm_mean"},
         "train_stats.svg");
}

struct RunOutcome {
  bool ok = false;
  std::string error;
  std::vector<MetricsRow> rows;
  std::size_t incidents = 0;
  std::vector<CheckResult> checks;
};

// One full training run into `dir`; shared by train and ablate.
RunOutcome train_into(const ExperimentConfig& cfg, const fs::path& dir, std::ostream* log,
                      std::optional<TrainState> resume = {}) {
  RunOutcome outcome;
  const TrainConfig& tc = cfg.train;
  fs::create_directories(dir);
  write_text(dir / "config.cfg", serialize_config(cfg));

  const fs::path metrics_path = dir / "metrics.csv";
  const bool append = resume && fs::exists(metrics_path);
  auto metrics = open_out(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!append) metrics << metrics_csv_header(tc.teacher.components()) << '\n';
  auto incidents = open_out(dir / "incidents.log", append ? std::ios::app : std::ios::trunc);

  RunSinks sinks;
  sinks.on_row = [&](const MetricsRow& row) {
    metrics << metrics_csv_row(row) << '\n' << std::flush;
    if (!metrics) throw std::runtime_error("error writing '" + metrics_path.string() + "'");
    say(log, "iter " + std::to_string(row.iteration) + "  energy_dist " + fmt(row.energy_dist, 6) +
                 "  aux " + fmt(row.aux_reward_mean, 6));
  };
  sinks.on_checkpoint = [&](const TrainState& s) { write_checkpoint(dir, s, tc); };
  sinks.on_incident = [&](std::size_t iter, const std::string& msg) {
    incidents << "round " << iter << ": " << msg << '\n' << std::flush;
  };

  const RunResult result = run(tc, sinks, std::move(resume));
  outcome.rows = result.rows;
  outcome.incidents = result.state.incidents;
  outcome.checks = invariant_suite(result.state, tc);
  if (tc.checkpoint_every == 0 || result.state.iteration % tc.checkpoint_every != 0)
    write_checkpoint(dir, result.state, tc);

  std::ostringstream summary;
  summary.imbue(std::locale::classic());
  const MetricsRow& last = result.rows.back();
  summary << "iterations " << result.state.iteration << "\n"
          << "samples " << result.state.samples << "\n"
          << "incidents " << result.state.incidents << "\n"
          << "final_energy_dist " << fmt(last.energy_dist) << "\n"
          << "final_energy_dist_sd " << fmt(last.energy_dist_sd) << "\n"
          << "final_aux_reward_mean " << fmt(last.aux_reward_mean) << "\n";
  for (std::size_t k = 0; k < last.coverage.size(); ++k)
    summary << "final_coverage_" << k << " " << fmt(last.coverage[k]) << "\n";
  bool all = true;
  for (const auto& c : outcome.checks) {
    summary << "check " << c.name << " " << (c.passed ? "PASS" : "FAIL") << "  " << c.detail << "\n";
    all = all && c.passed;
  }
  summary << "invariants " << (all ? "PASS" : "FAIL") << "\n";
  write_text(dir / "summary.txt", summary.str());

  if (cfg.plots) emit_metric_plots(read_metrics_csv(metrics_path), dir);
  outcome.ok = true;
  return outcome;
}

std::string run_name(const std::vector<std::pair<std::string, std::string>>& setting) {
  std::string name;
  for (const auto& [k, v] : setting) {
    std::string value = v;
    std::replace(value.begin(), value.end(), ':', '-');
    name += (name.empty() ? "" : "__") + k + "=" + value;
  }
  return name.empty() ? "base" : name;
}

}  // namespace

// ---------------------------------------------------------------------------

void write_checkpoint(const fs::path& root, const TrainState& state, const TrainConfig& cfg) {
  const fs::path dir = root / "ckpt" / std::to_string(state.iteration);
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "student");
    write_net(out, state.student);
  }
  {
    auto out = open_out(dir / "fake");
    write_net(out, state.fake);
  }
  auto out = open_out(dir / "rng");
  out << std::setprecision(17);
  out << "rdm-rng v1\n"
      << "seed " << cfg.seed << "\n"
      << "iteration " << state.iteration << "\n"
      << "samples " << state.samples << "\n"
      << "incidents " << state.incidents << "\n"
      << "window " << state.window.rs_abs << " " << state.window.clip_frac << " " << state.window.ratio << " "
      << state.window.beta_dm << " " << state.window.rounds << "\n";
  if (!out) throw std::runtime_error("error writing checkpoint '" + dir.string() + "'");
}

TrainState read_checkpoint(const fs::path& dir) {
  auto open = [&](const char* name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint file '" + (dir / name).string() + "'");
    in.imbue(std::locale::classic());
    return in;
  };
  TrainState state;
  try {
    auto s = open("student");
    state.student = read_net(s);
    auto f = open("fake");
    state.fake = read_net(f);
  } catch (const std::runtime_error&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error("malformed checkpoint '" + dir.string() + "': " + e.what());
  }
  auto in = open("rng");
  std::string magic, version, key;
  std::uint64_t seed = 0;
  in >> magic >> version;
  if (magic != "rdm-rng" || version != "v1") throw std::runtime_error("bad rng file in '" + dir.string() + "'");
  in >> key >> seed >> key >> state.iteration >> key >> state.samples >> key >> state.incidents >> key >>
      state.window.rs_abs >> state.window.clip_frac >> state.window.ratio >> state.window.beta_dm >>
      state.window.rounds;
  if (!in) throw std::runtime_error("truncated rng file in '" + dir.string() + "'");
  return state;
}

std::vector<CheckResult> invariant_suite(const TrainState& state, const TrainConfig& cfg) {
  std::vector<CheckResult> out;
  const std::size_t round = state.iteration;

  {
    const std::size_t dims[] = {1, 2, 8};
    const EquivalenceReport rep = check_gradient_equivalence(cfg.seed, 2, dims);
    out.push_back({"gradient_equivalence", rep.passed, "max_rel_error " + fmt(rep.max_rel_error, 3)});
  }
  {
    // Random parameters of the trained architecture: trained nets saturate
    // tanh units and their ~1e-8 gradients sit below the central-difference
    // roundoff floor at this step size.
    RngStream rng(cfg.seed, stream_key(0x7e57, round));
    MlpParams params(state.student.params.shape);
    for (double& v : params.values) v = 0.3 * rng.normal();
    const Vec x = randn(rng, cfg.teacher.dim());
    const Vec u = randn(rng, cfg.teacher.dim());
    const double err = fd_check(params, x, 0.5, 0, u, 1e-5);
    out.push_back({"finite_difference", err < 1e-4, "max_rel_error " + fmt(err, 3)});
  }

  TrainState probe = state;
  const auto groups = sample_round(probe, cfg, round);
  {
    const std::uint64_t before = params_hash(probe.student.params);
    update_fake(probe, cfg, groups, round);
    const bool same = params_hash(probe.student.params) == before;
    out.push_back({"fake_update_isolation", same, same ? "generator untouched" : "generator changed"});
  }
  const RewardBatch batch = compute_rewards(probe, cfg, groups, round);
  {
    bool ok = true;
    double worst_mean = 0.0, worst_std = 0.0;
    for (const AdvantageField& f : batch.normalized) {
      const GroupStatsCheck c = check_group_stats(f);
      ok = ok && c.guarded_exact_zero;
      worst_mean = std::max(worst_mean, c.max_abs_mean);
      worst_std = std::max(worst_std, c.max_std_deviation);
    }
    ok = ok && worst_mean < 1e-10 && worst_std <= 1e-8;
    out.push_back({"group_normalization", ok,
                   std::to_string(batch.normalized.size()) + " fields, max |mean| " + fmt(worst_mean, 3) +
                       " max |std-1| " + fmt(worst_std, 3)});
  }
  {
    const PolicyGradEstimate est = grpo_surrogate(probe.student, batch.steps, batch.advantages, cfg.grpo);
    PolicyGradEstimate plain = policy_grad_rdm(probe.student, batch.steps, batch.advantages);
    plain.grads.scale(1.0 / static_cast<double>(batch.advantages.size()));
    // Relative to the gradient norm: single coordinates are sums over a
    // zero-mean advantage field and cancel down to roundoff.
    double diff2 = 0.0, ref2 = 0.0;
    for (std::size_t k = 0; k < est.grads.values.size(); ++k) {
      const double a = est.grads.values[k], b = plain.grads.values[k];
      diff2 += (a - b) * (a - b);
      ref2 += b * b;
    }
    const double worst = ref2 > 0.0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2);
    const bool ok = est.clip_fraction == 0.0 && worst < 1e-10;
    out.push_back({"on_policy_reduction", ok,
                   "clip_fraction " + fmt(est.clip_fraction, 3) + " max_rel_error " + fmt(worst, 3)});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> MetricsTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("metrics column '" + name + "' not found");
  const auto idx = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r[idx]);
  return out;
}

MetricsTable read_metrics_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read metrics file '" + path.string() + "'");
  MetricsTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty metrics file '" + path.string() + "'");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.columns.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    ss.imbue(std::locale::classic());
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      if (cell == "nan") {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      std::istringstream cs(cell);
      cs.imbue(std::locale::classic());
      double v = 0.0;
      if (!(cs >> v)) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      row.push_back(v);
    }
    if (row.size() != table.columns.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": wrong number of columns");
    table.rows.push_back(std::move(row));
  }
  return table;
}

GmmSpec perturbed_mixture(const GmmSpec& teacher, double shift) {
  GmmSpec out = teacher;
  const std::size_t d = teacher.dim();
  for (std::size_t k = 0; k < teacher.components(); ++k) {
    auto m = out.means.row(k);
    if (d >= 2 && std::hypot(m[0], m[1]) > 1e-12) {
      const double r = std::hypot(m[0], m[1]);
      const double u0 = -m[1] / r, u1 = m[0] / r;
      m[0] += shift * u0;
      m[1] += shift * u1;
    } else {
      m[0] += shift;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

int cli_train(const CliContext& ctx, const std::optional<std::string>& resume) {
  ExperimentConfig cfg;
  try {
    cfg = prepare(ctx);
  } catch (const std::exception& e) {
    say(ctx.err, std::string("error: ") + e.what());
    return kExitUsage;
  }
  try {
    std::optional<TrainState> state;
    if (resume) state = read_checkpoint(*resume);
    const RunOutcome r = train_into(cfg, cfg.out_dir, ctx.log, std::move(state));
    bool checks = true;
    for (const auto& c : r.checks) checks = checks && c.passed;
    say(ctx.log, "wrote " + (fs::path(cfg.out_dir) / "metrics.csv").string() + " (" +
                     std::to_string(r.rows.size()) + " rows, " + std::to_string(r.incidents) + " incidents, invariants " +
                     (checks ? "PASS" : "FAIL") + ")");
    return kExitOk;
  } catch (const std::exception& e) {
    say(ctx.err, std::string("training aborted: ") + e.what());
    return kExitFailure;
  }
}

int cli_ablate(const CliContext& ctx, const std::vector<std::string>& grid_args) {
  ExperimentConfig base;
  try {
    base = prepare(ctx);
    for (const auto& g : grid_args) {
      const auto eq = g.find('=');
      if (eq == std::string::npos) throw ConfigError("grid entry '" + g + "' is not of the form key=v1,v2");
      ExperimentConfig scratch = parse_config("[ablate]\n" + g + "\n", "--grid");
      base.grid.push_back(scratch.grid.front());
    }
    if (base.grid.empty()) throw ConfigError("ablation grid is empty (add an [ablate] section or --grid)");
  } catch (const std::exception& e) {
    say(ctx.err, std::string("error: ") + e.what());
    return kExitUsage;
  }

  // Cross product, last axis varying fastest.
  std::vector<std::vector<std::pair<std::string, std::string>>> settings{{}};
  for (const auto& axis : base.grid) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& s : settings)
      for (const auto& v : axis.values) {
        auto n = s;
        n.emplace_back(axis.key, v);
        next.push_back(std::move(n));
      }
    settings = std::move(next);
  }

  const fs::path root = base.out_dir;
  struct Entry {
    std::string name;
    std::vector<std::pair<std::string, std::string>> setting;
    RunOutcome outcome;
  };
  std::vector<Entry> entries;
  for (const auto& setting : settings) {
    Entry e{run_name(setting), setting, {}};
    say(ctx.log, "run " + e.name);
    try {
      ExperimentConfig cfg = base;
      cfg.grid.clear();
      for (const auto& [k, v] : setting) set_config_value(cfg, k, v);
      cfg.finalize();
      e.outcome = train_into(cfg, root / e.name, nullptr);
    } catch (const std::exception& ex) {
      e.outcome.ok = false;
      e.outcome.error = ex.what();
      say(ctx.err, "run " + e.name + " failed: " + ex.what());
    }
    entries.push_back(std::move(e));
  }

  try {
    fs::create_directories(root);
    auto runs = open_out(root / "runs.csv");
    runs << "run";
    for (const auto& axis : base.grid) runs << ',' << axis.key;
    runs << ",status\n";
    for (const auto& e : entries) {
      runs << e.name;
      for (const auto& kv : e.setting) runs << ',' << kv.second;
      runs << ',' << (e.outcome.ok ? "ok" : "failed") << '\n';
    }

    auto final_of = [](const Entry& e, auto pick) {
      return e.outcome.ok && !e.outcome.rows.empty() ? pick(e.outcome.rows.back())
                                                     : std::numeric_limits<double>::quiet_NaN();
    };
    auto cmp = open_out(root / "comparison.csv");
    cmp << "metric";
    for (const auto& e : entries) cmp << ',' << e.name;
    cmp << '\n';
    const std::vector<std::pair<std::string, std::function<double(const MetricsRow&)>>> metrics = {
        {"final_energy_dist", [](const MetricsRow& r) { return r.energy_dist; }},
        {"final_energy_dist_sd", [](const MetricsRow& r) { return r.energy_dist_sd; }},
        {"final_aux_reward_mean", [](const MetricsRow& r) { return r.aux_reward_mean; }},
        {"final_min_coverage",
         [](const MetricsRow& r) { return *std::min_element(r.coverage.begin(), r.coverage.end()); }},
        {"final_clip_frac", [](const MetricsRow& r) { return r.clip_frac; }},
        {"samples", [](const MetricsRow& r) { return static_cast<double>(r.samples); }},
    };
    for (const auto& [name, pick] : metrics) {
      cmp << name;
      for (const auto& e : entries) cmp << ',' << fmt(final_of(e, pick));
      cmp << '\n';
    }
    cmp << "incidents";
    for (const auto& e : entries) cmp << ',' << e.outcome.incidents;
    cmp << "\nstatus";
    for (const auto& e : entries) cmp << ',' << (e.outcome.ok ? "ok" : "failed");
    cmp << '\n';

    if (base.plots) {
      for (std::size_t a = 0; a < base.grid.size(); ++a) {
        const auto& axis = base.grid[a];
        PlotSpec spec{"Ablation: " + axis.key, "iteration", "energy distance (mean over other axes)", {}};
        for (const auto& value : axis.values) {
          std::vector<double> iters, sum;
          std::size_t count = 0;
          for (const auto& e : entries) {
            if (!e.outcome.ok || e.setting[a].second != value) continue;
            if (iters.empty()) {
              for (const auto& r : e.outcome.rows) iters.push_back(static_cast<double>(r.iteration));
              sum.assign(iters.size(), 0.0);
            }
            for (std::size_t i = 0; i < std::min(sum.size(), e.outcome.rows.size()); ++i)
              sum[i] += e.outcome.rows[i].energy_dist;
            ++count;
          }
          for (double& s : sum) s /= static_cast<double>(std::max<std::size_t>(count, 1));
          spec.series.push_back({axis.key + "=" + value, iters, sum});
        }
        std::string file = "ablate_" + axis.key + ".svg";
        std::replace(file.begin(), file.end(), '.', '_');
        file.replace(file.size() - 4, 4, ".svg");
        emit_plot(spec, root / file);
      }
    }
  } catch (const std::exception& ex) {
    say(ctx.err, std::string("error writing ablation outputs: ") + ex.what());
    return kExitFailure;
  }

  const bool all_ok = std::all_of(entries.begin(), entries.end(), [](const Entry& e) { return e.outcome.ok; });
  say(ctx.log, "wrote " + (root / "comparison.csv").string() + " (" + std::to_string(entries.size()) + " runs)");
  return all_ok ? kExitOk : kExitFailure;
}

int cli_diagnose(const CliContext& ctx) {
  ExperimentConfig cfg;
  try {
    cfg = prepare(ctx);
  } catch (const std::exception& e) {
    say(ctx.err, std::string("error: ") + e.what());
    return kExitUsage;
  }
  try {
    const TrainConfig& tc = cfg.train;
    const fs::path dir = cfg.out_dir;
    fs::create_directories(dir);
    write_text(dir / "config.cfg", serialize_config(cfg));

    RngStream data(tc.seed, stream_key(0xd1a6, 0));
    const Field x0 = gmm_sample_batch(tc.teacher, data, cfg.diagnose.points);
    const DenoiseFn teacher = [&](std::span<const double> x, double tp) {
      return posterior_mean_denoiser(tc.teacher, x, tp);
    };
    const GmmSpec perturbed = perturbed_mixture(tc.teacher, cfg.diagnose.shift);
    const FakeScoreState net = init_state(tc).fake;
    DenoiseFn fake;
    switch (cfg.diagnose.fake) {
      case DiagFake::kPerturbed:
        fake = [&](std::span<const double> x, double tp) { return posterior_mean_denoiser(perturbed, x, tp); };
        break;
      case DiagFake::kTeacher: fake = teacher; break;
      case DiagFake::kNetwork:
        fake = [&](std::span<const double> x, double tp) { return fake_denoise(net, x, tp); };
        break;
    }
    RngStream noise(tc.seed, stream_key(0xd1a6, 1));
    const auto curve = rs_variance_curve(teacher, fake, x0, cfg.diagnose.tprimes, cfg.diagnose.resamples, noise,
                                         tc.resolved_rs_source());
    {
      auto out = open_out(dir / "variance.csv");
      out << "tprime,rs_std\n";
      for (const auto& p : curve) out << fmt(p.tprime) << ',' << fmt(p.mean_std) << '\n';
    }
    PlotSeries series{"R_s std (" + std::string(to_string(cfg.diagnose.fake)) + " fake)", {}, {}};
    for (const auto& p : curve) {
      series.x.push_back(p.tprime);
      series.y.push_back(p.mean_std);
      say(ctx.log, "t' " + fmt(p.tprime, 4) + "  std " + fmt(p.mean_std, 6));
    }
    emit_plot({"Score-difference spread vs diffused timestep", "t'", "mean per-coordinate std", {series}},
              dir / "variance.svg");

    const std::size_t dims[] = {1, 2, 8};
    const EquivalenceReport rep = check_gradient_equivalence(tc.seed, cfg.diagnose.equivalence_instances, dims);
    {
      auto out = open_out(dir / "equivalence.txt");
      for (const auto& l : rep.lines) out << l << '\n';
      out << "instances " << rep.instances << "\nmax_rel_error " << fmt(rep.max_rel_error, 4) << "\n"
          << (rep.passed ? "PASS" : "FAIL") << '\n';
    }
    say(ctx.log, std::string("gradient equivalence: ") + (rep.passed ? "PASS" : "FAIL") + " (" +
                     std::to_string(rep.instances) + " instances, max rel error " + fmt(rep.max_rel_error, 3) + ")");
    return rep.passed ? kExitOk : kExitFailure;
  } catch (const std::exception& e) {
    say(ctx.err, std::string("diagnose failed: ") + e.what());
    return kExitFailure;
  }
}

int cli_plot(const fs::path& metrics_csv, const fs::path& out_dir, std::ostream* err) {
  try {
    const MetricsTable table = read_metrics_csv(metrics_csv);
    fs::create_directories(out_dir);
    emit_metric_plots(table, out_dir);
    return kExitOk;
  } catch (const std::exception& e) {
    say(err, std::string("error: ") + e.what());
    return kExitUsage;
  }
}

}  // namespace rdm
