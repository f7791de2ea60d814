#include "rdm/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <locale>
#include <sstream>

namespace rdm {

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double to_double(std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw std::invalid_argument("expected a finite number, got '" + std::string(v) + "'");
  return out;
}

std::size_t to_count(std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw std::invalid_argument("expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected on|off, got '" + std::string(v) + "'");
}

Vec to_list(std::string_view v) {
  Vec out;
  if (trim(v).empty()) return out;
  for (auto p : split(v, ',')) out.push_back(to_double(p));
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt_list(const Vec& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

std::string fmt_bool(bool b) { return b ? "on" : "off"; }

struct Key {
  const char* section;
  const char* name;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define RDM_COUNT(sec, key, field)                                                      \
  Key{sec, key, [](ExperimentConfig& c, std::string_view v) { c.field = to_count(v); }, \
      [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define RDM_REAL(sec, key, field)                                                        \
  Key{sec, key, [](ExperimentConfig& c, std::string_view v) { c.field = to_double(v); }, \
      [](const ExperimentConfig& c) { return fmt(c.field); }}
#define RDM_BOOL(sec, key, field)                                                      \
  Key{sec, key, [](ExperimentConfig& c, std::string_view v) { c.field = to_bool(v); }, \
      [](const ExperimentConfig& c) { return fmt_bool(c.field); }}
#define RDM_LIST(sec, key, field)                                                      \
  Key{sec, key, [](ExperimentConfig& c, std::string_view v) { c.field = to_list(v); }, \
      [](const ExperimentConfig& c) { return fmt_list(c.field); }}

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = {
      Key{"teacher", "kind",
          [](ExperimentConfig& c, std::string_view v) {
            if (v != "ring" && v != "explicit") throw std::invalid_argument("expected ring|explicit");
            c.teacher.kind = std::string(v);
          },
          [](const ExperimentConfig& c) { return c.teacher.kind; }},
      RDM_COUNT("teacher", "components", teacher.components),
      RDM_REAL("teacher", "radius", teacher.radius),
      RDM_REAL("teacher", "variance", teacher.variance),
      RDM_COUNT("teacher", "dim", teacher.dim),
      RDM_LIST("teacher", "weights", teacher.weights),
      RDM_LIST("teacher", "means", teacher.means),
      RDM_LIST("teacher", "variances", teacher.variances),

      RDM_COUNT("model", "hidden", train.hidden),
      RDM_COUNT("model", "layers", train.layers),
      RDM_COUNT("model", "cond_width", train.cond_width),
      RDM_REAL("model", "init_perturb", train.init_perturb),

      RDM_LIST("schedule", "times", train.grid.times),
      Key{"schedule", "tprime_range",
          [](ExperimentConfig& c, std::string_view v) {
            const auto parts = split(v, ':');
            if (parts.size() != 2) throw std::invalid_argument("expected lo:hi");
            c.train.grid.tprime_min = to_double(parts[0]);
            c.train.grid.tprime_max = to_double(parts[1]);
          },
          [](const ExperimentConfig& c) {
            return fmt(c.train.grid.tprime_min) + ":" + fmt(c.train.grid.tprime_max);
          }},

      RDM_COUNT("train", "groups", train.groups),
      RDM_COUNT("train", "group_size", train.grpo.group_size),
      RDM_COUNT("train", "iterations", train.iterations),
      RDM_COUNT("train", "warmup", train.warmup),
      RDM_COUNT("train", "seed", train.seed),
      RDM_REAL("train", "grad_clip", train.grad_clip),
      RDM_REAL("train", "lr", train.generator_opt.lr),
      RDM_REAL("train", "fake_lr", train.fake_opt.lr),
      RDM_REAL("train", "weight_decay", train.generator_opt.weight_decay),

      RDM_BOOL("rdm", "gn", train.gn),
      RDM_BOOL("rdm", "share_t", train.share_t),
      RDM_BOOL("rdm", "share_tprime", train.share_tprime),
      RDM_BOOL("rdm", "shared_noise_init", train.shared_noise_init),
      Key{"rdm", "beta_mode",
          [](ExperimentConfig& c, std::string_view v) { c.train.beta_mode = parse_beta_mode(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.train.beta_mode)); }},
      Key{"rdm", "rdm_mode",
          [](ExperimentConfig& c, std::string_view v) { c.train.rdm_mode = parse_rdm_mode(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.train.rdm_mode)); }},
      Key{"rdm", "rs_source",
          [](ExperimentConfig& c, std::string_view v) {
            if (v == "auto")
              c.train.rs_source.reset();
            else
              c.train.rs_source = parse_rs_source(v);
          },
          [](const ExperimentConfig& c) {
            return c.train.rs_source ? std::string(to_string(*c.train.rs_source)) : std::string("auto");
          }},

      RDM_REAL("grpo", "eta", train.grpo.eta),
      RDM_COUNT("grpo", "is_updates", train.grpo.inner_updates),
      Key{"grpo", "ratio_mode",
          [](ExperimentConfig& c, std::string_view v) { c.train.grpo.ratio_mode = parse_ratio_mode(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.train.grpo.ratio_mode)); }},

      Key{"aux", "aux_kinds",
          [](ExperimentConfig& c, std::string_view v) {
            c.aux_kinds.clear();
            if (trim(v).empty() || v == "none") return;
            for (auto p : split(v, ',')) {
              parse_reward_kind(p);
              c.aux_kinds.emplace_back(p);
            }
          },
          [](const ExperimentConfig& c) {
            std::string s;
            for (std::size_t i = 0; i < c.aux_kinds.size(); ++i) s += (i ? ", " : "") + c.aux_kinds[i];
            return s.empty() ? std::string("none") : s;
          }},
      RDM_LIST("aux", "aux_weights", aux_weights),
      RDM_LIST("aux", "radial_center", radial_center),
      RDM_LIST("aux", "halfspace_normal", halfspace_normal),
      RDM_COUNT("aux", "mode_component", mode_component),

      RDM_COUNT("eval", "eval_every", train.eval_every),
      RDM_COUNT("eval", "eval_samples", train.eval_samples),
      RDM_COUNT("eval", "checkpoint_every", train.checkpoint_every),
      RDM_BOOL("eval", "wall_clock", train.wall_clock),
      Key{"eval", "sd_reference",
          [](ExperimentConfig& c, std::string_view v) { c.sd_reference_path = std::string(v == "none" ? "" : v); },
          [](const ExperimentConfig& c) { return c.sd_reference_path.empty() ? std::string("none") : c.sd_reference_path; }},

      Key{"output", "out", [](ExperimentConfig& c, std::string_view v) { c.out_dir = std::string(v); },
          [](const ExperimentConfig& c) { return c.out_dir; }},
      RDM_BOOL("output", "plots", plots),

      Key{"diagnose", "diag_fake",
          [](ExperimentConfig& c, std::string_view v) { c.diagnose.fake = parse_diag_fake(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.diagnose.fake)); }},
      RDM_LIST("diagnose", "diag_tprimes", diagnose.tprimes),
      RDM_COUNT("diagnose", "diag_resamples", diagnose.resamples),
      RDM_COUNT("diagnose", "diag_points", diagnose.points),
      RDM_REAL("diagnose", "diag_shift", diagnose.shift),
      RDM_COUNT("diagnose", "equivalence_instances", diagnose.equivalence_instances),
  };
  return table;
}

#undef RDM_COUNT
#undef RDM_REAL
#undef RDM_BOOL
#undef RDM_LIST

const Key* find_key(std::string_view key, std::string_view section = {}) {
  if (const auto dot = key.find('.'); dot != std::string_view::npos) {
    section = key.substr(0, dot);
    key = key.substr(dot + 1);
  }
  for (const Key& k : key_table())
    if (key == k.name && (section.empty() || section == k.section)) return &k;
  return nullptr;
}

}  // namespace

GmmSpec TeacherDesc::build() const {
  if (kind == "ring") return ring_gmm(components, radius, variance, dim);
  if (dim == 0) throw std::invalid_argument("teacher dim must be positive");
  if (weights.empty() || means.size() != weights.size() * dim)
    throw std::invalid_argument("teacher means must list components x dim values");
  GmmSpec spec;
  spec.weights = weights;
  spec.means = Field(weights.size(), dim);
  spec.means.values() = means;
  spec.variances = variances;
  spec.validate();
  return spec;
}

DiagFake parse_diag_fake(std::string_view name) {
  if (name == "perturbed") return DiagFake::kPerturbed;
  if (name == "teacher") return DiagFake::kTeacher;
  if (name == "network") return DiagFake::kNetwork;
  throw std::invalid_argument("unknown diag_fake '" + std::string(name) + "' (expected perturbed|teacher|network)");
}

std::string_view to_string(DiagFake mode) {
  switch (mode) {
    case DiagFake::kPerturbed: return "perturbed";
    case DiagFake::kTeacher: return "teacher";
    case DiagFake::kNetwork: return "network";
  }
  return "?";
}

void ExperimentConfig::finalize() {
  try {
    train.teacher = teacher.build();
    if (aux_weights.size() != aux_kinds.size()) {
      if (aux_weights.empty())
        aux_weights.assign(aux_kinds.size(), 10.0);
      else
        throw std::invalid_argument("aux_weights must list one weight per aux kind");
    }
    train.aux.clear();
    for (std::size_t i = 0; i < aux_kinds.size(); ++i) {
      AuxReward a;
      a.spec.kind = parse_reward_kind(aux_kinds[i]);
      a.spec.center = radial_center;
      a.spec.normal = halfspace_normal;
      a.spec.component = mode_component;
      a.weight = aux_weights[i];
      train.aux.push_back(a);
    }
    train.sd_reference.reset();
    if (!sd_reference_path.empty()) {
      std::ifstream in(sd_reference_path);
      if (!in) throw std::invalid_argument("cannot open sd_reference '" + sd_reference_path + "'");
      train.sd_reference = read_net(in).params;
    }
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const Key* k = find_key(trim(key));
  if (!k) throw ConfigError("unknown key '" + std::string(key) + "'");
  try {
    k->set(cfg, trim(value));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("key '" + std::string(k->name) + "': " + e.what());
  }
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  ExperimentConfig cfg;
  std::string section;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      bool known = section == "ablate";
      for (const Key& k : key_table()) known = known || section == k.section;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section == "ablate") {
      if (!find_key(key)) throw ConfigError(where + "unknown ablation key '" + std::string(key) + "'");
      // tprime_range values contain ':' and are separated by commas like the rest.
      AblationAxis axis{std::string(key), {}};
      for (auto v : split(value, ',')) {
        if (v.empty()) throw ConfigError(where + "empty value in ablation list for '" + std::string(key) + "'");
        axis.values.emplace_back(v);
      }
      cfg.grid.push_back(std::move(axis));
      continue;
    }
    const Key* k = find_key(key, section);
    if (!k) {
      const Key* elsewhere = find_key(key);
      throw ConfigError(where + "unknown key '" + std::string(key) + "'" +
                        (elsewhere ? " in [" + section + "] (belongs to [" + elsewhere->section + "])" : ""));
    }
    try {
      k->set(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError(where + "key '" + std::string(key) + "': " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::filesystem::path resolve_config_path(const std::string& name) {
  namespace fs = std::filesystem;
  for (const fs::path& p : {fs::path(name), fs::path("configs") / (name + ".cfg"), fs::path(name + ".cfg")})
    if (fs::is_regular_file(p)) return p;
  throw ConfigError("config file not found: '" + name + "'");
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const Key& k : key_table()) {
    if (section != k.section) {
      section = k.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::vector<std::string>>> config_sections() {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (const Key& k : key_table()) {
    if (out.empty() || out.back().first != k.section) out.push_back({k.section, {}});
    out.back().second.emplace_back(k.name);
  }
  return out;
}

}  // namespace rdm
