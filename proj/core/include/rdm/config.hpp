#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rdm/trainer.hpp"

namespace rdm {

/// Parse or validation failure. `what()` carries the source, line and key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How the teacher mixture is described in a config file. Either a ring
/// (components, radius, variance, dim) or explicit flat lists.
struct TeacherDesc {
  std::string kind = "ring";
  std::size_t components = 8;
  double radius = 4.0;
  double variance = 0.05;
  std::size_t dim = 2;
  Vec weights;
  Vec means;  // components x dim, row-major
  Vec variances;

  GmmSpec build() const;
};

/// Which fake denoiser `diagnose` compares against the teacher.
enum class DiagFake { kPerturbed, kTeacher, kNetwork };
DiagFake parse_diag_fake(std::string_view name);
std::string_view to_string(DiagFake mode);

struct DiagnoseConfig {
  DiagFake fake = DiagFake::kPerturbed;
  std::vector<double> tprimes{0.1, 0.3, 0.5, 0.7, 0.9};
  std::size_t resamples = 512;
  std::size_t points = 64;      // x0 rows drawn from the teacher
  double shift = 0.5;           // mean offset of the perturbed fake mixture
  std::size_t equivalence_instances = 12;  // per dimension in {1, 2, 8}
};

struct AblationAxis {
  std::string key;
  std::vector<std::string> values;
};

struct ExperimentConfig {
  TeacherDesc teacher;
  TrainConfig train;
  std::vector<std::string> aux_kinds;
  std::vector<double> aux_weights;
  Vec radial_center{4.0, 0.0};
  Vec halfspace_normal{1.0, 0.0};
  std::size_t mode_component = 0;
  std::string sd_reference_path;  // student checkpoint for the energy_dist_sd column

  std::string out_dir = "out";
  bool plots = true;
  DiagnoseConfig diagnose;
  std::vector<AblationAxis> grid;

  /// Builds the teacher and aux reward list into `train` and validates it.
  /// Loads `sd_reference_path` when set. Throws ConfigError.
  void finalize();
};

/// Sets one key from its textual value. Accepts bare keys ("gn") and
/// section-qualified keys ("rdm.gn").
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Applies a "key=value" override.
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

/// Parses `key = value` lines grouped under `[section]` headers. Lines in the
/// `[ablate]` section hold comma-separated value lists for the ablation grid.
/// `source` names the input in error messages. Does not call finalize().
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");

ExperimentConfig load_config(const std::filesystem::path& path);

/// Resolves a --config argument: the path itself, else configs/<name>.cfg and
/// <name>.cfg. Throws ConfigError naming the argument when nothing exists.
std::filesystem::path resolve_config_path(const std::string& name);

/// Every setting in the parseable format (grid excluded); parsing the result
/// reproduces the same configuration.
std::string serialize_config(const ExperimentConfig& cfg);

/// All keys accepted by set_config_value, grouped by section.
std::vector<std::pair<std::string, std::vector<std::string>>> config_sections();

}  // namespace rdm
