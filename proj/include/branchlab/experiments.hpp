#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "branchlab/objective.hpp"
#include "json.hpp"

namespace branchlab {

enum class ExperimentId { Toy, Hd, Transversality, Phase, Width, Constants, All };

std::string_view to_string(ExperimentId id);
ExperimentId parse_experiment(std::string_view name);

inline constexpr int kReportSchemaVersion = 1;

struct ExperimentConfig {
  ExperimentId experiment = ExperimentId::Hd;
  std::uint64_t seed = 1;
  std::optional<Eigen::Index> n;  // unset: 2000 for toy-data experiments, 500 for hd
  Eigen::Index d = 5;
  Eigen::Index m = 10;
  std::vector<Eigen::Index> widths{3, 5, 8, 10, 15, 20, 30, 50, 75, 100};
  double alpha = 0.004;
  double toy_alpha = 0.0;  // the symmetric toy is unregularized
  double dlambda = 1.0 / 400.0;
  FdScheme fd_scheme = FdScheme::Central;
  int toy_grid = 201;       // sublevel grid resolution per axis
  std::vector<double> a_sym{0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  int jobs = 0;             // sweep workers; 0 = hardware concurrency
  std::filesystem::path out = "runs";

  Eigen::Index toy_n() const { return n.value_or(2000); }
  Eigen::Index hd_n() const { return n.value_or(500); }

  void validate() const;
  /// Echo of every field (the output directory excluded, so reruns elsewhere compare equal).
  nlohmann::ordered_json to_json() const;
};

/// Applies "key = value" lines ('#' starts a comment). Unknown keys throw InvalidInput.
void apply_config_text(ExperimentConfig& cfg, std::string_view text);
void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  std::string criterion;  // human-readable threshold
};

struct StageError {
  std::string stage;
  std::string message;
};

struct ManifestEntry {
  std::string file;                 // relative to the run directory
  std::uintmax_t bytes = 0;
  std::string fnv1a;                // 64-bit FNV-1a of the contents, hex
  std::vector<std::string> fields;  // result keys derived from this file
};

struct ExperimentReport {
  ExperimentConfig config;
  std::filesystem::path dir;
  nlohmann::ordered_json results = nlohmann::ordered_json::object();
  std::vector<Check> checks;
  std::vector<StageError> errors;
  std::vector<ManifestEntry> files;
  std::vector<ExperimentReport> parts;  // only for All

  bool passed() const;
  nlohmann::ordered_json to_json() const;
};

/// Runs the configured experiment into config.out and writes report.json there
/// (All: one subdirectory per experiment plus a summary report).
ExperimentReport run(const ExperimentConfig& config);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int points = 0;
};

struct WidthFit {
  double K = 0.0;   // lambda_1'(0) ~ K / m + K2 / m^2
  double K2 = 0.0;
  std::optional<LineFit> lambda_star;  // over widths with a crossing; needs at least 4
};

/// lambda_star[i] empty where width m[i] has no crossing. K comes from regressing
/// m * rate on (1, 1/m) over all widths.
WidthFit width_fit(const std::vector<double>& m, const std::vector<std::optional<double>>& lambda_star,
                   const std::vector<double>& rate);

/// lambda_1'(0) by a second-order one-sided difference of the lowest eigenvalue of re-minimized
/// points at lambda = 0, h, 2h.
double tracked_softening_rate(const Dataset& data, const VectorXd& v, const ObjectiveConfig& obj, double h = 1e-3);

}  // namespace branchlab
