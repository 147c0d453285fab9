#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "entreg/nets.hpp"
#include "entreg/strategies.hpp"

namespace entreg {

struct StrategyConfig {
  std::string kind = "compact";  ///< compact | banach | aar | universal
  std::string label;             ///< defaults to the strategy name
  std::optional<ClassSpec> class_spec;  ///< defaults to the experiment's target class
  EtaMode mode = EtaMode::vector;
  double eta = 0.0;
  int i_max = 0;  ///< 0: auto for the largest horizon
  int j_max = 2;
  bool implicit_lipschitz = true;
  double a = 1.0;
  std::vector<StrategyConfig> parts;  ///< universal only
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  /// realizable_{linear,lipschitz,trig} | noisy_{linear,lipschitz,trig} | adversarial_switching
  std::string generator = "realizable_lipschitz";
  double noise = 0.0;
  std::size_t switch_period = 256;  ///< adversarial_switching
  ClassSpec target_class = LipschitzBall{};
  std::vector<StrategyConfig> strategies;
  std::vector<std::size_t> N_list{256, 512, 1024};
  int replicates = 1;
  double Y = 1.0;
  double cap = kDefaultExpertCap;
  std::size_t fit_from = 256;  ///< smallest horizon used in exponent fits
  std::string output_dir;      ///< empty: no files
  bool write_rounds = false;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
ClassSpec parse_class_spec(const std::string& json_text);

/// One hidden target per replicate (two for adversarial_switching).
struct GeneratedSequence {
  std::vector<Example> data;
  std::vector<PredictionRule> targets;
};

GeneratedSequence generate_sequence(const ExperimentConfig& config, std::size_t N, int replicate);

std::unique_ptr<CertifiedStrategy> make_strategy(const StrategyConfig& s, const ExperimentConfig& config);

struct RegretRow {
  std::string strategy;
  std::size_t N = 0;
  int replicate = 0;
  double regret = 0.0;
  double certificate = 0.0;  ///< NaN when the strategy cannot certify the target
  std::string verdict;       ///< CERTIFIED | VIOLATION | UNCERTIFIED
};

struct FitRow {
  std::string strategy;
  double exponent = 0.0;
  double r2 = 0.0;
  double polylog_exponent = 0.0;
  double polylog_r2 = 0.0;
  std::vector<double> N;
  std::vector<double> mean_regret;
};

struct NetRow {
  std::string strategy;
  int level = 0;
  double epsilon = 0.0;
  double log2_count = 0.0;
  std::string representation;  ///< enumerated | chain
};

struct ExperimentReport {
  std::string name;
  std::vector<RegretRow> regret;
  std::vector<FitRow> fits;
  std::vector<NetRow> nets;
  bool any_violation = false;
  bool monotone_losses = true;  ///< cumulative losses never decreased
};

/// Runs every strategy on every replicate up to max(N_list), reading regret and
/// certificates at each horizon; writes CSVs when output_dir is set.
ExperimentReport run_experiment(const ExperimentConfig& config);

struct DominationRow {
  std::size_t N = 0;
  double mean_regret = 0.0;
  double matched_mean_regret = 0.0;
  double ratio = 0.0;
};

struct DominationReport {
  std::string strategy, matched;
  std::vector<DominationRow> rows;
  double exponent = 0.0, matched_exponent = 0.0;
  bool finite = true;
  bool monotone_losses = true;
};

/// Strategy built for one class run against targets of the experiment's class,
/// compared with a strategy matched to that class.
DominationReport domination_experiment(const ExperimentConfig& config, const StrategyConfig& candidate,
                                       const StrategyConfig& matched);

void write_regret_csv(std::ostream& out, const std::vector<RegretRow>& rows);
void write_fits_csv(std::ostream& out, const std::vector<FitRow>& rows);
void write_nets_csv(std::ostream& out, const std::vector<NetRow>& rows);
void write_domination_csv(std::ostream& out, const DominationReport& report);

/// Presets behind the `verify` (certificate) and `bench` (growth-shape) suites.
/// `scale` < 1 shortens horizons and replicate counts for quick runs.
std::vector<ExperimentConfig> verify_presets(std::uint64_t seed, double scale = 1.0);
std::vector<ExperimentConfig> bench_presets(std::uint64_t seed, double scale = 1.0);

struct DominationPreset {
  ExperimentConfig config;
  StrategyConfig candidate;
  StrategyConfig matched;
};
std::vector<DominationPreset> domination_presets(std::uint64_t seed, double scale = 1.0);

/// Trig class radius used by the presets. Net size depends only on c / epsilon and h;
/// at this radius the strip h = 1 has one resolved level (2^-3) under the default cap.
constexpr double kPresetTrigRadius = 0.13;

}  // namespace entreg
