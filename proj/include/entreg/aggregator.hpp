#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "entreg/types.hpp"

namespace entreg {

/// How a weighted expert ensemble is turned into one prediction.
///
/// `vector`: weighted mean of the expert predictions; valid in any dimension for
/// eta <= 1/(8 Y^2) because exp(-eta |y - mu|^2) is concave in mu on the Y-ball.
/// `scalar`: the exact aggregating-algorithm substitution for squared loss on
/// [-Y, Y]; valid for d = 1 and eta <= 1/(2 Y^2).
enum class EtaMode { vector, scalar };

/// Largest learning rate the mode is proven for.
double eta_cap(EtaMode mode, double Y);
/// The cap itself; the default learning rate of each mode.
inline double default_eta(EtaMode mode, double Y) { return eta_cap(mode, Y); }

struct AggregatorOptions {
  EtaMode mode = EtaMode::vector;
  /// Accept weights summing to less than one (the unassigned mass is simply unused).
  bool allow_deficient = false;
};

/// Exponential-weights state over a fixed, ordered set of experts.
struct AggregatorState {
  Vector log_weights;          ///< current log weights, shifted so that max == 0
  Vector initial_log_weights;  ///< ln w_i exactly as supplied to aa_init
  double log_offset = 0.0;     ///< true log weight = log_weights + log_offset
  double eta = 0.0;
  double Y = 1.0;
  EtaMode mode = EtaMode::vector;

  std::size_t expert_count() const { return static_cast<std::size_t>(log_weights.size()); }
};

/// Sufficient statistics of a (possibly implicit) weighted ensemble at one signal.
/// Masses are unnormalised: they carry the prior weight and exp(-eta * past loss).
struct MixtureMoments {
  double log_mass = -std::numeric_limits<double>::infinity();
  Prediction mean;
  /// ln sum_i w_i exp(-eta L_i) exp(-eta (y - F_i(x))^2) at y = -Y and y = +Y
  /// (only filled in scalar mode).
  double log_mass_low = -std::numeric_limits<double>::infinity();
  double log_mass_high = -std::numeric_limits<double>::infinity();
};

AggregatorState aa_init(std::span<const double> initial_weights, double eta, double Y,
                        AggregatorOptions options = {});

/// Shifts log weights so the largest is zero; weight ratios are untouched.
void aa_normalize(AggregatorState& state);

/// `predictions` holds one expert prediction per column (d x K).
MixtureMoments aa_moments(const AggregatorState& state, const Matrix& predictions);

/// Single prediction from ensemble moments (mean or substitution, then clipped).
Prediction aa_substitute(const MixtureMoments& moments, double eta, double Y, EtaMode mode);

/// Combines moments of disjoint sub-ensembles into the moments of their union.
MixtureMoments combine_moments(std::span<const MixtureMoments> parts);

Prediction aa_predict(const AggregatorState& state, const Matrix& predictions);

void aa_update(AggregatorState& state, const Matrix& predictions, const Observation& y);

/// ln(1/w_i)/eta with the initial weight: the regret term guaranteed against expert i.
double aa_regret_bound(const AggregatorState& state, std::size_t expert_index);

/// Debug dump: expert_id,log_weight.
void write_weights_csv(std::ostream& out, const AggregatorState& state);

struct ConcavityReport {
  bool pass = false;
  /// Largest second difference of mu -> exp(-eta |y - mu|^2) found on the grid.
  double worst_second_difference = 0.0;
  Vector worst_y;
  Vector worst_mu;
};

/// Grid scan of the concavity that licenses the weighted-mean substitution.
ConcavityReport verify_concavity(double eta, double Y, int d, int grid_resolution,
                                 double tolerance = 1e-9);

struct MixabilityReport {
  bool pass = false;
  /// max over the grid of (y - mu*)^2 - g(y), g the generalized prediction.
  double worst_excess = 0.0;
};

/// Grid scan of the scalar substitution: for two-expert ensembles on [-Y, Y],
/// checks (y - mu*)^2 <= g(y) for all y on the grid.
MixabilityReport verify_mixability(double eta, double Y, int grid_resolution,
                                   double tolerance = 1e-9);

/// ln(sum_i exp(v_i)); -inf for empty input.
double log_sum_exp(std::span<const double> values);

}  // namespace entreg
