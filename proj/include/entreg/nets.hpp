#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "entreg/rng.hpp"
#include "entreg/types.hpp"

namespace entreg {

// ---------------------------------------------------------------------------
// Benchmark classes
// ---------------------------------------------------------------------------

/// Linear rules x -> <theta, x> with |theta|_2 <= coef_radius on the signal ball
/// |x|_2 <= signal_radius in R^dimension.
struct LinearBall {
  int dimension = 1;
  double signal_radius = 1.0;
  double coef_radius = 1.0;
};

/// c-Lipschitz functions on [lo, hi] bounded by sup_bound in absolute value.
struct LipschitzBall {
  double lo = 0.0;
  double hi = 1.0;
  double lipschitz = 1.0;
  double sup_bound = 1.0;
  double length() const { return hi - lo; }
};

/// Functions analytic in the strip |Im z| < strip, 2 pi periodic on the real line,
/// with sup norm over the strip at most norm_radius. observation_dim 1 means
/// real-valued on the real line; 2 means complex-valued (encoded in R^2).
struct TrigAnalytic {
  double strip = 1.0;
  double norm_radius = 1.0;
  int observation_dim = 1;
};

using ClassSpec = std::variant<LinearBall, LipschitzBall, TrigAnalytic>;

void validate(const ClassSpec& spec);
std::string kind_name(const ClassSpec& spec);
int signal_dim(const ClassSpec& spec);
int observation_dim(const ClassSpec& spec);
/// Multiple of the nominal radius within which the nets below are guaranteed to cover.
double covering_factor(const ClassSpec& spec);
/// Ball of `factor` times the radius (coefficient radius, Lipschitz and sup bounds, or norm).
ClassSpec scaled(const ClassSpec& spec, double factor);

// ---------------------------------------------------------------------------
// Prediction rules
// ---------------------------------------------------------------------------

struct LinearRule {
  Vector theta;
};

/// Piecewise-linear interpolation of values at evenly spaced knots on [lo, hi].
struct PiecewiseLinearRule {
  double lo = 0.0;
  double hi = 1.0;
  Vector knot_values;  // at least two knots
};

/// F(x) = sum_j c_j e^{i j x}. Real-valued rules store c_0..c_J and evaluate
/// c_0 + 2 Re sum_{j>=1} c_j e^{ijx}; complex rules store c_{-J}..c_J.
struct TrigPolyRule {
  int degree = 0;
  bool real_valued = true;
  Eigen::VectorXcd coefficients;
};

using PredictionRule = std::variant<LinearRule, PiecewiseLinearRule, TrigPolyRule>;

/// Unclipped value of the rule at x (dimension 1, or 2 for complex trig rules).
Prediction evaluate(const PredictionRule& rule, const Signal& x);

/// Norm of the rule measured in units of the class ball (<= 1 means member).
/// For trig rules this is sum_j |c_j| e^{h|j|} / c, an upper bound on the strip norm.
double class_norm(const ClassSpec& spec, const PredictionRule& rule);
bool in_class(const ClassSpec& spec, const PredictionRule& rule, double tolerance = 1e-9);

/// Random member of the class ball (random theta, random Lipschitz path,
/// random analytic trig series).
PredictionRule sample_class_member(const ClassSpec& spec, Rng& rng);
/// Uniform draw from the class's signal space.
Signal sample_signal(const ClassSpec& spec, Rng& rng);

/// Locates x in a grid of `knots` evenly spaced knots on [lo, hi]: interval index and
/// position t in [0, 1] inside it. x is clamped to [lo, hi].
struct KnotPosition {
  int interval = 0;
  double t = 0.0;
};
KnotPosition locate(double lo, double hi, int knots, double x);

// ---------------------------------------------------------------------------
// Grids behind each net construction
// ---------------------------------------------------------------------------

struct LipschitzGrid {
  double lo = 0.0, hi = 1.0;
  double epsilon = 1.0;
  double sup_bound = 1.0;
  int knots = 2;        ///< knot spacing <= epsilon / c
  double quantum = 1.0; ///< value step c * spacing (<= epsilon), so every path is c-Lipschitz
  int first_half = 0;   ///< first knot value index s in [-first_half, first_half]
  bool degenerate = false;  ///< zero function only
  double value(int s) const;  ///< clamp(s * quantum, -sup_bound, sup_bound)
  double log2_count() const;
};
LipschitzGrid lipschitz_grid(const LipschitzBall& spec, double epsilon);

struct TrigGrid {
  int degree = 0;  ///< J; -1 when degenerate (zero rule only)
  double pitch = 0.0;
  bool real_valued = true;
  std::vector<double> radii;   ///< disk (or interval) radius per stored coefficient
  std::vector<double> counts;  ///< grid size per stored coefficient
  double log2_count() const;
  /// Grid values of stored coefficient `index` (projected onto its disk), in a fixed order.
  std::vector<std::complex<double>> coefficient_values(std::size_t index) const;
};
/// Degree from the Achieser approximation rate, coefficients on a grid of pitch
/// epsilon / (4 (2J + 1)) inside disks of radius c e^{-h|j|}.
TrigGrid trig_grid(const TrigAnalytic& spec, double epsilon);
int trig_degree(const TrigAnalytic& spec, double epsilon);

// ---------------------------------------------------------------------------
// Net levels
// ---------------------------------------------------------------------------

struct LinearExperts {
  Matrix thetas;  // dimension x K
};
struct PiecewiseExperts {
  double lo = 0.0, hi = 1.0;
  Matrix knot_values;  // knots x K
};
struct TrigExperts {
  int degree = 0;
  bool real_valued = true;
  Eigen::MatrixXcd coefficients;  // stored coefficients x K
};

/// A finite epsilon-net of a class ball in sup norm over the signal space.
struct NetLevel {
  ClassSpec spec;
  double epsilon = 1.0;
  int level = 0;  ///< dyadic index i for epsilon = 2^-i, 0 when built directly
  std::variant<LinearExperts, PiecewiseExperts, TrigExperts> experts;
  double entropy_bits = 0.0;  ///< log2(size())

  std::size_t size() const;
  PredictionRule rule(std::size_t k) const;
  /// All expert predictions at x, each clipped to the Y-ball (d x K).
  Matrix evaluate_all(const Signal& x, double Y) const;
};

constexpr double kDefaultExpertCap = 2e6;

/// log2 of the size of the net the builder would produce.
double net_log2_size(const ClassSpec& spec, double epsilon);

NetLevel build_linear_net(const LinearBall& spec, double epsilon, double cap = kDefaultExpertCap);
NetLevel build_lipschitz_net(const LipschitzBall& spec, double epsilon,
                             double cap = kDefaultExpertCap);
NetLevel build_trig_net(const TrigAnalytic& spec, double epsilon, double cap = kDefaultExpertCap);
NetLevel build_net(const ClassSpec& spec, double epsilon, double cap = kDefaultExpertCap);

/// Levels epsilon = 2^-i, i = 1..i_max, with total size under `cap`.
std::vector<NetLevel> dyadic_net_family(const ClassSpec& spec, int i_max,
                                        double cap = kDefaultExpertCap);
/// Largest i_max whose dyadic family fits in `cap` (0 if even level 1 does not).
int max_feasible_levels(const ClassSpec& spec, double cap = kDefaultExpertCap, int limit = 30);

/// Audit dump: expert_id,kind,epsilon,level,params (semicolon-joined).
void write_net_csv(std::ostream& out, const NetLevel& net, bool header = true);

}  // namespace entreg
