#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "entreg/nets.hpp"
#include "entreg/rng.hpp"
#include "entreg/types.hpp"

namespace entreg {

// ---------------------------------------------------------------------------
// epsilon tradeoff A eps^-a + B eps^b
// ---------------------------------------------------------------------------

struct TradeoffProblem {
  double A = 1.0, a = 1.0, B = 1.0, b = 1.0;
};

struct TradeoffSolution {
  double epsilon_star = 0.0;
  double min_value = 0.0;
  double approx_epsilon = 0.0;  ///< (A/B)^{1/(a+b)}
  double approx_value = 0.0;    ///< 2 A^{b/(a+b)} B^{a/(a+b)}
};

double tradeoff_objective(const TradeoffProblem& p, double epsilon);
/// Throws InvalidInput unless all four parameters are positive.
TradeoffSolution solve_tradeoff(const TradeoffProblem& p);

// ---------------------------------------------------------------------------
// Best-in-class losses
// ---------------------------------------------------------------------------

struct BestExpert {
  std::size_t expert_id = 0;
  double loss = 0.0;
};

/// Exhaustive minimum over the net; lowest id wins ties. Predictions are clipped to
/// the Y-ball (unclipped with the default).
BestExpert best_in_net_loss(const NetLevel& net, std::span<const Example> data,
                            double Y = std::numeric_limits<double>::infinity());

struct BestLinear {
  Vector theta;
  double loss = 0.0;
};

/// Least squares over theta (minimum-norm solution), or over |theta|_2 <= B.
BestLinear best_linear_loss(std::span<const Example> data, std::optional<double> B = std::nullopt);

/// Least-squares fit of a piecewise-linear function through the data points with
/// |f| <= sup_bound and slope <= lipschitz (ADMM, then a feasibility pass).
/// Returns the fitted values at the sorted distinct signals and the total loss.
struct LipschitzFit {
  std::vector<double> knots;
  Vector values;
  double loss = 0.0;
};
LipschitzFit fit_lipschitz(std::span<const Example> data, double sup_bound, double lipschitz);

struct Approachability {
  double value = 0.0;  ///< minimal class norm (units of the class ball)
  bool feasible = true;
};

/// Smallest class norm r such that some rule of norm <= r has mean squared loss
/// <= epsilon on the data; bisection to 1e-4. Linear and Lipschitz classes only.
Approachability empirical_approachability(std::span<const Example> data, const ClassSpec& spec, double epsilon,
                                          double ceiling = 64.0);

// ---------------------------------------------------------------------------
// Growth shapes and fits
// ---------------------------------------------------------------------------

enum class CurveKind { finite_dim, analytic, sobolev };

struct CurveParams {
  double L = 1.0;      ///< norm factor
  double M = 2.0;      ///< log power (analytic)
  double gamma = 1.0;  ///< smoothness (sobolev)
};

struct CurvePoint {
  double N = 0.0;
  double shape = 0.0;  ///< regret-term shape with unit constant
  double value = 0.0;  ///< fitted_constant * shape
};

struct BoundCurve {
  std::vector<CurvePoint> points;
  double fitted_constant = 1.0;
};

/// finite_dim: L log N; analytic: L log^M N; sobolev: L^{1/(gamma+1)} N^{gamma/(gamma+1)}.
double curve_shape(CurveKind kind, const CurveParams& params, double N);
/// Shape over N_range; with `observed` (same length) the constant is the least-squares fit.
BoundCurve bound_curve(CurveKind kind, const CurveParams& params, std::span<const double> N_range,
                       std::span<const double> observed = {});

struct PowerFit {
  double exponent = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// OLS of log y on log x over points with x, y > 0.
PowerFit fit_power_law(std::span<const double> x, std::span<const double> y);
/// OLS of log y on log log x: y ~ C log^M x.
PowerFit fit_polylog(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Covering oracles
// ---------------------------------------------------------------------------

/// Points at which sup distances are measured for one-dimensional signal spaces.
std::vector<double> covering_points(const ClassSpec& spec, int count);

/// min over experts of the sup distance to the target on the points (exact sup for
/// linear classes); branch and bound with early exit.
double nearest_expert_distance(const NetLevel& net, const PredictionRule& target, std::span<const double> points);

/// Same for the full Lipschitz net of a grid, exact by a bottleneck dynamic program.
double nearest_path_distance(const LipschitzGrid& grid, const PredictionRule& target, std::span<const double> points);

struct CoveringReport {
  bool pass = false;
  double worst_distance = 0.0;
  double allowed = 0.0;  ///< covering factor times epsilon
  int members = 0;
};

/// Draws `members` random class members and checks each is within cf * epsilon of the net.
CoveringReport covering_check(const NetLevel& net, int members, int points, Rng& rng);
CoveringReport covering_check(const LipschitzBall& spec, const LipschitzGrid& grid, int members, int points,
                              Rng& rng);

}  // namespace entreg
