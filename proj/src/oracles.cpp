#include "entreg/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "entreg/protocol.hpp"

namespace entreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void check_data(std::span<const Example> data) {
  if (data.empty()) throw InvalidInput("oracle: empty data");
}

}  // namespace

// ---------------------------------------------------------------------------
// Tradeoff
// ---------------------------------------------------------------------------

double tradeoff_objective(const TradeoffProblem& p, double epsilon) {
  return p.A * std::pow(epsilon, -p.a) + p.B * std::pow(epsilon, p.b);
}

TradeoffSolution solve_tradeoff(const TradeoffProblem& p) {
  if (!(p.A > 0.0 && p.a > 0.0 && p.B > 0.0 && p.b > 0.0)) {
    throw InvalidInput("solve_tradeoff: A, a, B, b must be positive");
  }
  const double s = p.a + p.b;
  TradeoffSolution out;
  out.epsilon_star = std::pow(p.A * p.a / (p.B * p.b), 1.0 / s);
  const double scale = std::pow(p.A, p.b / s) * std::pow(p.B, p.a / s);
  out.min_value = (std::pow(p.a / p.b, p.b / s) + std::pow(p.b / p.a, p.a / s)) * scale;
  out.approx_epsilon = std::pow(p.A / p.B, 1.0 / s);
  out.approx_value = 2.0 * scale;
  return out;
}

// ---------------------------------------------------------------------------
// Best-in-class losses
// ---------------------------------------------------------------------------

BestExpert best_in_net_loss(const NetLevel& net, std::span<const Example> data, double Y) {
  check_data(data);
  Eigen::RowVectorXd losses = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(net.size()));
  for (const Example& ex : data) {
    losses += (net.evaluate_all(ex.x, Y).colwise() - ex.y).colwise().squaredNorm();
  }
  BestExpert best{0, losses(0)};
  for (Eigen::Index k = 1; k < losses.size(); ++k) {
    if (losses(k) < best.loss) best = {static_cast<std::size_t>(k), losses(k)};
  }
  return best;
}

BestLinear best_linear_loss(std::span<const Example> data, std::optional<double> B) {
  check_data(data);
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto m = data.front().x.size();
  Matrix X(n, m);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data[i].y.size() != 1 || data[i].x.size() != m) throw InvalidInput("best_linear_loss: bad dimensions");
    X.row(i) = data[i].x.transpose();
    y(i) = data[i].y(0);
  }
  auto loss_of = [&](const Vector& t) { return (X * t - y).squaredNorm(); };

  Vector theta = X.completeOrthogonalDecomposition().solve(y);
  if (B && theta.norm() > *B) {
    if (!(*B >= 0.0)) throw InvalidInput("best_linear_loss: negative radius");
    // Constrained optimum lies on the sphere: theta(l) = (X^T X + l I)^{-1} X^T y with
    // |theta(l)| = B; the norm decreases in l.
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(X.transpose() * X);
    const Vector q = eig.eigenvectors().transpose() * (X.transpose() * y);
    const Vector& d = eig.eigenvalues();
    auto theta_at = [&](double l) {
      return Vector(eig.eigenvectors() * (q.array() / (d.array().max(0.0) + l)).matrix());
    };
    double lo = 0.0, hi = 1.0;
    while (theta_at(hi).norm() > *B) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (theta_at(mid).norm() > *B ? lo : hi) = mid;
    }
    theta = theta_at(hi);
    if (theta.norm() > *B) theta *= *B / theta.norm();
    // Projected-gradient polish.
    const double L = 2.0 * std::max(d.maxCoeff(), 1e-300);
    for (int it = 0; it < 100000; ++it) {
      Vector next = theta - (2.0 / L) * (X.transpose() * (X * theta - y));
      if (next.norm() > *B) next *= *B / next.norm();
      const double step = (next - theta).norm();
      theta = next;
      if (step <= 1e-10) break;
    }
  }
  return BestLinear{theta, loss_of(theta)};
}

LipschitzFit fit_lipschitz(std::span<const Example> data, double sup_bound, double lipschitz) {
  check_data(data);
  // Group equal signals: weight = multiplicity, target = mean observation.
  std::map<double, std::pair<double, double>> groups;  // x -> (count, sum y)
  double sum_sq = 0.0;
  for (const Example& ex : data) {
    auto& g = groups[ex.x(0)];
    g.first += 1.0;
    g.second += ex.y(0);
    sum_sq += ex.y(0) * ex.y(0);
  }
  const auto n = static_cast<Eigen::Index>(groups.size());
  LipschitzFit fit;
  Vector w(n), ybar(n);
  {
    Eigen::Index i = 0;
    for (const auto& [x, g] : groups) {
      fit.knots.push_back(x);
      w(i) = g.first;
      ybar(i) = g.second / g.first;
      ++i;
    }
  }
  Vector bound_d(std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index i = 0; i + 1 < n; ++i) bound_d(i) = lipschitz * (fit.knots[i + 1] - fit.knots[i]);

  auto apply_D = [&](const Vector& v) { return Vector(v.tail(n - 1) - v.head(n - 1)); };
  auto apply_Dt = [&](const Vector& z) {
    Vector out = Vector::Zero(n);
    out.tail(n - 1) += z;
    out.head(n - 1) -= z;
    return out;
  };

  // ADMM on v with splits z1 = D v (slope box) and z2 = v (value box).
  const double rho = 2.0 * w.mean();
  Vector v = ybar.cwiseMax(-sup_bound).cwiseMin(sup_bound);
  Vector z1 = n > 1 ? apply_D(v) : Vector();
  Vector z2 = v, u1 = Vector::Zero(z1.size()), u2 = Vector::Zero(n);
  // Tridiagonal system (2W + rho (D^T D + I)) v = rhs.
  Vector diag(n), off(std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double degree = n == 1 ? 0.0 : (i == 0 || i == n - 1 ? 1.0 : 2.0);
    diag(i) = 2.0 * w(i) + rho * (degree + 1.0);
  }
  off.setConstant(-rho);
  auto thomas = [&](Vector rhs) {
    Vector c(n), x(n);
    double denom = diag(0);
    c(0) = n > 1 ? off(0) / denom : 0.0;
    rhs(0) /= denom;
    for (Eigen::Index i = 1; i < n; ++i) {
      denom = diag(i) - off(i - 1) * c(i - 1);
      if (i + 1 < n) c(i) = off(i) / denom;
      rhs(i) = (rhs(i) - off(i - 1) * rhs(i - 1)) / denom;
    }
    x(n - 1) = rhs(n - 1);
    for (Eigen::Index i = n - 2; i >= 0; --i) x(i) = rhs(i) - c(i) * x(i + 1);
    return x;
  };
  const double tol = 1e-10 * std::sqrt(static_cast<double>(n)) * std::max(1.0, sup_bound);
  for (int it = 0; it < 20000; ++it) {
    Vector rhs = 2.0 * w.cwiseProduct(ybar) + rho * (z2 - u2);
    if (n > 1) rhs += rho * apply_Dt(z1 - u1);
    v = thomas(rhs);
    double primal = 0.0, dual = 0.0;
    if (n > 1) {
      const Vector Dv = apply_D(v);
      const Vector z1_new = (Dv + u1).cwiseMax(-bound_d).cwiseMin(bound_d);
      dual += (z1_new - z1).squaredNorm();
      z1 = z1_new;
      u1 += Dv - z1;
      primal += (Dv - z1).squaredNorm();
    }
    const Vector z2_new = (v + u2).cwiseMax(-sup_bound).cwiseMin(sup_bound);
    dual += (z2_new - z2).squaredNorm();
    z2 = z2_new;
    u2 += v - z2;
    primal += (v - z2).squaredNorm();
    if (std::sqrt(primal) < tol && rho * std::sqrt(dual) < tol) break;
  }
  // Forward pass onto the feasible set so the reported loss is attained.
  v(0) = std::clamp(v(0), -sup_bound, sup_bound);
  for (Eigen::Index i = 1; i < n; ++i) {
    v(i) = std::clamp(v(i), v(i - 1) - bound_d(i - 1), v(i - 1) + bound_d(i - 1));
    v(i) = std::clamp(v(i), -sup_bound, sup_bound);
  }
  fit.values = v;
  // sum over points (y - v)^2 = sum y^2 - 2 sum w ybar v + sum w v^2.
  fit.loss = std::max(0.0, sum_sq - 2.0 * w.cwiseProduct(ybar).dot(v) + w.dot(v.cwiseProduct(v)));
  return fit;
}

Approachability empirical_approachability(std::span<const Example> data, const ClassSpec& spec, double epsilon,
                                          double ceiling) {
  check_data(data);
  validate(spec);
  if (!(epsilon > 0.0)) throw InvalidInput("empirical_approachability: epsilon must be positive");
  const double count = static_cast<double>(data.size());
  std::function<double(double)> mse;
  if (const auto* lin = std::get_if<LinearBall>(&spec)) {
    mse = [&, B = lin->coef_radius](double r) { return best_linear_loss(data, r * B).loss / count; };
  } else if (const auto* lip = std::get_if<LipschitzBall>(&spec)) {
    mse = [&, s = *lip](double r) { return fit_lipschitz(data, r * s.sup_bound, r * s.lipschitz).loss / count; };
  } else {
    throw InvalidInput("empirical_approachability: trigonometric classes are not supported");
  }
  for (const Example& ex : data) {
    if (ex.y.size() != 1) throw InvalidInput("empirical_approachability: observations must be scalar");
  }
  double zero_mse = 0.0;
  for (const Example& ex : data) zero_mse += ex.y.squaredNorm();
  if (zero_mse / count <= epsilon) return {0.0, true};
  if (mse(ceiling) > epsilon) return {ceiling, false};
  double lo = 0.0, hi = ceiling;
  while (hi - lo > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    (mse(mid) <= epsilon ? hi : lo) = mid;
  }
  return {hi, true};
}

// ---------------------------------------------------------------------------
// Curves and fits
// ---------------------------------------------------------------------------

double curve_shape(CurveKind kind, const CurveParams& params, double N) {
  switch (kind) {
    case CurveKind::finite_dim:
      return params.L * std::log(N);
    case CurveKind::analytic:
      return params.L * std::pow(std::log(N), params.M);
    case CurveKind::sobolev:
      return std::pow(params.L, 1.0 / (params.gamma + 1.0)) * std::pow(N, params.gamma / (params.gamma + 1.0));
  }
  throw InvalidInput("curve_shape: unknown kind");
}

BoundCurve bound_curve(CurveKind kind, const CurveParams& params, std::span<const double> N_range,
                       std::span<const double> observed) {
  if (!observed.empty() && observed.size() != N_range.size()) {
    throw InvalidInput("bound_curve: observed values must align with N_range");
  }
  BoundCurve curve;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < N_range.size(); ++i) {
    const double s = curve_shape(kind, params, N_range[i]);
    curve.points.push_back({N_range[i], s, s});
    if (!observed.empty()) {
      num += s * observed[i];
      den += s * s;
    }
  }
  if (!observed.empty() && den > 0.0) curve.fitted_constant = num / den;
  for (auto& p : curve.points) p.value = curve.fitted_constant * p.shape;
  return curve;
}

namespace {

PowerFit ols(const std::vector<double>& u, const std::vector<double>& v) {
  PowerFit fit;
  fit.points = u.size();
  // Fewer than two positive points: no fit.
  if (u.size() < 2) {
    fit.exponent = fit.intercept = fit.r2 = std::numeric_limits<double>::quiet_NaN();
    return fit;
  }
  const double n = static_cast<double>(u.size());
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
  const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double suu = 0.0, suv = 0.0, svv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    suv += (u[i] - mu) * (v[i] - mv);
    svv += (v[i] - mv) * (v[i] - mv);
  }
  fit.exponent = suu > 0.0 ? suv / suu : 0.0;
  fit.intercept = mv - fit.exponent * mu;
  const double ss_res = svv - fit.exponent * suv;
  fit.r2 = svv > 0.0 ? 1.0 - std::max(0.0, ss_res) / svv : 1.0;
  return fit;
}

}  // namespace

PowerFit fit_power_law(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("fit_power_law: size mismatch");
  std::vector<double> u, v;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0) {
      u.push_back(std::log(x[i]));
      v.push_back(std::log(y[i]));
    }
  }
  return ols(u, v);
}

PowerFit fit_polylog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("fit_polylog: size mismatch");
  std::vector<double> u, v;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 1.0 && std::log(x[i]) > 0.0 && y[i] > 0.0) {
      u.push_back(std::log(std::log(x[i])));
      v.push_back(std::log(y[i]));
    }
  }
  return ols(u, v);
}

// ---------------------------------------------------------------------------
// Covering oracles
// ---------------------------------------------------------------------------

std::vector<double> covering_points(const ClassSpec& spec, int count) {
  if (count < 2) throw InvalidInput("covering_points: need at least two points");
  std::vector<double> pts(static_cast<std::size_t>(count));
  if (const auto* lip = std::get_if<LipschitzBall>(&spec)) {
    for (int i = 0; i < count; ++i) pts[i] = lip->lo + lip->length() * i / (count - 1);
  } else {
    for (int i = 0; i < count; ++i) pts[i] = 2.0 * std::numbers::pi * i / count;
  }
  return pts;
}

namespace {

// Branch and bound over experts: `distance_at(k, p)` is the distance of expert k to
// the target at point p.
template <class DistanceAt>
double branch_and_bound(std::size_t experts, std::size_t points, DistanceAt distance_at) {
  double best = kInf;
  std::size_t hot = 0;  // point that rejected the last candidate; tried first
  for (std::size_t k = 0; k < experts; ++k) {
    double worst = distance_at(k, hot);
    if (worst >= best) continue;
    for (std::size_t p = 0; p < points && worst < best; ++p) {
      const double d = distance_at(k, p);
      if (d > worst) {
        worst = d;
        if (worst >= best) hot = p;
      }
    }
    if (worst < best) best = worst;
  }
  return best;
}

}  // namespace

double nearest_expert_distance(const NetLevel& net, const PredictionRule& target, std::span<const double> points) {
  return std::visit(
      overloaded{
          [&](const LinearExperts& e) {
            const auto& spec = std::get<LinearBall>(net.spec);
            const auto* r = std::get_if<LinearRule>(&target);
            if (!r) throw InvalidInput("nearest_expert_distance: target is not linear");
            // sup over |x| <= X2 of |<theta - theta_k, x>| = X2 |theta - theta_k|.
            return spec.signal_radius * (e.thetas.colwise() - r->theta).colwise().norm().minCoeff();
          },
          [&](const PiecewiseExperts& e) {
            const int knots = static_cast<int>(e.knot_values.rows());
            std::vector<KnotPosition> pos;
            std::vector<double> t;
            for (double x : points) {
              pos.push_back(locate(e.lo, e.hi, knots, x));
              t.push_back(evaluate(target, scalar(x))(0));
            }
            const double* kv = e.knot_values.data();
            return branch_and_bound(net.size(), points.size(), [&](std::size_t k, std::size_t p) {
              const double* col = kv + k * knots;
              const KnotPosition& q = pos[p];
              return std::abs((1.0 - q.t) * col[q.interval] + q.t * col[q.interval + 1] - t[p]);
            });
          },
          [&](const TrigExperts& e) {
            const auto stored = e.coefficients.rows();
            Eigen::MatrixXcd basis(stored, static_cast<Eigen::Index>(points.size()));
            std::vector<std::complex<double>> t;
            for (std::size_t p = 0; p < points.size(); ++p) {
              for (Eigen::Index k = 0; k < stored; ++k) {
                const double freq = e.real_valued ? static_cast<double>(k) : static_cast<double>(k - e.degree);
                basis(k, static_cast<Eigen::Index>(p)) =
                    (e.real_valued && k > 0 ? 2.0 : 1.0) * std::polar(1.0, freq * points[p]);
              }
              const Prediction v = evaluate(target, scalar(points[p]));
              t.emplace_back(v(0), v.size() > 1 ? v(1) : 0.0);
            }
            return branch_and_bound(net.size(), points.size(), [&](std::size_t k, std::size_t p) {
              const auto c = e.coefficients.col(static_cast<Eigen::Index>(k));
              const std::complex<double> v = c.transpose() * basis.col(static_cast<Eigen::Index>(p));
              return e.real_valued ? std::abs(v.real() - t[p].real()) : std::abs(v - t[p]);
            });
          },
      },
      net.experts);
}

double nearest_path_distance(const LipschitzGrid& grid, const PredictionRule& target, std::span<const double> points) {
  if (grid.degenerate) {
    double worst = 0.0;
    for (double x : points) worst = std::max(worst, std::abs(evaluate(target, scalar(x))(0)));
    return worst;
  }
  const int span = grid.first_half + grid.knots - 1;
  const int n = 2 * span + 1;
  const int intervals = grid.knots - 1;
  std::vector<std::vector<std::pair<double, double>>> by_interval(intervals);  // (t, target)
  for (double x : points) {
    const KnotPosition q = locate(grid.lo, grid.hi, grid.knots, x);
    by_interval[q.interval].emplace_back(q.t, evaluate(target, scalar(x))(0));
  }
  std::vector<double> value(n);
  for (int i = 0; i < n; ++i) value[i] = grid.value(i - span);
  // D(s): smallest achievable max deviation over the points left of the current knot.
  std::vector<double> D(n, kInf), next(n);
  for (int s = -grid.first_half; s <= grid.first_half; ++s) D[s + span] = 0.0;
  for (int k = 0; k < intervals; ++k) {
    std::fill(next.begin(), next.end(), kInf);
    for (int i = 0; i < n; ++i) {
      if (D[i] == kInf) continue;
      for (int step = -1; step <= 1; ++step) {
        const int j = i + step;
        if (j < 0 || j >= n) continue;
        double cost = D[i];
        for (const auto& [t, f] : by_interval[k]) {
          cost = std::max(cost, std::abs((1.0 - t) * value[i] + t * value[j] - f));
          if (cost >= next[j]) break;
        }
        next[j] = std::min(next[j], cost);
      }
    }
    D.swap(next);
  }
  return *std::min_element(D.begin(), D.end());
}

CoveringReport covering_check(const NetLevel& net, int members, int points, Rng& rng) {
  CoveringReport report;
  report.allowed = covering_factor(net.spec) * net.epsilon;
  report.members = members;
  const std::vector<double> pts = covering_points(net.spec, points);
  for (int i = 0; i < members; ++i) {
    const PredictionRule target = sample_class_member(net.spec, rng);
    report.worst_distance = std::max(report.worst_distance, nearest_expert_distance(net, target, pts));
  }
  report.pass = report.worst_distance <= report.allowed * (1.0 + 1e-12);
  return report;
}

CoveringReport covering_check(const LipschitzBall& spec, const LipschitzGrid& grid, int members, int points,
                              Rng& rng) {
  CoveringReport report;
  report.allowed = covering_factor(spec) * grid.epsilon;
  report.members = members;
  const std::vector<double> pts = covering_points(spec, points);
  for (int i = 0; i < members; ++i) {
    const PredictionRule target = sample_class_member(spec, rng);
    report.worst_distance = std::max(report.worst_distance, nearest_path_distance(grid, target, pts));
  }
  report.pass = report.worst_distance <= report.allowed * (1.0 + 1e-12);
  return report;
}

}  // namespace entreg
