#include "entreg/nets.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>

#include "entreg/protocol.hpp"

namespace entreg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kBoundaryTol = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

// Largest integer a >= 0 with a^2 <= rem (rem in lattice units squared).
long floor_sqrt(double rem) {
  if (rem < 0.0) return -1;
  return static_cast<long>(std::floor(std::sqrt(rem) + kBoundaryTol));
}

// Number of z in Z^m with |z|^2 <= r2; stops early once the count exceeds stop_above.
double lattice_count(int m, double r2, double stop_above) {
  if (m == 1) return static_cast<double>(2 * floor_sqrt(r2) + 1);
  const long reach = floor_sqrt(r2);
  double total = 0.0;
  for (long z = -reach; z <= reach; ++z) {
    total += lattice_count(m - 1, r2 - static_cast<double>(z * z), stop_above);
    if (total > stop_above) return total;
  }
  return total;
}

void lattice_points(int m, double r2, std::vector<long>& prefix,
                    const std::function<void(const std::vector<long>&)>& emit) {
  const long reach = floor_sqrt(r2);
  for (long z = -reach; z <= reach; ++z) {
    prefix.push_back(z);
    if (m == 1) {
      emit(prefix);
    } else {
      lattice_points(m - 1, r2 - static_cast<double>(z * z), prefix, emit);
    }
    prefix.pop_back();
  }
}

struct LinearGrid {
  bool degenerate = false;
  double pitch = 0.0;
  double reach_units2 = 0.0;  // squared enlarged radius in lattice units
};

LinearGrid linear_grid(const LinearBall& spec, double epsilon) {
  LinearGrid g;
  if (epsilon >= spec.coef_radius * spec.signal_radius) {
    g.degenerate = true;
    return g;
  }
  // Half-diagonal of a grid cell is epsilon / X2, so every theta in the ball has a
  // grid point within epsilon / X2 in l2 and hence within epsilon in sup norm.
  g.pitch = 2.0 * epsilon / (spec.signal_radius * std::sqrt(static_cast<double>(spec.dimension)));
  const double reach = (spec.coef_radius + epsilon / spec.signal_radius) / g.pitch;
  g.reach_units2 = reach * reach;
  return g;
}

void check_cap(double count, double cap, const std::string& what) {
  if (count > cap) {
    throw NetTooLarge(count, cap, 0,
                      what + ": " + format_real(count) + " experts exceed the cap " + format_real(cap));
  }
}

double pow3(int e) { return std::pow(3.0, e); }

// Grid of pitch p in the plane (or on the line) covering a disk of radius r.
double disk_count(double r, double p) {
  const double reach = (r + p / std::numbers::sqrt2) / p;
  return lattice_count(2, reach * reach, std::numeric_limits<double>::infinity());
}
double interval_count(double r, double p) {
  const double reach = (r + 0.5 * p) / p;
  return lattice_count(1, reach * reach, std::numeric_limits<double>::infinity());
}

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidInput("epsilon must be positive");
}

}  // namespace

// ---------------------------------------------------------------------------
// Class specs
// ---------------------------------------------------------------------------

void validate(const ClassSpec& spec) {
  std::visit(overloaded{
                 [](const LinearBall& s) {
                   if (s.dimension < 1 || !(s.signal_radius > 0.0) || !(s.coef_radius > 0.0)) {
                     throw InvalidInput("LinearBall: dimension and radii must be positive");
                   }
                 },
                 [](const LipschitzBall& s) {
                   if (!(s.hi > s.lo) || !(s.lipschitz > 0.0) || !(s.sup_bound > 0.0)) {
                     throw InvalidInput("LipschitzBall: need lo < hi and positive bounds");
                   }
                 },
                 [](const TrigAnalytic& s) {
                   if (!(s.strip > 0.0) || !(s.norm_radius > 0.0) ||
                       (s.observation_dim != 1 && s.observation_dim != 2)) {
                     throw InvalidInput("TrigAnalytic: need positive strip and radius, d in {1,2}");
                   }
                 },
             },
             spec);
}

std::string kind_name(const ClassSpec& spec) {
  return std::visit(overloaded{
                        [](const LinearBall&) { return std::string("linear"); },
                        [](const LipschitzBall&) { return std::string("lipschitz"); },
                        [](const TrigAnalytic&) { return std::string("trig"); },
                    },
                    spec);
}

int signal_dim(const ClassSpec& spec) {
  if (const auto* s = std::get_if<LinearBall>(&spec)) return s->dimension;
  return 1;
}

int observation_dim(const ClassSpec& spec) {
  if (const auto* s = std::get_if<TrigAnalytic>(&spec)) return s->observation_dim;
  return 1;
}

double covering_factor(const ClassSpec& spec) {
  return std::holds_alternative<LinearBall>(spec) ? 1.0 : 2.0;
}

ClassSpec scaled(const ClassSpec& spec, double factor) {
  return std::visit(overloaded{
                        [&](LinearBall s) -> ClassSpec {
                          s.coef_radius *= factor;
                          return s;
                        },
                        [&](LipschitzBall s) -> ClassSpec {
                          s.lipschitz *= factor;
                          s.sup_bound *= factor;
                          return s;
                        },
                        [&](TrigAnalytic s) -> ClassSpec {
                          s.norm_radius *= factor;
                          return s;
                        },
                    },
                    spec);
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

KnotPosition locate(double lo, double hi, int knots, double x) {
  const double u = (std::clamp(x, lo, hi) - lo) / (hi - lo) * (knots - 1);
  KnotPosition pos;
  pos.interval = std::min(static_cast<int>(std::floor(u)), knots - 2);
  pos.t = u - pos.interval;
  return pos;
}

namespace {

double trig_real_value(const Eigen::VectorXcd& c, double x) {
  double v = c(0).real();
  for (Eigen::Index j = 1; j < c.size(); ++j) {
    v += 2.0 * (c(j) * std::polar(1.0, static_cast<double>(j) * x)).real();
  }
  return v;
}

std::complex<double> trig_complex_value(const Eigen::VectorXcd& c, int degree, double x) {
  std::complex<double> v = 0.0;
  for (int j = -degree; j <= degree; ++j) v += c(j + degree) * std::polar(1.0, j * x);
  return v;
}

}  // namespace

Prediction evaluate(const PredictionRule& rule, const Signal& x) {
  return std::visit(
      overloaded{
          [&](const LinearRule& r) -> Prediction {
            if (r.theta.size() != x.size()) throw InvalidInput("LinearRule: dimension mismatch");
            return scalar(r.theta.dot(x));
          },
          [&](const PiecewiseLinearRule& r) -> Prediction {
            const auto knots = static_cast<int>(r.knot_values.size());
            const KnotPosition p = locate(r.lo, r.hi, knots, x(0));
            return scalar((1.0 - p.t) * r.knot_values(p.interval) +
                          p.t * r.knot_values(p.interval + 1));
          },
          [&](const TrigPolyRule& r) -> Prediction {
            if (r.real_valued) return scalar(trig_real_value(r.coefficients, x(0)));
            const auto v = trig_complex_value(r.coefficients, r.degree, x(0));
            Prediction out(2);
            out << v.real(), v.imag();
            return out;
          },
      },
      rule);
}

double class_norm(const ClassSpec& spec, const PredictionRule& rule) {
  if (const auto* s = std::get_if<LinearBall>(&spec)) {
    const auto* r = std::get_if<LinearRule>(&rule);
    if (!r || r->theta.size() != s->dimension) throw InvalidInput("class_norm: rule is not linear of matching dimension");
    return r->theta.norm() / s->coef_radius;
  }
  if (const auto* s = std::get_if<LipschitzBall>(&spec)) {
    const auto* r = std::get_if<PiecewiseLinearRule>(&rule);
    if (!r) throw InvalidInput("class_norm: rule is not piecewise linear");
    const Vector& v = r->knot_values;
    const double spacing = (r->hi - r->lo) / static_cast<double>(v.size() - 1);
    const double slope = (v.tail(v.size() - 1) - v.head(v.size() - 1)).cwiseAbs().maxCoeff() / spacing;
    return std::max(v.cwiseAbs().maxCoeff() / s->sup_bound, slope / s->lipschitz);
  }
  const auto& s = std::get<TrigAnalytic>(spec);
  const auto* r = std::get_if<TrigPolyRule>(&rule);
  if (!r) throw InvalidInput("class_norm: rule is not a trigonometric polynomial");
  double sum = 0.0;
  if (r->real_valued) {
    for (Eigen::Index j = 0; j < r->coefficients.size(); ++j) {
      sum += (j == 0 ? 1.0 : 2.0) * std::abs(r->coefficients(j)) * std::exp(s.strip * j);
    }
  } else {
    for (int j = -r->degree; j <= r->degree; ++j) {
      sum += std::abs(r->coefficients(j + r->degree)) * std::exp(s.strip * std::abs(j));
    }
  }
  return sum / s.norm_radius;
}

bool in_class(const ClassSpec& spec, const PredictionRule& rule, double tolerance) {
  if (std::holds_alternative<TrigAnalytic>(spec)) {
    const auto* r = std::get_if<TrigPolyRule>(&rule);
    if (!r || r->real_valued != (observation_dim(spec) == 1)) return false;
  }
  if (const auto* s = std::get_if<LipschitzBall>(&spec)) {
    const auto* r = std::get_if<PiecewiseLinearRule>(&rule);
    if (!r || r->lo != s->lo || r->hi != s->hi) return false;
  }
  try {
    return class_norm(spec, rule) <= 1.0 + tolerance;
  } catch (const InvalidInput&) {
    return false;
  }
}

namespace {

Vector uniform_ball(int m, double radius, Rng& rng) {
  Vector v(m);
  for (int i = 0; i < m; ++i) v(i) = rng.normal();
  const double n = v.norm();
  if (n == 0.0) return Vector::Zero(m);
  return v * (radius * std::pow(rng.uniform(), 1.0 / m) / n);
}

}  // namespace

PredictionRule sample_class_member(const ClassSpec& spec, Rng& rng) {
  return std::visit(
      overloaded{
          [&](const LinearBall& s) -> PredictionRule {
            return LinearRule{uniform_ball(s.dimension, s.coef_radius, rng)};
          },
          [&](const LipschitzBall& s) -> PredictionRule {
            constexpr int kKnots = 257;
            const double dx = s.length() / (kKnots - 1);
            Vector v(kKnots);
            v(0) = rng.uniform(-s.sup_bound, s.sup_bound);
            // Half the samples are bang-bang paths at full slope, half have random slopes.
            const bool extreme = rng.uniform() < 0.5;
            double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            for (int k = 1; k < kKnots; ++k) {
              double slope;
              if (extreme) {
                if (rng.uniform() < 0.1) sign = -sign;
                slope = sign * s.lipschitz;
              } else {
                slope = rng.uniform(-s.lipschitz, s.lipschitz);
              }
              v(k) = std::clamp(v(k - 1) + slope * dx, -s.sup_bound, s.sup_bound);
            }
            return PiecewiseLinearRule{s.lo, s.hi, v};
          },
          [&](const TrigAnalytic& s) -> PredictionRule {
            constexpr int kDegree = 24;
            const bool real = s.observation_dim == 1;
            const int stored = real ? kDegree + 1 : 2 * kDegree + 1;
            // Split a budget rho <= c of sum_j |c_j| e^{h|j|} across frequencies.
            Vector share(stored);
            for (int k = 0; k < stored; ++k) {
              const int j = real ? k : k - kDegree;
              share(k) = rng.uniform() * std::pow(0.6, std::abs(j));
            }
            const double multiplicity_sum = [&] {
              double t = 0.0;
              for (int k = 0; k < stored; ++k) t += (real && k > 0 ? 2.0 : 1.0) * share(k);
              return t;
            }();
            const double budget = s.norm_radius * rng.uniform(0.2, 1.0);
            TrigPolyRule r;
            r.degree = kDegree;
            r.real_valued = real;
            r.coefficients.resize(stored);
            for (int k = 0; k < stored; ++k) {
              const int j = real ? k : k - kDegree;
              const double modulus = budget * share(k) / multiplicity_sum * std::exp(-s.strip * std::abs(j));
              const double phase = (real && k == 0) ? (rng.uniform() < 0.5 ? 0.0 : std::numbers::pi)
                                                    : rng.uniform(0.0, kTwoPi);
              r.coefficients(k) = std::polar(modulus, phase);
            }
            return r;
          },
      },
      spec);
}

Signal sample_signal(const ClassSpec& spec, Rng& rng) {
  return std::visit(overloaded{
                        [&](const LinearBall& s) -> Signal { return uniform_ball(s.dimension, s.signal_radius, rng); },
                        [&](const LipschitzBall& s) -> Signal { return scalar(rng.uniform(s.lo, s.hi)); },
                        [&](const TrigAnalytic&) -> Signal { return scalar(rng.uniform(0.0, kTwoPi)); },
                    },
                    spec);
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

double LipschitzGrid::value(int s) const {
  return std::clamp(s * quantum, -sup_bound, sup_bound);
}

double LipschitzGrid::log2_count() const {
  if (degenerate) return 0.0;
  return std::log2(2.0 * first_half + 1.0) + (knots - 1) * std::log2(3.0);
}

LipschitzGrid lipschitz_grid(const LipschitzBall& spec, double epsilon) {
  validate(spec);
  check_epsilon(epsilon);
  LipschitzGrid g;
  g.lo = spec.lo;
  g.hi = spec.hi;
  g.epsilon = epsilon;
  g.sup_bound = spec.sup_bound;
  if (epsilon >= spec.sup_bound) {
    g.degenerate = true;
    g.knots = 2;
    return g;
  }
  // Knot spacing at most epsilon / c; a c-Lipschitz function then moves at most one
  // quantum between knots.
  g.knots = std::max(2, static_cast<int>(std::ceil(spec.lipschitz * spec.length() / epsilon - 1e-9)) + 1);
  g.quantum = spec.lipschitz * spec.length() / (g.knots - 1);
  // First-knot values: multiples of the quantum within [-M - q/2, M + q/2], clamped to [-M, M].
  g.first_half = static_cast<int>(std::floor((spec.sup_bound + 0.5 * g.quantum) / g.quantum + 1e-9));
  return g;
}

int trig_degree(const TrigAnalytic& spec, double epsilon) {
  check_epsilon(epsilon);
  if (epsilon >= spec.norm_radius) return -1;
  const double j = std::ceil(std::log(8.0 * spec.norm_radius / (std::numbers::pi * epsilon)) / spec.strip);
  return std::max(0, static_cast<int>(j));
}

double TrigGrid::log2_count() const {
  double bits = 0.0;
  for (double c : counts) bits += std::log2(c);
  return bits;
}

TrigGrid trig_grid(const TrigAnalytic& spec, double epsilon) {
  validate(spec);
  TrigGrid g;
  g.real_valued = spec.observation_dim == 1;
  g.degree = trig_degree(spec, epsilon);
  if (g.degree < 0) return g;
  const int J = g.degree;
  g.pitch = epsilon / (4.0 * (2 * J + 1));
  const int stored = g.real_valued ? J + 1 : 2 * J + 1;
  for (int k = 0; k < stored; ++k) {
    const int j = g.real_valued ? k : k - J;
    const double r = spec.norm_radius * std::exp(-spec.strip * std::abs(j));
    g.radii.push_back(r);
    // The constant term of a real-valued function is real.
    g.counts.push_back(g.real_valued && k == 0 ? interval_count(r, g.pitch) : disk_count(r, g.pitch));
  }
  return g;
}

std::vector<std::complex<double>> TrigGrid::coefficient_values(std::size_t index) const {
  const double r = radii.at(index);
  const double p = pitch;
  std::vector<std::complex<double>> out;
  if (real_valued && index == 0) {
    const double reach = (r + 0.5 * p) / p;
    const long n = floor_sqrt(reach * reach);
    for (long a = -n; a <= n; ++a) out.emplace_back(std::clamp(a * p, -r, r), 0.0);
    return out;
  }
  const double reach = (r + p / std::numbers::sqrt2) / p;
  std::vector<long> prefix;
  lattice_points(2, reach * reach, prefix, [&](const std::vector<long>& z) {
    std::complex<double> v(z[0] * p, z[1] * p);
    if (std::abs(v) > r) v *= r / std::abs(v);
    out.push_back(v);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Net levels
// ---------------------------------------------------------------------------

std::size_t NetLevel::size() const {
  return std::visit(overloaded{
                        [](const LinearExperts& e) { return static_cast<std::size_t>(e.thetas.cols()); },
                        [](const PiecewiseExperts& e) { return static_cast<std::size_t>(e.knot_values.cols()); },
                        [](const TrigExperts& e) { return static_cast<std::size_t>(e.coefficients.cols()); },
                    },
                    experts);
}

PredictionRule NetLevel::rule(std::size_t k) const {
  const auto col = static_cast<Eigen::Index>(k);
  return std::visit(
      overloaded{
          [&](const LinearExperts& e) -> PredictionRule { return LinearRule{e.thetas.col(col)}; },
          [&](const PiecewiseExperts& e) -> PredictionRule {
            return PiecewiseLinearRule{e.lo, e.hi, e.knot_values.col(col)};
          },
          [&](const TrigExperts& e) -> PredictionRule {
            return TrigPolyRule{e.degree, e.real_valued, e.coefficients.col(col)};
          },
      },
      experts);
}

Matrix NetLevel::evaluate_all(const Signal& x, double Y) const {
  return std::visit(
      overloaded{
          [&](const LinearExperts& e) -> Matrix {
            return (e.thetas.transpose() * x).transpose().cwiseMax(-Y).cwiseMin(Y);
          },
          [&](const PiecewiseExperts& e) -> Matrix {
            const KnotPosition p = locate(e.lo, e.hi, static_cast<int>(e.knot_values.rows()), x(0));
            return ((1.0 - p.t) * e.knot_values.row(p.interval) + p.t * e.knot_values.row(p.interval + 1))
                .cwiseMax(-Y)
                .cwiseMin(Y);
          },
          [&](const TrigExperts& e) -> Matrix {
            const auto stored = e.coefficients.rows();
            Eigen::VectorXcd basis(stored);
            for (Eigen::Index k = 0; k < stored; ++k) {
              if (e.real_valued) {
                basis(k) = (k == 0 ? 1.0 : 2.0) * std::polar(1.0, static_cast<double>(k) * x(0));
              } else {
                basis(k) = std::polar(1.0, static_cast<double>(k - e.degree) * x(0));
              }
            }
            const Eigen::VectorXcd values = e.coefficients.transpose() * basis;
            if (e.real_valued) return values.real().transpose().cwiseMax(-Y).cwiseMin(Y);
            Matrix out(2, values.size());
            out.row(0) = values.real().transpose();
            out.row(1) = values.imag().transpose();
            const Eigen::RowVectorXd norms = out.colwise().norm();
            for (Eigen::Index k = 0; k < out.cols(); ++k) {
              if (norms(k) > Y) out.col(k) = clip(Vector(out.col(k)), Y);
            }
            return out;
          },
      },
      experts);
}

double net_log2_size(const ClassSpec& spec, double epsilon) {
  validate(spec);
  check_epsilon(epsilon);
  return std::visit(
      overloaded{
          [&](const LinearBall& s) {
            const LinearGrid g = linear_grid(s, epsilon);
            if (g.degenerate) return 0.0;
            return std::log2(lattice_count(s.dimension, g.reach_units2, 1e15));
          },
          [&](const LipschitzBall& s) { return lipschitz_grid(s, epsilon).log2_count(); },
          [&](const TrigAnalytic& s) { return trig_grid(s, epsilon).log2_count(); },
      },
      spec);
}

NetLevel build_linear_net(const LinearBall& spec, double epsilon, double cap) {
  validate(spec);
  check_epsilon(epsilon);
  NetLevel net;
  net.spec = spec;
  net.epsilon = epsilon;
  const LinearGrid g = linear_grid(spec, epsilon);
  LinearExperts e;
  if (g.degenerate) {
    e.thetas = Matrix::Zero(spec.dimension, 1);
  } else {
    const double count = lattice_count(spec.dimension, g.reach_units2, cap);
    check_cap(count, cap, "linear net");
    e.thetas.resize(spec.dimension, static_cast<Eigen::Index>(count));
    Eigen::Index col = 0;
    std::vector<long> prefix;
    lattice_points(spec.dimension, g.reach_units2, prefix, [&](const std::vector<long>& z) {
      Vector theta(spec.dimension);
      for (int i = 0; i < spec.dimension; ++i) theta(i) = z[i] * g.pitch;
      const double n = theta.norm();
      if (n > spec.coef_radius) theta *= spec.coef_radius / n;
      e.thetas.col(col++) = theta;
    });
  }
  net.experts = std::move(e);
  net.entropy_bits = std::log2(static_cast<double>(net.size()));
  return net;
}

NetLevel build_lipschitz_net(const LipschitzBall& spec, double epsilon, double cap) {
  const LipschitzGrid g = lipschitz_grid(spec, epsilon);
  NetLevel net;
  net.spec = spec;
  net.epsilon = epsilon;
  PiecewiseExperts e;
  e.lo = spec.lo;
  e.hi = spec.hi;
  if (g.degenerate) {
    e.knot_values = Matrix::Zero(2, 1);
  } else {
    const double count = std::exp2(g.log2_count());
    check_cap(count, cap, "lipschitz net");
    const int first = 2 * g.first_half + 1;
    const auto paths = static_cast<long>(std::llround(pow3(g.knots - 1)));
    e.knot_values.resize(g.knots, static_cast<Eigen::Index>(first) * paths);
    Eigen::Index col = 0;
    // Order: first-knot value ascending, then step sequences in base-3 order with
    // the first interval's step most significant.
    for (int s0 = -g.first_half; s0 <= g.first_half; ++s0) {
      for (long path = 0; path < paths; ++path) {
        long rest = path;
        long divisor = paths / 3;
        int s = s0;
        e.knot_values(0, col) = g.value(s);
        for (int k = 1; k < g.knots; ++k) {
          const long digit = divisor > 0 ? rest / divisor : 0;
          if (divisor > 0) rest %= divisor;
          divisor /= 3;
          s += static_cast<int>(digit) - 1;
          e.knot_values(k, col) = g.value(s);
        }
        ++col;
      }
    }
  }
  net.experts = std::move(e);
  net.entropy_bits = std::log2(static_cast<double>(net.size()));
  return net;
}

NetLevel build_trig_net(const TrigAnalytic& spec, double epsilon, double cap) {
  const TrigGrid g = trig_grid(spec, epsilon);
  NetLevel net;
  net.spec = spec;
  net.epsilon = epsilon;
  TrigExperts e;
  e.real_valued = g.real_valued;
  if (g.degree < 0) {
    e.degree = 0;
    e.coefficients = Eigen::MatrixXcd::Zero(g.real_valued ? 1 : 1, 1);
  } else {
    e.degree = g.degree;
    const double count = std::exp2(g.log2_count());
    check_cap(count, cap, "trig net");
    std::vector<std::vector<std::complex<double>>> values;
    for (std::size_t k = 0; k < g.counts.size(); ++k) values.push_back(g.coefficient_values(k));
    std::size_t total = 1;
    for (const auto& v : values) total *= v.size();
    const auto stored = static_cast<Eigen::Index>(values.size());
    e.coefficients.resize(stored, static_cast<Eigen::Index>(total));
    // Mixed radix with the first stored coefficient most significant.
    std::vector<std::size_t> digit(values.size(), 0);
    for (std::size_t col = 0; col < total; ++col) {
      for (Eigen::Index k = 0; k < stored; ++k) e.coefficients(k, static_cast<Eigen::Index>(col)) = values[k][digit[k]];
      for (auto k = static_cast<std::ptrdiff_t>(values.size()) - 1; k >= 0; --k) {
        if (++digit[k] < values[k].size()) break;
        digit[k] = 0;
      }
    }
  }
  net.experts = std::move(e);
  net.entropy_bits = std::log2(static_cast<double>(net.size()));
  return net;
}

NetLevel build_net(const ClassSpec& spec, double epsilon, double cap) {
  return std::visit(overloaded{
                        [&](const LinearBall& s) { return build_linear_net(s, epsilon, cap); },
                        [&](const LipschitzBall& s) { return build_lipschitz_net(s, epsilon, cap); },
                        [&](const TrigAnalytic& s) { return build_trig_net(s, epsilon, cap); },
                    },
                    spec);
}

int max_feasible_levels(const ClassSpec& spec, double cap, int limit) {
  double total = 0.0;
  for (int i = 1; i <= limit; ++i) {
    total += std::exp2(net_log2_size(spec, std::ldexp(1.0, -i)));
    if (total > cap) return i - 1;
  }
  return limit;
}

std::vector<NetLevel> dyadic_net_family(const ClassSpec& spec, int i_max, double cap) {
  if (i_max < 1) throw InvalidInput("dyadic_net_family: i_max must be >= 1");
  validate(spec);
  double total = 0.0;
  for (int i = 1; i <= i_max; ++i) total += std::exp2(net_log2_size(spec, std::ldexp(1.0, -i)));
  if (total > cap) {
    const int feasible = max_feasible_levels(spec, cap, i_max);
    throw NetTooLarge(total, cap, feasible,
                      "dyadic net family of " + format_real(total) + " experts exceeds the cap " +
                          format_real(cap) + "; largest feasible i_max is " + std::to_string(feasible));
  }
  std::vector<NetLevel> levels;
  for (int i = 1; i <= i_max; ++i) {
    NetLevel net = build_net(spec, std::ldexp(1.0, -i), cap);
    net.level = i;
    if (!levels.empty() && net.size() < levels.back().size()) {
      throw std::logic_error("dyadic_net_family: expert counts must be nondecreasing in the level");
    }
    levels.push_back(std::move(net));
  }
  return levels;
}

void write_net_csv(std::ostream& out, const NetLevel& net, bool header) {
  if (header) out << "expert_id,kind,epsilon,level,params\n";
  const std::string kind = kind_name(net.spec);
  for (std::size_t k = 0; k < net.size(); ++k) {
    out << k << ',' << kind << ',' << format_real(net.epsilon) << ',' << net.level << ',';
    std::visit(overloaded{
                   [&](const LinearExperts& e) { out << join_vector(e.thetas.col(static_cast<Eigen::Index>(k))); },
                   [&](const PiecewiseExperts& e) { out << join_vector(e.knot_values.col(static_cast<Eigen::Index>(k))); },
                   [&](const TrigExperts& e) {
                     for (Eigen::Index j = 0; j < e.coefficients.rows(); ++j) {
                       const auto c = e.coefficients(j, static_cast<Eigen::Index>(k));
                       if (j) out << ';';
                       out << format_real(c.real()) << ';' << format_real(c.imag());
                     }
                   },
               },
               net.experts);
    out << '\n';
  }
}

}  // namespace entreg
