#include "entreg/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "entreg/protocol.hpp"

namespace entreg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void check_alignment(const AggregatorState& state, const Matrix& predictions) {
  if (static_cast<std::size_t>(predictions.cols()) != state.expert_count()) {
    throw InvalidInput("aggregator: expert prediction count does not match state");
  }
  if (state.mode == EtaMode::scalar && predictions.rows() != 1) {
    throw InvalidInput("aggregator: scalar mode requires one-dimensional predictions");
  }
}

}  // namespace

double eta_cap(EtaMode mode, double Y) {
  return mode == EtaMode::scalar ? 1.0 / (2.0 * Y * Y) : 1.0 / (8.0 * Y * Y);
}

double log_sum_exp(std::span<const double> values) {
  double m = kNegInf;
  for (double v : values) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

AggregatorState aa_init(std::span<const double> initial_weights, double eta, double Y,
                        AggregatorOptions options) {
  if (initial_weights.empty()) throw InvalidInput("aa_init: no experts");
  if (!(Y > 0.0)) throw InvalidInput("aa_init: Y must be positive");
  if (!(eta > 0.0) || eta > eta_cap(options.mode, Y) * (1.0 + 1e-12)) {
    throw InvalidInput("aa_init: eta outside (0, cap] for the selected mode");
  }
  double sum = 0.0;
  for (double w : initial_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw InvalidInput("aa_init: weights must be positive");
    sum += w;
  }
  if (options.allow_deficient ? sum > 1.0 + 1e-9 : std::abs(sum - 1.0) > 1e-9) {
    throw InvalidInput("aa_init: weights must sum to 1");
  }
  AggregatorState state;
  const auto k = static_cast<Eigen::Index>(initial_weights.size());
  state.initial_log_weights.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) state.initial_log_weights(i) = std::log(initial_weights[i]);
  state.log_weights = state.initial_log_weights;
  state.log_offset = 0.0;
  state.eta = eta;
  state.Y = Y;
  state.mode = options.mode;
  aa_normalize(state);
  return state;
}

void aa_normalize(AggregatorState& state) {
  const double m = state.log_weights.maxCoeff();
  state.log_weights.array() -= m;
  state.log_offset += m;
}

MixtureMoments aa_moments(const AggregatorState& state, const Matrix& predictions) {
  check_alignment(state, predictions);
  const Vector w = state.log_weights.array().exp();
  const double total = w.sum();
  MixtureMoments m;
  m.log_mass = state.log_offset + std::log(total);
  m.mean = predictions * w / total;
  if (state.mode == EtaMode::scalar) {
    const double Y = state.Y;
    const auto p = predictions.row(0).transpose().array();
    const Vector low = state.log_weights.array() - state.eta * (p + Y).square();
    const Vector high = state.log_weights.array() - state.eta * (p - Y).square();
    m.log_mass_low = state.log_offset + log_sum_exp({low.data(), static_cast<std::size_t>(low.size())});
    m.log_mass_high =
        state.log_offset + log_sum_exp({high.data(), static_cast<std::size_t>(high.size())});
  }
  return m;
}

Prediction aa_substitute(const MixtureMoments& moments, double eta, double Y, EtaMode mode) {
  if (mode == EtaMode::vector) return clip(moments.mean, Y);
  // mu = (g(-Y) - g(Y)) / (4Y) with g(y) = -(1/eta) ln(mass at y / mass).
  const double mu = (moments.log_mass_high - moments.log_mass_low) / (4.0 * Y * eta);
  return scalar(clip_scalar(mu, Y));
}

MixtureMoments combine_moments(std::span<const MixtureMoments> parts) {
  if (parts.empty()) throw InvalidInput("combine_moments: nothing to combine");
  MixtureMoments out;
  for (const auto& p : parts) {
    out.log_mass = log_add(out.log_mass, p.log_mass);
    out.log_mass_low = log_add(out.log_mass_low, p.log_mass_low);
    out.log_mass_high = log_add(out.log_mass_high, p.log_mass_high);
  }
  out.mean = Prediction::Zero(parts.front().mean.size());
  for (const auto& p : parts) {
    if (p.log_mass == kNegInf) continue;
    out.mean += std::exp(p.log_mass - out.log_mass) * p.mean;
  }
  return out;
}

Prediction aa_predict(const AggregatorState& state, const Matrix& predictions) {
  return aa_substitute(aa_moments(state, predictions), state.eta, state.Y, state.mode);
}

void aa_update(AggregatorState& state, const Matrix& predictions, const Observation& y) {
  check_alignment(state, predictions);
  if (predictions.rows() != y.size()) throw InvalidInput("aa_update: dimension mismatch");
  state.log_weights -= state.eta * (predictions.colwise() - y).colwise().squaredNorm().transpose();
  aa_normalize(state);
}

double aa_regret_bound(const AggregatorState& state, std::size_t expert_index) {
  if (expert_index >= state.expert_count()) throw InvalidInput("aa_regret_bound: index out of range");
  return -state.initial_log_weights(static_cast<Eigen::Index>(expert_index)) / state.eta;
}

void write_weights_csv(std::ostream& out, const AggregatorState& state) {
  out << "expert_id,log_weight\n";
  for (Eigen::Index i = 0; i < state.log_weights.size(); ++i) {
    out << i << ',' << format_real(state.log_weights(i) + state.log_offset) << '\n';
  }
}

ConcavityReport verify_concavity(double eta, double Y, int d, int grid_resolution,
                                 double tolerance) {
  if (d != 1 && d != 2) throw InvalidInput("verify_concavity: d must be 1 or 2");
  if (grid_resolution < 16) throw InvalidInput("verify_concavity: grid_resolution must be >= 16");
  ConcavityReport report;
  report.worst_second_difference = -std::numeric_limits<double>::infinity();
  const int res = grid_resolution;

  auto f = [eta](const Vector& y, const Vector& mu) { return std::exp(-eta * (y - mu).squaredNorm()); };

  // Second differences along the segment [a, b] sampled at steps + 1 points.
  auto scan_segment = [&](const Vector& y, const Vector& a, const Vector& b, int steps) {
    Vector cur = a + (b - a) / steps;
    double f_prev = f(y, a), f_cur = f(y, cur);
    for (int k = 2; k <= steps; ++k) {
      Vector next = a + (b - a) * (static_cast<double>(k) / steps);
      const double f_next = f(y, next);
      const double second = f_prev - 2.0 * f_cur + f_next;
      if (second > report.worst_second_difference) {
        report.worst_second_difference = second;
        report.worst_y = y;
        report.worst_mu = cur;
      }
      cur = next;
      f_prev = f_cur;
      f_cur = f_next;
    }
  };

  if (d == 1) {
    // Every segment of the interval is a sub-segment of [-Y, Y]; scan it finely.
    for (int i = 0; i <= res; ++i) {
      const Vector y = scalar(-Y + 2.0 * Y * i / res);
      scan_segment(y, scalar(-Y), scalar(Y), 8 * res);
    }
  } else {
    const double pi = std::numbers::pi;
    for (int iy = 0; iy <= res; ++iy) {
      for (int jy = 0; jy <= res; ++jy) {
        Vector y(2);
        y << -Y + 2.0 * Y * iy / res, -Y + 2.0 * Y * jy / res;
        if (y.norm() > Y) continue;
        for (int dir = 0; dir < res; ++dir) {
          const double angle = pi * dir / res;
          Vector u(2), normal(2);
          u << std::cos(angle), std::sin(angle);
          normal << -u(1), u(0);
          // Chords of the ball orthogonal to `normal`, strictly inside the boundary.
          for (int off = 1; off < res; ++off) {
            const double s = -Y + 2.0 * Y * off / res;
            const double half = std::sqrt(std::max(0.0, Y * Y - s * s));
            scan_segment(y, s * normal - half * u, s * normal + half * u, res);
          }
        }
      }
    }
  }
  report.pass = report.worst_second_difference <= tolerance;
  return report;
}

MixabilityReport verify_mixability(double eta, double Y, int grid_resolution, double tolerance) {
  if (grid_resolution < 16) throw InvalidInput("verify_mixability: grid_resolution must be >= 16");
  const int res = grid_resolution;
  MixabilityReport report;
  report.worst_excess = -std::numeric_limits<double>::infinity();
  auto grid = [&](int k) { return -Y + 2.0 * Y * k / res; };
  for (int i = 0; i <= res; ++i) {
    for (int j = i + 1; j <= res; ++j) {
      for (int wk = 1; wk < res; ++wk) {
        const double p1 = grid(i), p2 = grid(j);
        const double w = static_cast<double>(wk) / res;
        auto g = [&](double y) {
          return -std::log(w * std::exp(-eta * (y - p1) * (y - p1)) +
                           (1.0 - w) * std::exp(-eta * (y - p2) * (y - p2))) /
                 eta;
        };
        const double mu = std::clamp((g(-Y) - g(Y)) / (4.0 * Y), -Y, Y);
        for (int k = 0; k <= 4 * res; ++k) {
          const double y = -Y + 2.0 * Y * k / (4 * res);
          report.worst_excess = std::max(report.worst_excess, (y - mu) * (y - mu) - g(y));
        }
      }
    }
  }
  report.pass = report.worst_excess <= tolerance;
  return report;
}

}  // namespace entreg
