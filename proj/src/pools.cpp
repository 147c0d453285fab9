#include "entreg/pools.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "entreg/protocol.hpp"

namespace entreg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogThird = -std::log(3.0);

}  // namespace

// ---------------------------------------------------------------------------
// EnumeratedPool
// ---------------------------------------------------------------------------

EnumeratedPool::EnumeratedPool(NetLevel net, double log_mass, double eta, double Y, EtaMode mode)
    : net_(std::move(net)) {
  const std::size_t k = net_.size();
  log_weight_ = log_mass - std::log(static_cast<double>(k));
  const std::vector<double> weights(k, std::exp(log_weight_));
  state_ = aa_init(weights, eta, Y, AggregatorOptions{mode, true});
  // Keep the exact log weight rather than the rounded exp/log round trip.
  state_.initial_log_weights.setConstant(log_weight_);
  state_.log_offset = log_weight_;
}

const Matrix& EnumeratedPool::predictions_at(const Signal& x) {
  if (!cached_x_ || cached_x_->size() != x.size() || *cached_x_ != x) {
    cached_predictions_ = net_.evaluate_all(x, state_.Y);
    cached_x_ = x;
  }
  return cached_predictions_;
}

MixtureMoments EnumeratedPool::moments(const Signal& x) { return aa_moments(state_, predictions_at(x)); }

void EnumeratedPool::update(const Signal& x, const Observation& y) {
  aa_update(state_, predictions_at(x), y);
  cached_x_.reset();
}

// ---------------------------------------------------------------------------
// LipschitzChainPool
// ---------------------------------------------------------------------------

LipschitzChainPool::LipschitzChainPool(const LipschitzGrid& grid, double log_mass, double eta, double Y,
                                       EtaMode mode)
    : grid_(grid), log_mass_(log_mass), eta_(eta), Y_(Y), mode_(mode) {
  if (grid_.degenerate) throw InvalidInput("LipschitzChainPool: degenerate grid has a single expert");
  if (!(eta > 0.0) || eta > eta_cap(mode, Y) * (1.0 + 1e-12)) {
    throw InvalidInput("LipschitzChainPool: eta outside (0, cap] for the selected mode");
  }
  span_ = grid_.first_half + grid_.knots - 1;
  intervals_ = grid_.knots - 1;
  const int n = states();

  psi_.assign(intervals_, Matrix::Zero(n, kSteps));
  for (auto& p : psi_) {
    p(0, 0) = kNegInf;      // s = -span cannot step down
    p(n - 1, 2) = kNegInf;  // s = +span cannot step up
  }
  phi_.resize(intervals_);
  phi_log_scale_.assign(intervals_, 0.0);
  for (int k = 0; k < intervals_; ++k) refresh_potentials(k);

  alpha_.assign(grid_.knots, Vector::Zero(n));
  beta_.assign(grid_.knots, Vector::Zero(n));
  alpha_log_scale_.assign(grid_.knots, 0.0);
  beta_log_scale_.assign(grid_.knots, 0.0);
  alpha_[0].segment(span_ - grid_.first_half, 2 * grid_.first_half + 1).setOnes();
  alpha_log_scale_[0] = -std::log(2.0 * grid_.first_half + 1.0);
  alpha_valid_ = 0;
  beta_[grid_.knots - 1].setOnes();
  beta_valid_ = grid_.knots - 1;
}

double LipschitzChainPool::prediction(int s_index, int step, double t) const {
  const int s = s_index - span_;
  const double v = (1.0 - t) * grid_.value(s) + t * grid_.value(s + step - 1);
  return clip_scalar(v, Y_);
}

void LipschitzChainPool::refresh_potentials(int interval) {
  const Matrix& p = psi_[interval];
  const double m = p.maxCoeff();
  phi_[interval] = (p.array() - m).exp();
  phi_log_scale_[interval] = m;
}

void LipschitzChainPool::ensure_forward(int knot) {
  const int n = states();
  while (alpha_valid_ < knot) {
    const int k = alpha_valid_;
    Vector next = Vector::Zero(n);
    const Vector& a = alpha_[k];
    const Matrix& f = phi_[k];
    for (int i = 0; i < n; ++i) {
      if (a(i) == 0.0) continue;
      for (int st = 0; st < kSteps; ++st) {
        const int j = i + st - 1;
        if (j < 0 || j >= n) continue;
        next(j) += a(i) * f(i, st);
      }
    }
    const double m = next.maxCoeff();
    if (!(m > 0.0)) throw std::logic_error("LipschitzChainPool: forward message underflow");
    alpha_[k + 1] = next / m;
    alpha_log_scale_[k + 1] = alpha_log_scale_[k] + phi_log_scale_[k] + kLogThird + std::log(m);
    ++alpha_valid_;
  }
}

void LipschitzChainPool::ensure_backward(int knot) {
  const int n = states();
  while (beta_valid_ > knot) {
    const int k = beta_valid_ - 1;
    Vector prev = Vector::Zero(n);
    const Vector& b = beta_[k + 1];
    const Matrix& f = phi_[k];
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int st = 0; st < kSteps; ++st) {
        const int j = i + st - 1;
        if (j < 0 || j >= n) continue;
        sum += f(i, st) * b(j);
      }
      prev(i) = sum;
    }
    const double m = prev.maxCoeff();
    if (!(m > 0.0)) throw std::logic_error("LipschitzChainPool: backward message underflow");
    beta_[k] = prev / m;
    beta_log_scale_[k] = beta_log_scale_[k + 1] + phi_log_scale_[k] + kLogThird + std::log(m);
    --beta_valid_;
  }
}

MixtureMoments LipschitzChainPool::moments(const Signal& x) {
  const KnotPosition pos = locate(grid_.lo, grid_.hi, grid_.knots, x(0));
  const int k = pos.interval;
  ensure_forward(k);
  ensure_backward(k + 1);
  const int n = states();
  const Vector& a = alpha_[k];
  const Vector& b = beta_[k + 1];
  const Matrix& f = phi_[k];
  const bool scalar_mode = mode_ == EtaMode::scalar;
  double z = 0.0, first = 0.0, low = 0.0, high = 0.0;
  for (int i = 0; i < n; ++i) {
    if (a(i) == 0.0) continue;
    for (int st = 0; st < kSteps; ++st) {
      const int j = i + st - 1;
      if (j < 0 || j >= n) continue;
      const double w = a(i) * f(i, st) * b(j);
      if (w == 0.0) continue;
      const double p = prediction(i, st, pos.t);
      z += w;
      first += w * p;
      if (scalar_mode) {
        low += w * std::exp(-eta_ * (p + Y_) * (p + Y_));
        high += w * std::exp(-eta_ * (p - Y_) * (p - Y_));
      }
    }
  }
  if (!(z > 0.0)) throw std::logic_error("LipschitzChainPool: mixture mass underflow");
  const double scale =
      log_mass_ + alpha_log_scale_[k] + phi_log_scale_[k] + kLogThird + beta_log_scale_[k + 1];
  MixtureMoments m;
  m.log_mass = scale + std::log(z);
  m.mean = scalar(first / z);
  if (scalar_mode) {
    m.log_mass_low = scale + std::log(low);
    m.log_mass_high = scale + std::log(high);
  }
  return m;
}

void LipschitzChainPool::update(const Signal& x, const Observation& y) {
  if (y.size() != 1) throw InvalidInput("LipschitzChainPool: observations must be scalar");
  const KnotPosition pos = locate(grid_.lo, grid_.hi, grid_.knots, x(0));
  const int k = pos.interval;
  Matrix& p = psi_[k];
  const int n = states();
  for (int i = 0; i < n; ++i) {
    for (int st = 0; st < kSteps; ++st) {
      if (p(i, st) == kNegInf) continue;
      const double r = y(0) - prediction(i, st, pos.t);
      p(i, st) -= eta_ * r * r;
    }
  }
  refresh_potentials(k);
  alpha_valid_ = std::min(alpha_valid_, k);
  beta_valid_ = std::max(beta_valid_, k + 1);
}

// ---------------------------------------------------------------------------

std::unique_ptr<ExpertPool> make_level_pool(const ClassSpec& spec, int level, double log_mass, double eta,
                                            double Y, EtaMode mode, bool implicit_lipschitz, double cap) {
  const double epsilon = std::ldexp(1.0, -level);
  if (const auto* lip = std::get_if<LipschitzBall>(&spec)) {
    const LipschitzGrid grid = lipschitz_grid(*lip, epsilon);
    if (!grid.degenerate && (implicit_lipschitz || std::exp2(grid.log2_count()) > cap)) {
      return std::make_unique<LipschitzChainPool>(grid, log_mass, eta, Y, mode);
    }
  }
  NetLevel net = build_net(spec, epsilon, cap);
  net.level = level;
  return std::make_unique<EnumeratedPool>(std::move(net), log_mass, eta, Y, mode);
}

}  // namespace entreg
