#include "entreg/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace entreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double resolve_eta(const CompactOptions& o) {
  const double eta = o.eta > 0.0 ? o.eta : eta_cap(o.mode, o.Y);
  if (eta > eta_cap(o.mode, o.Y) * (1.0 + 1e-12)) throw InvalidInput("eta above the cap of the selected mode");
  return eta;
}

bool uses_chain(const ClassSpec& spec, int level, const CompactOptions& o) {
  const auto* lip = std::get_if<LipschitzBall>(&spec);
  if (!lip) return false;
  const LipschitzGrid g = lipschitz_grid(*lip, std::ldexp(1.0, -level));
  return !g.degenerate && (o.implicit_lipschitz || std::exp2(g.log2_count()) > o.cap);
}

}  // namespace

double level_mass(int i) { return 6.0 / (std::numbers::pi * std::numbers::pi) / (static_cast<double>(i) * i); }

// ---------------------------------------------------------------------------
// CompactStrategy
// ---------------------------------------------------------------------------

CompactStrategy::CompactStrategy(ClassSpec spec, int i_max, CompactOptions options)
    : spec_(std::move(spec)), i_max_(i_max), options_(options), eta_(resolve_eta(options)) {
  validate(spec_);
  if (i_max < 1) throw InvalidInput("CompactStrategy: i_max must be >= 1");
  if (options_.mode == EtaMode::scalar && entreg::observation_dim(spec_) != 1) {
    throw InvalidInput("CompactStrategy: scalar mode needs one-dimensional observations");
  }
  double enumerated = 0.0;
  int feasible = 0;
  for (int i = 1; i <= i_max; ++i) {
    if (!uses_chain(spec_, i, options_)) enumerated += std::exp2(net_log2_size(spec_, std::ldexp(1.0, -i)));
    if (enumerated <= options_.cap) feasible = i;
  }
  if (enumerated > options_.cap) {
    throw NetTooLarge(enumerated, options_.cap, feasible,
                      "CompactStrategy: enumerated levels hold " + format_real(enumerated) +
                          " experts, above the cap; largest feasible i_max is " + std::to_string(feasible));
  }
  for (int i = 1; i <= i_max; ++i) {
    pools_.push_back(make_level_pool(spec_, i, std::log(level_mass(i)), eta_, options_.Y, options_.mode,
                                     options_.implicit_lipschitz, options_.cap));
  }
}

std::string CompactStrategy::name() const { return "compact-" + kind_name(spec_); }

MixtureMoments CompactStrategy::moments(const Signal& x) {
  std::vector<MixtureMoments> parts;
  parts.reserve(pools_.size());
  for (auto& p : pools_) parts.push_back(p->moments(x));
  return combine_moments(parts);
}

Prediction CompactStrategy::predict(const Signal& x) {
  return aa_substitute(moments(x), eta_, options_.Y, options_.mode);
}

void CompactStrategy::update(const Signal& x, const Observation& y) {
  for (auto& p : pools_) p->update(x, y);
}

double CompactStrategy::level_log_inverse_weight(int level) const { return -pool(level).log_expert_weight(); }

double CompactStrategy::level_log2_count(int level) const { return pool(level).log2_size(); }

double CompactStrategy::level_certificate(int level, std::size_t N) const {
  return level_log_inverse_weight(level) / eta_ +
         4.0 * options_.Y * covering_factor(spec_) * std::ldexp(1.0, -level) * static_cast<double>(N);
}

double CompactStrategy::certificate(const PredictionRule& target, std::size_t N) const {
  if (!in_class(spec_, target)) throw InvalidInput("certificate: target outside the class ball");
  double best = kInf;
  for (int i = 1; i <= i_max_; ++i) best = std::min(best, level_certificate(i, N));
  return best;
}

std::unique_ptr<CompactStrategy> make_compact_strategy(const ClassSpec& spec, int i_max, CompactOptions options) {
  return std::make_unique<CompactStrategy>(spec, i_max, options);
}

double compact_certificate(const CompactStrategy& strategy, const PredictionRule& target, int level,
                           std::size_t N) {
  if (!in_class(strategy.spec(), target)) throw InvalidInput("compact_certificate: target outside the class ball");
  if (level < 1 || level > strategy.i_max()) throw InvalidInput("compact_certificate: no such level");
  return strategy.level_certificate(level, N);
}

int auto_i_max(const ClassSpec& spec, std::size_t N, const CompactOptions& options) {
  const double eta = resolve_eta(options);
  const double cf = covering_factor(spec);
  double enumerated = 0.0;
  double best = kInf;
  int best_i = 1;
  for (int i = 1; i <= 30; ++i) {
    const double bits = net_log2_size(spec, std::ldexp(1.0, -i));
    if (!uses_chain(spec, i, options)) {
      enumerated += std::exp2(bits);
      if (enumerated > options.cap) break;
    }
    const double cert = (bits * std::numbers::ln2 - std::log(level_mass(i))) / eta +
                        4.0 * options.Y * cf * std::ldexp(1.0, -i) * static_cast<double>(N);
    if (cert < best) {
      best = cert;
      best_i = i;
    } else if (i > best_i + 2) {
      break;
    }
  }
  return best_i;
}

// ---------------------------------------------------------------------------
// MixtureOfStrategies
// ---------------------------------------------------------------------------

MixtureOfStrategies::MixtureOfStrategies(std::vector<std::unique_ptr<CertifiedStrategy>> parts,
                                         std::vector<double> weights, double eta, double Y, EtaMode mode,
                                         std::string name)
    : parts_(std::move(parts)), name_(std::move(name)) {
  if (parts_.empty()) throw InvalidInput("mixture of strategies: no strategies");
  if (weights.size() != parts_.size()) throw InvalidInput("mixture of strategies: one weight per strategy");
  for (const auto& p : parts_) {
    if (p->observation_dim() != parts_.front()->observation_dim()) {
      throw InvalidInput("mixture of strategies: observation dimensions differ");
    }
  }
  state_ = aa_init(weights, eta, Y, AggregatorOptions{mode, true});
  for (double w : weights) log_weights_.push_back(std::log(w));
}

const Matrix& MixtureOfStrategies::part_predictions(const Signal& x) {
  if (!cached_x_ || cached_x_->size() != x.size() || *cached_x_ != x) {
    cached_.resize(observation_dim(), static_cast<Eigen::Index>(parts_.size()));
    for (std::size_t j = 0; j < parts_.size(); ++j) cached_.col(static_cast<Eigen::Index>(j)) = parts_[j]->predict(x);
    cached_x_ = x;
  }
  return cached_;
}

Prediction MixtureOfStrategies::predict(const Signal& x) { return aa_predict(state_, part_predictions(x)); }

void MixtureOfStrategies::update(const Signal& x, const Observation& y) {
  aa_update(state_, part_predictions(x), y);
  for (auto& p : parts_) p->update(x, y);
  cached_x_.reset();
}

double MixtureOfStrategies::certificate(const PredictionRule& target, std::size_t N) const {
  double best = kInf;
  for (std::size_t j = 0; j < parts_.size(); ++j) {
    try {
      best = std::min(best, -log_weights_[j] / state_.eta + parts_[j]->certificate(target, N));
    } catch (const InvalidInput&) {
    }
  }
  if (best == kInf) throw InvalidInput("certificate: no component strategy covers the target");
  return best;
}

std::unique_ptr<MixtureOfStrategies> make_banach_strategy(const ClassSpec& unit, BanachOptions options) {
  validate(unit);
  if (options.j_max < 1) throw InvalidInput("make_banach_strategy: j_max must be >= 1");
  std::vector<std::unique_ptr<CertifiedStrategy>> shells;
  std::vector<double> weights;
  for (int j = 1; j <= options.j_max; ++j) {
    const ClassSpec shell = scaled(unit, std::ldexp(1.0, j));
    const int i_max = options.i_max > 0 ? options.i_max : auto_i_max(shell, options.horizon, options.compact);
    shells.push_back(make_compact_strategy(shell, i_max, options.compact));
    weights.push_back(level_mass(j));
  }
  const double eta = resolve_eta(options.compact);
  return std::make_unique<MixtureOfStrategies>(std::move(shells), std::move(weights), eta, options.compact.Y,
                                               options.compact.mode, "banach-" + kind_name(unit));
}

std::unique_ptr<MixtureOfStrategies> make_universal_strategy(std::vector<std::unique_ptr<CertifiedStrategy>> parts,
                                                             double eta, double Y, EtaMode mode) {
  if (parts.empty()) throw InvalidInput("make_universal_strategy: no strategies");
  std::string name = "universal";
  for (const auto& p : parts) name += "+" + p->name();
  const std::vector<double> weights(parts.size(), 1.0 / static_cast<double>(parts.size()));
  return std::make_unique<MixtureOfStrategies>(std::move(parts), weights, eta, Y, mode, name);
}

// ---------------------------------------------------------------------------
// AAR
// ---------------------------------------------------------------------------

AARState aar_init(int dimension, double a) {
  if (dimension < 1 || !(a > 0.0)) throw InvalidInput("aar_init: need dimension >= 1 and a > 0");
  return AARState{a, a * Matrix::Identity(dimension, dimension), Vector::Zero(dimension)};
}

double aar_predict(const AARState& state, const Signal& x) {
  if (x.size() != state.b.size()) throw InvalidInput("aar_predict: dimension mismatch");
  const Matrix A = state.A + x * x.transpose();
  return x.dot(A.llt().solve(state.b));
}

void aar_update(AARState& state, const Signal& x, double y) {
  if (x.size() != state.b.size()) throw InvalidInput("aar_update: dimension mismatch");
  state.A.noalias() += x * x.transpose();
  state.b += y * x;
}

double aar_bound(double loss_theta, const Vector& theta, double a, int m, double Y, std::size_t N, double x_inf) {
  return loss_theta + a * theta.squaredNorm() +
         m * Y * Y * std::log1p(static_cast<double>(N) * x_inf * x_inf / a);
}

AARStrategy::AARStrategy(int dimension, double a, double Y) : state_(aar_init(dimension, a)), Y_(Y) {}

Prediction AARStrategy::predict(const Signal& x) { return scalar(clip_scalar(aar_predict(state_, x), Y_)); }

void AARStrategy::update(const Signal& x, const Observation& y) {
  if (y.size() != 1) throw InvalidInput("AARStrategy: observations must be scalar");
  aar_update(state_, x, y(0));
  x_inf_ = std::max(x_inf_, x.cwiseAbs().maxCoeff());
  x_norm_ = std::max(x_norm_, x.norm());
}

double AARStrategy::certificate(const PredictionRule& target, std::size_t N) const {
  const auto* r = std::get_if<LinearRule>(&target);
  if (!r || r->theta.size() != state_.b.size()) throw InvalidInput("AAR certificate: target is not linear");
  // The bound compares with the unclipped rule; it transfers to the clipped one only
  // when the rule stays inside the Y-ball on every signal seen.
  if (r->theta.norm() * x_norm_ > Y_) throw InvalidInput("AAR certificate: target leaves the Y-ball on the data");
  const int m = static_cast<int>(state_.b.size());
  return aar_bound(0.0, r->theta, state_.a, m, Y_, N, x_inf_);
}

}  // namespace entreg
