#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "entreg/aggregator.hpp"
#include "entreg/nets.hpp"
#include "entreg/pools.hpp"
#include "entreg/protocol.hpp"

namespace entreg {

/// A strategy that can state a provable bound on its regret against a target rule.
class CertifiedStrategy : public Strategy {
 public:
  /// Upper bound on sum_n (y_n - mu_n)^2 - sum_n (y_n - clip(F(x_n)))^2 after N rounds,
  /// valid for every sequence with observations in the Y-ball.
  /// Throws InvalidInput if the target is outside the family the strategy competes with.
  virtual double certificate(const PredictionRule& target, std::size_t N) const = 0;
  virtual int observation_dim() const = 0;
};

struct CompactOptions {
  EtaMode mode = EtaMode::vector;
  double eta = 0.0;  ///< 0 selects the mode's cap
  double Y = 1.0;
  double cap = kDefaultExpertCap;
  /// Lipschitz levels: exact chain mixture instead of explicit enumeration.
  bool implicit_lipschitz = true;
};

/// Flat mixture over the dyadic nets of one class ball, expert k of level i weighted
/// (6/pi^2) i^-2 / count_i.
class CompactStrategy final : public CertifiedStrategy {
 public:
  CompactStrategy(ClassSpec spec, int i_max, CompactOptions options);

  Prediction predict(const Signal& x) override;
  void update(const Signal& x, const Observation& y) override;
  std::string name() const override;
  double certificate(const PredictionRule& target, std::size_t N) const override;
  int observation_dim() const override { return entreg::observation_dim(spec_); }

  /// Certificate through level i alone: ln(1/w_i)/eta + 4 Y cf 2^-i N.
  double level_certificate(int level, std::size_t N) const;
  /// ln(1/w) for every expert of level i.
  double level_log_inverse_weight(int level) const;
  double level_log2_count(int level) const;

  const ClassSpec& spec() const { return spec_; }
  int i_max() const { return i_max_; }
  double eta() const { return eta_; }
  EtaMode mode() const { return options_.mode; }
  const ExpertPool& pool(int level) const { return *pools_.at(level - 1); }

 private:
  MixtureMoments moments(const Signal& x);

  ClassSpec spec_;
  int i_max_;
  CompactOptions options_;
  double eta_;
  std::vector<std::unique_ptr<ExpertPool>> pools_;
};

/// Level mass (6/pi^2) i^-2.
double level_mass(int i);

std::unique_ptr<CompactStrategy> make_compact_strategy(const ClassSpec& spec, int i_max,
                                                       CompactOptions options = {});
double compact_certificate(const CompactStrategy& strategy, const PredictionRule& target, int level,
                           std::size_t N);

/// Finest level worth building for horizon N: balances ln(count)/eta against the
/// 4 cf 2^-i N slack, limited by the expert cap for enumerated levels.
int auto_i_max(const ClassSpec& spec, std::size_t N, const CompactOptions& options);

/// AA over strategies; sub-strategy j has prior weight weights[j] (sum <= 1).
class MixtureOfStrategies : public CertifiedStrategy {
 public:
  MixtureOfStrategies(std::vector<std::unique_ptr<CertifiedStrategy>> parts, std::vector<double> weights,
                      double eta, double Y, EtaMode mode, std::string name);

  Prediction predict(const Signal& x) override;
  void update(const Signal& x, const Observation& y) override;
  std::string name() const override { return name_; }
  int observation_dim() const override { return parts_.front()->observation_dim(); }
  /// min over parts j accepting the target of ln(1/w_j)/eta + part certificate.
  double certificate(const PredictionRule& target, std::size_t N) const override;

  std::size_t part_count() const { return parts_.size(); }
  const CertifiedStrategy& part(std::size_t j) const { return *parts_.at(j); }
  double eta() const { return state_.eta; }

 private:
  const Matrix& part_predictions(const Signal& x);

  std::vector<std::unique_ptr<CertifiedStrategy>> parts_;
  std::vector<double> log_weights_;
  AggregatorState state_;
  std::string name_;
  std::optional<Signal> cached_x_;
  Matrix cached_;
};

struct BanachOptions {
  CompactOptions compact;
  int j_max = 3;
  /// Per-shell i_max; 0 selects auto_i_max for the shell at `horizon`.
  int i_max = 0;
  std::size_t horizon = 1024;
};

/// Shells j = 1..j_max of radius 2^j times the unit ball, each a CompactStrategy,
/// mixed with weights (6/pi^2) j^-2.
std::unique_ptr<MixtureOfStrategies> make_banach_strategy(const ClassSpec& unit, BanachOptions options);

/// Equal-weight mixture of the given strategies.
std::unique_ptr<MixtureOfStrategies> make_universal_strategy(std::vector<std::unique_ptr<CertifiedStrategy>> parts,
                                                             double eta, double Y, EtaMode mode);

struct AARState {
  double a = 1.0;
  Matrix A;  // a I + sum x x^T
  Vector b;  // sum y x
};

AARState aar_init(int dimension, double a = 1.0);
/// x^T (A + x x^T)^{-1} b, unclipped.
double aar_predict(const AARState& state, const Signal& x);
void aar_update(AARState& state, const Signal& x, double y);
/// L_theta + a |theta|^2 + m Y^2 ln(1 + N X_inf^2 / a).
double aar_bound(double loss_theta, const Vector& theta, double a, int m, double Y, std::size_t N, double x_inf);

/// Vovk-Azoury-Warmuth forecaster, predictions clipped to [-Y, Y].
class AARStrategy final : public CertifiedStrategy {
 public:
  AARStrategy(int dimension, double a = 1.0, double Y = 1.0);

  Prediction predict(const Signal& x) override;
  void update(const Signal& x, const Observation& y) override;
  std::string name() const override { return "aar"; }
  int observation_dim() const override { return 1; }
  /// Regret term of the AAR bound for a linear target, using the largest |x_i| seen.
  double certificate(const PredictionRule& target, std::size_t N) const override;

  const AARState& state() const { return state_; }

 private:
  AARState state_;
  double Y_;
  double x_inf_ = 0.0;
  double x_norm_ = 0.0;
};

}  // namespace entreg
