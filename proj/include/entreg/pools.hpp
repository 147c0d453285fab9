#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "entreg/aggregator.hpp"
#include "entreg/nets.hpp"

namespace entreg {

/// A finite weighted set of experts evolving under exponential weights with a shared
/// learning rate. Several pools with the same eta form one flat mixture: their
/// moments combine exactly (combine_moments).
class ExpertPool {
 public:
  virtual ~ExpertPool() = default;
  /// Unnormalised moments of the pool at x (prior mass times exp(-eta * past loss)).
  virtual MixtureMoments moments(const Signal& x) = 0;
  /// Charges every expert its loss at (x, y).
  virtual void update(const Signal& x, const Observation& y) = 0;
  /// log2 of the number of experts (may be far beyond anything enumerable).
  virtual double log2_size() const = 0;
  /// ln of the prior mass of each expert (uniform within the pool).
  virtual double log_expert_weight() const = 0;
};

/// Explicit expert list from a net level; every expert gets prior weight exp(log_mass) / K.
class EnumeratedPool final : public ExpertPool {
 public:
  EnumeratedPool(NetLevel net, double log_mass, double eta, double Y, EtaMode mode);

  MixtureMoments moments(const Signal& x) override;
  void update(const Signal& x, const Observation& y) override;
  double log2_size() const override { return net_.entropy_bits; }
  double log_expert_weight() const override { return log_weight_; }

  const NetLevel& net() const { return net_; }
  const AggregatorState& state() const { return state_; }

 private:
  const Matrix& predictions_at(const Signal& x);

  NetLevel net_;
  double log_weight_;
  AggregatorState state_;
  std::optional<Signal> cached_x_;
  Matrix cached_predictions_;
};

/// The full piecewise-linear Lipschitz net of one level as a Markov chain over
/// quantized knot values. The mixture over all (2 first_half + 1) 3^(knots - 1)
/// paths is computed exactly by forward-backward passes; no path is enumerated.
class LipschitzChainPool final : public ExpertPool {
 public:
  LipschitzChainPool(const LipschitzGrid& grid, double log_mass, double eta, double Y, EtaMode mode);

  MixtureMoments moments(const Signal& x) override;
  void update(const Signal& x, const Observation& y) override;
  double log2_size() const override { return grid_.log2_count(); }
  double log_expert_weight() const override { return log_mass_ - grid_.log2_count() * std::log(2.0); }

  const LipschitzGrid& grid() const { return grid_; }

 private:
  static constexpr int kSteps = 3;  // step in {-1, 0, +1}

  int states() const { return 2 * span_ + 1; }
  double prediction(int s_index, int step, double t) const;
  void refresh_potentials(int interval);
  void ensure_forward(int knot);
  void ensure_backward(int knot);

  LipschitzGrid grid_;
  double log_mass_;
  double eta_;
  double Y_;
  EtaMode mode_;
  int span_;  // states s in [-span_, span_]
  int intervals_;

  // psi_[k](s, step): -eta * accumulated loss of the segment choice on interval k.
  std::vector<Matrix> psi_;
  std::vector<Matrix> phi_;  // exp(psi - psi_max)
  std::vector<double> phi_log_scale_;
  std::vector<Vector> alpha_, beta_;
  std::vector<double> alpha_log_scale_, beta_log_scale_;
  int alpha_valid_ = 0;  // alpha_[0..alpha_valid_] are current
  int beta_valid_ = 0;   // beta_[beta_valid_..knots-1] are current
};

/// Pool for one dyadic level: enumerated when the net fits, otherwise the chain
/// (Lipschitz only). `implicit_lipschitz` forces the chain for Lipschitz levels.
std::unique_ptr<ExpertPool> make_level_pool(const ClassSpec& spec, int level, double log_mass, double eta,
                                            double Y, EtaMode mode, bool implicit_lipschitz, double cap);

}  // namespace entreg
