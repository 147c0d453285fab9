#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "entreg/types.hpp"

namespace entreg {

/// Squared Euclidean distance between observation and prediction.
template <typename DerivedY, typename DerivedMu>
typename DerivedY::Scalar quadratic_loss(const Eigen::MatrixBase<DerivedY>& y,
                                         const Eigen::MatrixBase<DerivedMu>& mu) {
  if (y.size() != mu.size()) {
    throw InvalidInput("quadratic_loss: dimension mismatch");
  }
  return (y - mu).squaredNorm();
}

/// Projection onto the closed ball of radius `radius`; identity inside it.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> clip(
    const Eigen::MatrixBase<Derived>& mu, typename Derived::Scalar radius) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = mu;
  if (out.size() == 1) {
    out(0) = std::clamp(out(0), -radius, radius);
    return out;
  }
  const Scalar norm = out.norm();
  if (norm > radius) {
    out *= radius / norm;
    // Rounding in the rescale may leave the norm one ulp above the radius.
    while (out.norm() > radius) out *= Scalar(1) - std::numeric_limits<Scalar>::epsilon();
  }
  return out;
}

inline double clip_scalar(double mu, double radius) { return std::clamp(mu, -radius, radius); }

/// Anything that can play Predictor in the on-line regression protocol.
template <typename S>
concept PredictionStrategy = requires(S s, const Signal& x, const Observation& y) {
  { s.predict(x) } -> std::convertible_to<Prediction>;
  s.update(x, y);
};

/// Runtime-polymorphic strategy; every strategy in the library derives from it.
class Strategy {
 public:
  virtual ~Strategy() = default;
  /// Prediction for the current signal. Must not depend on the upcoming observation.
  virtual Prediction predict(const Signal& x) = 0;
  virtual void update(const Signal& x, const Observation& y) = 0;
  virtual std::string name() const = 0;
};

struct RoundRecord {
  std::size_t n = 0;  // 1-based round index
  Signal x;
  Prediction mu;
  Observation y;
  double loss = 0.0;
};

/// Throws ProtocolViolation if the observation lies strictly outside the Y-ball.
void check_observation(const Observation& y, double Y, std::size_t round);

template <PredictionStrategy S>
std::vector<RoundRecord> run_protocol(S& strategy, std::span<const Example> data,
                                      std::size_t rounds, double Y = 1.0) {
  if (rounds == 0) throw InvalidInput("run_protocol: need at least one round");
  if (data.size() < rounds) throw InvalidInput("run_protocol: data source too short");
  std::vector<RoundRecord> records;
  records.reserve(rounds);
  for (std::size_t n = 0; n < rounds; ++n) {
    const Example& ex = data[n];
    check_observation(ex.y, Y, n + 1);
    Prediction mu = strategy.predict(ex.x);
    const double loss = quadratic_loss(ex.y, mu);
    strategy.update(ex.x, ex.y);
    records.push_back(RoundRecord{n + 1, ex.x, std::move(mu), ex.y, loss});
  }
  return records;
}

double total_loss(std::span<const RoundRecord> records);

/// Cumulative loss of a fixed rule on the first `rounds` examples.
template <typename Rule>
double rule_loss(const Rule& rule, std::span<const Example> data, std::size_t rounds) {
  double sum = 0.0;
  for (std::size_t n = 0; n < rounds; ++n) sum += quadratic_loss(data[n].y, rule(data[n].x));
  return sum;
}

/// Columns: n,x,mu,y,loss,cum_loss. Vector fields are semicolon-joined.
void write_rounds_csv(std::ostream& out, std::span<const RoundRecord> records);

/// Shortest round-trippable decimal form used in every CSV the library writes.
std::string format_real(double v);
std::string join_vector(const Vector& v);

}  // namespace entreg
