#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace entreg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A point of the signal space (dimension fixed per experiment).
using Signal = Vector;
/// Observation in the closed Y-ball of R^d, d in {1, 2}.
using Observation = Vector;
/// Prediction, same dimension as the observation.
using Prediction = Vector;

/// One (x_n, y_n) pair supplied by Reality.
struct Example {
  Signal x;
  Observation y;
};

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Observation outside the declared Y-ball.
class ProtocolViolation : public std::runtime_error {
 public:
  ProtocolViolation(std::size_t round, const std::string& what)
      : std::runtime_error(what), round_(round) {}
  std::size_t round() const { return round_; }

 private:
  std::size_t round_;
};

/// Requested expert pool exceeds the configured cap.
class NetTooLarge : public std::runtime_error {
 public:
  NetTooLarge(double count, double cap, int max_feasible_level, const std::string& what)
      : std::runtime_error(what),
        count_(count),
        cap_(cap),
        max_feasible_level_(max_feasible_level) {}
  double count() const { return count_; }
  double cap() const { return cap_; }
  /// Largest dyadic level index that still fits, 0 if none does.
  int max_feasible_level() const { return max_feasible_level_; }

 private:
  double count_;
  double cap_;
  int max_feasible_level_;
};

inline Vector scalar(double v) { return Vector::Constant(1, v); }

}  // namespace entreg
