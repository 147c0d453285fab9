#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "entreg/aggregator.hpp"
#include "entreg/protocol.hpp"
#include "entreg/rng.hpp"
#include "entreg/strategies.hpp"

using namespace entreg;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

struct ConstantStrategy {
  double value;
  Prediction predict(const Signal&) const { return scalar(value); }
  void update(const Signal&, const Observation&) {}
};

// Two constant experts {0, 1} mixed by the library aggregator.
struct TwoConstants {
  AggregatorState state = aa_init(std::vector<double>{0.5, 0.5}, 1.0 / 8.0, 1.0);
  Matrix preds() const {
    Matrix p(1, 2);
    p << 0.0, 1.0;
    return p;
  }
  Prediction predict(const Signal&) const { return aa_predict(state, preds()); }
  void update(const Signal&, const Observation& y) { aa_update(state, preds(), y); }
};

std::vector<Example> constant_data(std::size_t n, double y) {
  return std::vector<Example>(n, Example{scalar(0.0), scalar(y)});
}

}  // namespace

TEST(QuadraticLoss, Examples) {
  EXPECT_DOUBLE_EQ(quadratic_loss(scalar(0.5), scalar(0.5)), 0.0);
  EXPECT_DOUBLE_EQ(quadratic_loss(scalar(1.0), scalar(-1.0)), 4.0);
  EXPECT_NEAR(quadratic_loss(vec2(0.6, 0.8), vec2(0.0, 0.0)), 1.0, 1e-15);
}

TEST(QuadraticLoss, SymmetricAndZeroOnlyWhenEqual) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vector a = vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Vector b = vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    EXPECT_EQ(quadratic_loss(a, b), quadratic_loss(b, a));
    EXPECT_GT(quadratic_loss(a, b), 0.0);
    EXPECT_EQ(quadratic_loss(a, a), 0.0);
  }
}

TEST(QuadraticLoss, DimensionMismatchThrows) {
  EXPECT_THROW(quadratic_loss(scalar(1.0), vec2(1.0, 0.0)), InvalidInput);
}

TEST(Clip, Examples) {
  EXPECT_DOUBLE_EQ(clip(scalar(0.3), 1.0)(0), 0.3);
  EXPECT_DOUBLE_EQ(clip(scalar(1.7), 1.0)(0), 1.0);
  EXPECT_DOUBLE_EQ(clip(scalar(-2.0), 1.0)(0), -1.0);
  const Vector c = clip(vec2(3.0, 4.0), 1.0);
  EXPECT_NEAR(c(0), 0.6, 1e-15);
  EXPECT_NEAR(c(1), 0.8, 1e-15);
  EXPECT_LE(c.norm(), 1.0);
}

TEST(Clip, NeverIncreasesLossAgainstInBallObservations) {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double Y = rng.uniform(0.1, 3.0);
    Vector y = vec2(rng.normal(), rng.normal());
    y = clip(y, Y);
    const Vector mu = vec2(rng.normal() * 3 * Y, rng.normal() * 3 * Y);
    const Vector c = clip(mu, Y);
    EXPECT_LE(c.norm(), Y);
    EXPECT_LE((y - c).norm(), (y - mu).norm() + 1e-15);
    const double ys = rng.uniform(-Y, Y), ms = rng.uniform(-4 * Y, 4 * Y);
    EXPECT_LE(std::abs(ys - clip_scalar(ms, Y)), std::abs(ys - ms));
  }
}

TEST(RunProtocol, ConstantZeroOnZeroData) {
  ConstantStrategy zero{0.0};
  const auto data = constant_data(10, 0.0);
  EXPECT_EQ(total_loss(run_protocol(zero, data, 10)), 0.0);
}

TEST(RunProtocol, ConstantZeroOnOnes) {
  ConstantStrategy zero{0.0};
  const auto data = constant_data(10, 1.0);
  EXPECT_DOUBLE_EQ(total_loss(run_protocol(zero, data, 10)), 10.0);
}

TEST(RunProtocol, MixtureOfTwoConstantsWithinBound) {
  TwoConstants aa;
  const auto data = constant_data(100, 1.0);
  const double loss = total_loss(run_protocol(aa, data, 100));
  EXPECT_LE(loss, 8.0 * std::log(2.0));
  EXPECT_GT(loss, 0.0);
}

TEST(RunProtocol, ObservationOutsideBallAbortsWithRound) {
  ConstantStrategy zero{0.0};
  auto data = constant_data(5, 0.5);
  data[2].y = scalar(1.5);
  try {
    run_protocol(zero, data, 5);
    FAIL() << "expected a protocol violation";
  } catch (const ProtocolViolation& e) {
    EXPECT_EQ(e.round(), 3u);
  }
}

TEST(RunProtocol, BoundaryObservationAccepted) {
  ConstantStrategy zero{0.0};
  auto data = constant_data(3, 1.0);
  data[1].y = scalar(-1.0);
  EXPECT_NO_THROW(run_protocol(zero, data, 3));
}

TEST(RunProtocol, RecordsInOrderAndLossesMatch) {
  Rng rng(9);
  std::vector<Example> data;
  for (int i = 0; i < 300; ++i) data.push_back({scalar(rng.uniform()), scalar(rng.uniform(-1, 1))});
  CompactStrategy s(LipschitzBall{}, 3, CompactOptions{EtaMode::scalar});
  const auto records = run_protocol(s, data, data.size());
  double recomputed = 0.0;
  for (std::size_t n = 0; n < records.size(); ++n) {
    EXPECT_EQ(records[n].n, n + 1);
    const double d = data[n].y(0) - records[n].mu(0);
    EXPECT_EQ(records[n].loss, d * d);
    recomputed += d * d;
  }
  EXPECT_NEAR(total_loss(records), recomputed, 1e-9);
}

TEST(RunProtocol, CausalPrefixReplayIsBitIdentical) {
  Rng rng(11);
  std::vector<Example> data;
  for (int i = 0; i < 200; ++i) data.push_back({scalar(rng.uniform()), scalar(rng.uniform(-1, 1))});
  CompactStrategy full(LipschitzBall{}, 4, CompactOptions{EtaMode::scalar});
  const auto all = run_protocol(full, data, 200);
  // Predictions for rounds 1..120 must not depend on what comes after.
  std::vector<Example> prefix(data.begin(), data.begin() + 120);
  prefix.resize(200, Example{scalar(0.9), scalar(-1.0)});
  CompactStrategy replay(LipschitzBall{}, 4, CompactOptions{EtaMode::scalar});
  const auto part = run_protocol(replay, prefix, 200);
  for (std::size_t n = 0; n < 120; ++n) EXPECT_EQ(all[n].mu(0), part[n].mu(0)) << "round " << n + 1;
}

TEST(RoundsCsv, HeaderAndCumulativeLoss) {
  std::vector<RoundRecord> records{{1, scalar(0.25), scalar(0.0), scalar(1.0), 1.0},
                                   {2, vec2(0.5, 1.0), scalar(0.5), scalar(0.0), 0.25}};
  std::ostringstream out;
  write_rounds_csv(out, records);
  EXPECT_EQ(out.str(), "n,x,mu,y,loss,cum_loss\n1,0.25,0,1,1,1\n2,0.5;1,0.5,0,0.25,1.25\n");
}

TEST(FormatReal, RoundTrips) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double v = rng.normal() * 1e3;
    EXPECT_EQ(std::stod(format_real(v)), v);
  }
}
