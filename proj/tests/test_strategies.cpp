#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "entreg/nets.hpp"
#include "entreg/protocol.hpp"
#include "entreg/rng.hpp"
#include "entreg/strategies.hpp"

using namespace entreg;

namespace {

constexpr double kSixOverPiSq = 6.0 / (std::numbers::pi * std::numbers::pi);

double clipped_rule_loss(const PredictionRule& rule, const std::vector<Example>& data, double Y) {
  double sum = 0.0;
  for (const auto& ex : data) sum += (ex.y - clip(evaluate(rule, ex.x), Y)).squaredNorm();
  return sum;
}

// Observations: the target plus noise, pushed back into the Y-ball.
std::vector<Example> noisy_data(const ClassSpec& spec, const PredictionRule& target, std::size_t N, double noise,
                                Rng& rng) {
  std::vector<Example> data;
  for (std::size_t n = 0; n < N; ++n) {
    const Signal x = sample_signal(spec, rng);
    Vector y = evaluate(target, x);
    for (Eigen::Index k = 0; k < y.size(); ++k) y(k) += noise * rng.normal();
    data.push_back({x, clip(y, 1.0)});
  }
  return data;
}

double run_regret(CertifiedStrategy& s, const PredictionRule& target, const std::vector<Example>& data) {
  const auto records = run_protocol(s, std::span<const Example>(data), data.size());
  return total_loss(records) - clipped_rule_loss(target, data, 1.0);
}

LinearRule linear_rule(std::initializer_list<double> v) {
  Vector t(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double c : v) t(k++) = c;
  return LinearRule{t};
}

}  // namespace

TEST(LevelMass, Formula) {
  EXPECT_NEAR(level_mass(1), kSixOverPiSq, 1e-15);
  EXPECT_NEAR(level_mass(3), kSixOverPiSq / 9.0, 1e-15);
  double total = 0.0;
  for (int i = 1; i <= 1000; ++i) total += level_mass(i);
  EXPECT_LT(total, 1.0);
  EXPECT_GT(total, 0.999);
}

TEST(CompactStrategy, WeightExamples) {
  const CompactStrategy s(LinearBall{1, 1, 1}, 1, CompactOptions{});
  EXPECT_NEAR(std::exp(-s.level_log_inverse_weight(1)), 0.2026, 1e-4);
  EXPECT_NEAR(std::exp(-s.level_log_inverse_weight(1)), kSixOverPiSq / 3.0, 1e-15);
  EXPECT_NEAR(level_mass(2) / 4.0, 0.0380, 1e-4);
}

TEST(CompactStrategy, SingleExpertIsThatExpert) {
  // B X2 = 0.4 < 1/2: level 1 is the zero rule alone.
  CompactStrategy s(LinearBall{1, 1, 0.4}, 1, CompactOptions{});
  EXPECT_EQ(s.level_log2_count(1), 0.0);
  Rng rng(1);
  for (int n = 0; n < 50; ++n) {
    const Signal x = scalar(rng.uniform(-1, 1));
    EXPECT_EQ(s.predict(x)(0), 0.0);
    s.update(x, scalar(rng.uniform(-1, 1)));
  }
}

TEST(CompactStrategy, CertificateFormula) {
  const CompactStrategy s(LinearBall{1, 1, 1}, 3, CompactOptions{});
  const PredictionRule target = linear_rule({1.0});  // an expert of level 1
  const double w = kSixOverPiSq / 3.0;
  EXPECT_NEAR(compact_certificate(s, target, 1, 100), 8.0 * std::log(1.0 / w) + 4.0 * 0.5 * 100 * 1.0, 1e-9);
  EXPECT_NEAR(compact_certificate(s, target, 1, 0), 8.0 * std::log(1.0 / w), 1e-12);
  EXPECT_THROW(compact_certificate(s, linear_rule({1.5}), 1, 10), InvalidInput);
  EXPECT_THROW(compact_certificate(s, target, 4, 10), InvalidInput);
  EXPECT_THROW(s.certificate(linear_rule({0.5, 0.5}), 10), InvalidInput);
}

TEST(CompactStrategy, CertificateNonincreasingInIMax) {
  const ClassSpec spec = LipschitzBall{0, 1, 1, 1};
  const PredictionRule target = build_lipschitz_net(std::get<LipschitzBall>(spec), 0.5).rule(3);
  for (std::size_t N : {0ul, 100ul, 5000ul, 100000ul}) {
    double prev = 1e300;
    for (int i_max = 1; i_max <= 8; ++i_max) {
      const CompactStrategy s(spec, i_max, CompactOptions{EtaMode::scalar});
      const double c = s.certificate(target, N);
      EXPECT_LE(c, prev);
      prev = c;
    }
  }
}

TEST(CompactStrategy, ScalarModeNeedsScalarObservations) {
  EXPECT_THROW(CompactStrategy(TrigAnalytic{3, 0.6, 2}, 1, CompactOptions{EtaMode::scalar}), InvalidInput);
  EXPECT_THROW(CompactStrategy(LinearBall{}, 1, CompactOptions{EtaMode::vector, 0.2}), InvalidInput);
}

TEST(CompactStrategy, CapPropagates) {
  CompactOptions o;
  o.cap = 1000;
  try {
    CompactStrategy(LinearBall{2, 1, 1}, 6, o);
    FAIL() << "expected NetTooLarge";
  } catch (const NetTooLarge& e) {
    EXPECT_GE(e.max_feasible_level(), 1);
    EXPECT_LT(e.max_feasible_level(), 6);
  }
}

struct SoundnessCase {
  const char* name;
  ClassSpec spec;
  int i_max;
  EtaMode mode;
  std::size_t N;
  double noise;
};

class CertificateSoundness : public ::testing::TestWithParam<SoundnessCase> {};

TEST_P(CertificateSoundness, RegretWithinCertificate) {
  const auto c = GetParam();
  Rng rng(404);
  for (int rep = 0; rep < 3; ++rep) {
    const PredictionRule target = sample_class_member(c.spec, rng);
    const auto data = noisy_data(c.spec, target, c.N, c.noise, rng);
    CompactStrategy s(c.spec, c.i_max, CompactOptions{c.mode});
    const double regret = run_regret(s, target, data);
    const double cert = s.certificate(target, c.N);
    EXPECT_LE(regret, cert + 1e-6) << c.name;
    // The best single level must be no smaller than the certificate.
    for (int i = 1; i <= c.i_max; ++i) EXPECT_GE(compact_certificate(s, target, i, c.N), cert);
  }
}

INSTANTIATE_TEST_SUITE_P(
    Classes, CertificateSoundness,
    ::testing::Values(SoundnessCase{"linear1", LinearBall{1, 1, 1}, 6, EtaMode::scalar, 800, 0.1},
                      SoundnessCase{"linear2", LinearBall{2, 1, 1}, 5, EtaMode::vector, 600, 0.3},
                      SoundnessCase{"lipschitz", LipschitzBall{0, 1, 1, 1}, 6, EtaMode::scalar, 800, 0.1},
                      SoundnessCase{"lipschitz_vec", LipschitzBall{0, 1, 2, 1}, 5, EtaMode::vector, 500, 0.5},
                      SoundnessCase{"trig", TrigAnalytic{1, 0.13, 1}, 3, EtaMode::scalar, 600, 0.1},
                      SoundnessCase{"trig_complex", TrigAnalytic{3, 0.6, 2}, 1, EtaMode::vector, 200, 0.2}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(CompactStrategy, AdversarialObservationsStillCertified) {
  // Reality answers against the strategy's prediction.
  const LipschitzBall spec{0, 1, 1, 1};
  CompactStrategy s(spec, 5, CompactOptions{EtaMode::scalar});
  Rng rng(8);
  std::vector<Example> data;
  double loss = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const Signal x = scalar(rng.uniform());
    const double mu = s.predict(x)(0);
    const double y = mu > 0 ? -1.0 : 1.0;
    loss += (y - mu) * (y - mu);
    s.update(x, scalar(y));
    data.push_back({x, scalar(y)});
  }
  for (int t = 0; t < 20; ++t) {
    const PredictionRule target = sample_class_member(spec, rng);
    EXPECT_LE(loss - clipped_rule_loss(target, data, 1.0), s.certificate(target, 1000) + 1e-6);
  }
}

TEST(AutoIMax, MatchesDirectArgmin) {
  struct Case {
    ClassSpec spec;
    std::size_t N;
    EtaMode mode;
  };
  const std::vector<Case> cases{{LipschitzBall{0, 1, 1, 1}, 1 << 14, EtaMode::scalar},
                                {LipschitzBall{0, 1, 2, 1}, 1 << 10, EtaMode::vector},
                                {LinearBall{1, 1, 1}, 1 << 12, EtaMode::scalar},
                                {LinearBall{2, 1, 1}, 1 << 12, EtaMode::vector}};
  for (const auto& c : cases) {
    CompactOptions o{c.mode};
    const int got = auto_i_max(c.spec, c.N, o);
    const double eta = eta_cap(c.mode, 1.0);
    double best = 1e300;
    int arg = 0;
    double enumerated = 0.0;
    for (int i = 1; i <= 24; ++i) {
      const double bits = net_log2_size(c.spec, std::ldexp(1.0, -i));
      if (std::holds_alternative<LinearBall>(c.spec)) {
        enumerated += std::exp2(bits);
        if (enumerated > o.cap) break;
      }
      const double cert = (bits * std::log(2.0) - std::log(level_mass(i))) / eta +
                          4.0 * covering_factor(c.spec) * std::ldexp(1.0, -i) * static_cast<double>(c.N);
      if (cert < best) {
        best = cert;
        arg = i;
      }
    }
    EXPECT_EQ(got, arg) << kind_name(c.spec) << " N=" << c.N;
  }
}

TEST(Banach, ShellWeightsAndSingleShell) {
  BanachOptions o;
  o.j_max = 1;
  o.i_max = 3;
  auto banach = make_banach_strategy(LinearBall{1, 1, 1}, o);
  EXPECT_EQ(banach->part_count(), 1u);
  const CompactStrategy shell(scaled(LinearBall{1, 1, 1}, 2.0), 3, CompactOptions{});
  const PredictionRule t = linear_rule({0.7});
  EXPECT_NEAR(banach->certificate(t, 500), std::log(std::numbers::pi * std::numbers::pi / 6.0) / 0.125 +
                                               shell.certificate(t, 500),
              1e-9);
  EXPECT_EQ(banach->name(), "banach-linear");
}

TEST(Banach, NormThreeTargetUsesShellTwo) {
  BanachOptions o;
  o.j_max = 3;
  o.i_max = 2;
  auto banach = make_banach_strategy(LinearBall{1, 1, 1}, o);
  const PredictionRule t = linear_rule({3.0});
  // phi = 2 max(1, 3) = 6 >= 2^2 = 4: the radius-4 shell is the first to contain it.
  EXPECT_THROW(banach->part(0).certificate(t, 100), InvalidInput);
  const double shell2 = banach->part(1).certificate(t, 100);
  const double shell3 = banach->part(2).certificate(t, 100);
  const double outer2 = 8.0 * std::log(std::numbers::pi * std::numbers::pi / 6.0 * 4.0);
  const double outer3 = 8.0 * std::log(std::numbers::pi * std::numbers::pi / 6.0 * 9.0);
  EXPECT_NEAR(banach->certificate(t, 100), std::min(outer2 + shell2, outer3 + shell3), 1e-9);
  EXPECT_THROW(banach->certificate(linear_rule({9.0}), 100), InvalidInput);
}

TEST(Banach, ShellMonotonicity) {
  Rng rng(12);
  const LipschitzBall unit{0, 1, 1, 1};
  std::vector<std::unique_ptr<MixtureOfStrategies>> strategies;
  for (int j = 1; j <= 3; ++j) {
    BanachOptions o;
    o.compact = CompactOptions{EtaMode::scalar};
    o.j_max = j;
    o.i_max = 4;
    strategies.push_back(make_banach_strategy(unit, o));
  }
  for (int t = 0; t < 20; ++t) {
    const PredictionRule target = sample_class_member(scaled(unit, 1.5), rng);
    double prev = 1e300;
    for (const auto& s : strategies) {
      double c = 1e300;
      try {
        c = s->certificate(target, 2000);
      } catch (const InvalidInput&) {
      }
      EXPECT_LE(c, prev);
      prev = c;
    }
  }
}

TEST(Banach, SoundOnScaledTargets) {
  Rng rng(13);
  const LinearBall unit{1, 1, 0.25};
  BanachOptions o;
  o.compact = CompactOptions{EtaMode::scalar};
  o.j_max = 3;
  o.horizon = 600;
  for (double radius : {0.4, 0.9, 1.8}) {
    auto s = make_banach_strategy(unit, o);
    const PredictionRule target = sample_class_member(scaled(unit, radius / 0.25), rng);
    const auto data = noisy_data(unit, target, 600, 0.1, rng);
    const double regret = run_regret(*s, target, data);
    EXPECT_LE(regret, s->certificate(target, 600) + 1e-6);
  }
}

TEST(Universal, OneStrategyIsIdentity) {
  std::vector<std::unique_ptr<CertifiedStrategy>> parts;
  parts.push_back(make_compact_strategy(LinearBall{1, 1, 1}, 3, CompactOptions{EtaMode::scalar}));
  auto u = make_universal_strategy(std::move(parts), 0.5, 1.0, EtaMode::scalar);
  auto alone = make_compact_strategy(LinearBall{1, 1, 1}, 3, CompactOptions{EtaMode::scalar});
  Rng rng(3);
  for (int n = 0; n < 300; ++n) {
    const Signal x = scalar(rng.uniform(-1, 1));
    const double a = u->predict(x)(0), b = alone->predict(x)(0);
    EXPECT_NEAR(a, b, 1e-12);
    const Observation y = scalar(std::clamp(0.4 * x(0) + 0.2 * rng.normal(), -1.0, 1.0));
    u->update(x, y);
    alone->update(x, y);
  }
}

TEST(Universal, RegretAgainstEachPartAtMostLogTwoOverEta) {
  Rng rng(4);
  const LipschitzBall lip{0, 1, 1, 1};
  const LinearBall lin{1, 1, 1};
  std::vector<std::unique_ptr<CertifiedStrategy>> parts;
  parts.push_back(make_compact_strategy(lip, 4, CompactOptions{}));
  parts.push_back(make_compact_strategy(lin, 4, CompactOptions{}));
  auto u = make_universal_strategy(std::move(parts), 0.125, 1.0, EtaMode::vector);
  auto a = make_compact_strategy(lip, 4, CompactOptions{});
  auto b = make_compact_strategy(lin, 4, CompactOptions{});
  double lu = 0, la = 0, lb = 0;
  for (int n = 0; n < 1500; ++n) {
    const Signal x = scalar(rng.uniform());
    const double y = std::clamp(std::sin(6 * x(0)) + 0.2 * rng.normal(), -1.0, 1.0);
    lu += std::pow(y - u->predict(x)(0), 2);
    la += std::pow(y - a->predict(x)(0), 2);
    lb += std::pow(y - b->predict(x)(0), 2);
    u->update(x, scalar(y));
    a->update(x, scalar(y));
    b->update(x, scalar(y));
  }
  EXPECT_LE(lu, std::min(la, lb) + 8.0 * std::log(2.0) + 1e-9);
}

TEST(Mixture, RejectsMismatchedParts) {
  std::vector<std::unique_ptr<CertifiedStrategy>> parts;
  parts.push_back(make_compact_strategy(LinearBall{1, 1, 1}, 1));
  parts.push_back(make_compact_strategy(TrigAnalytic{3, 0.6, 2}, 1));
  EXPECT_THROW(make_universal_strategy(std::move(parts), 0.125, 1.0, EtaMode::vector), InvalidInput);
  EXPECT_THROW(make_universal_strategy({}, 0.125, 1.0, EtaMode::vector), InvalidInput);
}

TEST(AAR, Examples) {
  AARState s = aar_init(2);
  Vector x(2);
  x << 0.3, -0.7;
  EXPECT_EQ(aar_predict(s, x), 0.0);
  AARState one = aar_init(1, 1.0);
  aar_update(one, scalar(1.0), 1.0);
  // Direct solve: A = 1 + 1 + 1, b = 1.
  EXPECT_NEAR(aar_predict(one, scalar(1.0)), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(aar_predict(one, x), InvalidInput);
  EXPECT_THROW(aar_init(0), InvalidInput);
}

TEST(AAR, MatchesDirectRidgeWithCurrentSignal) {
  Rng rng(5);
  const int m = 3;
  AARState s = aar_init(m, 0.7);
  std::vector<Vector> xs;
  std::vector<double> ys;
  for (int n = 0; n < 60; ++n) {
    Vector x(m);
    for (int k = 0; k < m; ++k) x(k) = rng.uniform(-1, 1);
    Matrix A = 0.7 * Matrix::Identity(m, m) + x * x.transpose();
    Vector b = Vector::Zero(m);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      A += xs[i] * xs[i].transpose();
      b += ys[i] * xs[i];
    }
    EXPECT_NEAR(aar_predict(s, x), x.dot(A.fullPivLu().solve(b)), 1e-10);
    const double y = rng.uniform(-1, 1);
    aar_update(s, x, y);
    xs.push_back(x);
    ys.push_back(y);
  }
  EXPECT_TRUE(s.A.isApprox(s.A.transpose()));
  EXPECT_GT(s.A.llt().matrixL().toDenseMatrix().diagonal().minCoeff(), 0.0);
}

TEST(AAR, BoundHoldsForEveryTheta) {
  Rng rng(6);
  for (int m : {1, 3}) {
    for (int set = 0; set < 5; ++set) {
      const std::size_t N = 500;
      std::vector<Vector> xs;
      std::vector<double> ys;
      Vector truth(m);
      for (int k = 0; k < m; ++k) truth(k) = rng.normal() * 0.4;
      double x_inf = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        Vector x(m);
        for (int k = 0; k < m; ++k) x(k) = rng.uniform(-1, 1);
        x_inf = std::max(x_inf, x.cwiseAbs().maxCoeff());
        xs.push_back(x);
        ys.push_back(std::clamp(truth.dot(x) + 0.3 * rng.normal(), -1.0, 1.0));
      }
      AARState s = aar_init(m, 1.0);
      double loss = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        loss += std::pow(ys[n] - aar_predict(s, xs[n]), 2);
        aar_update(s, xs[n], ys[n]);
      }
      Matrix X(N, m);
      Vector Yv(N);
      for (std::size_t n = 0; n < N; ++n) {
        X.row(n) = xs[n].transpose();
        Yv(n) = ys[n];
      }
      std::vector<Vector> thetas{X.colPivHouseholderQr().solve(Yv)};
      for (int t = 0; t < 50; ++t) {
        Vector th(m);
        for (int k = 0; k < m; ++k) th(k) = rng.normal();
        thetas.push_back(th);
      }
      for (const auto& th : thetas) {
        const double lt = (Yv - X * th).squaredNorm();
        const double bound = lt + th.squaredNorm() + m * std::log(N * x_inf * x_inf + 1.0);
        EXPECT_GE(bound - loss, -1e-6);
        EXPECT_NEAR(aar_bound(lt, th, 1.0, m, 1.0, N, x_inf), bound, 1e-9);
      }
    }
  }
}

TEST(AARStrategy, CertificateValidity) {
  AARStrategy s(2, 1.0, 1.0);
  Vector x(2);
  x << 0.6, 0.8;
  s.predict(x);
  s.update(x, scalar(0.5));
  EXPECT_NO_THROW(s.certificate(linear_rule({0.5, 0.5}), 1));
  EXPECT_THROW(s.certificate(linear_rule({1.0, 1.0}), 1), InvalidInput);
  EXPECT_THROW(s.certificate(linear_rule({1.0}), 1), InvalidInput);
  Vector tp(2);
  tp << 0.5, 0.5;
  EXPECT_NEAR(s.certificate(LinearRule{tp}, 1), 0.5 + 2.0 * std::log1p(0.64), 1e-12);
}

TEST(AARStrategy, CertifiedOnLinearData) {
  Rng rng(9);
  const LinearBall spec{2, 1, 1};
  for (int rep = 0; rep < 5; ++rep) {
    const PredictionRule target = sample_class_member(spec, rng);
    const auto data = noisy_data(spec, target, 1000, 0.2, rng);
    AARStrategy s(2);
    const double regret = run_regret(s, target, data);
    EXPECT_LE(regret, s.certificate(target, 1000) + 1e-6);
  }
}
