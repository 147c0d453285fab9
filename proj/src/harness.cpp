#include "entreg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "entreg/oracles.hpp"
#include "entreg/protocol.hpp"
#include "entreg/rng.hpp"

namespace entreg {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kVerdictSlack = 1e-6;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw InvalidInput(where + ": unknown field '" + key + "'");
  }
}

ClassSpec class_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw InvalidInput("class spec: object with 'kind' expected");
  const std::string kind = j.at("kind").get<std::string>();
  ClassSpec spec;
  if (kind == "linear") {
    reject_unknown(j, {"kind", "dimension", "signal_radius", "coef_radius"}, "linear class");
    LinearBall s;
    s.dimension = j.value("dimension", s.dimension);
    s.signal_radius = j.value("signal_radius", s.signal_radius);
    s.coef_radius = j.value("coef_radius", s.coef_radius);
    spec = s;
  } else if (kind == "lipschitz") {
    reject_unknown(j, {"kind", "lo", "hi", "lipschitz", "sup_bound"}, "lipschitz class");
    LipschitzBall s;
    s.lo = j.value("lo", s.lo);
    s.hi = j.value("hi", s.hi);
    s.lipschitz = j.value("lipschitz", s.lipschitz);
    s.sup_bound = j.value("sup_bound", s.sup_bound);
    spec = s;
  } else if (kind == "trig") {
    reject_unknown(j, {"kind", "strip", "norm_radius", "observation_dim"}, "trig class");
    TrigAnalytic s;
    s.strip = j.value("strip", s.strip);
    s.norm_radius = j.value("norm_radius", s.norm_radius);
    s.observation_dim = j.value("observation_dim", s.observation_dim);
    spec = s;
  } else {
    throw InvalidInput("class spec: unknown kind '" + kind + "'");
  }
  validate(spec);
  return spec;
}

EtaMode mode_from(const std::string& s) {
  if (s == "vector") return EtaMode::vector;
  if (s == "scalar") return EtaMode::scalar;
  throw InvalidInput("eta_mode must be 'vector' or 'scalar'");
}

StrategyConfig strategy_from_json(const json& j) {
  reject_unknown(j, {"kind", "label", "class", "eta_mode", "eta", "i_max", "j_max", "backend", "a", "parts"},
                 "strategy");
  StrategyConfig s;
  s.kind = j.value("kind", s.kind);
  if (s.kind != "compact" && s.kind != "banach" && s.kind != "aar" && s.kind != "universal") {
    throw InvalidInput("strategy: unknown kind '" + s.kind + "'");
  }
  s.label = j.value("label", s.label);
  if (j.contains("class")) s.class_spec = class_from_json(j.at("class"));
  s.mode = mode_from(j.value("eta_mode", std::string("vector")));
  s.eta = j.value("eta", s.eta);
  s.i_max = j.value("i_max", s.i_max);
  s.j_max = j.value("j_max", s.j_max);
  const std::string backend = j.value("backend", std::string("implicit"));
  if (backend != "implicit" && backend != "enumerated") throw InvalidInput("backend must be implicit or enumerated");
  s.implicit_lipschitz = backend == "implicit";
  s.a = j.value("a", s.a);
  if (j.contains("parts")) {
    for (const auto& p : j.at("parts")) s.parts.push_back(strategy_from_json(p));
  }
  if (s.kind == "universal" && s.parts.empty()) throw InvalidInput("universal strategy needs parts");
  return s;
}

void check_config(const ExperimentConfig& c) {
  if (c.N_list.empty()) throw InvalidInput("config: N_list is empty");
  for (std::size_t i = 0; i < c.N_list.size(); ++i) {
    if (c.N_list[i] == 0 || (i > 0 && c.N_list[i] <= c.N_list[i - 1])) {
      throw InvalidInput("config: N_list must be positive and increasing");
    }
  }
  if (c.replicates < 1) throw InvalidInput("config: replicates must be >= 1");
  if (!(c.Y > 0.0)) throw InvalidInput("config: Y must be positive");
  if (c.noise < 0.0) throw InvalidInput("config: noise must be nonnegative");
  if (c.strategies.empty()) throw InvalidInput("config: no strategies");
  validate(c.target_class);
  const std::string kind = kind_name(c.target_class);
  if (c.generator == "adversarial_switching") {
    if (c.switch_period == 0) throw InvalidInput("config: switch_period must be positive");
    return;
  }
  const auto sep = c.generator.find('_');
  const std::string family = c.generator.substr(0, sep);
  if (sep == std::string::npos || (family != "realizable" && family != "noisy")) {
    throw InvalidInput("config: unknown generator '" + c.generator + "'");
  }
  if (c.generator.substr(sep + 1) != kind) {
    throw InvalidInput("config: generator '" + c.generator + "' does not match the " + kind + " target class");
  }
  if (family == "realizable" && c.noise != 0.0) throw InvalidInput("config: realizable generators are noiseless");
}

std::string csv_real(double v) { return std::isnan(v) ? std::string("nan") : format_real(v); }

std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

template <class Writer>
void write_file(const std::filesystem::path& path, Writer writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  writer(out);
}

void collect_nets(const CertifiedStrategy& s, const std::string& label, std::vector<NetRow>& rows) {
  if (const auto* c = dynamic_cast<const CompactStrategy*>(&s)) {
    for (int i = 1; i <= c->i_max(); ++i) {
      const bool chain = dynamic_cast<const LipschitzChainPool*>(&c->pool(i)) != nullptr;
      rows.push_back({label, i, std::ldexp(1.0, -i), c->level_log2_count(i), chain ? "chain" : "enumerated"});
    }
  } else if (const auto* m = dynamic_cast<const MixtureOfStrategies*>(&s)) {
    for (std::size_t j = 0; j < m->part_count(); ++j) {
      collect_nets(m->part(j), label + "/" + std::to_string(j + 1), rows);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

ClassSpec parse_class_spec(const std::string& json_text) { return class_from_json(json::parse(json_text)); }

ExperimentConfig parse_config(const std::string& json_text) {
  const json j = json::parse(json_text);
  reject_unknown(j,
                 {"name", "seed", "generator", "noise", "switch_period", "target_class", "strategies", "N_list",
                  "replicates", "Y", "cap", "fit_from", "output_dir", "write_rounds"},
                 "config");
  ExperimentConfig c;
  c.name = j.value("name", c.name);
  c.seed = j.value("seed", c.seed);
  c.generator = j.value("generator", c.generator);
  c.noise = j.value("noise", c.noise);
  c.switch_period = j.value("switch_period", c.switch_period);
  if (!j.contains("target_class")) throw InvalidInput("config: target_class is required");
  c.target_class = class_from_json(j.at("target_class"));
  if (!j.contains("strategies")) throw InvalidInput("config: strategies is required");
  for (const auto& s : j.at("strategies")) c.strategies.push_back(strategy_from_json(s));
  if (j.contains("N_list")) c.N_list = j.at("N_list").get<std::vector<std::size_t>>();
  c.replicates = j.value("replicates", c.replicates);
  c.Y = j.value("Y", c.Y);
  c.cap = j.value("cap", c.cap);
  c.fit_from = j.value("fit_from", c.fit_from);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.write_rounds = j.value("write_rounds", c.write_rounds);
  check_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

// ---------------------------------------------------------------------------
// Data and strategies
// ---------------------------------------------------------------------------

GeneratedSequence generate_sequence(const ExperimentConfig& config, std::size_t N, int replicate) {
  check_config(config);
  const Rng root = Rng(config.seed).split(static_cast<std::uint64_t>(replicate));
  Rng target_rng = root.split(1);
  Rng data_rng = root.split(2);
  GeneratedSequence seq;
  const bool switching = config.generator == "adversarial_switching";
  seq.targets.push_back(sample_class_member(config.target_class, target_rng));
  if (switching) seq.targets.push_back(sample_class_member(config.target_class, target_rng));
  const int d = observation_dim(config.target_class);
  seq.data.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    const PredictionRule& target = seq.targets[switching ? (n / config.switch_period) % 2 : 0];
    Signal x = sample_signal(config.target_class, data_rng);
    Observation y = evaluate(target, x);
    if (config.noise > 0.0) {
      for (int k = 0; k < d; ++k) y(k) += config.noise * data_rng.normal();
    }
    seq.data.push_back(Example{std::move(x), clip(y, config.Y)});
  }
  return seq;
}

std::unique_ptr<CertifiedStrategy> make_strategy(const StrategyConfig& s, const ExperimentConfig& config) {
  const ClassSpec spec = s.class_spec.value_or(config.target_class);
  const std::size_t horizon = config.N_list.back();
  CompactOptions options{s.mode, s.eta, config.Y, config.cap, s.implicit_lipschitz};
  if (s.kind == "compact") {
    const int i_max = s.i_max > 0 ? s.i_max : auto_i_max(spec, horizon, options);
    return make_compact_strategy(spec, i_max, options);
  }
  if (s.kind == "banach") {
    return make_banach_strategy(spec, BanachOptions{options, s.j_max, s.i_max, horizon});
  }
  if (s.kind == "aar") {
    if (!std::holds_alternative<LinearBall>(spec)) throw InvalidInput("aar strategy needs a linear class");
    return std::make_unique<AARStrategy>(signal_dim(spec), s.a, config.Y);
  }
  std::vector<std::unique_ptr<CertifiedStrategy>> parts;
  for (const auto& p : s.parts) parts.push_back(make_strategy(p, config));
  const double eta = s.eta > 0.0 ? s.eta : eta_cap(s.mode, config.Y);
  return make_universal_strategy(std::move(parts), eta, config.Y, s.mode);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

ExperimentReport run_experiment(const ExperimentConfig& config) {
  check_config(config);
  ExperimentReport report;
  report.name = config.name;
  const std::size_t horizon = config.N_list.back();
  const bool switching = config.generator == "adversarial_switching";
  std::vector<std::string> labels;
  std::vector<RoundRecord> first_rounds;

  for (int r = 0; r < config.replicates; ++r) {
    const GeneratedSequence seq = generate_sequence(config, horizon, r);
    // Cumulative loss of each clipped target.
    std::vector<std::vector<double>> target_cum(seq.targets.size(), std::vector<double>(horizon + 1, 0.0));
    for (std::size_t t = 0; t < seq.targets.size(); ++t) {
      for (std::size_t n = 0; n < horizon; ++n) {
        const Prediction f = clip(evaluate(seq.targets[t], seq.data[n].x), config.Y);
        target_cum[t][n + 1] = target_cum[t][n] + quadratic_loss(seq.data[n].y, f);
      }
    }
    for (std::size_t si = 0; si < config.strategies.size(); ++si) {
      auto strategy = make_strategy(config.strategies[si], config);
      const std::string label =
          config.strategies[si].label.empty() ? strategy->name() : config.strategies[si].label;
      if (r == 0) {
        labels.push_back(label);
        collect_nets(*strategy, label, report.nets);
      }
      double cum = 0.0;
      std::size_t next_checkpoint = 0;
      for (std::size_t n = 0; n < horizon; ++n) {
        const Example& ex = seq.data[n];
        check_observation(ex.y, config.Y, n + 1);
        Prediction mu = strategy->predict(ex.x);
        const double loss = quadratic_loss(ex.y, mu);
        strategy->update(ex.x, ex.y);
        if (!(loss >= 0.0) || !std::isfinite(loss)) report.monotone_losses = false;
        cum += loss;
        if (config.write_rounds && r == 0 && si == 0) first_rounds.push_back({n + 1, ex.x, std::move(mu), ex.y, loss});
        if (n + 1 != config.N_list[next_checkpoint]) continue;
        const std::size_t N = n + 1;
        for (std::size_t t = 0; t < seq.targets.size(); ++t) {
          RegretRow row;
          row.strategy = switching ? label + "@target" + std::to_string(t + 1) : label;
          row.N = N;
          row.replicate = r;
          row.regret = cum - target_cum[t][N];
          try {
            row.certificate = strategy->certificate(seq.targets[t], N);
            row.verdict = row.regret > row.certificate + kVerdictSlack ? "VIOLATION" : "CERTIFIED";
          } catch (const InvalidInput&) {
            row.certificate = kNaN;
            row.verdict = "UNCERTIFIED";
          }
          if (row.verdict == "VIOLATION") report.any_violation = true;
          report.regret.push_back(row);
        }
        ++next_checkpoint;
      }
    }
  }
  std::stable_sort(report.regret.begin(), report.regret.end(), [](const RegretRow& a, const RegretRow& b) {
    if (a.strategy != b.strategy) return a.strategy < b.strategy;
    if (a.N != b.N) return a.N < b.N;
    return a.replicate < b.replicate;
  });

  // Exponent fits of the mean regret over replicates.
  std::map<std::string, std::map<std::size_t, std::pair<double, int>>> sums;
  for (const auto& row : report.regret) {
    auto& cell = sums[row.strategy][row.N];
    cell.first += row.regret;
    cell.second += 1;
  }
  for (const auto& [name, by_n] : sums) {
    FitRow fit;
    fit.strategy = name;
    for (const auto& [N, cell] : by_n) {
      if (N < config.fit_from) continue;
      fit.N.push_back(static_cast<double>(N));
      fit.mean_regret.push_back(cell.first / cell.second);
    }
    const PowerFit p = fit_power_law(fit.N, fit.mean_regret);
    const PowerFit q = fit_polylog(fit.N, fit.mean_regret);
    fit.exponent = p.exponent;
    fit.r2 = p.r2;
    fit.polylog_exponent = q.exponent;
    fit.polylog_r2 = q.r2;
    report.fits.push_back(fit);
  }

  if (!config.output_dir.empty()) {
    const auto dir = prepare_dir(config.output_dir);
    write_file(dir / "regret.csv", [&](std::ostream& o) { write_regret_csv(o, report.regret); });
    write_file(dir / "fits.csv", [&](std::ostream& o) { write_fits_csv(o, report.fits); });
    write_file(dir / "nets.csv", [&](std::ostream& o) { write_nets_csv(o, report.nets); });
    if (config.write_rounds) write_file(dir / "rounds.csv", [&](std::ostream& o) { write_rounds_csv(o, first_rounds); });
  }
  return report;
}

DominationReport domination_experiment(const ExperimentConfig& config, const StrategyConfig& candidate,
                                       const StrategyConfig& matched) {
  ExperimentConfig cfg = config;
  StrategyConfig c = candidate, m = matched;
  c.label = "candidate";
  m.label = "matched";
  cfg.strategies = {c, m};
  const ExperimentReport r = run_experiment(cfg);
  DominationReport out;
  out.strategy = candidate.label.empty() ? make_strategy(candidate, config)->name() : candidate.label;
  out.matched = matched.label.empty() ? make_strategy(matched, config)->name() : matched.label;
  out.monotone_losses = r.monotone_losses;
  const FitRow* fc = nullptr;
  const FitRow* fm = nullptr;
  for (const auto& f : r.fits) (f.strategy == "candidate" ? fc : fm) = &f;
  std::map<std::size_t, std::pair<double, double>> means;
  for (const auto& row : r.regret) {
    (row.strategy == "candidate" ? means[row.N].first : means[row.N].second) += row.regret / cfg.replicates;
  }
  for (const auto& [N, mv] : means) {
    DominationRow row{N, mv.first, mv.second, mv.first / mv.second};
    if (!std::isfinite(row.mean_regret) || !std::isfinite(row.matched_mean_regret)) out.finite = false;
    out.rows.push_back(row);
  }
  if (fc) out.exponent = fc->exponent;
  if (fm) out.matched_exponent = fm->exponent;
  if (!config.output_dir.empty()) {
    const auto dir = prepare_dir(config.output_dir);
    write_file(dir / "regret.csv", [&](std::ostream& o) { write_regret_csv(o, r.regret); });
    write_file(dir / "fits.csv", [&](std::ostream& o) { write_fits_csv(o, r.fits); });
    write_file(dir / "domination.csv", [&](std::ostream& o) { write_domination_csv(o, out); });
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_regret_csv(std::ostream& out, const std::vector<RegretRow>& rows) {
  out << "strategy,N,replicate,regret,certificate,verdict\n";
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.N << ',' << r.replicate << ',' << csv_real(r.regret) << ','
        << csv_real(r.certificate) << ',' << r.verdict << '\n';
  }
}

void write_fits_csv(std::ostream& out, const std::vector<FitRow>& rows) {
  out << "strategy,exponent,r2,polylog_exponent,polylog_r2\n";
  for (const auto& r : rows) {
    out << r.strategy << ',' << csv_real(r.exponent) << ',' << csv_real(r.r2) << ',' << csv_real(r.polylog_exponent)
        << ',' << csv_real(r.polylog_r2) << '\n';
  }
}

void write_nets_csv(std::ostream& out, const std::vector<NetRow>& rows) {
  out << "strategy,level,epsilon,log2_count,representation\n";
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.level << ',' << csv_real(r.epsilon) << ',' << csv_real(r.log2_count) << ','
        << r.representation << '\n';
  }
}

void write_domination_csv(std::ostream& out, const DominationReport& report) {
  out << "strategy,matched,N,mean_regret,matched_mean_regret,ratio\n";
  for (const auto& r : report.rows) {
    out << report.strategy << ',' << report.matched << ',' << r.N << ',' << csv_real(r.mean_regret) << ','
        << csv_real(r.matched_mean_regret) << ',' << csv_real(r.ratio) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> dyadic(int from, int to) {
  std::vector<std::size_t> out;
  for (int k = from; k <= to; ++k) out.push_back(std::size_t{1} << k);
  return out;
}

int scaled_count(int n, double scale) { return std::max(1, static_cast<int>(std::lround(n * scale))); }

// Shortens horizons by dropping the largest ones; keeps at least two.
std::vector<std::size_t> scaled_horizons(std::vector<std::size_t> N, double scale) {
  while (N.size() > 2 && scale < 1.0) {
    N.pop_back();
    scale *= 2.0;
  }
  return N;
}

StrategyConfig compact(EtaMode mode) {
  StrategyConfig s;
  s.kind = "compact";
  s.mode = mode;
  return s;
}

}  // namespace

std::vector<ExperimentConfig> verify_presets(std::uint64_t seed, double scale) {
  std::vector<ExperimentConfig> out;
  const auto horizons = scaled_horizons(dyadic(8, 12), scale);
  const int reps = scaled_count(3, scale);
  auto base = [&](std::string name, ClassSpec spec, std::string generator, double noise) {
    ExperimentConfig c;
    c.name = std::move(name);
    c.seed = seed;
    c.target_class = spec;
    c.generator = std::move(generator);
    c.noise = noise;
    c.N_list = horizons;
    c.replicates = reps;
    return c;
  };
  for (int m : {1, 2}) {
    ExperimentConfig c = base("linear_m" + std::to_string(m), LinearBall{m, 1.0, 1.0}, "noisy_linear", 0.1);
    c.strategies = {compact(EtaMode::scalar)};
    StrategyConfig aar;
    aar.kind = "aar";
    c.strategies.push_back(aar);
    if (m == 1) {
      StrategyConfig banach = compact(EtaMode::scalar);
      banach.kind = "banach";
      banach.j_max = 2;
      c.strategies.push_back(banach);
    }
    out.push_back(c);
  }
  for (double lip : {1.0, 2.0}) {
    ExperimentConfig c =
        base("lipschitz_c" + format_real(lip), LipschitzBall{0.0, 1.0, lip, 1.0}, "noisy_lipschitz", 0.1);
    c.strategies = {compact(EtaMode::scalar)};
    out.push_back(c);
  }
  for (double h : {0.5, 1.0}) {
    ExperimentConfig c =
        base("trig_h" + format_real(h), TrigAnalytic{h, kPresetTrigRadius, 1}, "noisy_trig", 0.1);
    c.strategies = {compact(EtaMode::scalar)};
    out.push_back(c);
  }
  {
    ExperimentConfig c = base("trig_complex_h1", TrigAnalytic{1.0, kPresetTrigRadius, 2}, "noisy_trig", 0.1);
    c.strategies = {compact(EtaMode::vector)};
    out.push_back(c);
  }
  {
    ExperimentConfig c = base("lipschitz_switching", LipschitzBall{0.0, 1.0, 1.0, 1.0}, "adversarial_switching", 0.0);
    c.switch_period = 128;
    c.strategies = {compact(EtaMode::scalar)};
    out.push_back(c);
  }
  return out;
}

std::vector<ExperimentConfig> bench_presets(std::uint64_t seed, double scale) {
  std::vector<ExperimentConfig> out;
  const auto horizons = scaled_horizons(dyadic(8, 14), scale);
  const int reps = scaled_count(10, scale);
  auto base = [&](std::string name, ClassSpec spec, std::string generator, double noise) {
    ExperimentConfig c;
    c.name = std::move(name);
    c.seed = seed;
    c.target_class = spec;
    c.generator = std::move(generator);
    c.noise = noise;
    c.N_list = horizons;
    c.replicates = reps;
    c.strategies = {compact(EtaMode::scalar)};
    return c;
  };
  out.push_back(base("lipschitz", LipschitzBall{0.0, 1.0, 1.0, 1.0}, "noisy_lipschitz", 0.1));
  out.push_back(base("linear", LinearBall{1, 1.0, 1.0}, "noisy_linear", 0.1));
  out.push_back(base("trig", TrigAnalytic{1.0, kPresetTrigRadius, 1}, "noisy_trig", 0.1));
  return out;
}

std::vector<DominationPreset> domination_presets(std::uint64_t seed, double scale) {
  std::vector<DominationPreset> out;
  const auto horizons = scaled_horizons(dyadic(8, 12), scale);
  const int reps = scaled_count(2, scale);
  auto config = [&](std::string name, ClassSpec target) {
    ExperimentConfig c;
    c.name = std::move(name);
    c.seed = seed;
    c.target_class = target;
    c.generator = "noisy_" + kind_name(target);
    c.noise = 0.1;
    c.N_list = horizons;
    c.replicates = reps;
    return c;
  };
  auto on = [](ClassSpec spec) {
    StrategyConfig s = compact(EtaMode::scalar);
    s.class_spec = spec;
    return s;
  };
  const TrigAnalytic wide{0.5, kPresetTrigRadius, 1}, narrow{1.0, kPresetTrigRadius, 1};
  out.push_back({config("trig_h0.5_vs_h1", narrow), on(wide), on(narrow)});
  const LipschitzBall periodic_domain{0.0, 2.0 * std::numbers::pi, 0.1, kPresetTrigRadius};
  out.push_back({config("trig_vs_lipschitz", periodic_domain), on(narrow), on(periodic_domain)});
  return out;
}

}  // namespace entreg
