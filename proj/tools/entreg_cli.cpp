// Command-line front end: run / verify / bench / nets.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "entreg/harness.hpp"
#include "entreg/oracles.hpp"
#include "entreg/protocol.hpp"

namespace {

using namespace entreg;

std::string read_spec(const std::string& arg) {
  if (std::filesystem::is_regular_file(arg)) {
    std::ifstream in(arg);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
  }
  return arg;
}

void print_report(const ExperimentReport& r) {
  std::size_t certified = 0, violations = 0, uncertified = 0;
  for (const auto& row : r.regret) {
    if (row.verdict == "CERTIFIED") ++certified;
    if (row.verdict == "VIOLATION") ++violations;
    if (row.verdict == "UNCERTIFIED") ++uncertified;
  }
  std::cout << r.name << ": " << certified << " certified, " << violations << " violations, " << uncertified
            << " uncertified\n";
  for (const auto& f : r.fits) {
    std::cout << "  " << f.strategy << "  exponent " << format_real(f.exponent) << "  r2 " << format_real(f.r2)
              << "  polylog " << format_real(f.polylog_exponent) << '\n';
  }
}

int run_suite(std::vector<ExperimentConfig> presets, const std::string& out_dir) {
  bool violation = false;
  for (auto& c : presets) {
    if (!out_dir.empty()) c.output_dir = (std::filesystem::path(out_dir) / c.name).string();
    const ExperimentReport r = run_experiment(c);
    print_report(r);
    violation = violation || r.any_violation;
  }
  return violation ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metric-entropy on-line regression toolkit"};
  app.require_subcommand(1);

  std::string config_path, run_out;
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--output-dir", run_out, "Override the config's output_dir");

  std::uint64_t seed = 1;
  double scale = 1.0;
  std::string suite_out;
  auto* verify = app.add_subcommand("verify", "Certificate suite: every preset must be free of violations");
  verify->add_option("--seed", seed, "Seed for all presets");
  verify->add_option("--scale", scale, "Shrink horizons and replicates (0 < scale <= 1)")->check(CLI::Range(1e-3, 1.0));
  verify->add_option("--output-dir", suite_out, "Directory for per-preset CSVs");

  bool domination = false;
  auto* bench = app.add_subcommand("bench", "Growth-shape suite: fitted regret exponents");
  bench->add_option("--seed", seed, "Seed for all presets");
  bench->add_option("--scale", scale, "Shrink horizons and replicates (0 < scale <= 1)")->check(CLI::Range(1e-3, 1.0));
  bench->add_option("--output-dir", suite_out, "Directory for per-preset CSVs");
  bench->add_flag("--domination", domination, "Also run the cross-class presets");

  std::string spec_arg, nets_out;
  double epsilon = 0.0, cap = kDefaultExpertCap;
  int levels = 0, check_members = 0;
  auto* nets = app.add_subcommand("nets", "Dump the experts of a net as CSV");
  nets->add_option("spec", spec_arg, "Class spec: JSON file or inline JSON")->required();
  auto* eps_opt = nets->add_option("--epsilon", epsilon, "Covering radius of a single net");
  auto* lvl_opt = nets->add_option("--levels", levels, "Dyadic levels 1..i_max");
  eps_opt->excludes(lvl_opt);
  nets->add_option("--cap", cap, "Expert cap");
  nets->add_option("--check", check_members, "Run the covering oracle with this many random members");
  nets->add_option("--output", nets_out, "CSV file (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ExperimentConfig c = load_config(config_path);
      if (!run_out.empty()) c.output_dir = run_out;
      const ExperimentReport r = run_experiment(c);
      print_report(r);
      return r.any_violation ? 1 : 0;
    }
    if (*verify) return run_suite(verify_presets(seed, scale), suite_out);
    if (*bench) {
      int code = run_suite(bench_presets(seed, scale), suite_out);
      if (domination) {
        for (auto& p : domination_presets(seed, scale)) {
          if (!suite_out.empty()) p.config.output_dir = (std::filesystem::path(suite_out) / p.config.name).string();
          const DominationReport d = domination_experiment(p.config, p.candidate, p.matched);
          std::cout << p.config.name << ": " << d.strategy << " vs " << d.matched << "  exponent "
                    << format_real(d.exponent) << " vs " << format_real(d.matched_exponent) << '\n';
          for (const auto& row : d.rows) {
            std::cout << "  N=" << row.N << "  ratio " << format_real(row.ratio) << '\n';
          }
        }
      }
      return code;
    }
    if (*nets) {
      const ClassSpec spec = parse_class_spec(read_spec(spec_arg));
      std::vector<NetLevel> family;
      if (levels > 0) {
        family = dyadic_net_family(spec, levels, cap);
      } else {
        if (!(epsilon > 0.0)) throw InvalidInput("nets: give --epsilon or --levels");
        family.push_back(build_net(spec, epsilon, cap));
      }
      std::ofstream file;
      if (!nets_out.empty()) file.open(nets_out, std::ios::binary);
      std::ostream& out = nets_out.empty() ? std::cout : file;
      for (std::size_t i = 0; i < family.size(); ++i) write_net_csv(out, family[i], i == 0);
      if (check_members > 0) {
        Rng rng(seed);
        for (const auto& net : family) {
          const CoveringReport r = covering_check(net, check_members, 512, rng);
          std::cerr << "epsilon " << format_real(net.epsilon) << ": " << net.size() << " experts, worst distance "
                    << format_real(r.worst_distance) << " (allowed " << format_real(r.allowed) << ") "
                    << (r.pass ? "PASS" : "FAIL") << '\n';
        }
      }
      return 0;
    }
  } catch (const NetTooLarge& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
