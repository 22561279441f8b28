#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "uavisac/verify.hpp"

#ifndef UAVISAC_VERSION
#define UAVISAC_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace uavisac::cli {
namespace {

constexpr double kFailureThreshold = 0.05;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string policy;
  std::optional<int> epochs;
  std::optional<int> mc_runs;
  int threads = 0;
  std::string out = "out";
};

json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Map: {
      json j = json::object();
      for (const auto& kv : n) j[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return j;
    }
    case YAML::NodeType::Sequence: {
      json j = json::array();
      for (const auto& v : n) j.push_back(yaml_to_json(v));
      return j;
    }
    case YAML::NodeType::Scalar: {
      const std::string s = n.Scalar();
      long long i;
      double d;
      bool b;
      if (YAML::convert<long long>::decode(n, i) && std::to_string(i) == s) return i;
      if (YAML::convert<double>::decode(n, d)) return d;
      if (YAML::convert<bool>::decode(n, b)) return b;
      return s;
    }
    default:
      return nullptr;
  }
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    os << content;
    if (!os.flush()) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

RunSettings resolve(const Overrides& o) {
  RunSettings s = o.config.empty() ? RunSettings{} : load_settings(o.config);
  if (o.seed) s.scenario.seed = *o.seed;
  if (o.epochs) s.scenario.n_epochs = *o.epochs;
  if (o.mc_runs) s.scenario.mc_runs = *o.mc_runs;
  if (!o.policy.empty()) {
    (void)selected_policies(o.policy);
    s.policy = o.policy;
  }
  s.scenario.validate();
  return s;
}

int thread_count(int requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

int execute(RunSettings s, const Overrides& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const int threads = thread_count(o.threads);
  fs::create_directories(o.out);

  json failures = json::object();
  int exit_code = 0;
  for (Policy p : selected_policies(s.policy)) {
    ScenarioConfig cfg = s.scenario;
    cfg.policy = p;
    const std::string name = to_string(p);
    std::cerr << "running " << name << ": " << cfg.mc_runs << " episodes x " << cfg.n_epochs << " epochs on "
              << threads << " threads\n";
    try {
      const MonteCarloResult r = monte_carlo(cfg, threads);
      std::ostringstream metrics, traj;
      write_metrics_csv(metrics, r);
      write_trajectory_csv(traj, r.first);
      write_atomic(fs::path(o.out) / (name + "_metrics.csv"), metrics.str());
      write_atomic(fs::path(o.out) / (name + "_trajectory.csv"), traj.str());
      failures[name] = {{"episodes", r.runs}, {"failed", r.failures}, {"fallbacks", r.fallbacks},
                        {"reasons", r.failure_reasons}};
      const double rate = static_cast<double>(r.failures) / r.runs;
      std::cerr << "  " << name << ": " << r.failures << " failed, final logdet " << r.logdet.back()
                << ", final position rmse " << r.rmse_pos.back() << " m\n";
      if (rate > kFailureThreshold) {
        std::cerr << "  " << name << ": failure rate " << rate << " above " << kFailureThreshold << "\n";
        exit_code = 2;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::AllEpisodesFailed) throw;
      std::cerr << "  " << name << ": " << e.what() << "\n";
      failures[name] = {{"episodes", cfg.mc_runs}, {"failed", cfg.mc_runs}, {"reasons", {e.what()}}};
      exit_code = 2;
    }
  }

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest = {{"version", UAVISAC_VERSION},
                   {"seed", s.scenario.seed},
                   {"threads", threads},
                   {"wall_clock_seconds", seconds},
                   {"failures", failures},
                   {"config", yaml_to_json(to_yaml(s))}};
  write_atomic(fs::path(o.out) / "manifest.json", manifest.dump(2) + "\n");
  return exit_code;
}

int cmd_check(const std::string& level, bool corrupt, int threads) {
  using namespace verify;
  if (level != "fast" && level != "full") throw Error(ErrorKind::Config, "unknown check level '" + level + "'");
  std::vector<Outcome> rows;
  auto add = [&](Outcome o) {
    std::cout << (o.passed ? "PASS " : "FAIL ") << o.name << " (" << o.seconds << " s): " << o.detail << std::endl;
    rows.push_back(std::move(o));
  };
  add(jacobian_battery(200, 11, 1e-4, corrupt));
  add(lie_battery(1000, 12));
  add(identity_battery(100, 13));
  if (level == "full") {
    add(sdr_battery(20, 14));
    add(cpcrb_battery(100, 15, ScenarioConfig{}));
    ScenarioConfig cfg;
    cfg.policy = Policy::Parallel;
    add(nees_battery(cfg, 100, thread_count(threads)));
  }
  int failed = 0;
  for (const auto& o : rows) failed += o.passed ? 0 : 1;
  std::cout << rows.size() - failed << "/" << rows.size() << " batteries passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace
}  // namespace uavisac::cli

int main(int argc, char** argv) {
  using namespace uavisac::cli;
  CLI::App app{"UAV ISAC target tracking on SE(3)"};
  app.set_version_flag("--version", std::string(UAVISAC_VERSION));
  app.require_subcommand(1);

  Overrides o;
  auto add_common = [&](CLI::App* sub, bool with_policy) {
    auto* config = sub->add_option("--config", o.config, "YAML scenario file");
    if (with_policy) config->required();
    sub->add_option("--seed", o.seed, "master seed");
    if (with_policy) {
      sub->add_option("--policy", o.policy, "optimized|parallel|diagonal|all")
          ->check(CLI::IsMember({"optimized", "parallel", "diagonal", "all"}));
    }
    sub->add_option("--epochs", o.epochs, "epochs per episode");
    sub->add_option("--mc-runs", o.mc_runs, "Monte-Carlo episodes per policy");
    sub->add_option("--threads", o.threads, "worker threads (default: logical cores)");
    sub->add_option("--out", o.out, "output directory");
  };

  CLI::App* run = app.add_subcommand("run", "Monte-Carlo runs for the selected policies");
  add_common(run, true);
  CLI::App* fig1 = app.add_subcommand("fig1", "trajectory and RMSE/CPCRB files for all three policies");
  add_common(fig1, false);

  CLI::App* check = app.add_subcommand("check", "verification batteries");
  std::string level;
  bool corrupt = false;
  check->add_option("--level", level, "fast|full (default fast)");
  check->add_option("--threads", o.threads, "worker threads for the NEES battery");
  check->add_flag("--corrupt-jacobian", corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*check) return cmd_check(level.empty() ? "fast" : level, corrupt, o.threads);
    RunSettings s = resolve(o);
    if (*fig1) s.policy = "all";
    return execute(std::move(s), o);
  } catch (const uavisac::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == uavisac::ErrorKind::Config ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
