#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mubsde/experiment.hpp"

namespace {

// exit codes: 0 all checks pass, 1 at least one check fails,
// 2 config problem, 3 module fault
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFault = 3;

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Simulates jump-driven forward models, solves the associated backward "
      "equation by regression, and runs numerical identification checks."};

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t paths = 0;
  std::string out_dir;
  std::string check_list;
  bool validate_only = false;

  app.add_option("--config", config_path, "JSON experiment config")->required();
  auto* seed_opt = app.add_option("--seed", seed, "override run.seed");
  auto* paths_opt = app.add_option("--paths", paths, "override run.paths");
  auto* out_opt = app.add_option("--out", out_dir, "override output.directory");
  auto* check_opt =
      app.add_option("--check", check_list, "comma-separated list of checks to run");
  app.add_flag("--validate-only", validate_only, "parse and validate, then exit");

  CLI11_PARSE(app, argc, argv);

  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot read config '" << config_path << "'\n";
    return kExitConfig;
  }
  std::stringstream buf;
  buf << in.rdbuf();

  mubsde::ParseResult parsed = mubsde::parse_config(buf.str());
  if (!parsed.ok()) {
    for (const std::string& e : parsed.errors) std::cerr << "config error: " << e << "\n";
    return kExitConfig;
  }
  mubsde::ExperimentConfig cfg = parsed.config;

  if (seed_opt->count() > 0) cfg.seed = seed;
  if (paths_opt->count() > 0) {
    if (paths < 2) {
      std::cerr << "config error: --paths must be at least 2\n";
      return kExitConfig;
    }
    cfg.paths = paths;
  }
  if (out_opt->count() > 0) cfg.out_dir = out_dir;
  if (check_opt->count() > 0) {
    cfg.checks = split_csv(check_list);
    if (cfg.checks.empty()) {
      std::cerr << "config error: --check names no checks\n";
      return kExitConfig;
    }
    for (const std::string& c : cfg.checks) {
      bool known = false;
      for (const std::string& k : mubsde::known_checks()) known = known || k == c;
      if (!known) {
        std::cerr << "config error: unknown check '" << c << "'\n";
        return kExitConfig;
      }
    }
  }

  if (validate_only) {
    std::cout << "config ok\n";
    return 0;
  }

  const mubsde::ExperimentResult res = mubsde::run_experiment(cfg);
  if (!res.config_errors.empty()) {
    for (const std::string& e : res.config_errors)
      std::cerr << "config error: " << e << "\n";
    return kExitConfig;
  }

  for (const mubsde::CheckRow& r : res.rows)
    std::cout << r.check << '.' << r.statistic << ": " << (r.pass ? "PASS" : "FAIL")
              << " (" << r.value << ' ' << r.comparator << ' ' << r.threshold << ")\n";
  if (!res.fault_category.empty()) {
    std::cout << "fault: " << res.fault_category << ": " << res.fault_message << "\n";
    std::cout << "overall: FAIL\n";
    return kExitFault;
  }
  std::cout << "overall: " << (res.all_pass ? "PASS" : "FAIL") << "\n";
  return res.all_pass ? 0 : kExitFail;
}
