#include "mubsde/config.hpp"

#include "mubsde/bsde.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>
#include <utility>

namespace mubsde {

using nlohmann::json;

namespace {

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed,
                 std::vector<std::string>& errs) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) errs.push_back("unknown key '" + where + it.key() + "'");
  }
}

bool take_number(const json& obj, const char* key, const std::string& where,
                 std::vector<std::string>& errs, double& out, bool required,
                 double fallback = 0.0) {
  if (!obj.contains(key)) {
    if (required) errs.push_back("missing '" + where + key + "'");
    out = fallback;
    return !required;
  }
  const json& v = obj.at(key);
  if (!v.is_number()) {
    errs.push_back("'" + where + key + "' must be a number");
    out = fallback;
    return false;
  }
  out = v.get<double>();
  return true;
}

bool take_count(const json& obj, const char* key, const std::string& where,
                std::vector<std::string>& errs, std::uint64_t& out,
                bool required, std::uint64_t fallback = 0) {
  if (!obj.contains(key)) {
    if (required) errs.push_back("missing '" + where + key + "'");
    out = fallback;
    return !required;
  }
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    errs.push_back("'" + where + key + "' must be a non-negative integer");
    out = fallback;
    return false;
  }
  out = v.get<std::uint64_t>();
  return true;
}

MarkKernel parse_kernel(const json& k, const std::string& where,
                        std::vector<std::string>& errs, bool& ok) {
  ok = false;
  if (!k.is_object()) {
    errs.push_back("'" + where + "' must be an object");
    return MarkKernel::point(1.0);
  }
  expect_keys(k, where + ".", {"type", "mark", "atoms"}, errs);
  const std::string type = k.value("type", "");
  if (type == "point") {
    double mark = 0.0;
    if (!take_number(k, "mark", where + ".", errs, mark, true)) return MarkKernel::point(1.0);
    ok = true;
    return MarkKernel::point(mark);
  }
  if (type == "discrete") {
    if (!k.contains("atoms") || !k.at("atoms").is_array() || k.at("atoms").empty()) {
      errs.push_back("'" + where + ".atoms' must be a non-empty array of [mark, weight]");
      return MarkKernel::point(1.0);
    }
    std::vector<std::pair<double, double>> atoms;
    for (const json& a : k.at("atoms")) {
      if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
        errs.push_back("'" + where + ".atoms' entries must be [mark, weight] pairs");
        return MarkKernel::point(1.0);
      }
      atoms.emplace_back(a[0].get<double>(), a[1].get<double>());
    }
    try {
      MarkKernel kern = MarkKernel::discrete(std::move(atoms));
      ok = true;
      return kern;
    } catch (const std::exception& e) {
      errs.push_back("'" + where + "': " + e.what());
      return MarkKernel::point(1.0);
    }
  }
  errs.push_back("'" + where + ".type' must be 'point' or 'discrete'");
  return MarkKernel::point(1.0);
}

void parse_pdmp(const json& m, ExperimentConfig& cfg, std::vector<std::string>& errs) {
  expect_keys(m, "model.pdmp.", {"x0", "lambda", "lambda_max", "h", "kernel"}, errs);
  PdmpModel p;
  p.name = "custom-pdmp";
  double x0 = 0.5, lam = 0.0, lam_max = 0.0;
  take_number(m, "x0", "model.pdmp.", errs, x0, true);
  take_number(m, "lambda", "model.pdmp.", errs, lam, false, 0.0);
  take_number(m, "lambda_max", "model.pdmp.", errs, lam_max, false, lam);
  if (x0 < 0.0 || x0 > 1.0) errs.push_back("'model.pdmp.x0' must lie in [0, 1]");
  if (lam < 0.0) errs.push_back("'model.pdmp.lambda' must be non-negative");
  if (lam_max < lam)
    errs.push_back("'model.pdmp.lambda_max' must dominate 'model.pdmp.lambda'");
  double hc = 0.0, hl = 0.0;
  if (!m.contains("h") || !m.at("h").is_object()) {
    errs.push_back("missing 'model.pdmp.h' (object with 'constant' and 'linear')");
  } else {
    expect_keys(m.at("h"), "model.pdmp.h.", {"constant", "linear"}, errs);
    take_number(m.at("h"), "constant", "model.pdmp.h.", errs, hc, false, 0.0);
    take_number(m.at("h"), "linear", "model.pdmp.h.", errs, hl, false, 0.0);
  }
  bool kok = false;
  MarkKernel kern = m.contains("kernel")
                        ? parse_kernel(m.at("kernel"), "model.pdmp.kernel", errs, kok)
                        : (errs.push_back("missing 'model.pdmp.kernel'"),
                           MarkKernel::point(1.0));
  // The kernel marks name post-jump states, not displacements: the
  // piecewise deterministic state lives in the unit interval and every jump
  // (including a boundary hit) must land strictly inside, which a fixed
  // displacement cannot guarantee from all reachable states.
  std::vector<std::pair<double, double>> posts;
  if (kok) {
    posts = kern.atoms();
    for (const auto& a : posts)
      if (!(a.first > 0.0 && a.first < 1.0)) {
        errs.push_back(
            "'model.pdmp.kernel' marks are post-jump states and must lie "
            "strictly inside (0, 1)");
        break;
      }
  }
  p.x0 = x0;
  p.h = [hc, hl](double x) { return hc + hl * x; };
  if (lam_max > 0.0) p.lambda = [lam](double) { return lam; };
  p.lambda_max = lam_max;
  p.jump_kernel = [posts](double x) {
    std::vector<std::pair<double, double>> mw;
    mw.reserve(posts.size());
    for (const auto& a : posts) mw.emplace_back(a.first - x, a.second);
    return MarkKernel::discrete(std::move(mw));
  };
  cfg.pdmp = std::move(p);
  cfg.has_pdmp = true;
}

void parse_jumpdiff(const json& m, ExperimentConfig& cfg,
                    std::vector<std::string>& errs) {
  expect_keys(m, "model.jumpdiff.",
              {"x0", "drift", "sigma", "rate", "rate_max", "clock_slope", "kernel",
               "atoms"},
              errs);
  JumpDiffusionModel jd;
  jd.name = "custom-jumpdiff";
  double x0 = 0.0, drift = 0.0, sigma = 0.0, rate = 0.0, rate_max = 0.0, slope = 1.0;
  take_number(m, "x0", "model.jumpdiff.", errs, x0, true);
  take_number(m, "drift", "model.jumpdiff.", errs, drift, false, 0.0);
  take_number(m, "sigma", "model.jumpdiff.", errs, sigma, false, 0.0);
  take_number(m, "rate", "model.jumpdiff.", errs, rate, false, 0.0);
  take_number(m, "rate_max", "model.jumpdiff.", errs, rate_max, false, rate);
  take_number(m, "clock_slope", "model.jumpdiff.", errs, slope, false, 1.0);
  if (rate < 0.0) errs.push_back("'model.jumpdiff.rate' must be non-negative");
  if (rate_max < rate)
    errs.push_back("'model.jumpdiff.rate_max' must dominate 'model.jumpdiff.rate'");
  if (slope < 0.0) errs.push_back("'model.jumpdiff.clock_slope' must be non-negative");
  jd.x0 = x0;
  jd.b = [drift](double, double) { return drift; };
  if (sigma != 0.0) jd.sigma = [sigma](double, double) { return sigma; };
  jd.clock_slope = [slope](double) { return slope; };
  if (rate_max > 0.0) {
    if (!m.contains("kernel")) {
      errs.push_back("missing 'model.jumpdiff.kernel' (required with a positive rate)");
    } else {
      bool kok = false;
      MarkKernel kern = parse_kernel(m.at("kernel"), "model.jumpdiff.kernel", errs, kok);
      jd.mark_kernel = [kern](double, double) { return kern; };
    }
    jd.rate = [rate](double, double) { return rate; };
    jd.rate_max = rate_max;
  }
  std::vector<double> atom_times;
  if (m.contains("atoms")) {
    if (!m.at("atoms").is_array()) {
      errs.push_back("'model.jumpdiff.atoms' must be an array");
    } else {
      std::size_t i = 0;
      for (const json& a : m.at("atoms")) {
        const std::string where =
            "model.jumpdiff.atoms[" + std::to_string(i) + "].";
        if (!a.is_object()) {
          errs.push_back("'" + where + "' must be an object");
          ++i;
          continue;
        }
        expect_keys(a, where, {"time", "mass", "clock_jump", "kernel"}, errs);
        double time = 0.0, mass = 1.0, clock_jump = 0.0;
        take_number(a, "time", where, errs, time, true);
        take_number(a, "mass", where, errs, mass, false, 1.0);
        take_number(a, "clock_jump", where, errs, clock_jump, false, 0.0);
        if (!(mass > 0.0) || mass > 1.0)
          errs.push_back("'" + where + "mass' must lie in (0, 1]");
        MarkKernel kern = MarkKernel::point(0.0);
        if (a.contains("kernel")) {
          bool kok = false;
          kern = parse_kernel(a.at("kernel"), where + "kernel", errs, kok);
        } else {
          errs.push_back("missing '" + where + "kernel'");
        }
        atom_times.push_back(time);
        jd.atoms.push_back({time, mass, std::move(kern), clock_jump});
        ++i;
      }
    }
  }
  // The driving-measure jump enters the state as the mark itself, gated off
  // at the declared atom times where only the clock may move.
  jd.gamma = [atom_times](double t, double, double e) {
    for (double ta : atom_times)
      if (std::abs(t - ta) <= 1e-12) return 0.0;
    return e;
  };
  cfg.jumpdiff = std::move(jd);
  cfg.has_jumpdiff = true;
}

}  // namespace

std::function<double(double)> builtin_terminal(const std::string& name) {
  if (name == "identity") return [](double x) { return x; };
  if (name == "square") return [](double x) { return x * x; };
  const auto colon = name.find(':');
  if (colon != std::string::npos) {
    const std::string head = name.substr(0, colon);
    const double c = std::stod(name.substr(colon + 1));
    if (head == "shifted-square")
      return [c](double x) { return (x - c) * (x - c); };
    if (head == "constant") return [c](double) { return c; };
  }
  throw std::out_of_range("unknown terminal condition '" + name + "'");
}

std::function<double(double, double, double, double, double)> builtin_driver(
    const std::string& name) {
  if (name == "none") return nullptr;
  if (name == "jump-average")
    return [](double, double, double, double, double u) { return u; };
  const auto colon = name.find(':');
  if (colon != std::string::npos) {
    const std::string head = name.substr(0, colon);
    const double c = std::stod(name.substr(colon + 1));
    if (head == "discount")
      return [c](double, double, double y, double, double) { return -c * y; };
    if (head == "constant")
      return [c](double, double, double, double, double) { return c; };
  }
  throw std::out_of_range("unknown driver '" + name + "'");
}

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> k{"transfer",  "isometry", "terminal",
                                          "classify",  "z",        "u",
                                          "martingale", "orthogonality"};
  return k;
}

ParseResult parse_config(const std::string& text) {
  ParseResult r;
  std::vector<std::string>& errs = r.errors;
  const json root = json::parse(text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    errs.push_back("config is not a well-formed JSON object");
    return r;
  }
  expect_keys(root, "", {"model", "bsde", "run", "output", "checks"}, errs);

  // model
  if (!root.contains("model") || !root.at("model").is_object()) {
    errs.push_back("missing 'model' block");
  } else {
    const json& m = root.at("model");
    expect_keys(m, "model.", {"benchmark", "pdmp", "jumpdiff", "horizon"}, errs);
    int sources = 0;
    if (m.contains("benchmark")) ++sources;
    if (m.contains("pdmp")) ++sources;
    if (m.contains("jumpdiff")) ++sources;
    if (sources != 1)
      errs.push_back("'model' must declare exactly one of benchmark, pdmp, jumpdiff");
    if (m.contains("benchmark")) {
      if (!m.at("benchmark").is_string()) {
        errs.push_back("'model.benchmark' must be a string");
      } else {
        r.config.benchmark = m.at("benchmark").get<std::string>();
        bool found = false;
        for (const std::string& id : benchmark_ids())
          if (id == r.config.benchmark) found = true;
        if (!found)
          errs.push_back("unknown benchmark '" + r.config.benchmark + "'");
      }
      if (m.contains("horizon"))
        errs.push_back("'model.horizon' is fixed by the named setup");
    } else {
      take_number(m, "horizon", "model.", errs, r.config.horizon, false, 1.0);
      if (!(r.config.horizon > 0.0))
        errs.push_back("'model.horizon' must be positive");
    }
    if (m.contains("pdmp")) {
      if (m.at("pdmp").is_object())
        parse_pdmp(m.at("pdmp"), r.config, errs);
      else
        errs.push_back("'model.pdmp' must be an object");
    }
    if (m.contains("jumpdiff")) {
      if (m.at("jumpdiff").is_object())
        parse_jumpdiff(m.at("jumpdiff"), r.config, errs);
      else
        errs.push_back("'model.jumpdiff' must be an object");
    }
  }

  // bsde
  if (root.contains("bsde")) {
    if (!root.at("bsde").is_object()) {
      errs.push_back("'bsde' must be an object");
    } else {
      const json& b = root.at("bsde");
      expect_keys(b, "bsde.", {"g", "f"}, errs);
      if (b.contains("g")) {
        if (!b.at("g").is_string())
          errs.push_back("'bsde.g' must be a string");
        else
          r.config.g_name = b.at("g").get<std::string>();
      }
      if (b.contains("f")) {
        if (!b.at("f").is_string())
          errs.push_back("'bsde.f' must be a string");
        else
          r.config.f_name = b.at("f").get<std::string>();
      }
      for (const std::string* n : {&r.config.g_name, &r.config.f_name}) {
        if (n->empty()) continue;
        try {
          if (n == &r.config.g_name)
            builtin_terminal(*n);
          else
            builtin_driver(*n);
        } catch (const std::exception&) {
          errs.push_back("unknown builtin '" + *n + "' in 'bsde'");
        }
      }
    }
  }
  if (r.config.benchmark.empty() && r.config.g_name.empty())
    errs.push_back("an inline model needs 'bsde.g'");

  // run
  if (!root.contains("run") || !root.at("run").is_object()) {
    errs.push_back("missing 'run' block");
  } else {
    const json& run = root.at("run");
    expect_keys(run, "run.",
                {"paths", "steps", "seed", "degree", "fixed_point_tol"}, errs);
    std::uint64_t paths = 0, steps = 0, degree = 3;
    take_count(run, "paths", "run.", errs, paths, true);
    take_count(run, "steps", "run.", errs, steps, true);
    take_count(run, "seed", "run.", errs, r.config.seed, true);
    take_count(run, "degree", "run.", errs, degree, false, 3);
    take_number(run, "fixed_point_tol", "run.", errs, r.config.fixed_point_tol,
                false, 1e-10);
    if (run.contains("paths") && paths < 2)
      errs.push_back("'run.paths' must be at least 2");
    if (run.contains("steps") && steps < 2)
      errs.push_back("'run.steps' must be at least 2");
    if (degree > 12) errs.push_back("'run.degree' must be at most 12");
    if (!(r.config.fixed_point_tol > 0.0))
      errs.push_back("'run.fixed_point_tol' must be positive");
    r.config.paths = static_cast<std::size_t>(paths);
    r.config.steps = static_cast<std::size_t>(steps);
    r.config.degree = static_cast<int>(degree);
  }

  // output
  if (root.contains("output")) {
    if (!root.at("output").is_object()) {
      errs.push_back("'output' must be an object");
    } else {
      const json& o = root.at("output");
      expect_keys(o, "output.", {"directory", "scenarios"}, errs);
      if (o.contains("directory")) {
        if (!o.at("directory").is_string())
          errs.push_back("'output.directory' must be a string");
        else
          r.config.out_dir = o.at("directory").get<std::string>();
      }
      std::uint64_t sc = 2;
      take_count(o, "scenarios", "output.", errs, sc, false, 2);
      r.config.dump_scenarios = static_cast<std::size_t>(sc);
    }
  }

  // checks
  if (root.contains("checks")) {
    if (!root.at("checks").is_array()) {
      errs.push_back("'checks' must be an array of check names");
    } else {
      for (const json& c : root.at("checks")) {
        if (!c.is_string()) {
          errs.push_back("'checks' entries must be strings");
          continue;
        }
        const std::string name = c.get<std::string>();
        bool known = false;
        for (const std::string& k : known_checks())
          if (k == name) known = true;
        if (!known)
          errs.push_back("unknown check '" + name + "'");
        else
          r.config.checks.push_back(name);
      }
    }
  }
  return r;
}

}  // namespace mubsde
