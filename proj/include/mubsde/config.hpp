#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mubsde/processes.hpp"

namespace mubsde {

// One experiment: a model (named setup or inline declaration), an optional
// terminal/driver override, run sizes, output destination and the checks to
// run. Parsed from a JSON config; every field here is already validated.
struct ExperimentConfig {
  // model: exactly one source
  std::string benchmark;  // empty when the model is declared inline
  bool has_pdmp = false;
  bool has_jumpdiff = false;
  PdmpModel pdmp;
  JumpDiffusionModel jumpdiff;
  double horizon = 1.0;

  // terminal condition / driver, by builtin name; empty keeps the named
  // setup's problem (inline models must name at least g)
  std::string g_name;
  std::string f_name;

  // run
  std::size_t paths = 0;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  int degree = 3;
  double fixed_point_tol = 1e-10;

  // output
  std::string out_dir = "out";
  std::size_t dump_scenarios = 2;

  // empty = every check applicable to the model
  std::vector<std::string> checks;
};

// parse_config never throws on bad input: it returns every violation it can
// find (unknown keys are named), and the config is usable iff ok().
struct ParseResult {
  ExperimentConfig config;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

ParseResult parse_config(const std::string& text);

// Named terminal conditions: identity, square, shifted-square:<c>,
// constant:<c>. Throws std::out_of_range for anything else.
std::function<double(double)> builtin_terminal(const std::string& name);

// Named drivers: none (null), discount:<r>, constant:<c>, jump-average.
// Throws std::out_of_range for anything else.
std::function<double(double, double, double, double, double)> builtin_driver(
    const std::string& name);

// Canonical check order; report rows always follow it.
const std::vector<std::string>& known_checks();

}  // namespace mubsde
