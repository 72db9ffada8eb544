#pragma once

#include "ppgm/adjoint.hpp"
#include "ppgm/ppgm.hpp"
#include "ppgm/problem.hpp"
#include "ppgm/theory.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ppgm {

struct CostSpec {
  std::string type = "zero";  // zero | box | l1 | entropy | ball
  std::vector<double> lower, upper;  // box
  std::vector<double> gamma;         // l1 weights
  std::vector<double> reference;     // entropy reference measure
  double radius = 1.0;               // ball
  double ridge = 0.0;
};

struct ProblemSection {
  std::string family = "linear";  // linear | affine_sine | drift_table
  int state_dim = 1;
  int control_dim = 1;
  int noise_dim = 1;
  double horizon = 1.0;
  double discount = 0.0;
  std::vector<double> initial_state;  // empty -> origin
  // linear / affine_sine; row-major, sizes n*n, n*k, n*d, n*n, k*k, n*n
  std::vector<double> a, b, sigma, q, r, h;
  double sine_amplitude = 0.0;
  double sine_frequency = 1.0;
  // drift_table (scalar); uses b, sigma, q, r, h as scalars
  std::vector<double> table_knots, table_values;
  CostSpec cost;
  std::string constants = "analytic";  // analytic | probe | user
  std::optional<AssumptionConstants> user_constants;
  int probe_samples = 4000;
  double probe_action_radius = 2.0;
  std::uint64_t probe_seed = 0x5eed;
};

struct IterationSection {
  bool tau_auto = true;  // 0.9 tau_max
  double tau = 0.0;
  double stop_tol = 1e-6;
  int max_iters = 200;
  std::uint64_t seed = 1;
  double perturbation = 0.0;
  bool enforce_step_bound = false;
  double divergence_factor = 1e3;
  int cost_paths = 0;
  double cost_dt = 0.01;
  std::vector<double> initial_policy;  // constant action; empty -> anchor point
};

struct OutputSection {
  std::string directory = "out";
  std::vector<std::string> formats{"csv", "binary"};
  bool record_wall_time = false;
};

struct ExperimentConfig {
  std::string name;
  ProblemSection problem;
  GridSpec grid;
  IterationSection iteration;
  Calibration theory;
  OutputSection outputs;
};

/// Throws InputError naming the offending key path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// Canonical JSON (sorted keys, every field explicit).
std::string config_to_json(const ExperimentConfig& c, int indent = -1);

std::uint64_t fnv1a64(const std::string& bytes);
/// FNV-1a of the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

/// PPGM_OUTPUT_DIR replaces outputs.directory; PPGM_THREADS sets the worker count.
void apply_env_overrides(ExperimentConfig& c);

NonsmoothCost build_cost(const CostSpec& s, int control_dim);

struct Experiment {
  ExperimentConfig config;
  ControlProblem problem;
  AssumptionConstants constants;
  PolicyGrid phi0;
  TheoryContext ctx;
  double tau = 0.0;
};

/// Builds problem, constants and initial policy; throws InputError on invalid input.
Experiment build_experiment(const ExperimentConfig& c);

TheoryReport check_experiment(const Experiment& e);

IterationConfig iteration_config(const Experiment& e, const TheoryReport& th);

/// Comment lines naming the config hash, seed and canonical config.
std::vector<std::string> provenance_header(const ExperimentConfig& c);

struct RunArtifacts {
  TheoryReport theory;
  IterationReport report;
  PolicyGrid policy;
  std::vector<std::string> files;
};

/// Writes iterations.csv, theory.txt, policy.csv / policy.bin and
/// plot_convergence.dat into outputs.directory.
RunArtifacts run_experiment(const Experiment& e);

/// Reads a policy.bin written by run_experiment.
GridFunction read_policy_snapshot(const std::string& path);

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestOptions {
  LambertOptions lambert;
  std::uint64_t seed = 2024;
};

std::vector<SuiteResult> run_selftest(const SelftestOptions& opts = {});

}  // namespace ppgm
