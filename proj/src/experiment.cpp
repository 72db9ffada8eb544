#include "ppgm/experiment.hpp"

#include "ppgm/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

namespace ppgm {

using json = nlohmann::json;

namespace {

// Walks a JSON object, remembering which keys were consumed so leftovers can be
// reported with their full path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError("config: " + path_ + " must be an object");
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) { return j_.at(key); }
  std::string path(const std::string& key) const { return path_ + "/" + key; }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (v.is_string()) {
      const auto t = v.get<std::string>();
      if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
      if (t == "-inf") return -std::numeric_limits<double>::infinity();
    }
    if (!v.is_number()) throw InputError("config: " + path(key) + " must be a number");
    return v.get<double>();
  }

  int integer(const std::string& key, int def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw InputError("config: " + path(key) + " must be an integer");
    return v.get<int>();
  }

  std::uint64_t uint64(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) throw InputError("config: " + path(key) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw InputError("config: " + path(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw InputError("config: " + path(key) + " must be a string");
    return v.get<std::string>();
  }

  // Scalar or (nested) array of numbers, flattened row-major.
  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    if (!has(key)) return def;
    std::vector<double> out;
    flatten(j_.at(key), path(key), out);
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw InputError("config: unknown key " + path_ + "/" + it.key());
  }

 private:
  static void flatten(const json& v, const std::string& p, std::vector<double>& out) {
    if (v.is_number()) {
      out.push_back(v.get<double>());
    } else if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) flatten(v[i], p + "/" + std::to_string(i), out);
    } else if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf" || s == "+inf") out.push_back(std::numeric_limits<double>::infinity());
      else if (s == "-inf") out.push_back(-std::numeric_limits<double>::infinity());
      else throw InputError("config: " + p + " must be numeric");
    } else {
      throw InputError("config: " + p + " must be numeric");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json num(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

json num_array(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) {
    if (std::isinf(x)) a.push_back(x > 0 ? "inf" : "-inf");
    else a.push_back(x);
  }
  return a;
}

CostSpec parse_cost(Section s) {
  CostSpec c;
  c.type = s.string("type", c.type);
  c.lower = s.numbers("lower", {});
  c.upper = s.numbers("upper", {});
  c.gamma = s.numbers("gamma", {});
  c.reference = s.numbers("reference", {});
  c.radius = s.number("radius", c.radius);
  c.ridge = s.number("ridge", 0.0);
  s.finish();
  static const std::set<std::string> types{"zero", "box", "l1", "entropy", "ball"};
  if (!types.count(c.type)) throw InputError("config: /problem/cost/type '" + c.type + "' is not one of zero|box|l1|entropy|ball");
  return c;
}

AssumptionConstants parse_constants(Section s) {
  AssumptionConstants k;
  k.provenance = ConstantsProvenance::user;
  k.c_fx = s.number("C_fx", 0);
  k.l_fx = s.number("L_fx", 0);
  k.c_fa = s.number("C_fa", 0);
  k.l_fa = s.number("L_fa", 0);
  k.mu = s.number("mu", 0);
  k.nu = s.number("nu", 0);
  k.c_g = s.number("C_g", 0);
  k.l_g = s.number("L_g", 0);
  k.c_bhat = s.number("C_bhat", 0);
  k.c_bbar = s.number("C_bbar", 0);
  k.l_bhat = s.number("L_bhat", 0);
  k.l_bbar = s.number("L_bbar", 0);
  k.kappa_bhat = s.number("kappa_bhat", 0);
  k.c_sigma = s.number("C_sigma", 0);
  k.l_sigma = s.number("L_sigma", 0);
  s.finish();
  return k;
}

json constants_json(const AssumptionConstants& k) {
  return json{{"C_fx", k.c_fx},     {"L_fx", k.l_fx},       {"C_fa", k.c_fa},          {"L_fa", k.l_fa},
              {"mu", k.mu},         {"nu", k.nu},           {"C_g", k.c_g},            {"L_g", k.l_g},
              {"C_bhat", k.c_bhat}, {"C_bbar", k.c_bbar},   {"L_bhat", k.l_bhat},      {"L_bbar", k.l_bbar},
              {"kappa_bhat", k.kappa_bhat}, {"C_sigma", k.c_sigma}, {"L_sigma", k.l_sigma}};
}

Mat to_mat(const std::vector<double>& v, int rows, int cols, const std::string& what, bool allow_scalar_identity) {
  if (static_cast<int>(v.size()) == rows * cols) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = v[static_cast<size_t>(i * cols + j)];
    return m;
  }
  if (v.size() == 1 && allow_scalar_identity && rows == cols) return Mat::Identity(rows, cols) * v[0];
  if (v.size() == 1 && rows == 1 && cols == 1) return Mat::Constant(1, 1, v[0]);
  std::ostringstream os;
  os << "config: /problem/" << what << " needs " << rows << "x" << cols << " entries (or one scalar for a multiple of I), got "
     << v.size();
  throw InputError(os.str());
}

Vec to_vec(const std::vector<double>& v, int n, const std::string& what) {
  if (v.size() == 1 && n > 1) return Vec::Constant(n, v[0]);
  if (static_cast<int>(v.size()) != n) {
    std::ostringstream os;
    os << "config: " << what << " needs " << n << " entries, got " << v.size();
    throw InputError(os.str());
  }
  Vec out(n);
  for (int i = 0; i < n; ++i) out(i) = v[static_cast<size_t>(i)];
  return out;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config: malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "");
  c.name = top.string("name", "");

  if (top.has("problem")) {
    Section s(top.at("problem"), "/problem");
    auto& p = c.problem;
    p.family = s.string("family", p.family);
    p.state_dim = s.integer("state_dim", p.state_dim);
    p.control_dim = s.integer("control_dim", p.state_dim);
    p.noise_dim = s.integer("noise_dim", p.state_dim);
    p.horizon = s.number("horizon", p.horizon);
    p.discount = s.number("discount", p.discount);
    p.initial_state = s.numbers("initial_state", {});
    p.a = s.numbers("a", {});
    p.b = s.numbers("b", {});
    p.sigma = s.numbers("sigma", {0.0});
    p.q = s.numbers("q", {1.0});
    p.r = s.numbers("r", {1.0});
    p.h = s.numbers("h", {1.0});
    p.sine_amplitude = s.number("sine_amplitude", p.sine_amplitude);
    p.sine_frequency = s.number("sine_frequency", p.sine_frequency);
    p.table_knots = s.numbers("table_knots", {});
    p.table_values = s.numbers("table_values", {});
    if (s.has("cost")) p.cost = parse_cost(Section(s.at("cost"), "/problem/cost"));
    if (s.has("constants")) {
      const auto& v = s.at("constants");
      if (v.is_string()) {
        p.constants = v.get<std::string>();
        if (p.constants != "analytic" && p.constants != "probe")
          throw InputError("config: /problem/constants must be \"analytic\", \"probe\" or an object of values");
      } else {
        p.constants = "user";
        p.user_constants = parse_constants(Section(v, "/problem/constants"));
      }
    }
    p.probe_samples = s.integer("probe_samples", p.probe_samples);
    p.probe_action_radius = s.number("probe_action_radius", p.probe_action_radius);
    p.probe_seed = s.uint64("probe_seed", p.probe_seed);
    s.finish();
    static const std::set<std::string> fams{"linear", "affine_sine", "drift_table"};
    if (!fams.count(p.family)) throw InputError("config: /problem/family '" + p.family + "' is not one of linear|affine_sine|drift_table");
  }

  if (top.has("grid")) {
    Section s(top.at("grid"), "/grid");
    c.grid.radius = s.number("radius", c.grid.radius);
    c.grid.dx = s.number("dx", c.grid.dx);
    c.grid.dt = s.number("dt", c.grid.dt);
    c.grid.margin = s.number("margin", c.grid.margin);
    c.grid.auto_substep = s.boolean("auto_substep", c.grid.auto_substep);
    c.grid.store_z = s.boolean("store_z", c.grid.store_z);
    s.finish();
  }

  if (top.has("iteration")) {
    Section s(top.at("iteration"), "/iteration");
    auto& it = c.iteration;
    if (s.has("tau")) {
      const auto& v = s.at("tau");
      if (v.is_string()) {
        if (v.get<std::string>() != "auto") throw InputError("config: /iteration/tau must be a number or \"auto\"");
        it.tau_auto = true;
      } else if (v.is_number()) {
        it.tau_auto = false;
        it.tau = v.get<double>();
      } else {
        throw InputError("config: /iteration/tau must be a number or \"auto\"");
      }
    }
    it.stop_tol = s.number("stop_tol", it.stop_tol);
    it.max_iters = s.integer("max_iters", it.max_iters);
    it.seed = s.uint64("seed", it.seed);
    it.perturbation = s.number("perturbation", it.perturbation);
    it.enforce_step_bound = s.boolean("enforce_step_bound", it.enforce_step_bound);
    it.divergence_factor = s.number("divergence_factor", it.divergence_factor);
    it.cost_paths = s.integer("cost_paths", it.cost_paths);
    it.cost_dt = s.number("cost_dt", it.cost_dt);
    it.initial_policy = s.numbers("initial_policy", {});
    s.finish();
  }

  if (top.has("theory")) {
    Section s(top.at("theory"), "/theory");
    std::string mode = "unit";
    double value = 1.0;
    if (s.has("C_cal")) {
      const auto& v = s.at("C_cal");
      if (v.is_string()) {
        mode = v.get<std::string>();
        if (mode != "unit") throw InputError("config: /theory/C_cal must be \"unit\" or a positive number");
      } else if (v.is_number()) {
        value = v.get<double>();
        mode = value == 1.0 ? "unit" : "conservative";
      } else {
        throw InputError("config: /theory/C_cal must be \"unit\" or a positive number");
      }
    }
    s.finish();
    c.theory = calibrate_generic_constant(mode, value);
  }

  if (top.has("outputs")) {
    Section s(top.at("outputs"), "/outputs");
    c.outputs.directory = s.string("directory", c.outputs.directory);
    if (s.has("formats")) {
      const auto& v = s.at("formats");
      if (!v.is_array()) throw InputError("config: /outputs/formats must be an array");
      c.outputs.formats.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string()) throw InputError("config: /outputs/formats/" + std::to_string(i) + " must be a string");
        const auto f = v[i].get<std::string>();
        if (f != "csv" && f != "binary") throw InputError("config: /outputs/formats/" + std::to_string(i) + " must be csv or binary");
        c.outputs.formats.push_back(f);
      }
    }
    c.outputs.record_wall_time = s.boolean("record_wall_time", c.outputs.record_wall_time);
    s.finish();
  }
  top.finish();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c, int indent) {
  const auto& p = c.problem;
  json cost{{"type", p.cost.type}, {"lower", num_array(p.cost.lower)}, {"upper", num_array(p.cost.upper)},
            {"gamma", num_array(p.cost.gamma)}, {"reference", num_array(p.cost.reference)},
            {"radius", p.cost.radius}, {"ridge", p.cost.ridge}};
  json problem{{"family", p.family},
               {"state_dim", p.state_dim},
               {"control_dim", p.control_dim},
               {"noise_dim", p.noise_dim},
               {"horizon", p.horizon},
               {"discount", p.discount},
               {"initial_state", num_array(p.initial_state)},
               {"a", num_array(p.a)},
               {"b", num_array(p.b)},
               {"sigma", num_array(p.sigma)},
               {"q", num_array(p.q)},
               {"r", num_array(p.r)},
               {"h", num_array(p.h)},
               {"sine_amplitude", p.sine_amplitude},
               {"sine_frequency", p.sine_frequency},
               {"table_knots", num_array(p.table_knots)},
               {"table_values", num_array(p.table_values)},
               {"cost", cost},
               {"probe_samples", p.probe_samples},
               {"probe_action_radius", p.probe_action_radius},
               {"probe_seed", p.probe_seed}};
  if (p.constants == "user" && p.user_constants) problem["constants"] = constants_json(*p.user_constants);
  else problem["constants"] = p.constants;

  const auto& it = c.iteration;
  json iteration{{"stop_tol", num(it.stop_tol)},
                 {"max_iters", it.max_iters},
                 {"seed", it.seed},
                 {"perturbation", it.perturbation},
                 {"enforce_step_bound", it.enforce_step_bound},
                 {"divergence_factor", num(it.divergence_factor)},
                 {"cost_paths", it.cost_paths},
                 {"cost_dt", it.cost_dt},
                 {"initial_policy", num_array(it.initial_policy)}};
  if (it.tau_auto) iteration["tau"] = "auto";
  else iteration["tau"] = it.tau;

  json theory;
  if (c.theory.mode == "unit") theory["C_cal"] = "unit";
  else theory["C_cal"] = c.theory.value;

  json root{{"name", c.name},
            {"problem", problem},
            {"grid",
             {{"radius", c.grid.radius},
              {"dx", c.grid.dx},
              {"dt", c.grid.dt},
              {"margin", c.grid.margin},
              {"auto_substep", c.grid.auto_substep},
              {"store_z", c.grid.store_z}}},
            {"iteration", iteration},
            {"theory", theory},
            {"outputs",
             {{"directory", c.outputs.directory},
              {"formats", c.outputs.formats},
              {"record_wall_time", c.outputs.record_wall_time}}}};
  return root.dump(indent);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& c) {
  // the output directory does not change any result
  ExperimentConfig k = c;
  k.outputs.directory.clear();
  return hex64(fnv1a64(config_to_json(k)));
}

void apply_env_overrides(ExperimentConfig& c) {
  if (const char* d = std::getenv("PPGM_OUTPUT_DIR"); d && *d) c.outputs.directory = d;
  if (const char* t = std::getenv("PPGM_THREADS"); t && *t) {
    char* end = nullptr;
    const long n = std::strtol(t, &end, 10);
    if (end == t || *end != '\0' || n < 1) throw InputError(std::string("PPGM_THREADS must be a positive integer, got '") + t + "'");
    set_thread_count(static_cast<int>(n));
  }
}

NonsmoothCost build_cost(const CostSpec& s, int k) {
  if (s.ridge < 0.0) throw InputError("config: /problem/cost/ridge must be >= 0");
  if (s.type == "zero") return NonsmoothCost::zero(s.ridge);
  if (s.type == "box")
    return NonsmoothCost::box(to_vec(s.lower, k, "/problem/cost/lower"), to_vec(s.upper, k, "/problem/cost/upper"),
                              s.ridge);
  if (s.type == "l1") return NonsmoothCost::weighted_l1(to_vec(s.gamma, k, "/problem/cost/gamma"), s.ridge);
  if (s.type == "entropy") {
    Vec u = s.reference.empty() ? Vec::Constant(k, 1.0 / k) : to_vec(s.reference, k, "/problem/cost/reference");
    return NonsmoothCost::relative_entropy(u, s.ridge);
  }
  if (s.type == "ball") {
    if (!(s.radius > 0.0)) throw InputError("config: /problem/cost/radius must be > 0");
    if (s.ridge != 0.0) throw InputError("config: /problem/cost/ridge is not supported for the ball");
    const double rad = s.radius;
    return NonsmoothCost::convex_set(
        [rad](const Vec& a) {
          const double n = a.norm();
          return n <= rad ? a : Vec(a * (rad / n));
        },
        "ball");
  }
  throw InputError("config: unknown cost type " + s.type);
}

Experiment build_experiment(const ExperimentConfig& c) {
  Experiment e;
  e.config = c;
  const auto& p = c.problem;
  const int n = p.state_dim, k = p.control_dim, d = p.noise_dim;
  if (n < 1 || n > kMaxDim) throw InputError("config: /problem/state_dim must be in 1..3");
  if (k < 1 || k > kMaxDim) throw InputError("config: /problem/control_dim must be in 1..3");
  if (d < 1 || d > kMaxDim) throw InputError("config: /problem/noise_dim must be in 1..3");
  if (!(p.horizon > 0.0)) throw InputError("config: /problem/horizon must be > 0");
  if (!(p.discount >= 0.0)) throw InputError("config: /problem/discount must be >= 0");
  if (!(c.grid.radius > 0.0) || !(c.grid.dx > 0.0) || !(c.grid.dt > 0.0))
    throw InputError("config: /grid radius, dx and dt must be > 0");

  NonsmoothCost ell = build_cost(p.cost, k);
  if (auto dim = ell.dimension(); dim && *dim != k) throw InputError("config: /problem/cost dimension does not match control_dim");
  const Vec x0 = p.initial_state.empty() ? Vec::Zero(n) : to_vec(p.initial_state, n, "/problem/initial_state");

  if (p.family == "drift_table") {
    if (n != 1 || k != 1 || d != 1) throw InputError("config: drift_table is scalar (state_dim = control_dim = noise_dim = 1)");
    DriftTableCoefficients t;
    t.knots = p.table_knots;
    t.values = p.table_values;
    auto scalar = [](const std::vector<double>& v, const char* what, double def) {
      if (v.empty()) return def;
      if (v.size() != 1) throw InputError(std::string("config: /problem/") + what + " must be a scalar for drift_table");
      return v[0];
    };
    t.b = scalar(p.b, "b", 1.0);
    t.sigma = scalar(p.sigma, "sigma", 0.0);
    t.q = scalar(p.q, "q", 1.0);
    t.r = scalar(p.r, "r", 1.0);
    t.h = scalar(p.h, "h", 1.0);
    e.problem = make_drift_table_problem(t, p.horizon, p.discount, x0(0), ell);
    if (p.constants == "analytic") throw InputError("config: drift_table has no analytic constants; use \"probe\" or give values");
  } else {
    LinearSineCoefficients lc;
    if (p.a.empty() || p.b.empty()) throw InputError("config: /problem/a and /problem/b are required");
    lc.a = to_mat(p.a, n, n, "a", true);
    lc.b = to_mat(p.b, n, k, "b", true);
    lc.sigma = to_mat(p.sigma, n, d, "sigma", true);
    lc.q = to_mat(p.q, n, n, "q", true);
    lc.r = to_mat(p.r, k, k, "r", true);
    lc.h = to_mat(p.h, n, n, "h", true);
    lc.sine_amplitude = p.family == "affine_sine" ? p.sine_amplitude : 0.0;
    lc.sine_frequency = p.sine_frequency;
    if (p.family == "linear" && p.sine_amplitude != 0.0)
      throw InputError("config: /problem/sine_amplitude requires family affine_sine");
    e.problem = make_linear_sine_problem(lc, p.horizon, p.discount, x0, ell);
    if (p.constants == "analytic") e.constants = linear_sine_constants(lc, c.grid.radius, ell);
  }

  if (p.constants == "probe") {
    const auto box = SampleBox::symmetric(n, k, c.grid.radius, p.probe_action_radius);
    e.constants = probe_assumption_constants(e.problem, box, p.probe_samples, p.probe_seed);
  } else if (p.constants == "user") {
    e.constants = *p.user_constants;
    e.constants.nu = std::max(e.constants.nu, ell.nu());
  }
  e.constants.validate();
  e.problem.constants = e.constants;
  e.problem.validate();

  e.ctx = TheoryContext{e.constants, p.horizon, p.discount, c.theory};

  const auto times = c.grid.times(p.horizon);
  const auto space = c.grid.space(n);
  Vec a0 = c.iteration.initial_policy.empty() ? default_anchor(ell, k).a0
                                              : to_vec(c.iteration.initial_policy, k, "/iteration/initial_policy");
  if (!ell.feasible(a0)) throw InputError("config: /iteration/initial_policy is not feasible for the cost");
  e.phi0 = PolicyGrid::constant(times, space, a0, ell);

  const double tau_max = max_step(e.constants);
  if (c.iteration.tau_auto) {
    if (!std::isfinite(tau_max)) throw InputError("config: tau = \"auto\" needs a finite tau_max");
    e.tau = 0.9 * tau_max;
  } else {
    e.tau = c.iteration.tau;
  }
  if (!(e.tau > 0.0)) throw InputError("config: /iteration/tau must be > 0");
  return e;
}

TheoryReport check_experiment(const Experiment& e) {
  const auto& ell = e.problem.ell;
  return evaluate_theory(e.ctx, policy_norms(e.phi0), ell, default_anchor(ell, e.problem.control_dim), e.tau);
}

IterationConfig iteration_config(const Experiment& e, const TheoryReport& th) {
  IterationConfig cfg;
  const auto& it = e.config.iteration;
  cfg.tau = e.tau;
  cfg.max_iters = it.max_iters;
  cfg.stop_tol = it.stop_tol;
  cfg.grid = e.config.grid;
  cfg.perturbation = NoiseSpec{it.perturbation, it.seed};
  cfg.seed = it.seed;
  cfg.enforce_step_bound = it.enforce_step_bound;
  cfg.tau_max = th.tau_max;
  cfg.divergence_factor = it.divergence_factor;
  cfg.cost_paths = it.cost_paths;
  cfg.cost_dt = it.cost_dt;
  cfg.predicted_c = th.predicted_c;
  cfg.record_wall_time = e.config.outputs.record_wall_time;
  return cfg;
}

std::vector<std::string> provenance_header(const ExperimentConfig& c) {
  ExperimentConfig k = c;
  k.outputs.directory.clear();
  return {"ppgm config_hash=" + config_hash(c) + " seed=" + std::to_string(c.iteration.seed),
          "config=" + config_to_json(k)};
}

namespace {

void write_header(std::ostream& os, const std::vector<std::string>& lines) {
  for (const auto& h : lines) os << "# " << h << '\n';
}

std::string g17(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

RunArtifacts run_experiment(const Experiment& e) {
  namespace fs = std::filesystem;
  const auto& c = e.config;
  const fs::path dir(c.outputs.directory.empty() ? "." : c.outputs.directory);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());

  RunArtifacts art;
  art.theory = check_experiment(e);
  auto header = provenance_header(c);
  header.push_back(std::string("verdict=") + (art.theory.certified() ? "certified" : "uncertified"));

  const auto cfg = iteration_config(e, art.theory);
  auto res = run_ppgm(e.problem, e.phi0, cfg);
  art.report = res.report;
  art.policy = res.policy;

  auto open = [&](const std::string& name, bool binary = false) {
    const fs::path path = dir / name;
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw InputError("cannot write " + path.string());
    art.files.push_back(path.string());
    return os;
  };

  {
    auto os = open("iterations.csv");
    art.report.write_csv(os, header);
  }
  {
    auto os = open("theory.txt");
    write_header(os, header);
    for (const auto& [key, v] : art.theory.key_values()) os << key << '=' << v << '\n';
    os << "verdict=" << (art.theory.certified() ? "certified" : "uncertified") << '\n';
    os << "run_converged=" << (art.report.converged ? "true" : "false") << '\n';
    os << "run_diverged=" << (art.report.diverged ? "true" : "false") << '\n';
    os << "run_stop_reason=" << art.report.stop_reason << '\n';
    os << "run_iterations=" << art.report.rows.size() << '\n';
    os << "run_final_residual=" << g17(art.report.final_residual) << '\n';
    os << "run_tail_contracting=" << (art.report.tail_contracting ? "true" : "false") << '\n';
  }
  const auto& formats = c.outputs.formats;
  if (std::find(formats.begin(), formats.end(), "csv") != formats.end()) {
    auto os = open("policy.csv");
    std::vector<std::string> names;
    for (int i = 0; i < art.policy.control_dim(); ++i) names.push_back("phi_" + std::to_string(i + 1));
    art.policy.values().write_csv(os, header, names);
  }
  if (std::find(formats.begin(), formats.end(), "binary") != formats.end()) {
    auto os = open("policy.bin", true);
    write_header(os, header);
    art.policy.values().write_binary(os);
  }
  {
    // iteration vs log10 delta_sup, with the predicted geometric reference line
    auto os = open("plot_convergence.dat");
    write_header(os, header);
    os << "# m log10_delta_sup log10_predicted\n";
    const auto& rows = art.report.rows;
    const double c0 = art.theory.predicted_c;
    const bool line = !rows.empty() && rows[0].delta_sup > 0.0 && c0 > 0.0 && c0 < 1.0;
    for (const auto& r : rows) {
      os << r.m << ' ' << (r.delta_sup > 0.0 ? g17(std::log10(r.delta_sup)) : std::string("nan")) << ' ';
      if (line) os << g17(std::log10(rows[0].delta_sup) + r.m * std::log10(c0));
      else os << "nan";
      os << '\n';
    }
  }
  return art;
}

GridFunction read_policy_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  while (in.peek() == '#') {
    std::string line;
    std::getline(in, line);
  }
  return GridFunction::read_binary(in);
}

// ---------------------------------------------------------------------------
// selftest

namespace {

// coarse-to-fine search of argmin 1/2|p-a|^2 + tau l(p) over a box around a
Vec brute_prox(const NonsmoothCost& ell, double tau, const Vec& a) {
  const int k = static_cast<int>(a.size());
  auto obj = [&](const Vec& p) { return 0.5 * (p - a).squaredNorm() + tau * ell.value(p); };
  Vec center = a;
  double half = 1.0 + a.cwiseAbs().maxCoeff() + tau * 3.0;
  for (double h : {0.02, 0.002, 0.0002}) {
    const int m = static_cast<int>(std::ceil(half / h));
    Vec best = center;
    double best_v = obj(center);
    Vec p(k);
    if (k == 1) {
      for (int i = -m; i <= m; ++i) {
        p(0) = center(0) + i * h;
        const double v = obj(p);
        if (v < best_v) best_v = v, best = p;
      }
    } else {
      for (int i = -m; i <= m; ++i)
        for (int j = -m; j <= m; ++j) {
          p(0) = center(0) + i * h;
          p(1) = center(1) + j * h;
          const double v = obj(p);
          if (v < best_v) best_v = v, best = p;
        }
    }
    center = best;
    half = 5 * h;
  }
  return center;
}

// entropy lives on the simplex; search along p = (s, 1 - s)
Vec brute_prox_entropy2(const NonsmoothCost& ell, double tau, const Vec& a) {
  double best_s = 0.5, best_v = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 200000; ++i) {
    const double s = i / 200000.0;
    Vec p(2);
    p << s, 1.0 - s;
    const double v = 0.5 * (p - a).squaredNorm() + tau * ell.value(p);
    if (v < best_v) best_v = v, best_s = s;
  }
  Vec p(2);
  p << best_s, 1.0 - best_s;
  return p;
}

SuiteResult suite_prox(const SelftestOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0), ut(0.05, 2.0);
  double worst = 0.0;
  std::string where;
  const int cases = 40;
  struct Case {
    std::string name;
    NonsmoothCost ell;
    int k;
  };
  std::vector<Case> costs;
  for (int k = 1; k <= 2; ++k) {
    costs.push_back({"zero", NonsmoothCost::zero(0.5), k});
    costs.push_back({"box", NonsmoothCost::box(Vec::Constant(k, -0.5), Vec::Constant(k, 1.0)), k});
    costs.push_back({"l1", NonsmoothCost::weighted_l1(Vec::LinSpaced(k, 0.3, 0.7)), k});
  }
  costs.push_back({"entropy", NonsmoothCost::relative_entropy(make_vec({0.3, 0.7})), 2});
  for (const auto& [name, ell, k] : costs) {
    for (int i = 0; i < cases; ++i) {
      Vec a(k);
      for (int j = 0; j < k; ++j) a(j) = u(rng);
      const double tau = ut(rng);
      const Vec p = prox(ell, tau, a, o.lambert);
      const Vec q = name == "entropy" ? brute_prox_entropy2(ell, tau, a) : brute_prox(ell, tau, a);
      const double err = (p - q).cwiseAbs().maxCoeff();
      if (!(err <= worst)) {
        worst = err;
        where = name;
      }
    }
  }
  std::ostringstream os;
  os << "max |prox - brute force| = " << worst << " (" << where << ")";
  return {"prox_oracle", worst <= 1e-3, os.str()};
}

SuiteResult suite_lambert(const SelftestOptions& o) {
  double worst = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double x = i == 0 ? 0.0 : std::pow(10.0, -6.0 + 12.0 * i / 2000.0);
    const double w = lambert_w(x, o.lambert);
    worst = std::max(worst, std::abs(w * std::exp(w) - x) / std::max(x, 1.0));
  }
  // W(1) is the omega constant: bisection on w e^w = 1
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::exp(mid) < 1.0 ? lo : hi) = mid;
  }
  const double w1 = std::abs(lambert_w(1.0, o.lambert) - 0.5 * (lo + hi));
  // log-space branch: W(e^z) + log W(e^z) = z
  double worst_log = 0.0;
  for (double z : {10.0, 100.0, 701.0, 1e4, 1e8}) {
    const double w = lambert_w_exp(z, o.lambert);
    worst_log = std::max(worst_log, std::abs(w + std::log(w) - z) / z);
  }
  std::ostringstream os;
  os << "identity " << worst << ", |W(1) - omega| " << w1 << ", log branch " << worst_log;
  return {"lambert_w", worst < 1e-12 && w1 < 1e-12 && worst_log < 1e-12, os.str()};
}

SuiteResult suite_hamiltonian(const SelftestOptions& o) {
  LinearSineCoefficients c;
  c.a = (Mat(2, 2) << -1.0, 0.4, 0.2, -0.5).finished();
  c.b = (Mat(2, 1) << 1.0, 0.5).finished();
  c.sigma = (Mat(2, 2) << 0.3, 0.0, 0.1, 0.2).finished();
  c.q = Mat::Identity(2, 2);
  c.r = Mat::Identity(1, 1);
  c.h = Mat::Identity(2, 2) * 0.5;
  c.sine_amplitude = 0.7;
  c.sine_frequency = 2.0;
  auto p = make_linear_sine_problem(c, 1.0, 0.3, Vec::Zero(2), NonsmoothCost::zero());
  std::mt19937_64 rng(o.seed + 1);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  auto rv = [&](int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = u(rng);
    return v;
  };
  double worst = 0.0;
  const double h = 1e-5;
  for (int s = 0; s < 50; ++s) {
    const double t = 0.5 * (u(rng) + 1.5) / 1.5;
    const Vec x = rv(2), a = rv(1), y = rv(2);
    const Mat z = Mat::Random(2, 2);
    const Vec ga = grad_a_hamiltonian_re(p, t, x, a, y);
    for (int i = 0; i < 1; ++i) {
      Vec ap = a, am = a;
      ap(i) += h;
      am(i) -= h;
      const double fd = (hamiltonian_re(p, t, x, ap, y) - hamiltonian_re(p, t, x, am, y)) / (2 * h);
      worst = std::max(worst, std::abs(fd - ga(i)) / (1.0 + std::abs(ga(i))));
    }
    const Vec gx = grad_x_hamiltonian(p, t, x, a, y, z);
    for (int i = 0; i < 2; ++i) {
      Vec xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double fd = (hamiltonian(p, t, xp, a, y, z) - hamiltonian(p, t, xm, a, y, z)) / (2 * h);
      worst = std::max(worst, std::abs(fd - gx(i)) / (1.0 + std::abs(gx(i))));
    }
  }
  std::ostringstream os;
  os << "max relative finite-difference mismatch " << worst;
  return {"hamiltonian_fd", worst < 1e-6, os.str()};
}

SuiteResult suite_m_alpha_beta(const SelftestOptions&) {
  double worst = 0.0;
  const double alphas[] = {-3.0, -0.5, 0.0, 0.4, 2.0};
  const double betas[] = {-4.0, -1.0, 0.0, 1e-12, 0.7, 3.0};
  for (double T : {0.3, 1.0, 2.5})
    for (double al : alphas)
      for (double be : betas) {
        double brute = 0.0;
        for (int i = 0; i <= 20000; ++i) {
          const double s = T * i / 20000.0;
          const double q = std::abs(be) < 1e-14 ? s : std::expm1(be * s) / be;
          brute = std::max(brute, std::exp(2 * al * s) * q);
        }
        const double m = m_alpha_beta(T, al, be);
        worst = std::max(worst, std::abs(m - brute) / std::max(1.0, brute));
      }
  std::ostringstream os;
  os << "max relative gap to brute force " << worst;
  return {"m_alpha_beta", worst < 1e-6, os.str()};
}

}  // namespace

std::vector<SuiteResult> run_selftest(const SelftestOptions& opts) {
  std::vector<SuiteResult> out;
  const std::pair<const char*, SuiteResult (*)(const SelftestOptions&)> suites[] = {
      {"prox_oracle", suite_prox},
      {"lambert_w", suite_lambert},
      {"hamiltonian_fd", suite_hamiltonian},
      {"m_alpha_beta", suite_m_alpha_beta}};
  for (const auto& [name, fn] : suites) {
    try {
      out.push_back(fn(opts));
    } catch (const std::exception& e) {
      out.push_back({name, false, e.what()});
    }
  }
  return out;
}

}  // namespace ppgm
