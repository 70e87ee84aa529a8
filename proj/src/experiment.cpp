#include "sddnewton/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "sddnewton/baselines.hpp"
#include "sddnewton/errors.hpp"
#include "sddnewton/newton.hpp"
#include "sddnewton/problems.hpp"

namespace sddnewton {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("field '" + where + "': expected an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError("field '" + (where.empty() ? key : where + "." + key) + "': unknown key");
}

std::set<std::string> keys_of(const json& j) {
  std::set<std::string> out;
  for (const auto& [key, _] : j.items()) out.insert(key);
  return out;
}

template <typename T>
T field(const json& j, const std::string& key, const T& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + (where.empty() ? key : where + "." + key) + "': wrong type (" +
                      j.at(key).type_name() + ")");
  }
}

template <typename T>
T positive(T v, const std::string& path) {
  if (!(v > 0)) throw ConfigError("field '" + path + "': must be > 0");
  return v;
}

const std::set<std::string> kAlgorithms{"sdd_newton", "admm", "averaging", "subgradient"};

}  // namespace

json ExperimentConfig::to_json() const {
  json algs = json::array();
  for (const auto& a : algorithms) algs.push_back({{"name", a.name}, {"params", a.params}});
  json g = {{"n", graph.n}, {"m", graph.m}, {"seed", graph.seed}};
  if (!graph.file.empty()) g["file"] = graph.file;
  json p = {{"kind", problem.kind},
            {"p", problem.p},
            {"total_points", problem.total_points},
            {"noise_sigma", problem.noise_sigma},
            {"mu", problem.mu},
            {"seed", problem.seed},
            {"alpha", problem.alpha},
            {"trajectories_per_node", problem.trajectories_per_node},
            {"horizon", problem.horizon}};
  if (!problem.manifest.empty()) p["manifest"] = problem.manifest;
  return {{"schema_version", schema_version},
          {"graph", g},
          {"problem", p},
          {"algorithms", algs},
          {"output_dir", output_dir},
          {"message_unit", to_string(message_unit)},
          {"objective_tol", objective_tol}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  reject_unknown(j, {"schema_version", "graph", "problem", "algorithms", "output_dir", "message_unit", "objective_tol"},
                 "");
  ExperimentConfig c;
  c.schema_version = field(j, "schema_version", 0, "");
  if (c.schema_version != 1)
    throw ConfigError("field 'schema_version': unsupported version " + std::to_string(c.schema_version) +
                      " (expected 1)");

  const json g = field(j, "graph", json::object(), "");
  reject_unknown(g, {"n", "m", "seed", "file"}, "graph");
  c.graph.file = field(g, "file", std::string{}, "graph");
  c.graph.n = field(g, "n", c.graph.n, "graph");
  c.graph.m = field(g, "m", c.graph.m, "graph");
  c.graph.seed = field(g, "seed", c.graph.seed, "graph");
  if (c.graph.file.empty()) {
    positive(c.graph.n, "graph.n");
    positive(c.graph.m, "graph.m");
  }

  const json p = field(j, "problem", json::object(), "");
  reject_unknown(p,
                 {"kind", "p", "total_points", "noise_sigma", "mu", "seed", "alpha", "trajectories_per_node",
                  "horizon", "manifest"},
                 "problem");
  auto& ps = c.problem;
  ps.kind = field(p, "kind", ps.kind, "problem");
  if (!std::set<std::string>{"regression", "logistic", "logistic_l1", "rl"}.count(ps.kind))
    throw ConfigError("field 'problem.kind': unknown kind '" + ps.kind + "'");
  ps.p = positive(field(p, "p", ps.p, "problem"), "problem.p");
  ps.total_points = positive(field(p, "total_points", ps.total_points, "problem"), "problem.total_points");
  ps.noise_sigma = field(p, "noise_sigma", ps.noise_sigma, "problem");
  if (ps.noise_sigma < 0) throw ConfigError("field 'problem.noise_sigma': must be >= 0");
  ps.mu = positive(field(p, "mu", ps.mu, "problem"), "problem.mu");
  ps.seed = field(p, "seed", ps.seed, "problem");
  ps.alpha = positive(field(p, "alpha", ps.alpha, "problem"), "problem.alpha");
  ps.trajectories_per_node =
      positive(field(p, "trajectories_per_node", ps.trajectories_per_node, "problem"), "problem.trajectories_per_node");
  ps.horizon = positive(field(p, "horizon", ps.horizon, "problem"), "problem.horizon");
  ps.manifest = field(p, "manifest", std::string{}, "problem");

  const json algs = field(j, "algorithms", json::array(), "");
  if (!algs.is_array() || algs.empty()) throw ConfigError("field 'algorithms': must be a non-empty list");
  for (std::size_t k = 0; k < algs.size(); ++k) {
    const std::string where = "algorithms[" + std::to_string(k) + "]";
    reject_unknown(algs[k], {"name", "params"}, where);
    AlgorithmSpec a;
    a.name = field(algs[k], "name", std::string{}, where);
    if (!kAlgorithms.count(a.name)) throw ConfigError("field '" + where + ".name': unknown algorithm '" + a.name + "'");
    a.params = field(algs[k], "params", json::object(), where);
    const std::set<std::string> allowed =
        a.name == "sdd_newton" ? keys_of(NewtonConfig{}.to_json()) : keys_of(BaselineConfig{}.to_json());
    reject_unknown(a.params, allowed, where + ".params");
    try {
      if (a.name == "sdd_newton")
        (void)NewtonConfig::from_json(a.params);
      else
        (void)BaselineConfig::from_json(a.params);
    } catch (const json::exception& ex) {
      throw ConfigError("field '" + where + ".params': " + ex.what());
    } catch (const ConfigError& ex) {
      throw ConfigError("field '" + where + ".params': " + ex.what());
    }
    c.algorithms.push_back(std::move(a));
  }

  c.output_dir = field(j, "output_dir", c.output_dir, "");
  try {
    c.message_unit = message_unit_from_string(field(j, "message_unit", to_string(c.message_unit), ""));
  } catch (const ConfigError& ex) {
    throw ConfigError(std::string("field 'message_unit': ") + ex.what());
  }
  c.objective_tol = positive(field(j, "objective_tol", c.objective_tol, ""), "objective_tol");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& ex) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < ex.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + ex.what());
  }
  return from_json(j);
}

std::vector<std::string> preset_names() { return {"synthetic-regression-small", "paper-synthetic"}; }

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  json newton = {{"eps0", 0.1}, {"step_mode", "grid"}};
  if (name == "synthetic-regression-small") {
    c.graph = {20, 40, 1, ""};
    c.problem.kind = "regression";
    c.problem.p = 5;
    c.problem.total_points = 400;
    c.problem.noise_sigma = 1.0;
    c.problem.seed = 2;
    c.output_dir = "out/synthetic-regression-small";
  } else if (name == "paper-synthetic") {
    c.graph = {100, 250, 1, ""};
    c.problem.kind = "regression";
    c.problem.p = 80;
    c.problem.total_points = 20000;
    c.problem.noise_sigma = 1.0;
    c.problem.seed = 2;
    c.output_dir = "out/paper-synthetic";
    newton["max_iters"] = 200;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  c.algorithms = {{"sdd_newton", newton},
                  {"admm", json::object()},
                  {"averaging", json::object()},
                  {"subgradient", json::object()}};
  if (name == "paper-synthetic") {
    for (std::size_t k = 1; k < c.algorithms.size(); ++k) c.algorithms[k].params["max_iters"] = 300;
  } else {
    // Constant-step gradient methods need a long horizon to shrink their bias.
    for (std::size_t k = 2; k < c.algorithms.size(); ++k)
      c.algorithms[k].params = {{"max_iters", 10000}, {"pilot_iters", 10000}};
  }
  return c;
}

ProblemInstance build_experiment_instance(const ExperimentConfig& cfg) {
  const auto& ps = cfg.problem;
  std::optional<ProblemInstance> inst;
  if (!ps.manifest.empty()) {
    inst = load_manifest(ps.manifest);
  } else {
    std::optional<Graph> graph;
    if (!cfg.graph.file.empty()) {
      std::ifstream in(cfg.graph.file);
      if (!in) throw ConfigError("cannot open graph file " + cfg.graph.file);
      try {
        graph = Graph::from_json(json::parse(in));
      } catch (const json::exception& ex) {
        throw ConfigError("graph file " + cfg.graph.file + ": " + ex.what());
      }
    } else {
      graph = generate_random_graph(cfg.graph.n, cfg.graph.m, cfg.graph.seed);
    }
    const int n = graph->num_nodes();
    Dataset data;
    data.kind = ps.kind;
    if (ps.kind == "regression")
      data.nodes = generate_synthetic_regression(n, ps.p, ps.total_points, ps.noise_sigma, ps.seed);
    else if (ps.kind == "rl")
      data.rl_nodes = generate_synthetic_rl(n, ps.p, ps.trajectories_per_node, ps.horizon, ps.seed);
    else
      data.nodes = generate_synthetic_logistic(n, ps.p, ps.total_points, ps.seed);
    inst = build_instance(std::move(*graph), data, ps.mu, ps.alpha);
  }
  if (inst->p <= 2000)
    attach_reference(*inst);
  else
    std::cerr << "warning: p = " << inst->p << " is too large for the centralized reference; gaps omitted\n";
  return std::move(*inst);
}

std::optional<std::size_t> first_row_meeting(const ProblemInstance& inst, const RunTrace& trace, double tol) {
  if (!inst.reference) return std::nullopt;
  const double fstar = inst.reference->value;
  const double scale = std::sqrt(static_cast<double>(inst.graph.num_edges())) * std::max(inst.reference->theta.norm(), 1e-300);
  for (std::size_t k = 0; k < trace.rows.size(); ++k) {
    const auto& r = trace.rows[k];
    const double gap = std::abs(r.objective - fstar) / std::max(std::abs(fstar), 1e-300);
    if (gap <= tol && r.consensus_error / scale <= tol) return k;
  }
  return std::nullopt;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_files) {
  if (cfg.algorithms.empty()) throw ConfigError("field 'algorithms': must be a non-empty list");
  const ProblemInstance inst = build_experiment_instance(cfg);
  if (write_files) fs::create_directories(cfg.output_dir);

  ExperimentResult result;
  std::set<std::string> used;
  json algs = json::array();
  for (const auto& spec : cfg.algorithms) {
    AlgorithmResult ar;
    ar.name = spec.name;
    for (int k = 2; used.count(ar.name); ++k) ar.name = spec.name + "_" + std::to_string(k);
    used.insert(ar.name);

    json params = spec.params;
    params["message_unit"] = to_string(cfg.message_unit);
    if (spec.name == "sdd_newton") {
      ar.trace = run_newton(inst, NewtonConfig::from_json(params));
    } else {
      const BaselineKind kind = baseline_kind_from_string(spec.name);
      json merged = BaselineConfig::defaults_for(kind).to_json();
      merged.update(params);
      ar.trace = run_baseline(kind, inst, BaselineConfig::from_json(merged));
    }
    ar.trace.config_hash = stable_hash(cfg.to_json().dump() + "/" + ar.name);

    const auto& last = ar.trace.rows.back();
    ar.total_messages = last.messages_cumulative;
    ar.final_consensus = last.consensus_error;
    ar.final_gap = inst.reference ? relative_objective_gap(inst, ar.trace.final_theta)
                                  : std::numeric_limits<double>::quiet_NaN();
    if (auto row = first_row_meeting(inst, ar.trace, cfg.objective_tol)) {
      ar.iterations_to_tolerance = ar.trace.rows[*row].iter;
      ar.messages_to_tolerance = ar.trace.rows[*row].messages_cumulative;
    }
    if (write_files) {
      ar.csv_path = (fs::path(cfg.output_dir) / (ar.name + ".csv")).string();
      ar.trace.write(ar.csv_path, (fs::path(cfg.output_dir) / (ar.name + ".json")).string());
    }

    auto opt = [](const auto& o) -> json { return o ? json(*o) : json(nullptr); };
    auto num = [](double x) -> json { return std::isfinite(x) ? json(x) : json(nullptr); };
    algs.push_back({{"name", ar.name},
                    {"iterations", last.iter},
                    {"iterations_to_tolerance", opt(ar.iterations_to_tolerance)},
                    {"messages_to_tolerance", opt(ar.messages_to_tolerance)},
                    {"final_objective", num(last.objective)},
                    {"final_gap", num(ar.final_gap)},
                    {"final_consensus_error", num(ar.final_consensus)},
                    {"total_messages", ar.total_messages},
                    {"csv", ar.csv_path},
                    {"details", ar.trace.extra}});
    result.algorithms.push_back(std::move(ar));
  }

  json instance = {{"n", inst.n()},
                   {"edges", inst.graph.num_edges()},
                   {"p", inst.p},
                   {"kind", inst.kind},
                   {"mu2", inst.spectrum.mu2},
                   {"muN", inst.spectrum.muN},
                   {"gamma", inst.gamma},
                   {"Gamma", inst.Gamma},
                   {"delta", inst.delta}};
  if (inst.reference)
    instance["reference_objective"] = inst.reference->value;
  else
    instance["reference_objective"] = nullptr;
  result.summary = {{"config_hash", stable_hash(cfg.to_json().dump())},
                    {"config", cfg.to_json()},
                    {"instance", instance},
                    {"objective_tol", cfg.objective_tol},
                    {"message_unit", to_string(cfg.message_unit)},
                    {"algorithms", algs}};
  if (write_files) {
    std::ofstream out(fs::path(cfg.output_dir) / "summary.json");
    out << result.summary.dump(2) << '\n';
  }
  return result;
}

}  // namespace sddnewton
