#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nolab/acceptance.hpp"
#include "nolab/io.hpp"
#include "nolab/reports.hpp"

namespace nolab {

/// One experiment's outcome. Artifacts are (file name, content) pairs written by the runner.
struct ExperimentResult {
  std::string name;
  std::string op;
  std::vector<std::string> failures;
  json summary = json::object();
  std::vector<std::pair<std::string, std::string>> artifacts;

  bool ok() const { return failures.empty(); }
};

struct RunOptions {
  std::optional<std::string> out_dir;  // no directory: nothing is written
  int jobs = 1;
  std::optional<std::uint64_t> seed;   // replaces the config and per-experiment sampling seeds
  std::filesystem::path base_dir = ".";  // relative object paths resolve here
};

struct RunOutcome {
  int exit_code = 0;  // 0 pass, 1 config error, 2 assertion failure
  std::vector<ExperimentResult> results;
  json report;
};

namespace experiments {

struct Context {
  const json& exp;
  std::uint64_t seed;
  std::shared_ptr<const Space> space;  // config-level fallback
  std::filesystem::path base_dir;
};

inline json resolve(const json& j, const std::filesystem::path& base) {
  if (!j.is_string()) return j;
  const std::filesystem::path p = base / j.get<std::string>();
  return read_json_file(p.string());
}

inline NeuralOperatorLayer layer_of(const Context& c, const std::string& key = "layer") {
  return layer_from_json(resolve(require(c.exp, key, c.exp.value("name", "experiment")), c.base_dir), c.space);
}

inline std::string to_csv(const std::function<void(std::ostream&)>& write) {
  std::ostringstream os;
  write(os);
  return os.str();
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::vector<int> dims_or_default(const json& exp, int M) {
  auto dims = get_or<std::vector<int>>(exp, "dims", {});
  if (dims.empty())
    for (int d = 1; d <= M; d *= 2) dims.push_back(d);
  for (int d : dims)
    if (d < 1 || d > M) throw ConfigError("dims must lie in [1, " + std::to_string(M) + "]");
  return dims;
}

// ---------------------------------------------------------------------------

/// Small-gain certificate plus the sampled alpha of every prefix; a rejected certificate is a recorded outcome.
inline ExperimentResult monotone_check(const Context& c) {
  check_keys(c.exp, {"name", "op", "seed", "layer", "count", "radius", "samples", "dims"}, "monotone-check");
  ExperimentResult res;
  const int count = get_or(c.exp, "count", 1);
  const double r = get_or(c.exp, "radius", 1.0);
  const int n = get_or(c.exp, "samples", 64);
  json layer_doc = resolve(require(c.exp, "layer", "monotone-check"), c.base_dir);
  if (count > 1 && !layer_doc.contains("generator")) throw ConfigError("monotone-check: count needs a generator layer");
  json layers = json::array();
  int rejected = 0;
  double min_alpha = INFINITY;
  for (int i = 0; i < count; ++i) {
    json doc = layer_doc;
    if (count > 1) doc["seed"] = require_seed(layer_doc, "layer") + static_cast<std::uint64_t>(i);
    const auto L = layer_from_json(doc, c.space);
    const int M = L.ambient_dim();
    const auto cert = small_gain_certificate(L);
    const json cj = to_json(cert);
    json entry{{"index", i}, {"certificate", cj}, {"certificate_hash", content_hash(cj)}, {"rows", json::array()}};
    rejected += cert.rejected;
    for (int d : dims_or_default(c.exp, M)) {
      const auto xs = sample_ball_prefix(M, d, r, n, 1.0, c.seed + 7919 * i + d);
      const double a = pairwise_alpha_points(linearize(L.as_map(), d).as_map(), xs).alpha;
      entry["rows"].push_back({{"dim", d}, {"alpha_hat", a}});
      min_alpha = std::min(min_alpha, a);
      if (cert.certified() && a < cert.alpha - 1e-6)
        res.failures.push_back("layer " + std::to_string(i) + ": sampled alpha " + std::to_string(a) +
                               " below certificate at d=" + std::to_string(d));
    }
    layers.push_back(entry);
  }
  res.summary = {{"layers", count}, {"rejected_certificates", rejected}, {"min_alpha_hat", min_alpha}};
  res.artifacts.emplace_back("monotone.json", dump({{"schema", kSchemaVersion}, {"radius", r}, {"samples", n},
                                                    {"seed", c.seed}, {"layers", layers}}));
  return res;
}

/// Convergence table; the "-> 0" reading is the final-dim threshold plus a strictly decreasing trend.
inline ExperimentResult discretize_scan(const Context& c) {
  check_keys(c.exp, {"name", "op", "seed", "layer", "dims", "radius", "samples", "threshold", "require_convergence"},
             "discretize-scan");
  ExperimentResult res;
  const auto L = layer_of(c);
  const int M = L.ambient_dim();
  const double r = get_or(c.exp, "radius", 1.0), thr = get_or(c.exp, "threshold", 1e-3);
  const int n = get_or(c.exp, "samples", 32);
  const auto rep = convergence_scan(L.as_map(), M, dims_or_default(c.exp, M), r, n, c.seed);
  const bool decreasing = rep.functor_error_strictly_decreasing();
  const double last = rep.rows.back().functor_a_error;
  if (get_or(c.exp, "require_convergence", false)) {
    if (!decreasing) res.failures.push_back("functor error is not strictly decreasing");
    if (!(last < thr)) res.failures.push_back("final functor error " + std::to_string(last) + " above threshold");
  }
  res.summary = {{"strictly_decreasing", decreasing}, {"final_functor_error", last}};
  res.artifacts.emplace_back("scan.csv", to_csv([&](std::ostream& os) { rep.write_csv(os); }));
  res.artifacts.emplace_back("scan.meta.json", dump({{"schema", kSchemaVersion}, {"ambient_dim", M}, {"radius", r},
                                                     {"samples", n}, {"seed", c.seed}, {"threshold", thr},
                                                     {"strictly_decreasing", decreasing}}));
  return res;
}

inline json decomposition_json(const Decomposition& D, double composite_error) {
  const auto& g = D.diagnostics();
  json blocks = json::array();
  for (const auto& b : D.blocks())
    blocks.push_back({{"kind", b.kind}, {"lip", b.lip}, {"alpha", b.alpha}, {"det_at_zero", b.det_at_zero},
                      {"t_from", b.t_from}, {"t_to", b.t_to}});
  return {{"J", D.J()},
          {"epsilon", D.epsilon()},
          {"radius", D.r1()},
          {"reflected", D.reflected()},
          {"tail_block", D.has_tail()},
          {"composite_error", composite_error},
          {"blocks", blocks},
          {"diagnostics",
           {{"w_dim", g.w_dim}, {"h", g.h}, {"tails", std::vector<double>(g.tails, g.tails + 4)},
            {"c0", g.c0}, {"c1", g.c1}, {"constants_certified", g.constants_certified},
            {"c2_estimate", g.c2_estimate}, {"R0", g.R0}, {"R1", g.R1}, {"R2", g.R2}, {"t1_bound", g.t1_bound},
            {"proof_grid_bound", g.proof_grid_bound}, {"t_grid", g.t_grid}, {"rotation_steps", g.rotation_steps},
            {"stretch_steps", g.stretch_steps}, {"linear_reconstruction_error", g.linear_reconstruction_error}}}};
}

inline ExperimentResult decompose_op(const Context& c) {
  check_keys(c.exp, {"name", "op", "seed", "layer", "epsilon", "radius", "lip_samples", "composite_samples",
                     "composite_tol"},
             "decompose");
  ExperimentResult res;
  const json layer_doc = resolve(require(c.exp, "layer", "decompose"), c.base_dir);
  const auto L = layer_from_json(layer_doc, c.space);
  const double eps = require(c.exp, "epsilon", "decompose").get<double>();
  const double r1 = get_or(c.exp, "radius", 1.0);
  if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("decompose: epsilon must lie in (0,1)");
  DecomposeOptions opt;
  opt.lip_samples = get_or(c.exp, "lip_samples", opt.lip_samples);
  opt.seed = c.seed;
  const auto D = decompose(L, eps, r1, opt);
  const double err = D.composite_error(get_or(c.exp, "composite_samples", 200), c.seed + 1);
  for (std::size_t k = 0; k < D.blocks().size(); ++k)
    if (!(D.blocks()[k].lip < eps)) res.failures.push_back("block " + std::to_string(k) + " sampled Lip above epsilon");
  if (err > get_or(c.exp, "composite_tol", 1e-6)) res.failures.push_back("composite error " + std::to_string(err));
  json out = decomposition_json(D, err);
  // everything needed to rebuild the same composite deterministically
  out["evaluator"] = {{"layer", layer_doc}, {"epsilon", eps}, {"radius", r1}, {"seed", c.seed},
                      {"lip_samples", opt.lip_samples}, {"inversion_tol", opt.inversion_tol},
                      {"order", "blocks applied first to last after the linear factors"}};
  out["schema"] = kSchemaVersion;
  res.summary = {{"J", D.J()}, {"composite_error", err}};
  res.artifacts.emplace_back("decomposition.json", dump(out));
  return res;
}

inline json trace_json(const InversionTrace& tr) {
  json blocks = json::array();
  for (const auto& b : tr.blocks)
    blocks.push_back({{"iterations", b.iterations}, {"a_priori_bound", b.a_priori_bound},
                      {"final_residual", b.final_residual}, {"residuals", b.residuals}});
  return blocks;
}

inline ExperimentResult invert_op(const Context& c) {
  check_keys(c.exp, {"name", "op", "seed", "chain", "y", "samples", "radius", "tol", "max_iter", "roundtrip_tol",
                     "expect_refusal"},
             "invert");
  ExperimentResult res;
  const auto doc = chain_from_json(resolve(require(c.exp, "chain", "invert"), c.base_dir));
  const bool expect_refusal = get_or(c.exp, "expect_refusal", false);
  if (!doc.delta) throw ConfigError("invert: chain needs delta");
  std::optional<InvertibleResidualChain> G;
  try {
    G.emplace(doc.chain, *doc.delta, doc.ball_radius);
  } catch (const std::invalid_argument& e) {
    res.summary = {{"certified", false}, {"reason", e.what()}};
    if (!expect_refusal) res.failures.push_back(std::string("chain refused: ") + e.what());
    return res;
  }
  if (expect_refusal) res.failures.push_back("chain was certified but refusal was expected");
  const int M = doc.ambient_dim ? doc.ambient_dim : doc.chain.N();
  const auto A = doc.A == "identity" ? LinearOperatorExpr::identity() : LinearOperatorExpr::reflection(Vec::Unit(M, 0));
  FixedPointOptions opt;
  opt.tol = get_or(c.exp, "tol", opt.tol);
  opt.max_iter = get_or(c.exp, "max_iter", opt.max_iter);
  const double rt = get_or(c.exp, "roundtrip_tol", 1e-6);
  std::vector<Vec> ys;
  if (c.exp.contains("y")) {
    ys.push_back(vec_from_json(resolve(c.exp.at("y"), c.base_dir)));
  } else {
    ys = sample_ball(M, get_or(c.exp, "radius", 1.0), get_or(c.exp, "samples", 10), 0.0, c.seed);
  }
  json items = json::array();
  double worst = 0.0;
  for (const auto& y : ys) {
    if (y.size() < doc.chain.N()) throw ConfigError("invert: y is shorter than the chain width");
    InversionTrace tr;
    const Vec x = chain_inverse(*G, A, y, opt, &tr);
    const double e = (G->operator()(A.apply(x)) - y).norm();
    worst = std::max(worst, e);
    items.push_back({{"y", to_json(y)}, {"x", to_json(x)}, {"residual", e}, {"trace", trace_json(tr)}});
  }
  if (worst > rt) res.failures.push_back("forward residual " + std::to_string(worst));
  res.summary = {{"certified", true}, {"max_residual", worst}};
  res.artifacts.emplace_back("inverse.json", dump({{"schema", kSchemaVersion}, {"tol", opt.tol}, {"items", items}}));
  return res;
}

inline ExperimentResult nogo_galerkin(const Context& c) {
  check_keys(c.exp, {"name", "op", "seed", "kind", "n", "basis", "grid", "bisect_tol", "expect_singular"},
             "nogo-galerkin");
  ExperimentResult res;
  const auto k = get_or<std::string>(c.exp, "kind", "a");
  if (k != "a" && k != "b") throw ConfigError("nogo-galerkin: kind must be a or b");
  const PathKind kind = k == "a" ? PathKind::A : PathKind::B;
  const auto b = get_or<std::string>(c.exp, "basis", k == "a" ? "fourier" : "hat");
  if (b != "fourier" && b != "hat") throw ConfigError("nogo-galerkin: basis must be fourier or hat");
  const int n = get_or(c.exp, "n", 5);
  if (n < 1) throw ConfigError("nogo-galerkin: n must be positive");
  const auto sc = singularity_scan(kind, n, b == "fourier" ? PathBasis::fourier : PathBasis::hat,
                                   uniform_grid(0.0, 1.0, get_or(c.exp, "grid", 41)), get_or(c.exp, "bisect_tol", 1e-12));
  if (get_or(c.exp, "expect_singular", true) && !sc.found) res.failures.push_back("no singular point found");
  res.summary = {{"found", sc.found}, {"s_star", sc.s_star}, {"det_at_star", sc.det_at_star},
                 {"min_sv_at_star", sc.min_sv_at_star}, {"sign_at_start", sc.sign_at_start},
                 {"sign_at_end", sc.sign_at_end}};
  res.artifacts.emplace_back("galerkin.csv", to_csv([&](std::ostream& os) { write_singularity_csv(os, sc); }));
  json meta = res.summary;
  meta["bracket"] = {sc.s_lo, sc.s_hi};
  meta["schema"] = kSchemaVersion;
  res.artifacts.emplace_back("galerkin.meta.json", dump(meta));
  return res;
}

inline ExperimentResult nogo_isotopy(const Context& c) {
  check_keys(c.exp, {"name", "op", "seed", "m", "grid", "k_max", "bisect_tol"}, "nogo-isotopy");
  ExperimentResult res;
  const int m = get_or(c.exp, "m", 7);
  if (m < 1) throw ConfigError("nogo-isotopy: m must be positive");
  const auto sc = truncated_det_scan(m, isotopy_grid(get_or(c.exp, "grid", 101), get_or(c.exp, "k_max", m)),
                                     get_or(c.exp, "bisect_tol", 1e-12));
  // t-values where the compression is the restriction of the full operator
  double first_end = 0.0, second_start = 1.0;
  for (const auto& r : sc.rows) {
    if (r.faithful && r.t <= 0.5) first_end = std::max(first_end, r.t);
    if (r.faithful && r.t > 0.5) second_start = std::min(second_start, r.t);
  }
  if (m % 2 == 1) {
    if (!(sc.rows.front().det > 0 && sc.rows.back().det < 0)) res.failures.push_back("endpoint determinants");
    if (sc.crossings.empty()) res.failures.push_back("no determinant crossing");
  }
  json crossings = json::array();
  for (std::size_t i = 0; i < sc.crossings.size(); ++i)
    crossings.push_back({{"lo", sc.crossings[i].first}, {"hi", sc.crossings[i].second}, {"abs_det", sc.crossing_dets[i]}});
  res.summary = {{"crossings", crossings.size()}};
  res.artifacts.emplace_back("isotopy.csv", to_csv([&](std::ostream& os) { write_isotopy_csv(os, sc); }));
  res.artifacts.emplace_back("isotopy.meta.json",
                             dump({{"schema", kSchemaVersion}, {"m", m}, {"crossings", crossings},
                                   {"step", "quintic smoothstep"},
                                   {"faithful_t_ranges", {{0.0, first_end}, {second_start, 1.0}}}}));
  return res;
}

inline ExperimentResult fem_solve(const Context& c) {
  check_keys(c.exp, {"name", "op", "seed", "g", "meshes", "refine", "ratio_range", "check_rate"}, "fem-solve");
  ExperimentResult res;
  ConvexNonlinearity g;
  try {
    g = ConvexNonlinearity::from_name(get_or<std::string>(c.exp, "g", "zero"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("fem-solve: ") + e.what());
  }
  const auto meshes = get_or<std::vector<int>>(c.exp, "meshes", {16, 32, 64, 128});
  for (int n : meshes)
    if (n < 2) throw ConfigError("fem-solve: meshes need at least two elements");
  const auto p = manufactured_sine(g);
  const auto rows = fem_convergence(p.source, g, meshes, get_or(c.exp, "refine", 8), p.exact, p.exact_derivative);
  const auto range = get_or<std::vector<double>>(c.exp, "ratio_range", {1.7, 2.3});
  if (range.size() != 2) throw ConfigError("fem-solve: ratio_range needs two values");
  if (get_or(c.exp, "check_rate", true))
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].ratio < range[0] || rows[i].ratio > range[1])
        res.failures.push_back("H1 ratio " + std::to_string(rows[i].ratio) + " at " + std::to_string(rows[i].elements));
  for (int n : meshes) {
    const auto s = solve_semilinear(p.source, FemMesh(n, BoundaryCondition::dirichlet_dirichlet), g);
    for (std::size_t k = 1; k < s.energies.size(); ++k)
      if (s.energies[k] > s.energies[k - 1]) {
        res.failures.push_back("Newton energy increased on mesh " + std::to_string(n));
        break;
      }
  }
  res.summary = {{"g", g.name}, {"meshes", meshes.size()}};
  res.artifacts.emplace_back("fem.csv", to_csv([&](std::ostream& os) { write_fem_csv(os, rows); }));
  return res;
}

inline ExperimentResult quant_report_op(const Context& c) {
  check_keys(c.exp, {"name", "op", "seed", "layer", "dims", "radius", "samples"}, "quant-report");
  ExperimentResult res;
  const auto L = layer_of(c);
  const int M = L.ambient_dim();
  const double r = get_or(c.exp, "radius", 1.0);
  const int n = get_or(c.exp, "samples", 32);
  const auto rep = quant_report(L.as_map(), M, dims_or_default(c.exp, M), r, n, c.seed);
  res.summary = {{"rows", rep.rows.size()}};
  res.artifacts.emplace_back("quant.csv", to_csv([&](std::ostream& os) { rep.write_csv(os); }));
  res.artifacts.emplace_back("quant.meta.json", dump({{"schema", kSchemaVersion}, {"note", QuantReport::header_note},
                                                      {"radius", r}, {"samples", n}, {"seed", c.seed}}));
  return res;
}

inline ExperimentResult accept_op(const Context& c) {
  check_keys(c.exp, {"name", "op", "seed", "criteria"}, "accept");
  ExperimentResult res;
  const auto ids = get_or<std::vector<int>>(c.exp, "criteria", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  const auto suite = acceptance_suite();
  json rows = json::array();
  std::string text;
  for (int id : ids) {
    if (id < 1 || id > static_cast<int>(suite.size())) throw ConfigError("accept: unknown criterion " + std::to_string(id));
    const auto r = run_criterion(suite[id - 1]);
    rows.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    text += format_result(r) + "\n";
    if (!r.pass) res.failures.push_back("criterion " + std::to_string(r.id) + ": " + r.detail);
  }
  res.summary = {{"criteria", rows}};
  res.artifacts.emplace_back("acceptance.txt", text);
  return res;
}

using Op = ExperimentResult (*)(const Context&);

inline Op find_op(const std::string& op) {
  static const std::vector<std::pair<std::string, Op>> table{
      {"monotone-check", monotone_check}, {"discretize-scan", discretize_scan}, {"decompose", decompose_op},
      {"invert", invert_op},              {"nogo-galerkin", nogo_galerkin},     {"nogo-isotopy", nogo_isotopy},
      {"fem-solve", fem_solve},           {"quant-report", quant_report_op},    {"accept", accept_op}};
  for (const auto& [name, fn] : table)
    if (name == op) return fn;
  throw ConfigError("unknown op '" + op + "'");
}

}  // namespace experiments

/// Validate and run every experiment. Config errors abort before anything runs.
inline RunOutcome run_config(const json& config, const RunOptions& opt = {}) {
  using namespace experiments;
  RunOutcome out;
  struct Job {
    json exp;
    std::string name;
    Op fn;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  std::shared_ptr<const Space> space;
  try {
    check_keys(config, {"schema", "name", "seed", "space", "experiments"}, "config");
    check_schema(config, "config");
    const std::uint64_t seed = opt.seed ? *opt.seed : require_seed(config, "config");
    if (config.contains("space")) space = space_from_json(config.at("space"));
    const json exps = get_or<json>(config, "experiments", json::array());
    if (!exps.is_array()) throw ConfigError("config: experiments must be an array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < exps.size(); ++i) {
      const json& e = exps[i];
      if (!e.is_object()) throw ConfigError("config: experiment " + std::to_string(i) + " is not an object");
      const std::string name = get_or<std::string>(e, "name", "exp" + std::to_string(i));
      if (!names.insert(name).second) throw ConfigError("config: duplicate experiment name " + name);
      if (name.find('/') != std::string::npos) throw ConfigError("config: experiment names cannot contain '/'");
      const auto es = opt.seed ? *opt.seed : (e.contains("seed") ? e.at("seed").get<std::uint64_t>() : seed);
      jobs.push_back({e, name, find_op(require(e, "op", name).get<std::string>()), es});
    }
  } catch (const ConfigError& e) {
    out.exit_code = 1;
    out.report = {{"status", "config_error"}, {"error", e.what()}};
    return out;
  } catch (const json::exception& e) {
    out.exit_code = 1;
    out.report = {{"status", "config_error"}, {"error", e.what()}};
    return out;
  }

  auto run_one = [&](const Job& j) {
    ExperimentResult r;
    try {
      r = j.fn(Context{j.exp, j.seed, space, opt.base_dir});
    } catch (const ConfigError&) {
      throw;
    } catch (const json::exception& e) {
      throw ConfigError(j.name + ": " + e.what());
    } catch (const std::exception& e) {
      r.failures.push_back(std::string("error: ") + e.what());
    }
    r.name = j.name;
    r.op = j.exp.at("op").get<std::string>();
    return r;
  };
  const std::size_t width = static_cast<std::size_t>(std::max(1, opt.jobs));
  try {
    for (std::size_t i = 0; i < jobs.size(); i += width) {
      std::vector<std::future<ExperimentResult>> batch;
      for (std::size_t k = i; k < std::min(jobs.size(), i + width); ++k)
        batch.push_back(std::async(width == 1 ? std::launch::deferred : std::launch::async, run_one, std::cref(jobs[k])));
      for (auto& f : batch) out.results.push_back(f.get());
    }
  } catch (const ConfigError& e) {
    out.exit_code = 1;
    out.results.clear();
    out.report = {{"status", "config_error"}, {"error", e.what()}};
    return out;
  }

  json exps = json::array();
  bool failed = false;
  for (const auto& r : out.results) {
    json files = json::array();
    for (const auto& a : r.artifacts) files.push_back(r.name + "/" + a.first);
    exps.push_back({{"name", r.name}, {"op", r.op}, {"pass", r.ok()}, {"failures", r.failures}, {"summary", r.summary},
                    {"artifacts", files}});
    failed |= !r.ok();
  }
  out.exit_code = failed ? 2 : 0;
  out.report = {{"status", failed ? "assertion_failure" : "pass"}, {"experiments", exps}};

  if (opt.out_dir && !out.results.empty()) {
    namespace fs = std::filesystem;
    for (const auto& r : out.results) {
      const fs::path dir = fs::path(*opt.out_dir) / r.name;
      fs::create_directories(dir);
      for (const auto& [file, content] : r.artifacts) std::ofstream(dir / file, std::ios::binary) << content;
    }
    std::ofstream(fs::path(*opt.out_dir) / "report.json") << out.report.dump(2) << '\n';
  }
  return out;
}

}  // namespace nolab
