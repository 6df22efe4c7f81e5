// nolab: batch front end. Every subcommand builds (or loads) an experiment config and hands it to run_config.
// Exit codes: 0 pass, 1 config error, 2 assertion failure.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "nolab/experiments.hpp"

namespace fs = std::filesystem;
using nolab::json;

namespace {

struct Common {
  std::string config;
  std::string out;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config (JSON)");
  app->add_option("--out", c.out, "output directory, or a file for single-artifact subcommands");
  app->add_option("--jobs", c.jobs, "experiments run concurrently")->check(CLI::PositiveNumber);
  app->add_option("--seed", c.seed, "override every sampling seed");
}

/// A single experiment built from flags; flag mode seeds default to 1.
json single(json exp, const Common& c) {
  exp["name"] = exp.value("name", exp.at("op").get<std::string>());
  return {{"schema", nolab::kSchemaVersion}, {"seed", c.seed.value_or(1)}, {"experiments", json::array({exp})}};
}

/// --out naming a file (has an extension) receives the primary artifact; anything else is a directory.
int finish(const nolab::RunOutcome& r, const Common& c, bool print_artifact) {
  const bool to_file = !c.out.empty() && fs::path(c.out).has_extension();
  if (r.exit_code != 1 && r.results.size() == 1 && !r.results[0].artifacts.empty() && (to_file || print_artifact)) {
    const auto& primary = r.results[0].artifacts.front().second;
    if (to_file) {
      if (fs::path(c.out).has_parent_path()) fs::create_directories(fs::path(c.out).parent_path());
      std::ofstream(c.out, std::ios::binary) << primary;
    } else {
      std::cout << primary;
    }
  }
  std::cerr << r.report.dump(2) << '\n';
  return r.exit_code;
}

int run(const json& config, const Common& c, fs::path base, bool print_artifact = false) {
  nolab::RunOptions opt;
  const bool to_file = !c.out.empty() && fs::path(c.out).has_extension();
  if (!c.out.empty() && !to_file) opt.out_dir = c.out;
  opt.jobs = c.jobs;
  opt.seed = c.seed;
  opt.base_dir = std::move(base);
  return finish(nolab::run_config(config, opt), c, print_artifact && c.out.empty());
}

fs::path dir_of(const std::string& path) {
  const auto p = fs::path(path).parent_path();
  return p.empty() ? fs::path(".") : p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nolab: discretization and invertibility experiments for neural operator layers"};
  app.require_subcommand(1);

  // run: a full experiment config
  Common run_c;
  auto* run_cmd = app.add_subcommand("run", "run every experiment of a config");
  add_common(run_cmd, run_c);
  run_cmd->get_option("--config")->required();

  Common mono_c;
  std::string mono_layer;
  double mono_radius = 1.0;
  int mono_samples = 64;
  auto* mono = app.add_subcommand("monotone-check", "certificate and sampled monotonicity per prefix");
  add_common(mono, mono_c);
  mono->add_option("--layer", mono_layer, "layer JSON");

  Common disc_c;
  std::string disc_layer;
  std::vector<int> disc_dims;
  auto* disc = app.add_subcommand("discretize-scan", "discretization error table");
  add_common(disc, disc_c);
  disc->add_option("--layer", disc_layer, "layer JSON");
  disc->add_option("--dims", disc_dims, "prefix dimensions");
  for (auto* s : {mono, disc}) {
    s->add_option("--radius", mono_radius, "sampling radius");
    s->add_option("--samples", mono_samples, "sample count");
  }

  Common dec_c;
  std::string dec_layer;
  double dec_eps = 0.25, dec_radius = 1.0;
  auto* dec = app.add_subcommand("decompose", "factor a layer into near-identity blocks");
  add_common(dec, dec_c);
  dec->add_option("--layer", dec_layer, "layer JSON");
  dec->add_option("--epsilon", dec_eps, "per-block Lipschitz target");
  dec->add_option("--radius", dec_radius, "ball radius r1");

  Common inv_c;
  std::string inv_chain, inv_y;
  double inv_tol = 1e-10;
  int inv_max_iter = 10000;
  auto* inv = app.add_subcommand("invert", "invert a residual chain by fixed-point iteration");
  add_common(inv, inv_c);
  inv->add_option("--chain", inv_chain, "chain JSON");
  inv->add_option("--y", inv_y, "JSON array with the right-hand side");
  inv->add_option("--tol", inv_tol, "step tolerance");
  inv->add_option("--max-iter", inv_max_iter, "iteration cap per block");

  Common gal_c;
  std::string gal_kind = "a";
  int gal_n = 5, gal_grid = 41;
  double gal_tol = 1e-12;
  auto* gal = app.add_subcommand("nogo-galerkin", "determinant scan of a Galerkin operator path");
  add_common(gal, gal_c);
  gal->add_option("--kind", gal_kind, "a or b")->check(CLI::IsMember({"a", "b"}));
  gal->add_option("--n", gal_n, "Galerkin dimension");
  gal->add_option("--grid", gal_grid, "grid points in s");
  gal->add_option("--bisect-tol", gal_tol, "bisection tolerance");

  Common iso_c;
  int iso_m = 7, iso_grid = 101;
  auto* iso = app.add_subcommand("nogo-isotopy", "determinant scan of a truncated isotopy");
  add_common(iso, iso_c);
  iso->add_option("--m", iso_m, "truncation dimension");
  iso->add_option("--grid", iso_grid, "uniform grid points in t");

  Common fem_c;
  std::string fem_g = "zero";
  std::vector<int> fem_mesh{16, 32, 64, 128};
  auto* fem = app.add_subcommand("fem-solve", "semilinear FEM convergence table");
  add_common(fem, fem_c);
  fem->add_option("--g", fem_g, "zero, linear or cubic")->check(CLI::IsMember({"zero", "linear", "cubic"}));
  fem->add_option("--mesh", fem_mesh, "element counts");

  Common quant_c;
  std::string quant_layer;
  std::vector<int> quant_dims;
  auto* quant = app.add_subcommand("quant-report", "measured error next to network-size bounds");
  add_common(quant, quant_c);
  quant->add_option("--layer", quant_layer, "layer JSON");
  quant->add_option("--dims", quant_dims, "prefix dimensions");

  Common acc_c;
  std::vector<int> acc_ids;
  auto* acc = app.add_subcommand("accept", "run the acceptance suite");
  add_common(acc, acc_c);
  acc->add_option("--criteria", acc_ids, "criterion ids (default all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    // a --config on any subcommand runs that config as-is
    for (auto [cmd, c] : std::vector<std::pair<CLI::App*, Common*>>{
             {run_cmd, &run_c}, {mono, &mono_c}, {disc, &disc_c}, {dec, &dec_c}, {inv, &inv_c}, {gal, &gal_c},
             {iso, &iso_c}, {fem, &fem_c}, {quant, &quant_c}, {acc, &acc_c}})
      if (cmd->parsed() && !c->config.empty()) return run(nolab::read_json_file(c->config), *c, dir_of(c->config));

    auto need = [](const std::string& v, const char* flag) {
      if (v.empty()) throw nolab::ConfigError(std::string(flag) + " is required without --config");
      return v;
    };
    const fs::path cwd = ".";
    if (mono->parsed())
      return run(single({{"op", "monotone-check"}, {"layer", need(mono_layer, "--layer")}, {"radius", mono_radius},
                         {"samples", mono_samples}},
                        mono_c),
                 mono_c, cwd, true);
    if (disc->parsed()) {
      json e{{"op", "discretize-scan"}, {"layer", need(disc_layer, "--layer")}, {"radius", mono_radius},
             {"samples", mono_samples}};
      if (!disc_dims.empty()) e["dims"] = disc_dims;
      return run(single(e, disc_c), disc_c, cwd, true);
    }
    if (dec->parsed())
      return run(single({{"op", "decompose"}, {"layer", need(dec_layer, "--layer")}, {"epsilon", dec_eps},
                         {"radius", dec_radius}},
                        dec_c),
                 dec_c, cwd, true);
    if (inv->parsed()) {
      json e{{"op", "invert"}, {"chain", need(inv_chain, "--chain")}, {"tol", inv_tol}, {"max_iter", inv_max_iter}};
      if (!inv_y.empty()) e["y"] = inv_y;
      return run(single(e, inv_c), inv_c, cwd, true);
    }
    if (gal->parsed())
      return run(single({{"op", "nogo-galerkin"}, {"kind", gal_kind}, {"n", gal_n}, {"grid", gal_grid},
                         {"bisect_tol", gal_tol}},
                        gal_c),
                 gal_c, cwd, true);
    if (iso->parsed())
      return run(single({{"op", "nogo-isotopy"}, {"m", iso_m}, {"grid", iso_grid}}, iso_c), iso_c, cwd, true);
    if (fem->parsed())
      return run(single({{"op", "fem-solve"}, {"g", fem_g}, {"meshes", fem_mesh}}, fem_c), fem_c, cwd, true);
    if (quant->parsed()) {
      json e{{"op", "quant-report"}, {"layer", need(quant_layer, "--layer")}};
      if (!quant_dims.empty()) e["dims"] = quant_dims;
      return run(single(e, quant_c), quant_c, cwd, true);
    }
    if (acc->parsed()) {
      json e{{"op", "accept"}};
      if (!acc_ids.empty()) e["criteria"] = acc_ids;
      return run(single(e, acc_c), acc_c, cwd, true);
    }
  } catch (const nolab::ConfigError& e) {
    std::cerr << json{{"status", "config_error"}, {"error", e.what()}}.dump(2) << '\n';
    return 1;
  }
  return 1;
}
