#include <CLI11.hpp>

#include <iostream>

#include "mpfio/cli/runner.hpp"
#include "mpfio/lattice.hpp"
#include "mpfio/region.hpp"

using namespace mpfio;
using namespace mpfio::cli;

namespace {

int export_atom(const std::string& path, const std::string& out) {
  auto config = Config::load(resolve_config_path(path));
  View v(config, {"export"});
  auto grid = build_grid(v);
  auto atom = build_atom(v, grid, static_cast<std::uint64_t>(v.integer("run.seed", 1)));
  write_field_file(out, atom.samples);
  std::cout << describe_atom(atom) << "\n";
  return 0;
}

int export_mask(const std::string& path, const std::string& out, int factor) {
  auto config = Config::load(resolve_config_path(path));
  View v(config, {"export"});
  auto grid = build_grid(v);
  if (factor < 0 || factor >= grid.space().factors()) {
    std::cerr << "error: factor " << factor << " out of range\n";
    return 1;
  }
  auto phase = build_phase(v, grid.space());
  auto atom = build_atom(v, grid, static_cast<std::uint64_t>(v.integer("run.seed", 1)));
  double C = v.number("influence_C", 4.0);
  int J = static_cast<int>(v.integer("J", max_truncation_level(grid, factor)));
  auto Q = influence_region(phase, atom, factor, C, J);
  write_field_file(out, mask_field(grid, factor, Q.mask));
  std::cout << "factor " << factor << ": " << Q.members << " rectangles, volume " << Q.volume << ", |Q|/r "
            << Q.ratio << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-parameter Fourier integral operator experiments"};
  app.require_subcommand(1);

  std::string config, out, filter;
  int workers = 0, factor = 0;
  std::uint64_t seed = 0;

  auto* run_cmd = app.add_subcommand("run", "run the experiments listed in a config");
  run_cmd->add_option("config_pos", config, "config file");
  run_cmd->add_option("--config", config, "config file");
  run_cmd->add_option("--out", out, "output directory (overrides run.out)");
  run_cmd->add_option("--workers", workers, "worker threads (default: MPFIO_WORKERS or all cores)")
      ->check(CLI::PositiveNumber);
  auto* seed_opt = run_cmd->add_option("--seed", seed, "seed for every experiment without its own");
  run_cmd->add_option("--filter", filter, "glob on experiment ids");

  auto* list_cmd = app.add_subcommand("list-experiments", "print experiment names and descriptions");

  auto* validate_cmd = app.add_subcommand("validate-config", "check a config without running it");
  validate_cmd->add_option("config_pos", config, "config file");
  validate_cmd->add_option("--config", config, "config file");

  auto* atom_cmd = app.add_subcommand("export-atom", "write the configured atom as a field file");
  atom_cmd->add_option("--config", config, "config file")->required();
  atom_cmd->add_option("--out", out, "output field file")->required();

  auto* mask_cmd = app.add_subcommand("export-mask", "write an influence region mask as a field file");
  mask_cmd->add_option("--config", config, "config file")->required();
  mask_cmd->add_option("--out", out, "output field file")->required();
  mask_cmd->add_option("--factor", factor, "factor index");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list_cmd) {
      for (const auto& e : list_experiments()) std::cout << e.name << "\t" << e.description << "\n";
      return 0;
    }
    if (*run_cmd || *validate_cmd) {
      if (config.empty()) {
        std::cerr << "error: no config given\n";
        return 1;
      }
    }
    if (*run_cmd) {
      RunOptions o;
      o.out_dir = out;
      o.workers = workers;
      o.filter = filter;
      if (*seed_opt) o.seed = seed;
      return run(config, o, std::cout, std::cerr);
    }
    if (*validate_cmd) {
      try {
        auto plan = make_plan(Config::load(resolve_config_path(config)));
        std::cout << "ok: " << plan.jobs.size() << " experiments\n";
        return 0;
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
      }
    }
    if (*atom_cmd) return export_atom(config, out);
    if (*mask_cmd) return export_mask(config, out, factor);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
