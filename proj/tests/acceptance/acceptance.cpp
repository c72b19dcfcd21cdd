// Runs the acceptance matrix and prints one PASS/FAIL line per criterion.
// Exit status is 0 only when every criterion passes.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mpfio/symbol.hpp"
#include "mpfio/verify.hpp"

#ifdef MPFIO_HAVE_CLI
#include "mpfio/cli/runner.hpp"
#endif

using namespace mpfio;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> lines;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "ok    " : "FAIL  ") + what);
  }
  void info(const std::string& what) { lines.push_back("      " + what); }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// ---------------------------------------------------------------- criteria

Outcome partition_identities() {
  Outcome o;
  auto r = partition_check({});
  o.require(r.criterion("radial"), "radial partition defect " + fmt(r.scalar("radial_defect")) + " <= 1e-12");
  o.require(r.criterion("angular"), "angular partition defect " + fmt(r.scalar("angular_defect")) + " <= 1e-12");
  return o;
}

Outcome atoms() {
  Outcome o;
  auto r = atom_validity({});
  o.require(r.passed(), "100 random atoms, failures " + fmt(r.scalar("failed")) + ", max l2 ratio " +
                            fmt(r.scalar("max_l2_ratio"), 12) + ", max cancellation defect " +
                            fmt(r.scalar("max_cancel_defect")));
  return o;
}

Outcome inversion() {
  Outcome o;
  auto r = inversion_check({});
  o.require(r.criterion("identity"), "identity relative error " + fmt(r.scalar("identity_error")) + " up to 128^2");
  o.require(r.criterion("translation"),
            "translation relative error " + fmt(r.scalar("translation_error")) + " up to 128^2");
  return o;
}

Outcome consistency() {
  Outcome o;
  {
    auto g = make_grid(ProductSpace({1, 1}), 1.0, 32);
    auto op = make_operator(SymbolSpec::critical(g.space(), 0.8), PhaseSpec::halfwave(g.space()), g);
    auto r = decomposition_consistency(op, {});
    o.require(r.passed(), "dims (1,1) halfwave: levels " + fmt(r.scalar("levels_defect")) + ", sectors " +
                              fmt(r.scalar("sectors_defect")));
  }
  {
    auto g = make_grid(ProductSpace({2}), 1.0, 24);
    auto op = make_operator(SymbolSpec::critical(g.space(), 0.8), PhaseSpec::perturbed(g.space(), 0.1), g);
    ConsistencyOptions c;
    c.path = ApplyPath::direct;
    auto r = decomposition_consistency(op, c);
    o.require(r.passed(), "n=2 perturbed, direct path: levels " + fmt(r.scalar("levels_defect")) + ", sectors " +
                              fmt(r.scalar("sectors_defect")));
  }
  return o;
}

Outcome factorized() {
  Outcome o;
  auto r = factorized_check({});
  o.require(r.criterion("matches_direct"),
            "20 specs, max relative error " + fmt(r.scalar("max_relative_error")) + " <= 1e-10");
  double speedup = 0.0;
  for (const auto& [name, v] : r.timings())
    if (name == "speedup") speedup = v;
  o.require(r.criterion("speedup"), "speedup at 64 points per axis " + fmt(speedup, 3) + "x >= 4x");
  return o;
}

Outcome l2_norms() {
  Outcome o;
  struct Case {
    std::string label;
    OperatorSpec op;
    ApplyPath path;
  };
  std::vector<Case> cases;
  {
    auto g = make_grid(ProductSpace({2}), 1.0, 16);
    cases.push_back({"identity 16^2", make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g),
                     ApplyPath::automatic});
  }
  {
    auto g = make_grid(ProductSpace({2}), 1.0, 32);
    cases.push_back({"halfwave critical 32^2",
                     make_operator(SymbolSpec::critical(g.space(), 0.8), PhaseSpec::halfwave(g.space()), g),
                     ApplyPath::direct});
  }
  {
    auto g = make_grid(ProductSpace({1, 1}), 1.0, 32);
    cases.push_back({"dims (1,1) halfwave critical 32^2",
                     make_operator(SymbolSpec::critical(g.space(), 0.8), PhaseSpec::halfwave(g.space()), g),
                     ApplyPath::multiplier});
  }
  {
    auto g = make_grid(ProductSpace({2}), 1.0, 24);
    cases.push_back({"perturbed rough symbol 24^2",
                     make_operator(SymbolSpec::rough_rho(g.space(), 0.75, 0.8), PhaseSpec::perturbed(g.space(), 0.1), g),
                     ApplyPath::direct});
  }
  for (auto& c : cases) {
    L2Options opt;
    opt.path = c.path;
    auto r = l2_norm_report(c.op, opt);
    o.require(r.passed() && r.has_scalar("dense_rel_diff"),
              c.label + ": power " + fmt(r.scalar("norm"), 10) + " vs dense " + fmt(r.scalar("dense_norm"), 10) +
                  ", rel diff " + fmt(r.scalar("dense_rel_diff")));
  }
  auto build = [](int pts) {
    auto g = make_grid(ProductSpace({2}), 1.0, pts);
    return make_operator(SymbolSpec::critical(g.space(), 0.8), PhaseSpec::halfwave(g.space()), g);
  };
  auto r = l2_refinement(build, 32, {});
  o.require(r.passed(), "halfwave critical 32^2 -> 64^2: " + fmt(r.scalar("norm_coarse"), 6) + " -> " +
                            fmt(r.scalar("norm_fine"), 6) + ", drift x" + fmt(r.scalar("drift"), 4) + " <= 1.5");
  return o;
}

Outcome regions() {
  Outcome o;
  for (int n : {1, 2}) {
    auto g = n == 1 ? make_grid(ProductSpace({1}), 4.5, 4096) : make_grid(ProductSpace({2}), 4.5, 1024);
    for (const auto& phase : {PhaseSpec::identity(g.space()), PhaseSpec::halfwave(g.space())}) {
      auto r = region_measure(phase, g, {});
      o.require(r.passed(), "n=" + std::to_string(n) + " " + phase.tag() + ": |Q|/r drift x" +
                                fmt(r.scalar("drift"), 4) + " <= 2 over k=1..5");
    }
  }
  return o;
}

Outcome majorization() {
  Outcome o;
  MajorizationOptions m;
  m.C = 2.0;
  m.offsets = {0, 1, 2, 3, 4};
  {
    auto g = make_grid(ProductSpace({1}), 4.0, 4096);
    auto atom = make_tensor_atom(g, midpoint_center(g), {0.125}, AtomProfile::odd_bump);
    for (const auto& phase : {PhaseSpec::identity(g.space()), PhaseSpec::halfwave(g.space()),
                              PhaseSpec::perturbed(g.space(), 0.1, 3.0)}) {
      auto op = make_operator(SymbolSpec::bump_const(g.space(), 3.0), phase, g);
      auto r = majorization_sweep(op, atom, m);
      o.require(r.passed(), "n=1 " + phase.tag() + ": slope " + fmt(r.scalar("slope_above_k")) + " <= -0.8");
    }
  }
  {
    auto g = make_grid(ProductSpace({2}), 2.0, 2048);
    auto atom = make_tensor_atom(g, midpoint_center(g), {0.125}, AtomProfile::odd_bump);
    for (const auto& phase : {PhaseSpec::identity(g.space()), PhaseSpec::halfwave(g.space())}) {
      auto op = make_operator(SymbolSpec::critical(g.space(), 1.5), phase, g);
      auto r = majorization_sweep(op, atom, m);
      o.require(r.passed(), "n=2 " + phase.tag() + ": slope " + fmt(r.scalar("slope_above_k")) + " <= -0.8");
    }
  }
  return o;
}

Outcome endpoint() {
  Outcome o;
  struct Geometry {
    std::string label;
    std::vector<int> dims;
  };
  for (const auto& geo : {Geometry{"n=2 halfwave 128^2", {2}}, Geometry{"dims (1,1) halfwave 128^2", {1, 1}}}) {
    auto g = make_grid(ProductSpace(geo.dims), 0.75, 128);
    const auto& sp = g.space();
    H1L1Options h;
    h.enforce_guard = false;
    auto crit = h1l1_sweep(make_operator(SymbolSpec::critical(sp, 8.0), PhaseSpec::halfwave(sp), g), h);
    o.require(crit.passed(), geo.label + " critical: slope " + fmt(crit.scalar("slope"), 3) + " +- " +
                                 fmt(crit.scalar("slope_stderr"), 2) + ", max/min " +
                                 fmt(crit.scalar("max_min_ratio"), 3));
    H1L1Options s = h;
    s.expect = Expectation::growth;
    // order gap 1/2 above critical on every factor
    auto order = critical_order(sp);
    for (auto& m : order) m += 0.5;
    auto super = h1l1_sweep(make_operator(SymbolSpec::bessel_power(sp, order, 8.0), PhaseSpec::halfwave(sp), g), s);
    o.require(super.passed(), geo.label + " supercritical control: slope " + fmt(super.scalar("slope"), 3) + " >= 0.25");
    o.info(geo.label + ": largest truncation defect " + fmt(crit.scalar("max_truncation_defect"), 3) +
           " (guard not enforced at this grid)");
  }
  return o;
}

Outcome kernel_decay() {
  Outcome o;
  auto r = bessel_decay({});
  o.require(r.passed(), "n=2 exponent " + fmt(r.scalar("exponent"), 4) + ", target -1.5 +- 0.15");
  BesselOptions three;
  three.n = 3;
  three.points = 256;
  three.extent = 0.25;
  three.level = 7;
  three.finest = 6;
  three.coarsest = 3;
  three.tolerance = 0.2;
  auto r3 = bessel_decay(three);
  o.info("n=3 exponent " + fmt(r3.scalar("exponent"), 4) + ", target -2.0 (reported)");
  return o;
}

Outcome determinism() {
  Outcome o;
  auto once = [] {
    std::string all;
    PartitionOptions p;
    p.samples = 2000;
    all += partition_check(p).to_json();
    auto g = make_grid(ProductSpace({2}), 0.75, 64);
    H1L1Options h;
    h.enforce_guard = false;
    h.ks = {0, 1, 2, 3};
    h.profile = AtomProfile::random_mix;
    h.seed = 7;
    all += h1l1_sweep(make_operator(SymbolSpec::critical(g.space(), 8.0), PhaseSpec::halfwave(g.space()), g), h)
               .to_json();
    AtomValidityOptions a;
    a.count = 10;
    all += atom_validity(a).to_json();
    return all;
  };
  o.require(once() == once(), "in-process reports byte-identical");
#ifdef MPFIO_HAVE_CLI
  namespace fs = std::filesystem;
  auto base = fs::temp_directory_path() / "mpfio_acceptance_det";
  fs::remove_all(base);
  std::ostringstream log, err;
  bool same = true;
  for (const char* run : {"a", "b"}) {
    cli::RunOptions opt;
    opt.out_dir = (base / run).string();
    opt.seed = 11;
    if (cli::run(std::string(MPFIO_CONFIG_DIR) + "/identity_sanity.conf", opt, log, err) != 0) same = false;
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(base / "a")) {
    auto name = entry.path().filename().string();
    if (name.find(".timing.") != std::string::npos) continue;
    std::ifstream fa(entry.path(), std::ios::binary), fb(base / "b" / name, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    same = same && fb && sa.str() == sb.str();
    ++compared;
  }
  o.require(same && compared > 0, "two runs of identity_sanity: " + std::to_string(compared) +
                                      " report files byte-identical (timing files excluded)");
#endif
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> all = {
      {1, "partition identities", 5, partition_identities},
      {2, "atom validity", 30, atoms},
      {3, "identity and translation oracles", 60, inversion},
      {4, "decomposition consistency", 120, consistency},
      {5, "factorized path oracle", 300, factorized},
      {6, "L2 norms", 300, l2_norms},
      {7, "region measure", 180, regions},
      {8, "majorization decay", 600, majorization},
      {9, "endpoint bound at desk scale", 1200, endpoint},
      {10, "kernel decay", 120, kernel_decay},
      {11, "determinism", 60, determinism},
  };
  std::vector<int> only;
  for (int a = 1; a < argc; ++a) only.push_back(std::atoi(argv[a]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.require(false, std::string("threw: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.require(secs <= c.budget_s, "runtime " + fmt(secs, 3) + " s <= " + fmt(c.budget_s, 4) + " s");
    std::cout << (out.pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.name << "\n";
    for (const auto& l : out.lines) std::cout << "        " << l << "\n";
    std::cout.flush();
    if (!out.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
