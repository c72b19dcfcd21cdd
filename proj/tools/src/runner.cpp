#include "mpfio/cli/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <thread>

#include "mpfio/parallel.hpp"
#include "mpfio/region.hpp"

namespace mpfio::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<ExperimentInfo> kExperiments = {
    {"l2_norm", "power-iteration operator norm, dense singular value on small grids"},
    {"l2_refinement", "operator norm at two grid resolutions"},
    {"majorization_sweep", "mixed norm of T_j a outside the influence region per level offset"},
    {"h1l1_sweep", "L1 norm of T a over dyadic atom sizes with fitted slope"},
    {"sector_localization", "mass of a sector kernel outside dilated rectangles"},
    {"bessel_decay", "radial decay exponent of the (1+|xi|^2)^{-(n-1)/4} kernel"},
    {"psi_bound_sweep", "phase remainder and its scaled difference quotients per level"},
    {"region_measure", "influence region measure over r_i per atom size"},
    {"partition_identities", "radial and angular partitions of unity"},
    {"atom_validity", "randomized rectangle atoms against normalization, support and cancellation"},
    {"decomposition_consistency", "levels and sectors sum back to the operator"},
    {"inversion_check", "identity and translation phases on band-limited inputs"},
    {"factorized_oracle", "factorized apply against the direct apply, with timing"},
};

bool known_kind(const std::string& kind) {
  return std::any_of(kExperiments.begin(), kExperiments.end(), [&](const auto& e) { return e.name == kind; });
}

ApplyPath parse_path(const View& v, const std::string& key, ApplyPath fallback) {
  if (!v.has(key)) return fallback;
  auto s = v.text(key);
  if (s == "direct") return ApplyPath::direct;
  if (s == "factorized") return ApplyPath::factorized;
  if (s == "multiplier") return ApplyPath::multiplier;
  if (s == "automatic") return ApplyPath::automatic;
  v.fail(key, "unknown path '" + s + "' (direct, factorized, multiplier, automatic)");
}

std::vector<int> parse_dims(const View& v) {
  auto dims = v.integers("space.dims", {1});
  for (int n : dims)
    if (n < 1 || n > 3) v.fail("space.dims", "factor dimensions must be 1, 2 or 3");
  if (dims.size() > 4) v.fail("space.dims", "at most 4 factors");
  return dims;
}

template <class T>
std::vector<T> per_axis(const View& v, const std::string& key, std::vector<T> values, std::size_t axes) {
  if (values.size() == 1) values.assign(axes, values.front());
  if (values.size() != axes) v.fail(key, "need 1 or " + std::to_string(axes) + " values");
  return values;
}

LatticeGrid grid_with(const View& v, std::optional<int> points_override) {
  ProductSpace sp(parse_dims(v));
  const auto axes = static_cast<std::size_t>(sp.total_dim());
  auto extent = per_axis(v, "grid.extent", v.numbers("grid.extent", {1.0}), axes);
  auto points = points_override ? std::vector<int>(axes, *points_override)
                                : per_axis(v, "grid.points", v.integers("grid.points", {32}), axes);
  for (double e : extent)
    if (!(e > 0.0)) v.fail("grid.extent", "extent must be positive");
  for (int p : points)
    if (p < 8 || p % 2 != 0) v.fail("grid.points", "points must be even and at least 8, got " + std::to_string(p));
  return make_grid(sp, extent, points);
}

std::string scope_kind(const std::string& id) { return id.substr(0, id.find('@')); }

double positive(const View& v, const std::string& key, double fallback) {
  double x = v.number(key, fallback);
  if (!(x > 0.0)) v.fail(key, "must be positive");
  return x;
}

std::size_t count(const View& v, const std::string& key, long long fallback, long long minimum = 1) {
  long long x = v.integer(key, fallback);
  if (x < minimum) v.fail(key, "must be at least " + std::to_string(minimum));
  return static_cast<std::size_t>(x);
}

OperatorSpec operator_with(const View& v, std::optional<int> points_override) {
  auto g = grid_with(v, points_override);
  const ProductSpace& sp = g.space();
  auto phase = build_phase(v, sp);

  auto tag = v.text("symbol.tag", "critical");
  double radius = positive(v, "symbol.radius", 1.0);
  std::optional<SymbolSpec> sym;
  if (tag == "unit") sym = SymbolSpec::unit(sp);
  else if (tag == "bump_const") sym = SymbolSpec::bump_const(sp, radius);
  else if (tag == "critical") sym = SymbolSpec::critical(sp, radius);
  else if (tag == "bessel_power" || tag == "bessel_multiplier") {
    auto m = per_axis(v, "symbol.order", v.numbers("symbol.order"), static_cast<std::size_t>(sp.factors()));
    sym = tag == "bessel_power" ? SymbolSpec::bessel_power(sp, m, radius) : SymbolSpec::bessel_multiplier(sp, m);
  } else if (tag == "rough_rho") {
    double rho = v.number("symbol.rho", 0.75);
    if (!(rho > 0.5 && rho <= 1.0)) v.fail("symbol.rho", "rho must lie in (1/2, 1]");
    sym = SymbolSpec::rough_rho(sp, rho, radius);
  } else {
    v.fail("symbol.tag", "unknown symbol '" + tag + "' (unit, bump_const, critical, bessel_power, bessel_multiplier, rough_rho)");
  }
  if (tag != "bessel_power" && tag != "bessel_multiplier" && v.has("symbol.order"))
    sym = sym->with_order(per_axis(v, "symbol.order", v.numbers("symbol.order"), static_cast<std::size_t>(sp.factors())));

  auto trunc_s = v.text("operator.truncation", "sharp");
  Truncation trunc = Truncation::sharp;
  if (trunc_s == "smooth") trunc = Truncation::smooth;
  else if (trunc_s != "sharp") v.fail("operator.truncation", "expected sharp or smooth");

  std::vector<int> levels;
  const auto d = static_cast<std::size_t>(sp.factors());
  if (v.text("operator.levels", "max") == "max") {
    for (int i = 0; i < sp.factors(); ++i) levels.push_back(max_truncation_level(g, i));
  } else {
    levels = per_axis(v, "operator.levels", v.integers("operator.levels"), d);
    for (int i = 0; i < sp.factors(); ++i) {
      int top = max_truncation_level(g, i);
      if (levels[static_cast<std::size_t>(i)] < 0 || levels[static_cast<std::size_t>(i)] > top)
        v.fail("operator.levels", "level " + std::to_string(levels[static_cast<std::size_t>(i)]) + " on factor " +
                                      std::to_string(i) + " outside [0, " + std::to_string(top) + "] for this grid");
    }
  }
  auto op = make_operator(*sym, phase, g, levels, trunc);
  op.sector_spacing_scale = positive(v, "operator.sector_spacing_scale", 1.0);
  return op;
}

ExperimentReport timed(const std::function<ExperimentReport()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  auto r = body();
  r.timing("wall", std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  return r;
}

Job bind(const Config& config, const std::string& id, std::uint64_t run_seed, std::set<std::string>& used) {
  const std::string kind = scope_kind(id);
  View v(config, {id, kind}, &used);
  const std::uint64_t seed = static_cast<std::uint64_t>(v.integer("seed", static_cast<long long>(run_seed)));
  Job job{id, kind, {}};

  if (kind == "l2_norm") {
    auto op = operator_with(v, std::nullopt);
    L2Options o;
    o.iterations = count(v, "iterations", 20, 20);
    o.max_iterations = count(v, "max_iterations", 100000, static_cast<long long>(o.iterations));
    o.tolerance = positive(v, "tolerance", o.tolerance);
    o.dense_limit = count(v, "dense_limit", 1024, 0);
    o.path = parse_path(v, "path", ApplyPath::automatic);
    o.seed = seed;
    job.run = [op, o] { return l2_norm_report(op, o); };
  } else if (kind == "l2_refinement") {
    int coarse = static_cast<int>(count(v, "coarse_points", 32, 8));
    if (coarse % 2) v.fail("coarse_points", "must be even");
    operator_with(v, coarse);
    auto keep = std::make_shared<const Config>(config);
    auto build = [keep, id, kind](int pts) { return operator_with(View(*keep, {id, kind}), pts); };
    L2Options o;
    o.iterations = count(v, "iterations", 20, 20);
    o.path = parse_path(v, "path", ApplyPath::automatic);
    o.seed = seed;
    double drift = positive(v, "drift_limit", 1.5);
    job.run = [build, coarse, o, drift] { return l2_refinement(build, coarse, o, drift); };
  } else if (kind == "majorization_sweep") {
    auto op = operator_with(v, std::nullopt);
    auto atom = build_atom(v, op.grid, seed);
    MajorizationOptions o;
    if (v.has("I"))
      for (int i : v.integers("I")) {
        if (i < 0 || i >= op.grid.space().factors()) v.fail("I", "factor index out of range");
        o.I.insert(i);
      }
    o.C = positive(v, "influence_C", o.C);
    o.offsets = v.integers("offsets", o.offsets);
    o.slope_limit = v.number("slope_limit", o.slope_limit);
    o.path = parse_path(v, "path", o.path);
    job.run = [op, atom, o] { return majorization_sweep(op, atom, o); };
  } else if (kind == "h1l1_sweep") {
    auto op = operator_with(v, std::nullopt);
    H1L1Options o;
    o.ks = v.integers("ks", o.ks);
    if (o.ks.size() < 4) v.fail("ks", "need at least 4 atom sizes");
    if (v.has("atom.profile")) {
      try {
        o.profile = parse_profile(v.text("atom.profile"));
      } catch (const Error& e) {
        v.fail("atom.profile", e.what());
      }
    }
    o.seed = seed;
    if (v.has("atom.center")) o.center = per_axis(v, "atom.center", v.numbers("atom.center"), static_cast<std::size_t>(op.grid.axes()));
    o.defect_guard = positive(v, "defect_guard", o.defect_guard);
    o.enforce_guard = v.flag("enforce_guard", o.enforce_guard);
    auto expect = v.text("expect", "bounded");
    if (expect == "bounded") o.expect = Expectation::bounded;
    else if (expect == "growth") o.expect = Expectation::growth;
    else if (expect == "decay") o.expect = Expectation::decay;
    else v.fail("expect", "expected bounded, growth or decay");
    o.slope_limit = v.number("slope_limit", o.slope_limit);
    o.ratio_limit = positive(v, "ratio_limit", o.ratio_limit);
    o.path = parse_path(v, "path", o.path);
    job.run = [op, o] { return h1l1_sweep(op, o); };
  } else if (kind == "sector_localization") {
    auto op = operator_with(v, std::nullopt);
    LocalizationOptions o;
    o.factor = static_cast<int>(v.integer("factor", 0));
    if (o.factor < 0 || o.factor >= op.grid.space().factors()) v.fail("factor", "factor index out of range");
    o.level = static_cast<int>(v.integer("level", o.level));
    if (o.level < 2 || o.level > op.levels[static_cast<std::size_t>(o.factor)])
      v.fail("level", "level must lie in [2, " + std::to_string(op.levels[static_cast<std::size_t>(o.factor)]) + "]");
    o.nu = count(v, "nu", 0, 0);
    o.C = positive(v, "influence_C", o.C);
    o.lambdas = v.numbers("lambdas", o.lambdas);
    o.far_lambda = v.number("far_lambda", o.far_lambda);
    o.far_limit = v.number("far_limit", o.far_limit);
    o.drop_factor = v.number("drop_factor", o.drop_factor);
    o.path = parse_path(v, "path", o.path);
    job.run = [op, o] { return sector_localization(op, o); };
  } else if (kind == "bessel_decay") {
    BesselOptions o;
    o.n = static_cast<int>(v.integer("n", o.n));
    if (o.n < 1 || o.n > 3) v.fail("n", "must be 1, 2 or 3");
    o.points = static_cast<int>(v.integer("points", o.points));
    if (o.points < 8 || o.points % 2) v.fail("points", "points must be even and at least 8");
    o.extent = positive(v, "extent", o.extent);
    o.level = static_cast<int>(v.integer("level", o.level));
    o.finest = static_cast<int>(v.integer("finest", o.finest));
    o.coarsest = static_cast<int>(v.integer("coarsest", o.coarsest));
    o.tolerance = positive(v, "tolerance", o.tolerance);
    o.control = v.flag("control", false);
    job.run = [o] { return bessel_decay(o); };
  } else if (kind == "psi_bound_sweep") {
    ProductSpace sp(parse_dims(v));
    auto phase = build_phase(v, sp);
    PsiOptions o;
    o.factor = static_cast<int>(v.integer("factor", 0));
    if (o.factor < 0 || o.factor >= sp.factors()) v.fail("factor", "factor index out of range");
    o.jmin = static_cast<int>(v.integer("jmin", o.jmin));
    o.jmax = static_cast<int>(v.integer("jmax", o.jmax));
    if (o.jmin < 0 || o.jmax < o.jmin) v.fail("jmax", "need 0 <= jmin <= jmax");
    o.samples = count(v, "samples", 400);
    o.seed = seed;
    o.drift_limit = positive(v, "drift_limit", o.drift_limit);
    job.run = [phase, o] { return psi_bound_sweep(phase, o); };
  } else if (kind == "region_measure") {
    auto g = grid_with(v, std::nullopt);
    auto phase = build_phase(v, g.space());
    RegionOptions o;
    o.factor = static_cast<int>(v.integer("factor", 0));
    if (o.factor < 0 || o.factor >= g.space().factors()) v.fail("factor", "factor index out of range");
    o.ks = v.integers("ks", o.ks);
    o.C = positive(v, "influence_C", o.C);
    o.depth = static_cast<int>(v.integer("depth", o.depth));
    if (o.depth < 0) v.fail("depth", "must be non-negative");
    o.drift_limit = positive(v, "drift_limit", o.drift_limit);
    job.run = [phase, g, o] { return region_measure(phase, g, o); };
  } else if (kind == "partition_identities") {
    PartitionOptions o;
    o.samples = count(v, "samples", static_cast<long long>(o.samples));
    o.J = static_cast<int>(v.integer("J", o.J));
    o.max_level = static_cast<int>(v.integer("max_level", o.max_level));
    o.tolerance = positive(v, "tolerance", o.tolerance);
    o.seed = seed;
    job.run = [o] { return partition_check(o); };
  } else if (kind == "atom_validity") {
    AtomValidityOptions o;
    o.count = count(v, "count", static_cast<long long>(o.count));
    o.seed = seed;
    job.run = [o] { return atom_validity(o); };
  } else if (kind == "decomposition_consistency") {
    auto op = operator_with(v, std::nullopt);
    ConsistencyOptions o;
    o.inputs = count(v, "inputs", static_cast<long long>(o.inputs));
    o.tolerance = positive(v, "tolerance", o.tolerance);
    o.path = parse_path(v, "path", o.path);
    o.seed = seed;
    job.run = [op, o] { return decomposition_consistency(op, o); };
  } else if (kind == "inversion_check") {
    InversionOptions o;
    o.points = v.integers("points", o.points);
    for (int p : o.points)
      if (p < 8 || p % 2) v.fail("points", "points must be even and at least 8, got " + std::to_string(p));
    o.n = static_cast<int>(v.integer("n", o.n));
    if (o.n < 1 || o.n > 3) v.fail("n", "must be 1, 2 or 3");
    o.extent = positive(v, "extent", o.extent);
    o.shift = v.number("shift", o.shift);
    o.tolerance = positive(v, "tolerance", o.tolerance);
    o.path = parse_path(v, "path", o.path);
    o.seed = seed;
    job.run = [o] { return inversion_check(o); };
  } else if (kind == "factorized_oracle") {
    FactorizedOptions o;
    o.specs = count(v, "specs", static_cast<long long>(o.specs));
    o.tolerance = positive(v, "tolerance", o.tolerance);
    o.speed_points = static_cast<int>(v.integer("speed_points", o.speed_points));
    if (o.speed_points < 8 || o.speed_points % 2) v.fail("speed_points", "must be even and at least 8");
    o.min_speedup = v.number("min_speedup", o.min_speedup);
    o.repeats = static_cast<int>(count(v, "repeats", o.repeats));
    o.seed = seed;
    job.run = [o] { return factorized_check(o); };
  }

  auto body = job.run;
  job.run = [body, id] {
    auto r = timed(body);
    r.set_id(id);
    return r;
  };
  return job;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

const std::vector<ExperimentInfo>& list_experiments() { return kExperiments; }

LatticeGrid build_grid(const View& view) { return grid_with(view, std::nullopt); }

OperatorSpec build_operator(const View& view) { return operator_with(view, std::nullopt); }

PhaseSpec build_phase(const View& v, const ProductSpace& sp) {
  auto tags = per_axis(v, "phase.tag", v.has("phase.tag") ? v.list("phase.tag") : std::vector<std::string>{"identity"},
                       static_cast<std::size_t>(sp.factors()));
  std::vector<PhaseFactorPtr> factors;
  for (int i = 0; i < sp.factors(); ++i) {
    const auto& t = tags[static_cast<std::size_t>(i)];
    int n = sp.factor_dim(i);
    if (t == "identity") factors.push_back(identity_factor(n));
    else if (t == "translation") factors.push_back(translation_factor(n, v.number("phase.shift", 0.5)));
    else if (t == "halfwave") factors.push_back(halfwave_factor(n));
    else if (t == "perturbed") {
      try {
        factors.push_back(perturbed_factor(n, v.number("phase.eps", 0.1), positive(v, "phase.radius", 1.0)));
      } catch (const InvalidArgument& e) {
        v.fail("phase.eps", e.what());
      }
    } else {
      v.fail("phase.tag", "unknown phase '" + t + "' (identity, translation, halfwave, perturbed)");
    }
  }
  return PhaseSpec(sp, std::move(factors));
}

RectangleAtom build_atom(const View& v, const LatticeGrid& g, std::uint64_t seed) {
  const ProductSpace& sp = g.space();
  auto radii = per_axis(v, "atom.radii", v.numbers("atom.radii", {0.125}), static_cast<std::size_t>(sp.factors()));
  std::vector<double> center;
  if (v.text("atom.center", "midpoint") == "midpoint") center = midpoint_center(g);
  else center = per_axis(v, "atom.center", v.numbers("atom.center"), static_cast<std::size_t>(g.axes()));
  AtomProfile profile = AtomProfile::odd_bump;
  try {
    profile = parse_profile(v.text("atom.profile", "odd_bump"));
  } catch (const Error& e) {
    v.fail("atom.profile", e.what());
  }
  try {
    return make_tensor_atom(g, center, radii, profile, static_cast<std::uint64_t>(v.integer("atom.seed", static_cast<long long>(seed))));
  } catch (const Error& e) {
    v.fail("atom.radii", e.what());
  }
}

Plan make_plan(const Config& config, const RunOptions& options) {
  std::set<std::string> used;
  View run(config, {}, &used);
  Plan plan;
  auto configured_out = run.text("run.out", "");
  plan.out_dir = options.out_dir.empty() ? configured_out : options.out_dir;
  auto ids = run.list("run.experiments");
  auto configured_seed = static_cast<std::uint64_t>(run.integer("run.seed", 1));
  std::uint64_t seed = options.seed ? *options.seed : configured_seed;

  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) run.fail("run.experiments", "duplicate experiment '" + id + "'");
    if (!known_kind(scope_kind(id)))
      run.fail("run.experiments", "unknown experiment '" + scope_kind(id) + "' (see list-experiments)");
    auto job = bind(config, id, seed, used);
    if (options.filter.empty() || glob_match(options.filter, id)) plan.jobs.push_back(std::move(job));
  }
  // Fields that no experiment read are most likely typos. The export
  // section belongs to export-atom and export-mask.
  for (const auto& key : config.keys())
    if (!used.count(key) && key.rfind("export.", 0) != 0) {
      bool scoped_to_listed = false;
      for (const auto& id : ids)
        if (key.rfind(id + ".", 0) == 0 || key.rfind(scope_kind(id) + ".", 0) == 0) scoped_to_listed = true;
      config.fail(key, scoped_to_listed ? "not used by this experiment" : "unknown field");
    }
  return plan;
}

RunSummary execute(const Plan& plan, std::ostream& log) {
  RunSummary s;
  if (!plan.out_dir.empty()) fs::create_directories(plan.out_dir);
  bool any_fail = false;
  std::string summary = "id,pass,spec_hash,failed_criteria\n";
  for (const auto& job : plan.jobs) {
    try {
      auto r = job.run();
      std::string failed;
      for (const auto& [name, ok] : r.criteria())
        if (!ok) failed += (failed.empty() ? "" : ";") + name;
      any_fail = any_fail || !r.passed();
      log << (r.passed() ? "PASS " : "FAIL ") << std::left << std::setw(32) << r.id() << std::right << std::fixed
          << std::setprecision(1) << std::setw(10) << r.wall_ms() << " ms";
      if (!failed.empty()) log << "  (" << failed << ")";
      log << "\n";
      summary += r.id() + "," + (r.passed() ? "true" : "false") + "," + r.spec_hash() + "," + failed + "\n";
      if (!plan.out_dir.empty()) {
        fs::path dir(plan.out_dir);
        write_text(dir / (r.id() + ".json"), r.to_json());
        write_text(dir / (r.id() + ".timing.json"), r.timing_json());
        for (const auto& t : r.tables()) write_text(dir / (r.id() + "." + t.name + ".csv"), table_csv(t));
      }
      s.reports.push_back(std::move(r));
    } catch (const std::exception& e) {
      log << "ERROR " << job.id << ": " << e.what() << "\n";
      s.errors.push_back(job.id + ": " + e.what());
      summary += job.id + ",error,,\n";
    }
  }
  if (!plan.out_dir.empty()) write_text(fs::path(plan.out_dir) / "summary.csv", summary);
  s.exit_code = !s.errors.empty() ? 1 : any_fail ? 2 : 0;
  return s;
}

std::string resolve_config_path(const std::string& path) {
  if (fs::is_regular_file(path)) return path;
  if (fs::is_regular_file(path + ".conf")) return path + ".conf";
  return path;
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MPFIO_WORKERS")) {
    int w = std::atoi(env);
    if (w > 0) return w;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

int run(const std::string& config_path, const RunOptions& options, std::ostream& out, std::ostream& err) {
  Plan plan;
  try {
    auto config = Config::load(resolve_config_path(config_path));
    plan = make_plan(config, options);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  }
  if (plan.jobs.empty()) {
    err << "no experiment matches the filter\n";
    return 1;
  }
  set_worker_count(resolve_workers(options.workers));
  try {
    auto s = execute(plan, out);
    for (const auto& e : s.errors) err << "error: " << e << "\n";
    return s.exit_code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

bool glob_match(std::string_view p, std::string_view t) {
  std::size_t pi = 0, ti = 0, star = std::string_view::npos, mark = 0;
  while (ti < t.size()) {
    if (pi < p.size() && (p[pi] == '?' || p[pi] == t[ti])) {
      ++pi;
      ++ti;
    } else if (pi < p.size() && p[pi] == '*') {
      star = pi++;
      mark = ti;
    } else if (star != std::string_view::npos) {
      pi = star + 1;
      ti = ++mark;
    } else {
      return false;
    }
  }
  while (pi < p.size() && p[pi] == '*') ++pi;
  return pi == p.size();
}

}  // namespace mpfio::cli
