#include "mpfio/verify.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <json.hpp>

#include "mpfio/decomp.hpp"
#include "mpfio/error.hpp"
#include "mpfio/region.hpp"
#include "mpfio/symbol.hpp"

namespace mpfio {

namespace {

using json = nlohmann::ordered_json;

std::string shortest(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double log2_or_nan(double v) { return v > 0.0 ? std::log2(v) : std::numeric_limits<double>::quiet_NaN(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_over_min(const std::vector<double>& v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
}

std::string levels_string(const std::vector<int>& levels) {
  std::string s;
  for (std::size_t i = 0; i < levels.size(); ++i) s += (i ? "," : "") + std::to_string(levels[i]);
  return s;
}

void describe_operator(ExperimentReport& r, const OperatorSpec& op) {
  const auto& g = op.grid;
  std::string dims, pts, ext;
  for (int i = 0; i < g.space().factors(); ++i) dims += (i ? "," : "") + std::to_string(g.space().factor_dim(i));
  for (int a = 0; a < g.axes(); ++a) {
    pts += (a ? "," : "") + std::to_string(g.points(a));
    ext += (a ? "," : "") + shortest(g.extent(a));
  }
  r.param("dims", dims);
  r.param("points", pts);
  r.param("extent", ext);
  r.param("phase", op.phase.tag());
  r.param("symbol", op.symbol.tag());
  std::string order;
  for (std::size_t i = 0; i < op.symbol.order().size(); ++i) order += (i ? "," : "") + shortest(op.symbol.order()[i]);
  r.param("order", order);
  r.param("levels", levels_string(op.levels));
  r.param("truncation", op.truncation == Truncation::sharp ? "sharp" : "smooth");
}

std::vector<double> random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> gauss;
  for (;;) {
    std::vector<double> v(static_cast<std::size_t>(n));
    double s = 0.0;
    for (auto& c : v) {
      c = gauss(rng);
      s += c * c;
    }
    if (s < 1e-20) continue;
    for (auto& c : v) c /= std::sqrt(s);
    return v;
  }
}

// Unit vector orthogonal to dir (n >= 2).
std::vector<double> orthogonal_unit(std::span<const double> dir, std::mt19937_64& rng) {
  const int n = static_cast<int>(dir.size());
  if (n == 2) return {-dir[1], dir[0]};
  for (;;) {
    auto v = random_unit(rng, n);
    double p = 0.0;
    for (int a = 0; a < n; ++a) p += v[static_cast<std::size_t>(a)] * dir[static_cast<std::size_t>(a)];
    double s = 0.0;
    for (int a = 0; a < n; ++a) {
      v[static_cast<std::size_t>(a)] -= p * dir[static_cast<std::size_t>(a)];
      s += v[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(a)];
    }
    if (s < 1e-12) continue;
    for (auto& c : v) c /= std::sqrt(s);
    return v;
  }
}

SampledField random_field(const LatticeGrid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  SampledField f(g);
  for (std::size_t k = 0; k < g.node_count(); ++k) f[k] = {gauss(rng), gauss(rng)};
  return f;
}

double l2(const SampledField& f) { return lp_norm(f, 2.0); }

// Factor-i sub-node of every global node.
std::vector<std::size_t> factor_nodes(const LatticeGrid& g, int i) {
  std::vector<std::size_t> sub(g.node_count());
  for (std::size_t k = 0; k < sub.size(); ++k) sub[k] = g.factor_node(k, i);
  return sub;
}

}  // namespace

// ---------------------------------------------------------------- reports

std::string table_csv(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) out += (c ? "," : "") + table.columns[c];
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + shortest(row[c]);
    out += '\n';
  }
  return out;
}

void ExperimentReport::param(const std::string& name, const std::string& value) {
  for (auto& [k, v] : params_)
    if (k == name) {
      v = value;
      return;
    }
  params_.emplace_back(name, value);
}

void ExperimentReport::param(const std::string& name, double value) { param(name, shortest(value)); }
void ExperimentReport::param(const std::string& name, long long value) { param(name, std::to_string(value)); }

void ExperimentReport::scalar(const std::string& name, double value) {
  for (auto& [k, v] : scalars_)
    if (k == name) {
      v = value;
      return;
    }
  scalars_.emplace_back(name, value);
}

double ExperimentReport::scalar(const std::string& name) const {
  for (const auto& [k, v] : scalars_)
    if (k == name) return v;
  throw InvalidArgument("report " + id_ + ": no scalar named " + name);
}

bool ExperimentReport::has_scalar(const std::string& name) const {
  return std::any_of(scalars_.begin(), scalars_.end(), [&](const auto& p) { return p.first == name; });
}

void ExperimentReport::fit(const std::string& name, const LineFit& f) {
  if (f.n < 4) throw InvalidArgument("report " + id_ + ": fit " + name + " has fewer than 4 points");
  fits_.push_back({name, f});
}

const LineFit& ExperimentReport::fit(const std::string& name) const {
  for (const auto& f : fits_)
    if (f.name == name) return f.fit;
  throw InvalidArgument("report " + id_ + ": no fit named " + name);
}

void ExperimentReport::criterion(const std::string& name, bool ok) {
  for (auto& [k, v] : criteria_)
    if (k == name) {
      v = ok;
      return;
    }
  criteria_.emplace_back(name, ok);
}

bool ExperimentReport::criterion(const std::string& name) const {
  for (const auto& [k, v] : criteria_)
    if (k == name) return v;
  throw InvalidArgument("report " + id_ + ": no criterion named " + name);
}

bool ExperimentReport::passed() const {
  return std::all_of(criteria_.begin(), criteria_.end(), [](const auto& p) { return p.second; });
}

Table& ExperimentReport::table(const std::string& name, std::vector<std::string> columns) {
  tables_.push_back({name, std::move(columns), {}});
  return tables_.back();
}

void ExperimentReport::timing(const std::string& name, double ms) {
  for (auto& [k, v] : timings_)
    if (k == name) {
      v = ms;
      return;
    }
  timings_.emplace_back(name, ms);
}

double ExperimentReport::wall_ms() const {
  for (const auto& [k, v] : timings_)
    if (k == "wall") return v;
  return 0.0;
}

std::string ExperimentReport::spec_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  mix(id_);
  for (const auto& [k, v] : params_) {
    mix(k);
    mix(v);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ExperimentReport::to_json() const {
  json j;
  j["id"] = id_;
  j["spec_hash"] = spec_hash();
  json p = json::object();
  for (const auto& [k, v] : params_) p[k] = v;
  j["params"] = p;
  json s = json::object();
  for (const auto& [k, v] : scalars_) s[k] = number(v);
  j["scalars"] = s;
  json f = json::object();
  for (const auto& nf : fits_)
    f[nf.name] = {{"slope", number(nf.fit.slope)},
                  {"stderr", number(nf.fit.stderr_slope)},
                  {"intercept", number(nf.fit.intercept)},
                  {"residual", number(nf.fit.residual)},
                  {"n", nf.fit.n}};
  j["fits"] = f;
  json c = json::object();
  for (const auto& [k, v] : criteria_) c[k] = v;
  j["criteria"] = c;
  j["pass"] = passed();
  json t = json::array();
  for (const auto& tb : tables_) t.push_back(tb.name);
  j["tables"] = t;
  j["notes"] = notes_;
  return j.dump(2) + "\n";
}

std::string ExperimentReport::timing_json() const {
  json j;
  j["id"] = id_;
  j["wall_ms"] = wall_ms();
  json t = json::object();
  for (const auto& [k, v] : timings_) t[k] = number(v);
  j["timings"] = t;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- helpers

SampledField band_limited_field(const LatticeGrid& grid, const std::vector<double>& band, std::uint64_t seed) {
  const ProductSpace& sp = grid.space();
  if (band.size() != static_cast<std::size_t>(sp.factors()))
    throw InvalidArgument("band_limited_field: need one band per factor");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<Complex> spec(grid.node_count());
  std::vector<int> idx(static_cast<std::size_t>(grid.axes()));
  for (std::size_t k = 0; k < spec.size(); ++k) {
    grid.unravel(k, idx);
    bool in = true;
    for (int i = 0; i < sp.factors() && in; ++i) {
      double r2 = 0.0;
      for (int a = sp.axis_offset(i); a < sp.axis_offset(i) + sp.factor_dim(i); ++a) {
        double xi = grid.frequency_of_slot(a, idx[static_cast<std::size_t>(a)]);
        r2 += xi * xi;
      }
      in = std::sqrt(r2) <= band[static_cast<std::size_t>(i)];
    }
    Complex c(gauss(rng), gauss(rng));
    if (in) spec[k] = c;
  }
  return inverse_transform(grid, spec);
}

std::vector<double> midpoint_center(const LatticeGrid& grid) {
  std::vector<double> c(static_cast<std::size_t>(grid.axes()));
  for (int a = 0; a < grid.axes(); ++a)
    c[static_cast<std::size_t>(a)] = grid.coordinate(a, grid.points(a) / 2) + 0.5 * grid.spacing(a);
  return c;
}

// ---------------------------------------------------------------- L2 norms

double dense_operator_norm(const OperatorSpec& op, ApplyPath path) {
  const std::size_t N = op.grid.node_count();
  Eigen::MatrixXcd M(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  ApplyRequest req;
  req.path = resolve_path(op, path);
  SampledField e(op.grid);
  for (std::size_t c = 0; c < N; ++c) {
    e[c] = 1.0;
    auto col = evaluate(op, e, req);
    e[c] = 0.0;
    for (std::size_t r = 0; r < N; ++r) M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = col[r];
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(M);
  return svd.singularValues()(0);
}

L2Estimate l2_norm_estimate(const OperatorSpec& op, const L2Options& o) {
  if (o.iterations < 20) throw InvalidArgument("l2_norm_estimate: need at least 20 iterations");
  if (o.max_iterations < o.iterations) throw InvalidArgument("l2_norm_estimate: max_iterations below iterations");
  ApplyRequest req;
  req.path = resolve_path(op, o.path);
  std::mt19937_64 rng(o.seed);
  SampledField v = random_field(op.grid, rng);
  v *= 1.0 / l2(v);

  L2Estimate est;
  double prev = 0.0;
  for (std::size_t it = 1; it <= o.max_iterations; ++it) {
    SampledField w = evaluate(op, v, req);
    double sigma = l2(w);  // sqrt(<v, T^H T v>) with ||v|| = 1
    SampledField u = evaluate_adjoint(op, w, req);
    double nu = l2(u);
    est.iterations = it;
    est.last_change = sigma > 0.0 ? std::abs(sigma - prev) / sigma : 0.0;
    est.norm = sigma;
    prev = sigma;
    if (nu == 0.0) {
      est.converged = true;  // T v = 0 exactly; the start vector is in the kernel
      break;
    }
    v = u;
    v *= 1.0 / nu;
    if (it >= o.iterations && est.last_change <= o.tolerance) {
      est.converged = true;
      break;
    }
  }
  if (!est.converged && est.last_change > o.oscillation_limit)
    throw ConvergenceError("l2_norm_estimate: power iteration still moving by " + shortest(est.last_change) +
                           " after " + std::to_string(o.max_iterations) + " iterations");
  if (o.dense_limit > 0 && op.grid.node_count() <= o.dense_limit) est.dense_norm = dense_operator_norm(op, o.path);
  return est;
}

ExperimentReport l2_norm_report(const OperatorSpec& op, const L2Options& o) {
  ExperimentReport r("l2_norm");
  describe_operator(r, op);
  r.param("seed", static_cast<long long>(o.seed));
  auto t0 = std::chrono::steady_clock::now();
  auto est = l2_norm_estimate(op, o);
  r.timing("estimate", 1e3 * seconds_since(t0));
  r.scalar("norm", est.norm);
  r.scalar("iterations", static_cast<double>(est.iterations));
  r.scalar("last_change", est.last_change);
  r.criterion("converged", est.converged);
  r.criterion("finite", std::isfinite(est.norm));
  if (est.dense_norm) {
    r.scalar("dense_norm", *est.dense_norm);
    double rel = std::abs(est.norm - *est.dense_norm) / *est.dense_norm;
    r.scalar("dense_rel_diff", rel);
    r.criterion("matches_dense", rel <= 1e-6);
  }
  return r;
}

ExperimentReport l2_refinement(const std::function<OperatorSpec(int)>& build, int coarse_points, const L2Options& o,
                               double drift_limit) {
  ExperimentReport r("l2_refinement");
  auto coarse = build(coarse_points);
  auto fine = build(2 * coarse_points);
  describe_operator(r, coarse);
  r.param("fine_points", 2 * coarse_points);
  L2Options no_dense = o;
  no_dense.dense_limit = 0;
  auto a = l2_norm_estimate(coarse, no_dense);
  auto b = l2_norm_estimate(fine, no_dense);
  r.scalar("norm_coarse", a.norm);
  r.scalar("norm_fine", b.norm);
  double drift = std::max(a.norm, b.norm) / std::min(a.norm, b.norm);
  r.scalar("drift", drift);
  r.criterion("finite", std::isfinite(a.norm) && std::isfinite(b.norm) && a.norm > 0.0);
  r.criterion("stable_under_refinement", drift <= drift_limit);
  return r;
}

// ---------------------------------------------------------------- majorization

ExperimentReport majorization_sweep(const OperatorSpec& op, const RectangleAtom& atom, const MajorizationOptions& o) {
  const LatticeGrid& g = op.grid;
  const ProductSpace& sp = g.space();
  const int d = sp.factors();
  if (atom.samples.grid() != g) throw InvalidArgument("majorization_sweep: atom is not on the operator grid");

  FactorSet I = o.I;
  if (I.size() == 0)
    for (int i = 0; i < d; ++i)
      if (atom.radii[static_cast<std::size_t>(i)] < 1.0) I.insert(i);
  if (I.size() == 0) throw InvalidArgument("majorization_sweep: no factor with r_i < 1");
  for (int i : I.members())
    if (!(atom.radii[static_cast<std::size_t>(i)] < 1.0))
      throw InvalidArgument("majorization_sweep: factor " + std::to_string(i) + " has r_i >= 1");

  ExperimentReport r("majorization_sweep");
  describe_operator(r, op);
  r.param("I", I.to_string());
  r.param("influence_C", o.C);
  std::string radii, ks;
  for (int i = 0; i < d; ++i) {
    radii += (i ? "," : "") + shortest(atom.radii[static_cast<std::size_t>(i)]);
    ks += (i ? "," : "") + (atom.k[static_cast<std::size_t>(i)] ? std::to_string(*atom.k[static_cast<std::size_t>(i)]) : "-");
  }
  r.param("radii", radii);
  r.param("k", ks);
  r.param("profile", to_string(atom.profile));

  FactorMasks masks(static_cast<std::size_t>(d));
  double omega_I = 1.0;
  for (int i : I.members()) {
    auto Q = influence_region(op.phase, atom, i, o.C, op.levels[static_cast<std::size_t>(i)], op.sector_spacing_scale);
    auto Qc = complement(Q.mask);
    if (std::none_of(Qc.begin(), Qc.end(), [](std::uint8_t v) { return v != 0; }))
      throw InvalidArgument("majorization_sweep: influence region covers the whole grid on factor " +
                            std::to_string(i) + " (influence_C too large)");
    r.scalar("region_volume_" + std::to_string(i), Q.volume);
    r.scalar("region_ratio_" + std::to_string(i), Q.ratio);
    masks[static_cast<std::size_t>(i)] = std::move(Qc);
    for (int a = sp.axis_offset(i); a < sp.axis_offset(i) + sp.factor_dim(i); ++a) omega_I *= g.period(a);
  }

  Table& tb = r.table("majorization", {"offset", "value", "log2_value", "l2_norm", "l2_bound"});
  std::vector<double> up_x, up_y, down_x, down_y;
  std::vector<std::pair<int, double>> upper;
  ApplyRequest req;
  req.path = resolve_path(op, o.path);
  for (int t : o.offsets) {
    LevelMap levels(static_cast<std::size_t>(d));
    bool ok = true;
    for (int i : I.members()) {
      int j = *atom.k[static_cast<std::size_t>(i)] + t;
      if (j < 0 || j > op.levels[static_cast<std::size_t>(i)]) ok = false;
      levels[static_cast<std::size_t>(i)] = j;
    }
    if (!ok) {
      r.note("offset " + std::to_string(t) + " skipped: level outside [0, J]");
      continue;
    }
    req.levels = levels;
    auto Ta = evaluate(op, atom.samples, req);
    double value = mixed_norm(Ta, I, 1.0, 2.0, masks);
    double norm2 = l2(Ta);
    double bound = std::sqrt(omega_I) * norm2;
    tb.rows.push_back({static_cast<double>(t), value, log2_or_nan(value), norm2, bound});
    if (t == 0) {
      r.scalar("value_at_k", value);
      r.criterion("diagonal_within_l2_bound", std::isfinite(value) && value <= bound * (1.0 + 1e-12));
    }
    if (value > 0.0) {
      if (t >= 0) {
        up_x.push_back(t);
        up_y.push_back(std::log2(value));
        upper.emplace_back(t, value);
      }
      if (t <= 0) {
        down_x.push_back(-t);
        down_y.push_back(std::log2(value));
      }
    }
  }
  if (up_x.size() >= 4) {
    auto f = fit_line(up_x, up_y);
    r.fit("above_k", f);
    r.scalar("slope_above_k", f.slope);
    r.criterion("decay_above_k", f.slope <= o.slope_limit);
    bool mono = true;
    for (std::size_t q = 1; q < upper.size(); ++q) mono = mono && upper[q].second < upper[q - 1].second;
    r.scalar("monotone_above_k", mono ? 1.0 : 0.0);
  } else {
    r.note("fewer than 4 levels at or above k; no fit");
    r.criterion("decay_above_k", false);
  }
  if (down_x.size() >= 4) {
    auto f = fit_line(down_x, down_y);
    r.fit("below_k", f);
    r.scalar("slope_below_k", f.slope);
  }
  return r;
}

// ---------------------------------------------------------------- H1 -> L1

ExperimentReport h1l1_sweep(const OperatorSpec& op_in, const H1L1Options& o) {
  OperatorSpec op = op_in;
  op.truncation = Truncation::smooth;
  const LatticeGrid& g = op.grid;
  const int d = g.space().factors();
  if (o.ks.size() < 4) throw InvalidArgument("h1l1_sweep: need at least 4 atom sizes");

  ExperimentReport r("h1l1_sweep");
  describe_operator(r, op);
  r.param("profile", to_string(o.profile));
  r.param("seed", static_cast<long long>(o.seed));
  r.param("expect", o.expect == Expectation::bounded ? "bounded" : o.expect == Expectation::growth ? "growth" : "decay");
  std::string ks;
  for (std::size_t q = 0; q < o.ks.size(); ++q) ks += (q ? "," : "") + std::to_string(o.ks[q]);
  r.param("ks", ks);

  auto center = o.center.empty() ? midpoint_center(g) : o.center;
  ApplyRequest req;
  req.path = resolve_path(op, o.path);
  Table& tb = r.table("h1l1", {"k", "r", "l1_norm", "log2_l1", "truncation_defect"});
  std::vector<double> xs, ys, vals;
  double worst = 0.0;
  for (int k : o.ks) {
    double rad = std::ldexp(1.0, -k);
    auto atom = make_tensor_atom(g, center, std::vector<double>(static_cast<std::size_t>(d), rad), o.profile, o.seed);
    double defect = truncation_defect(op, atom.samples);
    worst = std::max(worst, defect);
    if (defect > o.defect_guard) {
      if (o.enforce_guard)
        throw NumericError("h1l1_sweep: truncation defect " + shortest(defect) + " at k=" + std::to_string(k) +
                           " exceeds guard " + shortest(o.defect_guard));
      r.note("k=" + std::to_string(k) + ": truncation defect " + shortest(defect) + " above guard (reported only)");
    }
    double v = lp_norm(evaluate(op, atom.samples, req), 1.0);
    tb.rows.push_back({static_cast<double>(k), rad, v, log2_or_nan(v), defect});
    xs.push_back(k);
    ys.push_back(std::log2(v));
    vals.push_back(v);
  }
  auto f = fit_line(xs, ys);
  r.fit("log2_l1_vs_k", f);
  r.scalar("slope", f.slope);
  r.scalar("slope_stderr", f.stderr_slope);
  double ratio = max_over_min(vals);
  r.scalar("max_min_ratio", ratio);
  r.scalar("max_truncation_defect", worst);
  switch (o.expect) {
    case Expectation::bounded:
      r.criterion("bounded_slope", std::abs(f.slope) <= o.slope_limit);
      r.criterion("bounded_ratio", ratio <= o.ratio_limit);
      break;
    case Expectation::growth:
      r.criterion("growth_slope", f.slope >= o.slope_limit);
      break;
    case Expectation::decay: {
      bool dec = true;
      for (std::size_t q = 1; q < vals.size(); ++q) dec = dec && vals[q] <= vals[q - 1];
      r.criterion("decreasing", dec);
      break;
    }
  }
  return r;
}

// ---------------------------------------------------------------- localization

ExperimentReport sector_localization(const OperatorSpec& op, const LocalizationOptions& o) {
  const LatticeGrid& g = op.grid;
  const ProductSpace& sp = g.space();
  const int d = sp.factors(), i = o.factor;
  if (i < 0 || i >= d) throw InvalidArgument("sector_localization: factor out of range");
  if (o.level < 2) throw InvalidArgument("sector_localization: level must be >= 2");
  if (o.level > op.levels[static_cast<std::size_t>(i)])
    throw InvalidArgument("sector_localization: level above the operator's truncation level");

  ExperimentReport r("sector_localization");
  describe_operator(r, op);
  r.param("factor", i);
  r.param("level", o.level);
  r.param("nu", o.nu);
  r.param("influence_C", o.C);

  auto center = o.center.empty() ? midpoint_center(g) : o.center;
  std::vector<double> radii(static_cast<std::size_t>(d));
  for (int f = 0; f < d; ++f) radii[static_cast<std::size_t>(f)] = 2.0 * g.spacing(sp.axis_offset(f));
  auto atom = make_tensor_atom(g, center, radii, AtomProfile::odd_bump);

  LevelMap levels(static_cast<std::size_t>(d));
  SectorMap sectors(static_cast<std::size_t>(d));
  levels[static_cast<std::size_t>(i)] = o.level;
  sectors[static_cast<std::size_t>(i)] = o.nu;
  ApplyRequest req{levels, sectors, resolve_path(op, o.path), true};
  auto Ta = evaluate(op, atom.samples, req);

  std::vector<double> abs_vals(Ta.size());
  for (std::size_t k = 0; k < Ta.size(); ++k) abs_vals[k] = std::abs(Ta[k]);
  double total = pairwise_sum(abs_vals);
  if (!(total > 0.0)) throw NumericError("sector_localization: sector output vanishes");
  auto sub = factor_nodes(g, i);
  std::span<const double> ci(center.data() + sp.axis_offset(i), static_cast<std::size_t>(sp.factor_dim(i)));

  Table& tb = r.table("localization", {"lambda", "outside_fraction", "rectangle_volume"});
  std::vector<double> lx, ly;
  std::optional<double> at1, at4, far;
  for (double lam : o.lambdas) {
    auto R = influence_rectangle(op.phase, g, i, ci, o.level, o.nu, o.C * lam, op.sector_spacing_scale);
    std::vector<double> outside(Ta.size(), 0.0);
    for (std::size_t k = 0; k < Ta.size(); ++k)
      if (!R.mask[sub[k]]) outside[k] = abs_vals[k];
    double frac = pairwise_sum(outside) / total;
    tb.rows.push_back({lam, frac, R.volume});
    if (lam == 1.0) at1 = frac;
    if (lam == 4.0) at4 = frac;
    if (lam == o.far_lambda) far = frac;
    if (frac > 0.0) {
      lx.push_back(std::log2(lam));
      ly.push_back(std::log2(frac));
    }
  }
  if (lx.size() >= 4) {
    auto f = fit_line(lx, ly);
    r.fit("log2_fraction_vs_log2_lambda", f);
    r.scalar("decay_exponent", f.slope);
  }
  if (at1 && at4) {
    r.scalar("drop_1_to_4", *at4 > 0.0 ? *at1 / *at4 : std::numeric_limits<double>::infinity());
    r.criterion("drop_1_to_4", *at4 == 0.0 || *at1 >= o.drop_factor * *at4);
  }
  if (far) {
    r.scalar("far_fraction", *far);
    r.criterion("far_fraction", *far <= o.far_limit);
  }
  return r;
}

// ---------------------------------------------------------------- Bessel kernel

ExperimentReport bessel_decay(const BesselOptions& o) {
  if (o.n < 1 || o.n > 3) throw InvalidArgument("bessel_decay: n must be 1, 2 or 3");
  auto g = make_grid(ProductSpace({o.n}), o.extent, o.points);
  ExperimentReport r("bessel_decay");
  r.param("n", o.n);
  r.param("points", o.points);
  r.param("extent", o.extent);
  r.param("level", o.level);
  r.param("radii", "2^-" + std::to_string(o.finest) + "..2^-" + std::to_string(o.coarsest));
  r.param("control", o.control ? "true" : "false");

  const double h = g.spacing(0);
  if (!o.control) {
    if (o.finest < o.coarsest) throw InvalidArgument("bessel_decay: finest must not be below coarsest");
    if (o.finest - o.coarsest + 1 < 4) throw InvalidArgument("bessel_decay: need at least 4 dyadic radii");
    if (std::ldexp(1.0, o.level + 1) > g.max_frequency(0))
      throw InvalidArgument("bessel_decay: cutoff level exceeds the grid band");
    if (std::ldexp(1.0, -o.finest) < 4.0 * h)
      throw InvalidArgument("bessel_decay: insufficient grid for the radial range (finest radius below 4 cells)");
    if (std::ldexp(1.0, -o.coarsest) > 0.5 * o.extent)
      throw InvalidArgument("bessel_decay: insufficient grid for the radial range (coarsest radius beyond extent/2)");
  }

  std::vector<Complex> spec(g.node_count());
  std::vector<int> idx(static_cast<std::size_t>(o.n));
  const double power = -(o.n - 1) / 4.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    if (o.control) {
      spec[k] = 1.0;
      continue;
    }
    g.unravel(k, idx);
    double r2 = 0.0;
    for (int a = 0; a < o.n; ++a) {
      double xi = g.frequency_of_slot(a, idx[static_cast<std::size_t>(a)]);
      r2 += xi * xi;
    }
    spec[k] = std::pow(1.0 + r2, power) * bump(std::ldexp(std::sqrt(r2), -o.level));
  }
  auto K = inverse_transform(g, spec);
  spec.clear();
  spec.shrink_to_fit();

  std::vector<int> origin(static_cast<std::size_t>(o.n), o.points / 2);
  const std::size_t o_idx = g.ravel(origin);
  const double peak = std::abs(K[o_idx]);
  r.scalar("peak", peak);

  if (o.control) {
    double off = 0.0;
    for (std::size_t k = 0; k < K.size(); ++k)
      if (k != o_idx) off = std::max(off, std::abs(K[k]));
    r.scalar("off_peak_ratio", off / peak);
    r.criterion("discrete_delta", off <= 1e-10 * peak);
    r.note("control multiplier: no power-law fit");
    return r;
  }

  Table& tb = r.table("bessel", {"radius", "abs_kernel", "log2_radius", "log2_abs_kernel"});
  std::vector<double> xs, ys;
  for (int p = o.finest; p >= o.coarsest; --p) {
    double rad = std::ldexp(1.0, -p);
    double cells = rad / h;
    if (std::abs(cells - std::round(cells)) > 1e-9)
      throw InvalidArgument("bessel_decay: radius 2^-" + std::to_string(p) + " is not a grid node");
    auto at = origin;
    at[0] += static_cast<int>(std::lround(cells));
    double v = std::abs(K[g.ravel(at)]);
    tb.rows.push_back({rad, v, std::log2(rad), log2_or_nan(v)});
    xs.push_back(std::log2(rad));
    ys.push_back(std::log2(v));
  }
  auto f = fit_line(xs, ys);
  const double target = -(o.n + 1) / 2.0;
  r.fit("log2_kernel_vs_log2_radius", f);
  r.scalar("exponent", f.slope);
  r.scalar("target", target);
  r.criterion("exponent_within_tolerance", std::abs(f.slope - target) <= o.tolerance);
  return r;
}

// ---------------------------------------------------------------- phase remainder

ExperimentReport psi_bound_sweep(const PhaseSpec& phase, const PsiOptions& o) {
  const ProductSpace& sp = phase.space();
  if (o.factor < 0 || o.factor >= sp.factors()) throw InvalidArgument("psi_bound_sweep: factor out of range");
  if (o.jmin < 0 || o.jmax < o.jmin) throw InvalidArgument("psi_bound_sweep: bad level range");
  const int n = sp.factor_dim(o.factor);
  ExperimentReport r("psi_bound_sweep");
  r.param("phase", phase.tag());
  r.param("factor", o.factor);
  r.param("levels", std::to_string(o.jmin) + ".." + std::to_string(o.jmax));
  r.param("samples", o.samples);
  r.param("seed", static_cast<long long>(o.seed));

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Table& tb = r.table("psi", {"j", "max_psi", "normal_quotient", "tangential_quotient"});
  std::vector<double> cols[3];
  std::vector<double> x(static_cast<std::size_t>(n)), xi(static_cast<std::size_t>(n)), xp(xi), xm(xi);
  for (int j = o.jmin; j <= o.jmax; ++j) {
    auto grid = direction_grid(n, j);
    const double amax = 2.0 * std::asin(std::min(1.0, std::pow(2.0, -j / 2.0)));
    double m_psi = 0.0, m_norm = 0.0, m_tan = 0.0;
    for (std::size_t s = 0; s < o.samples; ++s) {
      auto dir = grid.direction(static_cast<std::size_t>(U(rng) * static_cast<double>(grid.size())) % grid.size());
      std::vector<double> u(dir.begin(), dir.end()), tangent;
      if (n >= 2) {
        tangent = orthogonal_unit(dir, rng);
        double th = (n == 2 ? (2.0 * U(rng) - 1.0) : U(rng)) * amax;
        for (int a = 0; a < n; ++a)
          u[static_cast<std::size_t>(a)] = std::cos(th) * dir[static_cast<std::size_t>(a)] +
                                           std::sin(th) * tangent[static_cast<std::size_t>(a)];
      }
      double rad = std::ldexp(1.0, j - 1) * (1.0 + 3.0 * U(rng));
      for (int a = 0; a < n; ++a) {
        xi[static_cast<std::size_t>(a)] = rad * u[static_cast<std::size_t>(a)];
        x[static_cast<std::size_t>(a)] = U(rng) - 0.5;
      }
      m_psi = std::max(m_psi, std::abs(psi_remainder(phase, o.factor, x, xi, dir)));
      const double delta = 1e-4 * rad;
      auto quotient = [&](std::span<const double> e) {
        for (int a = 0; a < n; ++a) {
          xp[static_cast<std::size_t>(a)] = xi[static_cast<std::size_t>(a)] + delta * e[static_cast<std::size_t>(a)];
          xm[static_cast<std::size_t>(a)] = xi[static_cast<std::size_t>(a)] - delta * e[static_cast<std::size_t>(a)];
        }
        return (psi_remainder(phase, o.factor, x, xp, dir) - psi_remainder(phase, o.factor, x, xm, dir)) / (2.0 * delta);
      };
      m_norm = std::max(m_norm, std::ldexp(std::abs(quotient(dir)), j));
      if (n >= 2) m_tan = std::max(m_tan, std::pow(2.0, j / 2.0) * std::abs(quotient(tangent)));
    }
    tb.rows.push_back({static_cast<double>(j), m_psi, m_norm, m_tan});
    cols[0].push_back(m_psi);
    cols[1].push_back(m_norm);
    cols[2].push_back(m_tan);
  }
  const char* names[3] = {"psi", "normal", "tangential"};
  bool all = true;
  for (int c = 0; c < 3; ++c) {
    double hi = *std::max_element(cols[c].begin(), cols[c].end());
    double drift = hi <= 1e-9 ? 1.0 : max_over_min(cols[c]);
    r.scalar(std::string("max_") + names[c], hi);
    r.scalar(std::string("drift_") + names[c], drift);
    all = all && drift < o.drift_limit;
  }
  r.criterion("stable_in_j", all);
  return r;
}

// ---------------------------------------------------------------- regions

ExperimentReport region_measure(const PhaseSpec& phase, const LatticeGrid& grid, const RegionOptions& o) {
  const ProductSpace& sp = grid.space();
  if (o.factor < 0 || o.factor >= sp.factors()) throw InvalidArgument("region_measure: factor out of range");
  ExperimentReport r("region_measure");
  r.param("phase", phase.tag());
  r.param("factor", o.factor);
  r.param("factor_dim", sp.factor_dim(o.factor));
  r.param("points", grid.points(sp.axis_offset(o.factor)));
  r.param("extent", grid.extent(sp.axis_offset(o.factor)));
  r.param("influence_C", o.C);
  r.param("depth", o.depth);

  std::vector<double> center = o.center;
  if (center.empty()) center.assign(static_cast<std::size_t>(sp.factor_dim(o.factor)), 0.0);
  Table& tb = r.table("region", {"k", "J", "volume", "ratio", "tail_bound", "members"});
  std::vector<double> ratios;
  for (int k : o.ks) {
    int J = o.depth > 0 ? k + o.depth : max_truncation_level(grid, o.factor);
    auto Q = influence_region(phase, grid, o.factor, center, std::ldexp(1.0, -k), k, o.C, J);
    tb.rows.push_back({static_cast<double>(k), static_cast<double>(J), Q.volume, Q.ratio, Q.tail_bound,
                       static_cast<double>(Q.members)});
    ratios.push_back(Q.ratio);
  }
  double drift = max_over_min(ratios);
  r.scalar("max_ratio", *std::max_element(ratios.begin(), ratios.end()));
  r.scalar("drift", drift);
  r.criterion("ratio_stable", drift <= o.drift_limit);
  return r;
}

// ---------------------------------------------------------------- identities

ExperimentReport partition_check(const PartitionOptions& o) {
  ExperimentReport r("partition_identities");
  r.param("samples", o.samples);
  r.param("J", o.J);
  r.param("max_level", o.max_level);
  r.param("seed", static_cast<long long>(o.seed));
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  double radial = 0.0;
  for (std::size_t s = 0; s < o.samples; ++s) {
    double rad = U(rng) * std::ldexp(1.0, o.J);
    double sum = 0.0;
    for (int j = 0; j <= o.J; ++j) sum += lp_weight(j, rad);
    radial = std::max(radial, std::abs(sum - 1.0));
  }
  r.scalar("radial_defect", radial);
  r.criterion("radial", radial <= o.tolerance);

  Table& tb = r.table("angular", {"n", "j", "directions", "max_defect", "min_denominator"});
  double angular = 0.0;
  std::vector<std::pair<int, double>> w;
  for (int n = 1; n <= 3; ++n) {
    for (int j = 0; j <= o.max_level; ++j) {
      SectorCutoffs cut(direction_grid(n, j));
      double worst = 0.0, min_den = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < o.samples; ++s) {
        auto u = random_unit(rng, n);
        double rad = std::exp(std::log(1e-3) + U(rng) * std::log(1e6));
        for (auto& c : u) c *= rad;
        min_den = std::min(min_den, cut.denominator(u));
        cut.weights(u, w);
        double sum = 0.0;
        for (const auto& p : w) sum += p.second;
        worst = std::max(worst, std::abs(sum - 1.0));
      }
      tb.rows.push_back({static_cast<double>(n), static_cast<double>(j), static_cast<double>(cut.size()), worst, min_den});
      angular = std::max(angular, worst);
    }
  }
  r.scalar("angular_defect", angular);
  r.criterion("angular", angular <= o.tolerance);
  return r;
}

ExperimentReport atom_validity(const AtomValidityOptions& o) {
  ExperimentReport r("atom_validity");
  r.param("count", o.count);
  r.param("seed", static_cast<long long>(o.seed));
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const AtomProfile profiles[3] = {AtomProfile::odd_bump, AtomProfile::two_hump, AtomProfile::random_mix};
  std::size_t failed = 0;
  double worst_l2 = 0.0, worst_support = 0.0, worst_cancel = 0.0;
  Table& tb = r.table("atoms", {"index", "d", "axes", "measure", "l2_ratio", "support_defect", "cancel_defect", "ok"});
  for (std::size_t q = 0; q < o.count; ++q) {
    int d = U(rng) < 0.5 ? 1 : 2;
    std::vector<int> dims;
    for (int i = 0; i < d; ++i) dims.push_back(U(rng) < 0.5 ? 1 : 2);
    ProductSpace sp(dims);
    const int axes = sp.total_dim();
    const int pts = axes == 1 ? 256 : axes == 2 ? 64 : axes == 3 ? 24 : 16;
    auto g = make_grid(sp, 1.0, pts);
    const double h = g.spacing(0);
    std::vector<double> radii(static_cast<std::size_t>(d)), center(static_cast<std::size_t>(axes));
    for (int i = 0; i < d; ++i) {
      double lo = 4.0 * h, hi = 2.0 - 6.0 * h;
      double rad = lo + (hi - lo) * U(rng);
      radii[static_cast<std::size_t>(i)] = rad;
      double room = 1.0 - 2.0 * h - rad / 2.0;
      for (int a = sp.axis_offset(i); a < sp.axis_offset(i) + sp.factor_dim(i); ++a)
        center[static_cast<std::size_t>(a)] = (2.0 * U(rng) - 1.0) * room;
    }
    auto profile = profiles[static_cast<std::size_t>(U(rng) * 3.0) % 3];
    auto atom = make_tensor_atom(g, center, radii, profile, rng());
    auto rep = validate_atom(atom);
    double cancel = *std::max_element(rep.cancel_defect.begin(), rep.cancel_defect.end());
    worst_l2 = std::max(worst_l2, rep.l2_norm / rep.l2_bound);
    worst_support = std::max(worst_support, rep.support_defect);
    worst_cancel = std::max(worst_cancel, cancel);
    bool ok = rep.all_ok();
    if (!ok) ++failed;
    tb.rows.push_back({static_cast<double>(q), static_cast<double>(d), static_cast<double>(axes), atom.measure(),
                       rep.l2_norm / rep.l2_bound, rep.support_defect, cancel, ok ? 1.0 : 0.0});
  }
  r.scalar("failed", static_cast<double>(failed));
  r.scalar("max_l2_ratio", worst_l2);
  r.scalar("max_support_defect", worst_support);
  r.scalar("max_cancel_defect", worst_cancel);
  r.criterion("all_valid", failed == 0);
  return r;
}

ExperimentReport decomposition_consistency(const OperatorSpec& op, const ConsistencyOptions& o) {
  const LatticeGrid& g = op.grid;
  const ProductSpace& sp = g.space();
  const int d = sp.factors();
  ExperimentReport r("decomposition_consistency");
  describe_operator(r, op);
  r.param("inputs", o.inputs);
  r.param("seed", static_cast<long long>(o.seed));

  std::vector<double> band(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) band[static_cast<std::size_t>(i)] = std::ldexp(1.0, op.levels[static_cast<std::size_t>(i)]);
  const ApplyPath path = resolve_path(op, o.path);

  // All level vectors j with 0 <= j_i <= J_i.
  std::vector<std::vector<int>> combos = {{}};
  for (int i = 0; i < d; ++i) {
    std::vector<std::vector<int>> next;
    for (const auto& c : combos)
      for (int j = 0; j <= op.levels[static_cast<std::size_t>(i)]; ++j) {
        auto e = c;
        e.push_back(j);
        next.push_back(e);
      }
    combos = std::move(next);
  }

  double radial = 0.0, angular = 0.0;
  for (std::size_t q = 0; q < o.inputs; ++q) {
    auto f = band_limited_field(g, band, o.seed + q);
    auto full = evaluate(op, f, {{}, {}, path, true});
    SampledField sum(g);
    for (const auto& c : combos) {
      LevelMap lv(c.begin(), c.end());
      sum += evaluate(op, f, {lv, {}, path, true});
    }
    radial = std::max(radial, relative_l2_error(sum, full));

    for (int i = 0; i < d; ++i) {
      for (int j = 0; j <= op.levels[static_cast<std::size_t>(i)]; ++j) {
        LevelMap lv(static_cast<std::size_t>(d));
        lv[static_cast<std::size_t>(i)] = j;
        auto partial = evaluate(op, f, {lv, {}, path, true});
        SampledField acc(g);
        std::size_t count = direction_grid(sp.factor_dim(i), j, op.sector_spacing_scale).size();
        for (std::size_t nu = 0; nu < count; ++nu) {
          SectorMap sc(static_cast<std::size_t>(d));
          sc[static_cast<std::size_t>(i)] = nu;
          acc += evaluate(op, f, {lv, sc, path, true});
        }
        angular = std::max(angular, relative_l2_error(acc, partial));
      }
    }
  }
  r.scalar("levels_defect", radial);
  r.scalar("sectors_defect", angular);
  r.criterion("levels_sum_to_operator", radial <= o.tolerance);
  r.criterion("sectors_sum_to_level", angular <= o.tolerance);
  return r;
}

ExperimentReport inversion_check(const InversionOptions& o) {
  ExperimentReport r("inversion_check");
  r.param("n", o.n);
  r.param("extent", o.extent);
  r.param("shift", o.shift);
  r.param("seed", static_cast<long long>(o.seed));
  std::string pts;
  for (std::size_t q = 0; q < o.points.size(); ++q) pts += (q ? "," : "") + std::to_string(o.points[q]);
  r.param("points", pts);

  Table& tb = r.table("inversion", {"points", "identity_error", "translation_error"});
  double worst_id = 0.0, worst_tr = 0.0;
  for (int p : o.points) {
    auto g = make_grid(ProductSpace({o.n}), o.extent, p);
    auto id = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g);
    auto tr = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::translation(g.space(), o.shift), g);
    auto f = band_limited_field(g, {std::ldexp(1.0, id.levels[0])}, o.seed + static_cast<std::uint64_t>(p));
    ApplyRequest req;
    req.path = resolve_path(id, o.path);
    double e_id = relative_l2_error(evaluate(id, f, req), f);

    // f(x + a) from the spectrum: multiply by e^{2 pi i a sum_k xi_k}.
    auto spec = forward_transform(f);
    std::vector<int> idx(static_cast<std::size_t>(o.n));
    for (std::size_t k = 0; k < spec.size(); ++k) {
      g.unravel(k, idx);
      double s = 0.0;
      for (int a = 0; a < o.n; ++a) s += g.frequency_of_slot(a, idx[static_cast<std::size_t>(a)]);
      spec[k] *= std::polar(1.0, 2.0 * std::numbers::pi * o.shift * s);
    }
    auto shifted = inverse_transform(g, spec);
    double e_tr = relative_l2_error(evaluate(tr, f, req), shifted);
    tb.rows.push_back({static_cast<double>(p), e_id, e_tr});
    worst_id = std::max(worst_id, e_id);
    worst_tr = std::max(worst_tr, e_tr);
  }
  r.scalar("identity_error", worst_id);
  r.scalar("translation_error", worst_tr);
  r.criterion("identity", worst_id <= o.tolerance);
  r.criterion("translation", worst_tr <= o.tolerance);
  return r;
}

ExperimentReport factorized_check(const FactorizedOptions& o) {
  ExperimentReport r("factorized_oracle");
  r.param("specs", o.specs);
  r.param("seed", static_cast<long long>(o.seed));
  r.param("speed_points", o.speed_points);
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  auto random_factor = [&](int n) -> PhaseFactorPtr {
    switch (static_cast<int>(4.0 * U(rng)) % 4) {
      case 0: return identity_factor(n);
      case 1: return translation_factor(n, U(rng) - 0.5);
      case 2: return halfwave_factor(n);
      default: return perturbed_factor(n, 0.1 * U(rng));
    }
  };

  Table& tb = r.table("factorized", {"index", "axes", "relative_error"});
  double worst = 0.0;
  for (std::size_t q = 0; q < o.specs; ++q) {
    std::vector<int> dims = q % 2 == 0 ? std::vector<int>{1, 1} : std::vector<int>{2, 1};
    ProductSpace sp(dims);
    auto g = make_grid(sp, 0.75 + 0.5 * U(rng), sp.total_dim() == 2 ? 32 : 12);
    PhaseSpec phi(sp, {random_factor(dims[0]), random_factor(dims[1])});
    double radius = 0.5 + 0.5 * U(rng);
    auto sym = U(rng) < 0.5 ? SymbolSpec::critical(sp, radius) : SymbolSpec::rough_rho(sp, 0.5 + 0.5 * U(rng), radius);
    std::vector<int> levels;
    for (int i = 0; i < 2; ++i) levels.push_back(static_cast<int>(U(rng) * (max_truncation_level(g, i) + 1)));
    auto op = make_operator(sym, phi, g, levels, U(rng) < 0.5 ? Truncation::sharp : Truncation::smooth);
    auto f = random_field(g, rng);
    double e = relative_l2_error(apply_factorized(op, f), apply(op, f));
    tb.rows.push_back({static_cast<double>(q), static_cast<double>(sp.total_dim()), e});
    worst = std::max(worst, e);
  }
  r.scalar("max_relative_error", worst);
  r.criterion("matches_direct", worst <= o.tolerance);

  // Timed comparison on dims (1,1); a phase that is not linear in x keeps
  // the direct path on its generic table route.
  ProductSpace sp({1, 1});
  auto g = make_grid(sp, 1.0, o.speed_points);
  PhaseSpec phi(sp, {perturbed_factor(1, 0.1), halfwave_factor(1)});
  auto op = make_operator(SymbolSpec::critical(sp, 0.9), phi, g);
  auto f = random_field(g, rng);
  auto time_best = [&](auto&& fn) {
    double best = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < std::max(1, o.repeats); ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      fn();
      best = std::min(best, seconds_since(t0));
    }
    return best;
  };
  SampledField a(g), b(g);
  double t_direct = time_best([&] { a = apply(op, f); });
  double t_fact = time_best([&] { b = apply_factorized(op, f); });
  double speedup = t_direct / t_fact;
  r.timing("direct_ms", 1e3 * t_direct);
  r.timing("factorized_ms", 1e3 * t_fact);
  r.timing("speedup", speedup);
  r.scalar("timed_relative_error", relative_l2_error(b, a));
  r.criterion("speedup", speedup >= o.min_speedup);
  return r;
}

}  // namespace mpfio
