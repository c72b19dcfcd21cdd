#include "mpfio/atom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mpfio/error.hpp"

namespace mpfio {

std::string to_string(AtomProfile p) {
  switch (p) {
    case AtomProfile::odd_bump: return "odd_bump";
    case AtomProfile::two_hump: return "two_hump";
    case AtomProfile::random_mix: return "random_mix";
    case AtomProfile::constant: return "constant";
  }
  return "unknown";
}

AtomProfile parse_profile(const std::string& name) {
  if (name == "odd_bump" || name == "odd-bump" || name == "tensor-odd") return AtomProfile::odd_bump;
  if (name == "two_hump" || name == "two-hump") return AtomProfile::two_hump;
  if (name == "random_mix" || name == "random-mix") return AtomProfile::random_mix;
  if (name == "constant") return AtomProfile::constant;
  throw InvalidArgument("unknown atom profile '" + name + "'");
}

std::optional<int> dyadic_index(double r) {
  if (!(r > 0.0)) throw InvalidArgument("dyadic_index: radius must be positive");
  if (r > 2.0) return std::nullopt;
  return std::max(0, static_cast<int>(std::ceil(-std::log2(r))));
}

double RectangleAtom::measure() const {
  const ProductSpace& sp = samples.grid().space();
  double m = 1.0;
  for (int i = 0; i < sp.factors(); ++i) m *= std::pow(radii[static_cast<std::size_t>(i)], sp.factor_dim(i));
  return m;
}

bool RectangleAtom::in_factor_cube(int i, std::span<const double> x_i) const {
  const ProductSpace& sp = samples.grid().space();
  int off = sp.axis_offset(i);
  double half = radii[static_cast<std::size_t>(i)] / 2.0;
  for (int a = 0; a < sp.factor_dim(i); ++a)
    if (std::abs(x_i[static_cast<std::size_t>(a)] - center[static_cast<std::size_t>(off + a)]) >= half) return false;
  return true;
}

bool RectangleAtom::in_rectangle(std::span<const double> x) const {
  const ProductSpace& sp = samples.grid().space();
  for (int i = 0; i < sp.factors(); ++i)
    if (!in_factor_cube(i, x.subspan(static_cast<std::size_t>(sp.axis_offset(i)),
                                     static_cast<std::size_t>(sp.factor_dim(i)))))
      return false;
  return true;
}

namespace {

double envelope(double t) { return std::abs(t) < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

// Continuum second moment of the envelope, so that two_hump is mean-zero
// before the discrete correction.
double envelope_second_moment() {
  static const double m2 = [] {
    const int n = 20000;
    double num = 0.0, den = 0.0;
    for (int k = 0; k < n; ++k) {
      double t = -1.0 + (k + 0.5) * 2.0 / n;
      num += t * t * envelope(t);
      den += envelope(t);
    }
    return num / den;
  }();
  return m2;
}

std::vector<double> axis_profile(const LatticeGrid& g, int axis, double c, double r, AtomProfile p, double w_odd,
                                 double w_even) {
  const int N = g.points(axis);
  std::vector<double> v(static_cast<std::size_t>(N), 0.0);
  std::vector<int> interior;
  for (int k = 0; k < N; ++k) {
    double t = (g.coordinate(axis, k) - c) / (r / 2.0);
    if (std::abs(t) >= 1.0) continue;
    interior.push_back(k);
    double e = envelope(t);
    double val = 0.0;
    switch (p) {
      case AtomProfile::odd_bump: val = t * e; break;
      case AtomProfile::two_hump: val = (t * t - envelope_second_moment()) * e; break;
      case AtomProfile::random_mix: val = w_odd * t * e + w_even * (t * t - envelope_second_moment()) * e; break;
      case AtomProfile::constant: val = 1.0; break;
    }
    v[static_cast<std::size_t>(k)] = val;
  }
  if (interior.empty())
    throw InvalidArgument("make_tensor_atom: no grid node inside the cube on axis " + std::to_string(axis));
  if (p != AtomProfile::constant) {
    std::vector<double> vals;
    for (int k : interior) vals.push_back(v[static_cast<std::size_t>(k)]);
    double mean = pairwise_sum(vals) / static_cast<double>(vals.size());
    for (int k : interior) v[static_cast<std::size_t>(k)] -= mean;
  }
  double peak = 0.0;
  for (double x : v) peak = std::max(peak, std::abs(x));
  if (peak == 0.0)
    throw InvalidArgument("make_tensor_atom: profile vanishes on the grid (cube under-resolved on axis " +
                          std::to_string(axis) + ")");
  return v;
}

}  // namespace

RectangleAtom make_tensor_atom(const LatticeGrid& grid, std::vector<double> center, std::vector<double> radii,
                               AtomProfile profile, std::uint64_t seed) {
  const ProductSpace& sp = grid.space();
  if (static_cast<int>(center.size()) != sp.total_dim())
    throw InvalidArgument("make_tensor_atom: center needs one coordinate per axis");
  if (static_cast<int>(radii.size()) != sp.factors())
    throw InvalidArgument("make_tensor_atom: need one side length per factor");
  for (double r : radii)
    if (!(r > 0.0)) throw InvalidArgument("make_tensor_atom: side lengths must be positive");
  for (int a = 0; a < grid.axes(); ++a) {
    double r = radii[static_cast<std::size_t>(sp.factor_of_axis(a))];
    double margin = 2.0 * grid.spacing(a);
    double lo = center[static_cast<std::size_t>(a)] - r / 2.0, hi = center[static_cast<std::size_t>(a)] + r / 2.0;
    if (lo < -grid.extent(a) + margin || hi > grid.extent(a) - margin)
      throw InvalidArgument("make_tensor_atom: rectangle exceeds grid on axis " + std::to_string(a));
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::vector<std::vector<double>> axis_vals;
  for (int a = 0; a < grid.axes(); ++a) {
    double wo = coef(rng), we = coef(rng);
    axis_vals.push_back(axis_profile(grid, a, center[static_cast<std::size_t>(a)],
                                     radii[static_cast<std::size_t>(sp.factor_of_axis(a))], profile, wo, we));
  }

  SampledField f(grid);
  std::vector<int> idx(static_cast<std::size_t>(grid.axes()));
  for (std::size_t k = 0; k < grid.node_count(); ++k) {
    grid.unravel(k, idx);
    double v = 1.0;
    for (int a = 0; a < grid.axes() && v != 0.0; ++a)
      v *= axis_vals[static_cast<std::size_t>(a)][static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
    f[k] = v;
  }

  std::vector<std::optional<int>> ks;
  for (double r : radii) ks.push_back(dyadic_index(r));
  RectangleAtom atom{std::move(center), std::move(radii), profile, seed, std::move(ks), std::move(f)};
  double target = 1.0 / std::sqrt(atom.measure());
  atom.samples *= target / lp_norm(atom.samples, 2.0);
  return atom;
}

RectangleAtom make_sum_atom(const std::vector<std::pair<double, RectangleAtom>>& terms) {
  if (terms.empty()) throw InvalidArgument("make_sum_atom: no summands");
  const RectangleAtom& first = terms.front().second;
  RectangleAtom out = first;
  out.samples *= 0.0;
  for (const auto& [w, a] : terms) {
    if (a.center != first.center || a.radii != first.radii || !(a.samples.grid() == first.samples.grid()))
      throw InvalidArgument("make_sum_atom: summands live on different rectangles");
    SampledField t = a.samples;
    t *= w;
    out.samples += t;
  }
  double n = lp_norm(out.samples, 2.0);
  if (n == 0.0) throw InvalidArgument("make_sum_atom: summands cancel exactly");
  out.samples *= (1.0 / std::sqrt(out.measure())) / n;
  if (terms.size() > 1) out.profile = AtomProfile::random_mix;
  return out;
}

bool AtomReport::all_ok() const {
  return l2_ok && support_ok && l1_ok && std::all_of(cancel_ok.begin(), cancel_ok.end(), [](bool b) { return b; });
}

AtomReport validate_atom(const RectangleAtom& a, const AtomTolerances& tol) {
  const SampledField& f = a.samples;
  const LatticeGrid& g = f.grid();
  const ProductSpace& sp = g.space();
  AtomReport r;
  r.l2_norm = lp_norm(f, 2.0);
  r.l2_bound = 1.0 / std::sqrt(a.measure());
  r.l2_ok = r.l2_norm <= r.l2_bound * (1.0 + tol.l2);

  std::vector<double> x(static_cast<std::size_t>(g.axes()));
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    g.node_point(k, x);
    if (!a.in_rectangle(x)) r.support_defect = std::max(r.support_defect, std::abs(f[k]));
  }
  r.support_ok = r.support_defect == 0.0;

  r.l1_norm = lp_norm(f, 1.0);
  r.l1_ok = r.l1_norm <= std::sqrt(a.measure()) * r.l2_norm * (1.0 + tol.l2);

  for (int i = 0; i < sp.factors(); ++i) {
    // Slice integrals: sum over factor-i nodes for each complementary node.
    std::size_t ni = g.factor_node_count(i);
    std::size_t slices = g.node_count() / ni;
    std::vector<Complex> sum(slices);
    std::vector<double> abs_sum(slices, 0.0);
    for (std::size_t k = 0; k < g.node_count(); ++k) {
      std::size_t rest = 0;
      for (int q = 0; q < sp.factors(); ++q)
        if (q != i) rest = rest * g.factor_node_count(q) + g.factor_node(k, q);
      sum[rest] += f[k];
      abs_sum[rest] += std::abs(f[k]);
    }
    double worst = 0.0, scale = 0.0;
    for (std::size_t s = 0; s < slices; ++s) {
      worst = std::max(worst, std::abs(sum[s]));
      scale = std::max(scale, abs_sum[s]);
    }
    double defect = scale > 0.0 ? worst / scale : 0.0;
    r.cancel_defect.push_back(defect);
    r.cancel_ok.push_back(defect <= tol.cancellation);
  }
  return r;
}

IndexPartition index_partition(const std::vector<double>& radii, FactorSet I, std::optional<FactorSet> I1) {
  IndexPartition p;
  p.d = static_cast<int>(radii.size());
  for (int i = 0; i < p.d; ++i)
    if (radii[static_cast<std::size_t>(i)] < 1.0) p.K.insert(i);
  FactorSet all = FactorSet::all(p.d);
  if (!I.subset_of(p.K)) throw InvalidArgument("index_partition: I must consist of factors with r_i < 1");
  p.I = I;
  p.J = all - I;
  p.J1 = p.J & p.K;
  p.J2 = all - p.K;
  p.I1 = I1.value_or(I);
  if (!p.I1.subset_of(I)) throw InvalidArgument("index_partition: I1 must be a subset of I");
  p.I2 = I - p.I1;
  p.validate();
  return p;
}

IndexPartition index_partition(const RectangleAtom& a, FactorSet I, std::optional<FactorSet> I1) {
  return index_partition(a.radii, I, I1);
}

std::string describe_atom(const RectangleAtom& a) {
  std::ostringstream os;
  os.precision(17);
  auto list = [&](const std::vector<double>& v) {
    for (std::size_t k = 0; k < v.size(); ++k) os << (k ? ", " : "") << v[k];
  };
  os << "atom.center = ";
  list(a.center);
  os << "\natom.radii = ";
  list(a.radii);
  os << "\natom.profile = " << to_string(a.profile) << "\natom.seed = " << a.seed << '\n';
  return os.str();
}

}  // namespace mpfio
