#include "mpfio/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mpfio/error.hpp"

namespace mpfio {

namespace {

double glue(double u) { return u > 0.0 ? std::exp(-1.0 / u) : 0.0; }

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

}  // namespace

double bump(double t) {
  t = std::abs(t);
  if (t <= 1.0) return 1.0;
  if (t >= 2.0) return 0.0;
  double a = glue(2.0 - t);
  double b = glue(t - 1.0);
  return a / (a + b);
}

double bump_complement(double t) {
  t = std::abs(t);
  if (t <= 1.0) return 0.0;
  if (t >= 2.0) return 1.0;
  double a = glue(2.0 - t);
  double b = glue(t - 1.0);
  return b / (a + b);
}

double bump_derivative(double t) {
  double s = t < 0.0 ? -1.0 : 1.0;
  t = std::abs(t);
  if (t <= 1.0 || t >= 2.0) return 0.0;
  double u = 2.0 - t, v = t - 1.0;
  double a = glue(u), b = glue(v);
  double da = -a / (u * u);
  double db = b / (v * v);
  double den = a + b;
  return s * (da * b - a * db) / (den * den);
}

double lp_weight(int j, double xi_norm) {
  if (j < 0) throw InvalidArgument("lp_weight: level must be >= 0");
  double r = std::abs(xi_norm);
  if (j == 0) return bump(r);
  double a = std::ldexp(r, -j);
  return bump(a) - bump(2.0 * a);
}

double lp_weight(int j, std::span<const double> xi) { return lp_weight(j, norm(xi)); }

double lp_partial_sum(int J, double xi_norm) { return bump(std::ldexp(std::abs(xi_norm), -J)); }

// ---------------------------------------------------------------- AngularGrid

AngularGrid AngularGrid::build(int n, int j, double spacing_scale) {
  if (j < 0) throw InvalidArgument("direction_grid: level must be >= 0");
  if (!(spacing_scale > 0.0)) throw InvalidArgument("direction_grid: spacing scale must be positive");
  std::vector<double> dirs;
  if (n == 1) {
    dirs = {1.0, -1.0};
    return AngularGrid(n, j, spacing_scale, std::move(dirs), false);
  }
  if (n == 2) {
    auto count = static_cast<std::size_t>(
        std::ceil(2.0 * std::numbers::pi * std::sqrt(std::ldexp(1.0, j)) / spacing_scale));
    count = std::max<std::size_t>(count, 3);
    dirs.reserve(2 * count);
    for (std::size_t k = 0; k < count; ++k) {
      double th = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
      dirs.push_back(std::cos(th));
      dirs.push_back(std::sin(th));
    }
    return AngularGrid(n, j, spacing_scale, std::move(dirs), true);
  }
  if (n == 3) {
    auto count = static_cast<std::size_t>(
        std::ceil(4.0 * std::numbers::pi * std::ldexp(1.0, j) / (spacing_scale * spacing_scale)));
    count = std::max<std::size_t>(count, 4);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    dirs.reserve(3 * count);
    for (std::size_t k = 0; k < count; ++k) {
      double z = 1.0 - (2.0 * static_cast<double>(k) + 1.0) / static_cast<double>(count);
      double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      double th = golden * static_cast<double>(k);
      dirs.push_back(rho * std::cos(th));
      dirs.push_back(rho * std::sin(th));
      dirs.push_back(z);
    }
    return AngularGrid(n, j, spacing_scale, std::move(dirs), false);
  }
  throw InvalidArgument("direction_grid: unsupported dimension " + std::to_string(n));
}

AngularGrid AngularGrid::from_directions(int n, int j, std::vector<double> flat) {
  if (n < 1 || n > 3) throw InvalidArgument("direction_grid: unsupported dimension " + std::to_string(n));
  if (j < 0) throw InvalidArgument("direction_grid: level must be >= 0");
  if (flat.empty() || flat.size() % static_cast<std::size_t>(n) != 0)
    throw InvalidArgument("direction_grid: direction list length must be a multiple of n");
  for (std::size_t k = 0; k < flat.size(); k += static_cast<std::size_t>(n)) {
    double s = norm({flat.data() + k, static_cast<std::size_t>(n)});
    if (!(s > 0.0)) throw InvalidArgument("direction_grid: zero direction");
    for (int c = 0; c < n; ++c) flat[k + static_cast<std::size_t>(c)] /= s;
  }
  return AngularGrid(n, j, 1.0, std::move(flat), false);
}

void AngularGrid::raw_weights(std::span<const double> unit, std::vector<std::pair<int, double>>& out) const {
  out.clear();
  const double scale = std::sqrt(std::ldexp(1.0, j_));
  auto eval = [&](std::size_t nu) {
    auto d = direction(nu);
    double s = 0.0;
    for (int c = 0; c < n_; ++c) {
      double diff = unit[static_cast<std::size_t>(c)] - d[static_cast<std::size_t>(c)];
      s += diff * diff;
    }
    double w = bump(scale * std::sqrt(s));
    if (w > 0.0) out.emplace_back(static_cast<int>(nu), w);
  };
  if (uniform_circle_) {
    const std::size_t N = size();
    const double step = 2.0 * std::numbers::pi / static_cast<double>(N);
    // phi vanishes once the chord reaches 2 * 2^{-j/2}.
    double half_angle = 2.0 * std::asin(std::min(1.0, 1.0 / scale));
    auto reach = static_cast<std::size_t>(std::ceil(half_angle / step)) + 1;
    if (2 * reach + 1 >= N) {
      for (std::size_t nu = 0; nu < N; ++nu) eval(nu);
      return;
    }
    double th = std::atan2(unit[1], unit[0]);
    if (th < 0) th += 2.0 * std::numbers::pi;
    auto centre = static_cast<long>(std::llround(th / step));
    std::vector<std::size_t> idx;
    for (long o = -static_cast<long>(reach); o <= static_cast<long>(reach); ++o) {
      long k = (centre + o) % static_cast<long>(N);
      if (k < 0) k += static_cast<long>(N);
      idx.push_back(static_cast<std::size_t>(k));
    }
    std::sort(idx.begin(), idx.end());
    for (std::size_t k : idx) eval(k);
    return;
  }
  for (std::size_t nu = 0; nu < size(); ++nu) eval(nu);
}

double AngularGrid::min_separation() const {
  double best = 2.0;
  for (std::size_t a = 0; a < size(); ++a)
    for (std::size_t b = a + 1; b < size(); ++b) {
      double s = 0.0;
      for (int c = 0; c < n_; ++c) {
        double diff = direction(a)[static_cast<std::size_t>(c)] - direction(b)[static_cast<std::size_t>(c)];
        s += diff * diff;
      }
      best = std::min(best, std::sqrt(s));
    }
  return best;
}

AngularGrid direction_grid(int n, int j, double spacing_scale) { return AngularGrid::build(n, j, spacing_scale); }

// ---------------------------------------------------------------- SectorCutoffs

SectorCutoffs::SectorCutoffs(AngularGrid grid) : grid_(std::move(grid)) {}

namespace {

std::vector<double> unit_of(std::span<const double> xi) {
  double r = norm(xi);
  if (!(r > 0.0)) throw InvalidArgument("angular_weight: xi = 0 has no direction");
  std::vector<double> u(xi.begin(), xi.end());
  for (auto& c : u) c /= r;
  return u;
}

}  // namespace

double SectorCutoffs::denominator(std::span<const double> xi) const {
  std::vector<std::pair<int, double>> raw;
  grid_.raw_weights(unit_of(xi), raw);
  double s = 0.0;
  for (auto& [nu, w] : raw) s += w;
  if (s < 1.0) throw NumericError("sector cutoff denominator below 1: direction grid does not cover");
  return s;
}

void SectorCutoffs::weights(std::span<const double> xi, std::vector<std::pair<int, double>>& out) const {
  if (static_cast<int>(xi.size()) != grid_.dim()) throw InvalidArgument("angular_weight: dimension mismatch");
  grid_.raw_weights(unit_of(xi), out);
  double s = 0.0;
  for (auto& [nu, w] : out) s += w;
  if (s < 1.0) throw NumericError("sector cutoff denominator below 1: direction grid does not cover");
  for (auto& [nu, w] : out) w /= s;
}

double SectorCutoffs::weight(std::size_t nu, std::span<const double> xi) const {
  if (nu >= size()) throw InvalidArgument("angular_weight: sector index out of range");
  std::vector<std::pair<int, double>> w;
  weights(xi, w);
  for (auto& [k, v] : w)
    if (static_cast<std::size_t>(k) == nu) return v;
  return 0.0;
}

double angular_weight(const SectorCutoffs& cutoffs, std::size_t nu, std::span<const double> xi) {
  return cutoffs.weight(nu, xi);
}

std::string export_directions(const AngularGrid& grid) {
  std::ostringstream os;
  os.precision(17);
  os << "# n=" << grid.dim() << " j=" << grid.level() << " count=" << grid.size() << '\n';
  for (std::size_t nu = 0; nu < grid.size(); ++nu) {
    os << nu;
    for (double c : grid.direction(nu)) os << ' ' << c;
    os << '\n';
  }
  return os.str();
}

}  // namespace mpfio
