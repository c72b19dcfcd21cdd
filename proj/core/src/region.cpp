#include "mpfio/region.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mpfio/decomp.hpp"
#include "mpfio/error.hpp"
#include "mpfio/parallel.hpp"

namespace mpfio {

namespace {

struct Geometry {
  double along;
  double across;
};

// Long-axis and transverse parts of ybar - grad_xi Phi_i(x, xi^nu).
Geometry offsets(const PhaseFactor& f, std::span<const double> x, std::span<const double> dir,
                 std::span<const double> center, std::vector<double>& grad) {
  f.gradient(x, dir, grad);
  double along = 0.0, total = 0.0;
  for (std::size_t a = 0; a < dir.size(); ++a) {
    double v = center[a] - grad[a];
    along += v * dir[a];
    total += v * v;
  }
  return {std::abs(along), std::sqrt(std::max(0.0, total - along * along))};
}

bool inside(const Geometry& g, int j, double C) {
  return g.along <= C * std::ldexp(1.0, -j) && g.across <= C * std::sqrt(std::ldexp(1.0, -j));
}

double rectangle_box_volume(int n, int j, double C) {
  double L = 2.0 * C * std::ldexp(1.0, -j);
  double w = C * std::sqrt(std::ldexp(1.0, -j));
  if (n == 1) return L;
  if (n == 2) return L * 2.0 * w;
  return L * std::numbers::pi * w * w;
}

double direction_count(int n, int j, double scale) {
  if (n == 1) return 2.0;
  if (n == 2) return std::ceil(2.0 * std::numbers::pi * std::sqrt(std::ldexp(1.0, j)) / scale);
  return std::ceil(4.0 * std::numbers::pi * std::ldexp(1.0, j) / (scale * scale));
}

// Marks every factor-i node of the rectangle. For phases linear in x the
// gradient is x + g0(xi^nu), so only a bounding box around ybar - g0 is scanned.
void mark(const PhaseSpec& phase, const LatticeGrid& grid, int i, std::span<const double> center,
          std::span<const double> dir, int j, double C, NodeMask& mask) {
  const ProductSpace& sp = grid.space();
  const PhaseFactor& f = phase.factor(i);
  const int off = sp.axis_offset(i), nd = sp.factor_dim(i);
  std::vector<double> x(static_cast<std::size_t>(nd)), grad(static_cast<std::size_t>(nd));
  const std::size_t count = grid.factor_node_count(i);

  if (f.linear_in_x()) {
    std::vector<double> zero(static_cast<std::size_t>(nd), 0.0), g0(static_cast<std::size_t>(nd));
    f.gradient(zero, dir, g0);
    double reach = std::hypot(C * std::ldexp(1.0, -j), C * std::sqrt(std::ldexp(1.0, -j)));
    std::vector<int> lo(static_cast<std::size_t>(nd)), hi(static_cast<std::size_t>(nd));
    for (int a = 0; a < nd; ++a) {
      double c = center[static_cast<std::size_t>(a)] - g0[static_cast<std::size_t>(a)];
      double h = grid.spacing(off + a), E = grid.extent(off + a);
      lo[static_cast<std::size_t>(a)] = std::max(0, static_cast<int>(std::floor((c - reach + E) / h)) - 1);
      hi[static_cast<std::size_t>(a)] = std::min(grid.points(off + a) - 1, static_cast<int>(std::ceil((c + reach + E) / h)) + 1);
      if (lo[static_cast<std::size_t>(a)] > hi[static_cast<std::size_t>(a)]) return;
    }
    std::vector<int> k(lo);
    for (;;) {
      std::size_t sub = 0;
      for (int a = 0; a < nd; ++a) {
        x[static_cast<std::size_t>(a)] = grid.coordinate(off + a, k[static_cast<std::size_t>(a)]);
        sub = sub * static_cast<std::size_t>(grid.points(off + a)) + static_cast<std::size_t>(k[static_cast<std::size_t>(a)]);
      }
      if (!mask[sub] && inside(offsets(f, x, dir, center, grad), j, C)) mask[sub] = 1;
      int a = nd - 1;
      while (a >= 0 && ++k[static_cast<std::size_t>(a)] > hi[static_cast<std::size_t>(a)]) {
        k[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)];
        --a;
      }
      if (a < 0) break;
    }
    return;
  }
  parallel_for(count, [&](std::size_t b, std::size_t e) {
    std::vector<double> xx(static_cast<std::size_t>(nd)), gg(static_cast<std::size_t>(nd));
    for (std::size_t s = b; s < e; ++s) {
      if (mask[s]) continue;
      grid.factor_point(i, s, xx);
      if (inside(offsets(f, xx, dir, center, gg), j, C)) mask[s] = 1;
    }
  }, 256);
}

void check_center(const LatticeGrid& grid, int i, std::span<const double> center) {
  if (i < 0 || i >= grid.space().factors()) throw InvalidArgument("region: factor index out of range");
  if (static_cast<int>(center.size()) != grid.space().factor_dim(i))
    throw InvalidArgument("region: center dimension mismatch");
}

std::vector<double> factor_center(const RectangleAtom& atom, int i) {
  const ProductSpace& sp = atom.samples.grid().space();
  auto b = atom.center.begin() + sp.axis_offset(i);
  return {b, b + sp.factor_dim(i)};
}

}  // namespace

bool InfluenceRectangle::contains(const PhaseSpec& phase, std::span<const double> x_i) const {
  std::vector<double> grad(direction.size());
  return inside(offsets(phase.factor(factor), x_i, direction, center, grad), level, C);
}

InfluenceRectangle influence_rectangle(const PhaseSpec& phase, const LatticeGrid& grid, int i,
                                       std::span<const double> center_i, int j, std::size_t nu, double C,
                                       double sector_spacing_scale) {
  check_center(grid, i, center_i);
  if (!(C > 0.0)) throw InvalidArgument("influence_rectangle: C must be positive");
  AngularGrid dirs = direction_grid(grid.space().factor_dim(i), j, sector_spacing_scale);
  if (nu >= dirs.size()) throw InvalidArgument("influence_rectangle: sector index out of range");
  InfluenceRectangle r;
  r.factor = i;
  r.level = j;
  r.nu = nu;
  r.C = C;
  r.direction.assign(dirs.direction(nu).begin(), dirs.direction(nu).end());
  r.center.assign(center_i.begin(), center_i.end());
  r.mask.assign(grid.factor_node_count(i), 0);
  mark(phase, grid, i, r.center, r.direction, j, C, r.mask);
  r.volume = mask_volume(grid, i, r.mask);
  r.box_volume = rectangle_box_volume(grid.space().factor_dim(i), j, C);
  return r;
}

InfluenceRectangle influence_rectangle(const PhaseSpec& phase, const RectangleAtom& atom, int i, int j,
                                       std::size_t nu, double C, double sector_spacing_scale) {
  auto c = factor_center(atom, i);
  return influence_rectangle(phase, atom.samples.grid(), i, c, j, nu, C, sector_spacing_scale);
}

InfluenceRegion influence_region(const PhaseSpec& phase, const LatticeGrid& grid, int i,
                                 std::span<const double> center_i, double r_i, int k, double C, int J,
                                 double sector_spacing_scale) {
  check_center(grid, i, center_i);
  if (!(r_i < 1.0)) throw InvalidArgument("influence_region: r_i >= 1, factor belongs to J2 and has no region");
  if (k < 0 || J < k) throw InvalidArgument("influence_region: need 0 <= k <= J");
  const int n = grid.space().factor_dim(i);
  InfluenceRegion q;
  q.factor = i;
  q.base_level = k;
  q.top_level = J;
  q.C = C;
  q.radius = r_i;
  q.mask.assign(grid.factor_node_count(i), 0);
  for (int j = k; j <= J; ++j) {
    AngularGrid dirs = direction_grid(n, j, sector_spacing_scale);
    for (std::size_t nu = 0; nu < dirs.size(); ++nu) {
      mark(phase, grid, i, center_i, dirs.direction(nu), j, C, q.mask);
      ++q.members;
    }
  }
  q.volume = mask_volume(grid, i, q.mask);
  q.ratio = q.volume / r_i;
  for (int j = J + 1; j <= J + 60; ++j)
    q.tail_bound += direction_count(n, j, sector_spacing_scale) * rectangle_box_volume(n, j, C);
  return q;
}

InfluenceRegion influence_region(const PhaseSpec& phase, const RectangleAtom& atom, int i, double C, int J,
                                 double sector_spacing_scale) {
  double r = atom.radii.at(static_cast<std::size_t>(i));
  if (!(r < 1.0)) throw InvalidArgument("influence_region: r_i >= 1, factor belongs to J2 and has no region");
  auto c = factor_center(atom, i);
  return influence_region(phase, atom.samples.grid(), i, c, r, *atom.k[static_cast<std::size_t>(i)], C, J,
                          sector_spacing_scale);
}

NodeMask complement(const NodeMask& mask) {
  NodeMask out(mask.size());
  for (std::size_t k = 0; k < mask.size(); ++k) out[k] = mask[k] ? 0 : 1;
  return out;
}

double mask_volume(const LatticeGrid& grid, int i, const NodeMask& mask) {
  std::size_t c = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }));
  return static_cast<double>(c) * grid.factor_cell_volume(i);
}

SampledField mask_field(const LatticeGrid& grid, int i, const NodeMask& mask) {
  const ProductSpace& sp = grid.space();
  if (mask.size() != grid.factor_node_count(i)) throw InvalidArgument("mask_field: mask size mismatch");
  std::vector<double> ext;
  std::vector<int> pts;
  for (int a = sp.axis_offset(i); a < sp.axis_offset(i) + sp.factor_dim(i); ++a) {
    ext.push_back(grid.extent(a));
    pts.push_back(grid.points(a));
  }
  LatticeGrid g(ProductSpace({sp.factor_dim(i)}), ext, pts);
  std::vector<Complex> v(mask.size());
  for (std::size_t k = 0; k < mask.size(); ++k) v[k] = mask[k] ? 1.0 : 0.0;
  return SampledField(g, std::move(v));
}

}  // namespace mpfio
