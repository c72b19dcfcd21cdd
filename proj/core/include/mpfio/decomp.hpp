#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mpfio {

/// Smooth bump: 1 on |t| <= 1, 0 on |t| >= 2, glued from exp(-1/u) on (1, 2).
double bump(double t);
/// 1 - bump(t) on 1 < |t| < 2 computed from the mirrored glue, so that the
/// pair sums to one without cancellation.
double bump_complement(double t);
/// d/dt bump(t).
double bump_derivative(double t);

/// Dyadic piece phi_j(xi) = bump(2^-j |xi|) - bump(2^-j+1 |xi|), phi_0 = bump(|xi|).
double lp_weight(int j, double xi_norm);
double lp_weight(int j, std::span<const double> xi);
/// Sum of lp_weight over 0..J, i.e. bump(2^-J |xi|).
double lp_partial_sum(int J, double xi_norm);

/// Unit vectors on S^{n-1} for one dyadic level.
class AngularGrid {
 public:
  /// n=1: {+1, -1}. n=2: ceil(2 pi 2^{j/2} / scale) equally spaced angles.
  /// n=3: Fibonacci set with ceil(4 pi 2^j / scale^2) points.
  static AngularGrid build(int n, int j, double spacing_scale = 1.0);
  /// Caller-supplied directions (normalized on entry), flattened n at a time.
  static AngularGrid from_directions(int n, int j, std::vector<double> flat_directions);

  int dim() const { return n_; }
  int level() const { return j_; }
  double spacing_scale() const { return scale_; }
  std::size_t size() const { return dirs_.size() / static_cast<std::size_t>(n_); }
  std::span<const double> direction(std::size_t nu) const {
    return {dirs_.data() + nu * static_cast<std::size_t>(n_), static_cast<std::size_t>(n_)};
  }

  /// Nonzero unnormalized cutoffs phi(2^{j/2} |u - xi^nu|) for a unit vector u.
  void raw_weights(std::span<const double> unit, std::vector<std::pair<int, double>>& out) const;

  /// Smallest pairwise chord distance.
  double min_separation() const;

 private:
  AngularGrid(int n, int j, double scale, std::vector<double> dirs, bool circle)
      : n_(n), j_(j), scale_(scale), dirs_(std::move(dirs)), uniform_circle_(circle) {}
  int n_;
  int j_;
  double scale_;
  std::vector<double> dirs_;
  bool uniform_circle_;
};

AngularGrid direction_grid(int n, int j, double spacing_scale = 1.0);

/// Normalized sector cutoffs chi_j^nu = phi_j^nu / sum_nu phi_j^nu.
class SectorCutoffs {
 public:
  explicit SectorCutoffs(AngularGrid grid);

  const AngularGrid& grid() const { return grid_; }
  int level() const { return grid_.level(); }
  std::size_t size() const { return grid_.size(); }

  /// Sum_nu phi_j^nu(xi). Throws NumericError if below 1 (covering failed).
  double denominator(std::span<const double> xi) const;
  double weight(std::size_t nu, std::span<const double> xi) const;
  /// All nonzero (nu, chi) pairs at xi.
  void weights(std::span<const double> xi, std::vector<std::pair<int, double>>& out) const;

 private:
  AngularGrid grid_;
};

/// chi_j^nu(xi); xi = 0 is rejected.
double angular_weight(const SectorCutoffs& cutoffs, std::size_t nu, std::span<const double> xi);

/// Plain-text table: "index c_0 c_1 ..." one direction per line.
std::string export_directions(const AngularGrid& grid);

}  // namespace mpfio
