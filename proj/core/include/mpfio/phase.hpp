#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mpfio/lattice.hpp"

namespace mpfio {

/// One factor Phi_i(x_i, xi_i) of a factorized phase. Implementations must be
/// positively homogeneous of degree one in xi_i.
class PhaseFactor {
 public:
  explicit PhaseFactor(int dim);
  virtual ~PhaseFactor() = default;

  int dim() const { return dim_; }
  virtual std::string tag() const = 0;
  virtual double value(std::span<const double> x, std::span<const double> xi) const = 0;

  /// grad_xi Phi_i. The default uses central differences with step 1e-4.
  virtual void gradient(std::span<const double> x, std::span<const double> xi, std::span<double> out) const;
  virtual bool has_analytic_gradient() const { return false; }

  /// True when Phi_i(x, xi) = x.xi + psi(xi) for some psi.
  virtual bool linear_in_x() const { return false; }
  /// psi(xi) for phases that are linear in x. Throws otherwise.
  virtual double frequency_part(std::span<const double> xi) const;

  /// Central-difference gradient with an explicit step.
  void gradient_fd(std::span<const double> x, std::span<const double> xi, double h, std::span<double> out) const;

 private:
  int dim_;
};

using PhaseFactorPtr = std::shared_ptr<const PhaseFactor>;

/// x.xi
PhaseFactorPtr identity_factor(int dim);
/// (x + a).xi with the shift a applied on every coordinate.
PhaseFactorPtr translation_factor(int dim, double a);
/// x.xi + |xi|
PhaseFactorPtr halfwave_factor(int dim);
/// x.xi + eps g(x) |xi| with g(x) = bump(2|x| / radius). Throws if eps is too
/// large for the mixed Hessian to stay nonsingular.
PhaseFactorPtr perturbed_factor(int dim, double eps, double radius = 1.0);
/// Callback-backed factor. The gradient callback may be empty.
PhaseFactorPtr custom_factor(
    int dim, std::string tag, std::function<double(std::span<const double>, std::span<const double>)> value,
    std::function<void(std::span<const double>, std::span<const double>, std::span<double>)> gradient = {});

/// Phi(x, xi) = sum_i Phi_i(x_i, xi_i).
class PhaseSpec {
 public:
  PhaseSpec(ProductSpace space, std::vector<PhaseFactorPtr> factors);

  static PhaseSpec identity(const ProductSpace& space);
  static PhaseSpec translation(const ProductSpace& space, double a);
  static PhaseSpec halfwave(const ProductSpace& space);
  static PhaseSpec perturbed(const ProductSpace& space, double eps, double radius = 1.0);

  const ProductSpace& space() const { return space_; }
  const PhaseFactor& factor(int i) const { return *factors_.at(static_cast<std::size_t>(i)); }
  PhaseFactorPtr factor_ptr(int i) const { return factors_.at(static_cast<std::size_t>(i)); }
  /// Builtin tag if all factors agree, else the per-factor tags joined by '*'.
  std::string tag() const;
  bool linear_in_x() const;

  /// Full phase at global coordinates (length n each).
  double value(std::span<const double> x, std::span<const double> xi) const;
  /// Phi_i at factor-local coordinates.
  double factor_value(int i, std::span<const double> xi_x, std::span<const double> xi) const {
    return factor(i).value(xi_x, xi);
  }

 private:
  ProductSpace space_;
  std::vector<PhaseFactorPtr> factors_;
};

double eval_phase(const PhaseSpec& phi, std::span<const double> x, std::span<const double> xi);

/// Max over random samples and scales t of |Phi(x, t xi) - t Phi(x, xi)| / (1 + |t Phi|).
/// Frequencies are drawn from the grid's resolvable range with |xi_i| >= spacing.
double check_homogeneity(const PhaseSpec& phi, const LatticeGrid& grid, std::size_t samples,
                         std::span<const double> scales, std::uint64_t seed = 1);

/// Minimum over factors and samples of |det| of the mixed second-difference
/// matrix d^2 Phi_i / dx_i dxi_i. Uses grid nodes for x and random unit xi.
/// fd_step <= 0 selects max(1e-4, spacing/16).
double check_nondegeneracy(const PhaseSpec& phi, const LatticeGrid& grid, std::size_t samples,
                           std::uint64_t seed = 1, double fd_step = 0.0);

/// Phi_i(x_i, xi_i) - grad_xi Phi_i(x_i, direction) . xi_i
double psi_remainder(const PhaseSpec& phi, int i, std::span<const double> x_i, std::span<const double> xi_i,
                     std::span<const double> direction);

}  // namespace mpfio
