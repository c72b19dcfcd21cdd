#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mpfio/lattice.hpp"
#include "mpfio/phase.hpp"
#include "mpfio/symbol.hpp"

namespace mpfio {

/// How the frequency sum is cut off at level J.
enum class Truncation {
  sharp,   // keep |xi_i| <= 2^{J_i + 1}
  smooth,  // weight bump(2^{-J_i} |xi_i|) = sum_{j <= J_i} phi_j
};

/// T f(x) = sum_xi e^{2 pi i Phi(x, xi)} sigma(x, xi) fhat(xi) dxi on a grid.
struct OperatorSpec {
  SymbolSpec symbol;
  PhaseSpec phase;
  LatticeGrid grid;
  std::vector<int> levels;  // truncation level J_i per factor
  Truncation truncation = Truncation::sharp;
  double sector_spacing_scale = 1.0;
};

/// Largest J with 2^{J+1} <= the factor's max resolvable frequency.
int max_truncation_level(const LatticeGrid& grid, int factor);

/// Validates that 2^{J_i+1} fits under the grid's resolvable band.
OperatorSpec make_operator(SymbolSpec symbol, PhaseSpec phase, LatticeGrid grid, std::vector<int> levels,
                           Truncation truncation = Truncation::sharp);
/// Same J on every factor; a negative value picks max_truncation_level per factor.
OperatorSpec make_operator(SymbolSpec symbol, PhaseSpec phase, LatticeGrid grid, int level = -1,
                           Truncation truncation = Truncation::sharp);

/// Per-factor dyadic level (unset = no Littlewood-Paley restriction).
using LevelMap = std::vector<std::optional<int>>;
/// Per-factor sector index at the factor's level (unset = no angular cutoff).
using SectorMap = std::vector<std::optional<std::size_t>>;

enum class ApplyPath {
  direct,      // O(Nx * Nxi) double loop
  factorized,  // sequential per-factor contraction
  multiplier,  // FFT route for phases x.xi + psi(xi) with separable symbols
  automatic,
};

struct ApplyRequest {
  LevelMap levels;
  SectorMap sectors;
  ApplyPath path = ApplyPath::direct;
  /// Direct path only: when false, skip per-axis exponential tables and
  /// evaluate phase and symbol per (x, xi) pair.
  bool use_structure = true;
};

SampledField evaluate(const OperatorSpec& op, const SampledField& f, const ApplyRequest& request);
/// Conjugate transpose of the node-to-node map realized by evaluate().
SampledField evaluate_adjoint(const OperatorSpec& op, const SampledField& g, const ApplyRequest& request);

SampledField apply(const OperatorSpec& op, const SampledField& f);
SampledField apply_adjoint(const OperatorSpec& op, const SampledField& g);
SampledField apply_factorized(const OperatorSpec& op, const SampledField& f);
SampledField apply_partial(const OperatorSpec& op, const SampledField& f, const LevelMap& levels);
SampledField apply_sector(const OperatorSpec& op, const SampledField& f, const LevelMap& levels,
                          const SectorMap& sectors);

bool supports_factorized(const OperatorSpec& op);
bool supports_multiplier(const OperatorSpec& op);
ApplyPath resolve_path(const OperatorSpec& op, ApplyPath requested);

/// K(x, y) = sum_xi e^{2 pi i (Phi(x, xi) - y.xi)} sigma(x, xi) phi_j chi^nu dxi.
Complex kernel_value(const OperatorSpec& op, const LevelMap& levels, const SectorMap& sectors,
                     std::span<const double> x, std::span<const double> y);

/// Fraction of ||fhat||^2 outside the box |xi_i| <= 2^{J_i - 1}.
double truncation_defect(const OperatorSpec& op, const SampledField& f);

/// Frequency weight of the request at a full frequency vector (truncation,
/// Littlewood-Paley and sector factors multiplied together).
double frequency_weight(const OperatorSpec& op, const ApplyRequest& request, std::span<const double> xi);

}  // namespace mpfio
