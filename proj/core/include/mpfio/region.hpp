#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mpfio/atom.hpp"
#include "mpfio/lattice.hpp"
#include "mpfio/phase.hpp"

namespace mpfio {

/// Node mask over the sub-grid of one factor (1 = member).
using NodeMask = std::vector<std::uint8_t>;

/// Set of x_i with |<ybar_i - grad Phi_i(x_i, xi^nu), xi^nu>| <= C 2^-j and the
/// transverse part of the same vector no longer than C 2^{-j/2}.
struct InfluenceRectangle {
  int factor = 0;
  int level = 0;
  std::size_t nu = 0;
  double C = 4.0;
  std::vector<double> direction;
  std::vector<double> center;  // ybar_i
  NodeMask mask;
  double volume = 0.0;      // node count * cell volume
  double box_volume = 0.0;  // (2C 2^-j)(2C 2^{-j/2})^{n-1} for n <= 2; disk cross-section for n = 3

  bool contains(const PhaseSpec& phase, std::span<const double> x_i) const;
};

/// Union of R_j^nu over k <= j <= J and all nu.
struct InfluenceRegion {
  int factor = 0;
  int base_level = 0;
  int top_level = 0;
  double C = 4.0;
  std::size_t members = 0;
  NodeMask mask;
  double volume = 0.0;
  double radius = 0.0;     // r_i of the atom
  double ratio = 0.0;      // volume / r_i
  double tail_bound = 0.0; // bound on the measure of the omitted levels j > J
};

InfluenceRectangle influence_rectangle(const PhaseSpec& phase, const LatticeGrid& grid, int i,
                                       std::span<const double> center_i, int j, std::size_t nu, double C,
                                       double sector_spacing_scale = 1.0);
InfluenceRectangle influence_rectangle(const PhaseSpec& phase, const RectangleAtom& atom, int i, int j,
                                       std::size_t nu, double C, double sector_spacing_scale = 1.0);

/// Throws InvalidArgument when r_i >= 1 (the factor belongs to J2).
InfluenceRegion influence_region(const PhaseSpec& phase, const RectangleAtom& atom, int i, double C, int J,
                                 double sector_spacing_scale = 1.0);
/// Same with an explicit base level k and factor-local center.
InfluenceRegion influence_region(const PhaseSpec& phase, const LatticeGrid& grid, int i,
                                 std::span<const double> center_i, double r_i, int k, double C, int J,
                                 double sector_spacing_scale = 1.0);

NodeMask complement(const NodeMask& mask);
double mask_volume(const LatticeGrid& grid, int i, const NodeMask& mask);
/// 0/1 field on the single-factor grid of factor i.
SampledField mask_field(const LatticeGrid& grid, int i, const NodeMask& mask);

}  // namespace mpfio
