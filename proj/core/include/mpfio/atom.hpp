#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mpfio/lattice.hpp"

namespace mpfio {

enum class AtomProfile {
  odd_bump,    // t exp(-1/(1-t^2))
  two_hump,    // (t^2 - m2) exp(-1/(1-t^2)), even and mean-zero
  random_mix,  // seeded combination of the two above per axis
  constant,    // indicator of the cube; no cancellation, for negative tests
};

std::string to_string(AtomProfile p);
AtomProfile parse_profile(const std::string& name);

/// k with 2^-k <= r <= 2^{-k+1}, k = max(0, ceil(-log2 r)); nullopt for r > 2.
std::optional<int> dyadic_index(double r);

/// Sampled rectangle atom supported on prod_i I_i, I_i the cube of side r_i
/// centred at the factor-i block of `center`.
struct RectangleAtom {
  std::vector<double> center;  // one entry per axis
  std::vector<double> radii;   // side length per factor
  AtomProfile profile = AtomProfile::odd_bump;
  std::uint64_t seed = 0;
  std::vector<std::optional<int>> k;
  SampledField samples;

  double measure() const;  // |R|
  bool in_rectangle(std::span<const double> x) const;
  /// Whether x_i (factor-local coordinates) lies in the open cube I_i.
  bool in_factor_cube(int i, std::span<const double> x_i) const;
};

/// Tensor product of per-axis mean-zero profiles, rescaled so that
/// ||a||_2 = |R|^{-1/2} on the grid.
RectangleAtom make_tensor_atom(const LatticeGrid& grid, std::vector<double> center, std::vector<double> radii,
                               AtomProfile profile, std::uint64_t seed = 0);

/// Renormalized weighted sum of atoms on one common rectangle.
RectangleAtom make_sum_atom(const std::vector<std::pair<double, RectangleAtom>>& terms);

struct AtomReport {
  double l2_norm = 0.0;
  double l2_bound = 0.0;
  bool l2_ok = false;
  double support_defect = 0.0;  // max |a| outside R
  bool support_ok = false;
  std::vector<double> cancel_defect;  // per factor
  std::vector<bool> cancel_ok;
  double l1_norm = 0.0;
  bool l1_ok = false;  // ||a||_1 <= |R|^{1/2} ||a||_2

  bool all_ok() const;
};

struct AtomTolerances {
  double l2 = 1e-9;
  double cancellation = 1e-10;
};

AtomReport validate_atom(const RectangleAtom& a, const AtomTolerances& tol = {});

/// K = {r_i < 1}, J2 = complement of K, caller-chosen I within K split into
/// I1 and I2 = I - I1.
IndexPartition index_partition(const std::vector<double>& radii, FactorSet I, std::optional<FactorSet> I1 = {});
IndexPartition index_partition(const RectangleAtom& a, FactorSet I, std::optional<FactorSet> I1 = {});

/// Config-format description (center, radii, profile, seed).
std::string describe_atom(const RectangleAtom& a);

}  // namespace mpfio
