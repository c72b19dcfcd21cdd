#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mpfio/atom.hpp"
#include "mpfio/evaluator.hpp"
#include "mpfio/fit.hpp"
#include "mpfio/lattice.hpp"
#include "mpfio/phase.hpp"

namespace mpfio {

/// Flat table of numbers, written as one CSV per sweep.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

std::string table_csv(const Table& table);

struct NamedFit {
  std::string name;
  LineFit fit;
};

/// Result of one experiment. Everything except `timings` is a function of
/// the inputs and seed; to_json() is byte-stable across runs.
class ExperimentReport {
 public:
  explicit ExperimentReport(std::string id = {}) : id_(std::move(id)) {}

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  void param(const std::string& name, const std::string& value);
  void param(const std::string& name, double value);
  void param(const std::string& name, long long value);
  void param(const std::string& name, int value) { param(name, static_cast<long long>(value)); }
  void param(const std::string& name, std::size_t value) { param(name, static_cast<long long>(value)); }

  void scalar(const std::string& name, double value);
  /// Throws InvalidArgument if no scalar has that name.
  double scalar(const std::string& name) const;
  bool has_scalar(const std::string& name) const;

  /// Rejects fits with fewer than 4 points.
  void fit(const std::string& name, const LineFit& f);
  const LineFit& fit(const std::string& name) const;

  void criterion(const std::string& name, bool ok);
  bool criterion(const std::string& name) const;
  /// All criteria hold (vacuously true with none).
  bool passed() const;

  void note(const std::string& text) { notes_.push_back(text); }
  Table& table(const std::string& name, std::vector<std::string> columns);
  const std::vector<Table>& tables() const { return tables_; }

  void timing(const std::string& name, double ms);
  double wall_ms() const;

  /// FNV-1a of the id and parameters.
  std::string spec_hash() const;
  std::string to_json() const;
  std::string timing_json() const;

  const std::vector<std::pair<std::string, std::string>>& params() const { return params_; }
  const std::vector<std::pair<std::string, double>>& scalars() const { return scalars_; }
  const std::vector<NamedFit>& fits() const { return fits_; }
  const std::vector<std::pair<std::string, bool>>& criteria() const { return criteria_; }
  const std::vector<std::pair<std::string, double>>& timings() const { return timings_; }

 private:
  std::string id_;
  std::vector<std::pair<std::string, std::string>> params_;
  std::vector<std::pair<std::string, double>> scalars_;
  std::vector<NamedFit> fits_;
  std::vector<std::pair<std::string, bool>> criteria_;
  std::vector<Table> tables_;
  std::vector<std::string> notes_;
  std::vector<std::pair<std::string, double>> timings_;
};

// ---------------------------------------------------------------- L2 norms

struct L2Options {
  std::size_t iterations = 20;  // minimum iteration count
  std::size_t max_iterations = 100000;
  double tolerance = 1e-13;     // relative change that stops the iteration
  double oscillation_limit = 1e-3;
  std::uint64_t seed = 1;
  ApplyPath path = ApplyPath::automatic;
  /// Build the dense matrix and take its largest singular value when the
  /// grid has at most this many nodes (0 disables).
  std::size_t dense_limit = 1024;
};

struct L2Estimate {
  double norm = 0.0;
  std::size_t iterations = 0;
  double last_change = 0.0;
  bool converged = false;
  std::optional<double> dense_norm;
};

/// Power iteration on T^H T. Throws ConvergenceError if the estimate still
/// moves by more than oscillation_limit after max_iterations.
L2Estimate l2_norm_estimate(const OperatorSpec& op, const L2Options& options = {});

/// Largest singular value of the explicit node-to-node matrix.
double dense_operator_norm(const OperatorSpec& op, ApplyPath path = ApplyPath::automatic);

ExperimentReport l2_norm_report(const OperatorSpec& op, const L2Options& options = {});

/// Norm at `coarse_points` and twice that; PASS iff max/min <= drift_limit.
ExperimentReport l2_refinement(const std::function<OperatorSpec(int points)>& build, int coarse_points,
                               const L2Options& options = {}, double drift_limit = 1.5);

// ---------------------------------------------------------------- majorization

struct MajorizationOptions {
  FactorSet I;                      // factors whose level is swept; empty = all with r_i < 1
  double C = 4.0;                   // influence constant
  std::vector<int> offsets = {0, 1, 2, 3, 4, 5};  // j_i - k_i, applied to every i in I
  double slope_limit = -0.8;        // required fitted slope for j >= k
  ApplyPath path = ApplyPath::automatic;
};

/// int_{Q_I^c} (int |T_{j_I} a|^2 dx_J)^{1/2} dx_I per level offset, with a
/// log2 fit against j - k for j >= k and against k - j for j <= k.
ExperimentReport majorization_sweep(const OperatorSpec& op, const RectangleAtom& atom,
                                    const MajorizationOptions& options = {});

// ---------------------------------------------------------------- H1 -> L1

enum class Expectation {
  bounded,  // |slope| <= slope_limit and max/min <= ratio_limit
  growth,   // slope >= slope_limit (supercritical control)
  decay,    // values non-increasing in k (subcritical control)
};

struct H1L1Options {
  std::vector<int> ks = {0, 1, 2, 3, 4, 5};
  AtomProfile profile = AtomProfile::odd_bump;
  std::uint64_t seed = 1;
  std::vector<double> center;  // empty: the cell midpoint next to the origin
  double defect_guard = 1e-6;
  bool enforce_guard = true;   // throw when an atom's truncation defect exceeds the guard
  Expectation expect = Expectation::bounded;
  double slope_limit = 0.25;
  double ratio_limit = 4.0;
  ApplyPath path = ApplyPath::automatic;
};

/// ||T a_R||_1 for atoms with r_i = 2^-k on every factor. The operator is
/// evaluated with smooth truncation (sum of its Littlewood-Paley pieces).
ExperimentReport h1l1_sweep(const OperatorSpec& op, const H1L1Options& options = {});

// ---------------------------------------------------------------- localization

struct LocalizationOptions {
  int factor = 0;
  int level = 5;
  std::size_t nu = 0;
  double C = 1.0;
  std::vector<double> lambdas = {1.0, 2.0, 4.0, 8.0};
  std::vector<double> center;  // empty: cell midpoint next to the origin
  double far_lambda = 8.0;
  double far_limit = 0.05;
  double drop_factor = 10.0;   // fraction(1) / fraction(4) must reach this
  ApplyPath path = ApplyPath::automatic;
};

/// L1 mass of T_j^nu a_delta outside lambda R_j^nu, as a fraction of the total.
ExperimentReport sector_localization(const OperatorSpec& op, const LocalizationOptions& options = {});

// ---------------------------------------------------------------- Bessel kernel

struct BesselOptions {
  int n = 2;
  int points = 2048;
  double extent = 0.5;
  int level = 9;         // smooth frequency cutoff bump(2^-level |xi|)
  int finest = 8;        // radii 2^-finest .. 2^-coarsest
  int coarsest = 5;
  double tolerance = 0.15;
  bool control = false;  // multiplier 1 with no cutoff: kernel is a discrete delta
};

/// Radial decay of the inverse transform of (1 + |xi|^2)^{-(n-1)/4}.
ExperimentReport bessel_decay(const BesselOptions& options = {});

// ---------------------------------------------------------------- phase remainder

struct PsiOptions {
  int factor = 0;
  int jmin = 2;
  int jmax = 8;
  std::size_t samples = 400;
  std::uint64_t seed = 1;
  double drift_limit = 4.0;
};

/// Per level: max |Psi|, 2^j |d Psi / d xi''| and 2^{j/2} |d Psi / d xi'| over
/// samples in the sector cones.
ExperimentReport psi_bound_sweep(const PhaseSpec& phase, const PsiOptions& options = {});

// ---------------------------------------------------------------- regions

struct RegionOptions {
  int factor = 0;
  std::vector<int> ks = {1, 2, 3, 4, 5};
  double C = 4.0;
  int depth = 4;  // J = k + depth; 0 uses the grid's max truncation level
  std::vector<double> center;  // factor-local, empty = origin
  double drift_limit = 2.0;
};

/// |Q_i| / r_i for r_i = 2^-k.
ExperimentReport region_measure(const PhaseSpec& phase, const LatticeGrid& grid, const RegionOptions& options = {});

// ---------------------------------------------------------------- identities

struct PartitionOptions {
  std::size_t samples = 10000;
  int J = 8;
  int max_level = 8;
  std::uint64_t seed = 1;
  double tolerance = 1e-12;
};

/// Radial and angular partitions of unity.
ExperimentReport partition_check(const PartitionOptions& options = {});

struct AtomValidityOptions {
  std::size_t count = 100;
  std::uint64_t seed = 1;
};

/// Randomized atoms with d in {1,2} and n_i in {1,2}.
ExperimentReport atom_validity(const AtomValidityOptions& options = {});

struct ConsistencyOptions {
  std::size_t inputs = 10;
  std::uint64_t seed = 1;
  double tolerance = 1e-10;
  ApplyPath path = ApplyPath::automatic;
};

/// Sum_j T_j f = T f and sum_nu T_j^nu f = T_j f on band-limited inputs.
ExperimentReport decomposition_consistency(const OperatorSpec& op, const ConsistencyOptions& options = {});

struct InversionOptions {
  std::vector<int> points = {32, 64, 128};
  int n = 2;
  double extent = 1.0;
  double shift = 0.5;
  std::uint64_t seed = 1;
  double tolerance = 1e-10;
  ApplyPath path = ApplyPath::direct;
};

/// Identity phase inverts the transform; translation phase shifts.
ExperimentReport inversion_check(const InversionOptions& options = {});

struct FactorizedOptions {
  std::size_t specs = 20;
  std::uint64_t seed = 1;
  double tolerance = 1e-10;
  int speed_points = 64;
  double min_speedup = 4.0;
  int repeats = 3;
};

/// apply_factorized against apply on random factorizable specs with
/// dims (1,1) and (2,1), plus a timed comparison on (1,1).
ExperimentReport factorized_check(const FactorizedOptions& options = {});

/// Random field whose transform lives in |xi_i| <= band_i on every factor.
SampledField band_limited_field(const LatticeGrid& grid, const std::vector<double>& band, std::uint64_t seed);

/// Cell midpoint next to the origin on every axis.
std::vector<double> midpoint_center(const LatticeGrid& grid);

}  // namespace mpfio
