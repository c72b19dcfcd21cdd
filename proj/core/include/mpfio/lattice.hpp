#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mpfio {

using Complex = std::complex<double>;

/// The product structure R^{n_1} x ... x R^{n_d}. Factor i owns a contiguous
/// block of axes starting at axis_offset(i).
class ProductSpace {
 public:
  explicit ProductSpace(std::vector<int> dims);

  int factors() const { return static_cast<int>(dims_.size()); }
  int factor_dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  int axis_offset(int i) const { return offsets_.at(static_cast<std::size_t>(i)); }
  int total_dim() const { return total_; }
  const std::vector<int>& dims() const { return dims_; }
  /// Factor that owns a given axis.
  int factor_of_axis(int axis) const;

  bool operator==(const ProductSpace& other) const { return dims_ == other.dims_; }

 private:
  std::vector<int> dims_;
  std::vector<int> offsets_;
  int total_ = 0;
};

/// Set of factor indices (0-based), at most 32 factors.
class FactorSet {
 public:
  FactorSet() = default;
  FactorSet(std::initializer_list<int> members);
  static FactorSet all(int d);
  static FactorSet from_bits(std::uint32_t bits) {
    FactorSet s;
    s.bits_ = bits;
    return s;
  }

  bool contains(int i) const { return (bits_ >> i) & 1u; }
  void insert(int i);
  void erase(int i) { bits_ &= ~(1u << i); }
  int size() const;
  bool empty() const { return bits_ == 0; }
  std::vector<int> members() const;
  std::uint32_t bits() const { return bits_; }

  FactorSet operator|(FactorSet o) const { return from_bits(bits_ | o.bits_); }
  FactorSet operator&(FactorSet o) const { return from_bits(bits_ & o.bits_); }
  FactorSet operator-(FactorSet o) const { return from_bits(bits_ & ~o.bits_); }
  bool operator==(const FactorSet& o) const = default;
  bool subset_of(FactorSet o) const { return (bits_ & ~o.bits_) == 0; }

  std::string to_string() const;

 private:
  std::uint32_t bits_ = 0;
};

/// Index sets attached to a rectangle atom. K holds the factors with small
/// side length, I the factors treated by the decomposition, J the rest.
struct IndexPartition {
  int d = 0;
  FactorSet K, I, J, J1, J2, I1, I2;

  /// Throws InvalidArgument if the set relations do not hold.
  void validate() const;
};

/// Uniform periodic grid on the box prod_a [-extent_a, extent_a).
class LatticeGrid {
 public:
  LatticeGrid(ProductSpace space, std::vector<double> extent, std::vector<int> points);

  const ProductSpace& space() const { return space_; }
  int axes() const { return space_.total_dim(); }
  double extent(int a) const { return extent_.at(static_cast<std::size_t>(a)); }
  int points(int a) const { return points_.at(static_cast<std::size_t>(a)); }
  double spacing(int a) const { return 2.0 * extent(a) / points(a); }
  /// Period length 2*extent.
  double period(int a) const { return 2.0 * extent(a); }
  const std::vector<double>& extents() const { return extent_; }
  const std::vector<int>& point_counts() const { return points_; }

  double coordinate(int a, int k) const { return extent(a) * (2.0 * k / points(a) - 1.0); }
  /// Frequency of signed index m, m in [-N/2, N/2).
  double frequency(int a, int m) const { return m / period(a); }
  /// Frequency for an FFT-ordered index q in [0, N).
  double frequency_of_slot(int a, int q) const { return frequency(a, signed_index(a, q)); }
  int signed_index(int a, int q) const { return q < points(a) / 2 ? q : q - points(a); }
  /// Largest resolvable |xi| along an axis, points/(4 extent).
  double max_frequency(int a) const { return points(a) / (4.0 * extent(a)); }
  /// Smallest max_frequency over the axes of factor i.
  double factor_max_frequency(int i) const;

  std::size_t node_count() const { return count_; }
  std::size_t factor_node_count(int i) const;
  std::size_t stride(int a) const { return strides_.at(static_cast<std::size_t>(a)); }

  double cell_volume() const;
  double frequency_cell_volume() const;
  double factor_cell_volume(int i) const;

  /// Multi-index of a flat node index (axis 0 slowest).
  void unravel(std::size_t flat, std::span<int> idx) const;
  std::size_t ravel(std::span<const int> idx) const;
  void node_point(std::size_t flat, std::span<double> x) const;
  /// Index of the factor-i sub-node of a flat node, row-major over the
  /// factor's own axes.
  std::size_t factor_node(std::size_t flat, int i) const;
  /// Coordinates of the factor-i sub-node with the given index.
  void factor_point(int i, std::size_t sub, std::span<double> x) const;

  bool operator==(const LatticeGrid& other) const;

 private:
  ProductSpace space_;
  std::vector<double> extent_;
  std::vector<int> points_;
  std::vector<std::size_t> strides_;
  std::size_t count_ = 0;
};

LatticeGrid make_grid(const ProductSpace& space, std::vector<double> extent, std::vector<int> points);
/// Same extent and point count on every axis.
LatticeGrid make_grid(const ProductSpace& space, double extent, int points);

/// Complex samples on every node of a grid.
class SampledField {
 public:
  explicit SampledField(LatticeGrid grid);
  SampledField(LatticeGrid grid, std::vector<Complex> values);

  static SampledField from_function(const LatticeGrid& grid,
                                    const std::function<Complex(std::span<const double>)>& fn);

  const LatticeGrid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<Complex> values() { return values_; }
  std::span<const Complex> values() const { return values_; }
  Complex& operator[](std::size_t k) { return values_[k]; }
  const Complex& operator[](std::size_t k) const { return values_[k]; }

  SampledField& operator+=(const SampledField& o);
  SampledField& operator-=(const SampledField& o);
  SampledField& operator*=(Complex s);

 private:
  LatticeGrid grid_;
  std::vector<Complex> values_;
};

SampledField operator+(SampledField a, const SampledField& b);
SampledField operator-(SampledField a, const SampledField& b);
SampledField operator*(Complex s, SampledField a);

/// Per-factor node masks; an empty vector means the factor is unrestricted.
using FactorMasks = std::vector<std::vector<std::uint8_t>>;

/// Pairwise (tree) summation with a fixed split rule.
double pairwise_sum(std::span<const double> values);

/// Riemann-sum L^p norm, p in {1, 2, inf}. Pass
/// std::numeric_limits<double>::infinity() for the sup norm.
double lp_norm(const SampledField& f, double p);

/// (int_{x_outer} (int_{x_rest} |f|^inner)^{outer/inner})^{1/outer}, where the
/// outer integral runs over the factors in `outer_factors` and the inner one
/// over the remaining factors. Masked-out nodes do not contribute.
double mixed_norm(const SampledField& f, FactorSet outer_factors, double outer, double inner,
                  const FactorMasks& masks = {});
/// Outer exponent over x_I, inner over x_J.
double mixed_norm(const SampledField& f, const IndexPartition& partition, double outer, double inner);

/// Relative L2 distance ||f - g|| / ||g||.
double relative_l2_error(const SampledField& f, const SampledField& reference);

/// Discrete forward transform scaled to approximate the continuous f-hat at
/// every grid frequency. Output is in FFT slot order per axis.
std::vector<Complex> forward_transform(const SampledField& f);
/// Inverse of forward_transform: sum over frequencies of G e^{2 pi i x xi} dxi.
SampledField inverse_transform(const LatticeGrid& grid, std::span<const Complex> spectrum);

/// Binary container: u64 d, u64 dims[d], u64 points[n], f64 extent[n], then
/// interleaved re/im f64 in node order. Little-endian.
void write_field(std::ostream& out, const SampledField& f);
SampledField read_field(std::istream& in);
void write_field_file(const std::string& path, const SampledField& f);
SampledField read_field_file(const std::string& path);

}  // namespace mpfio
