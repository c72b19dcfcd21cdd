#include "mpfio/lattice.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

#include "mpfio/error.hpp"

namespace mpfio {

// ---------------------------------------------------------------- ProductSpace

ProductSpace::ProductSpace(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw InvalidArgument("ProductSpace: need at least one factor");
  if (dims_.size() > 32) throw InvalidArgument("ProductSpace: at most 32 factors");
  offsets_.reserve(dims_.size());
  for (int n : dims_) {
    if (n < 1) throw InvalidArgument("ProductSpace: factor dimensions must be >= 1");
    offsets_.push_back(total_);
    total_ += n;
  }
}

int ProductSpace::factor_of_axis(int axis) const {
  for (int i = factors() - 1; i >= 0; --i)
    if (axis >= offsets_[static_cast<std::size_t>(i)]) return i;
  throw InvalidArgument("ProductSpace: axis out of range");
}

// ---------------------------------------------------------------- FactorSet

FactorSet::FactorSet(std::initializer_list<int> members) {
  for (int i : members) insert(i);
}

FactorSet FactorSet::all(int d) {
  if (d < 0 || d > 32) throw InvalidArgument("FactorSet: bad factor count");
  return from_bits(d == 32 ? ~0u : ((1u << d) - 1u));
}

void FactorSet::insert(int i) {
  if (i < 0 || i >= 32) throw InvalidArgument("FactorSet: index out of range");
  bits_ |= (1u << i);
}

int FactorSet::size() const { return std::popcount(bits_); }

std::vector<int> FactorSet::members() const {
  std::vector<int> out;
  for (int i = 0; i < 32; ++i)
    if (contains(i)) out.push_back(i);
  return out;
}

std::string FactorSet::to_string() const {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (int i : members()) {
    if (!first) os << ',';
    os << i;
    first = false;
  }
  os << '}';
  return os.str();
}

void IndexPartition::validate() const {
  FactorSet all = FactorSet::all(d);
  auto fail = [](const char* what) { throw InvalidArgument(std::string("IndexPartition: ") + what); };
  if (!(K | I | J | J1 | J2 | I1 | I2).subset_of(all)) fail("member outside 0..d-1");
  if ((I | J) != all) fail("I and J must cover all factors");
  if (!(I & J).empty()) fail("I and J must be disjoint");
  if (!I.subset_of(K)) fail("I must be a subset of K");
  if (J1 != (J & K)) fail("J1 must equal J intersect K");
  if (J2 != (all - K)) fail("J2 must be the factors outside K");
  if ((I1 | I2) != I || !(I1 & I2).empty()) fail("I1, I2 must split I");
}

// ---------------------------------------------------------------- LatticeGrid

LatticeGrid::LatticeGrid(ProductSpace space, std::vector<double> extent, std::vector<int> points)
    : space_(std::move(space)), extent_(std::move(extent)), points_(std::move(points)) {
  std::size_t n = static_cast<std::size_t>(space_.total_dim());
  if (extent_.size() != n || points_.size() != n)
    throw InvalidArgument("LatticeGrid: extent/points must have one entry per axis");
  for (std::size_t a = 0; a < n; ++a) {
    if (!(extent_[a] > 0.0) || !std::isfinite(extent_[a]))
      throw InvalidArgument("LatticeGrid: extent must be positive (axis " + std::to_string(a) + ")");
    if (points_[a] < 8 || points_[a] % 2 != 0)
      throw InvalidArgument("LatticeGrid: points must be even and >= 8 (axis " + std::to_string(a) +
                            ", got " + std::to_string(points_[a]) + ")");
  }
  strides_.assign(n, 1);
  count_ = 1;
  for (std::size_t a = n; a-- > 0;) {
    strides_[a] = count_;
    count_ *= static_cast<std::size_t>(points_[a]);
  }
}

double LatticeGrid::factor_max_frequency(int i) const {
  double m = std::numeric_limits<double>::infinity();
  int off = space_.axis_offset(i);
  for (int a = off; a < off + space_.factor_dim(i); ++a) m = std::min(m, max_frequency(a));
  return m;
}

std::size_t LatticeGrid::factor_node_count(int i) const {
  std::size_t c = 1;
  int off = space_.axis_offset(i);
  for (int a = off; a < off + space_.factor_dim(i); ++a) c *= static_cast<std::size_t>(points(a));
  return c;
}

double LatticeGrid::cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < axes(); ++a) v *= spacing(a);
  return v;
}

double LatticeGrid::frequency_cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < axes(); ++a) v /= period(a);
  return v;
}

double LatticeGrid::factor_cell_volume(int i) const {
  double v = 1.0;
  int off = space_.axis_offset(i);
  for (int a = off; a < off + space_.factor_dim(i); ++a) v *= spacing(a);
  return v;
}

void LatticeGrid::unravel(std::size_t flat, std::span<int> idx) const {
  for (int a = axes() - 1; a >= 0; --a) {
    std::size_t p = static_cast<std::size_t>(points(a));
    idx[static_cast<std::size_t>(a)] = static_cast<int>(flat % p);
    flat /= p;
  }
}

std::size_t LatticeGrid::ravel(std::span<const int> idx) const {
  std::size_t flat = 0;
  for (int a = 0; a < axes(); ++a) flat += strides_[static_cast<std::size_t>(a)] * static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]);
  return flat;
}

void LatticeGrid::node_point(std::size_t flat, std::span<double> x) const {
  for (int a = axes() - 1; a >= 0; --a) {
    std::size_t p = static_cast<std::size_t>(points(a));
    x[static_cast<std::size_t>(a)] = coordinate(a, static_cast<int>(flat % p));
    flat /= p;
  }
}

std::size_t LatticeGrid::factor_node(std::size_t flat, int i) const {
  int off = space_.axis_offset(i);
  int nd = space_.factor_dim(i);
  std::size_t sub = 0;
  for (int a = off; a < off + nd; ++a) {
    std::size_t k = (flat / strides_[static_cast<std::size_t>(a)]) % static_cast<std::size_t>(points(a));
    sub = sub * static_cast<std::size_t>(points(a)) + k;
  }
  return sub;
}

void LatticeGrid::factor_point(int i, std::size_t sub, std::span<double> x) const {
  int off = space_.axis_offset(i);
  int nd = space_.factor_dim(i);
  for (int a = off + nd - 1; a >= off; --a) {
    std::size_t p = static_cast<std::size_t>(points(a));
    x[static_cast<std::size_t>(a - off)] = coordinate(a, static_cast<int>(sub % p));
    sub /= p;
  }
}

bool LatticeGrid::operator==(const LatticeGrid& other) const {
  return space_ == other.space_ && extent_ == other.extent_ && points_ == other.points_;
}

LatticeGrid make_grid(const ProductSpace& space, std::vector<double> extent, std::vector<int> points) {
  return LatticeGrid(space, std::move(extent), std::move(points));
}

LatticeGrid make_grid(const ProductSpace& space, double extent, int points) {
  std::size_t n = static_cast<std::size_t>(space.total_dim());
  return LatticeGrid(space, std::vector<double>(n, extent), std::vector<int>(n, points));
}

// ---------------------------------------------------------------- SampledField

SampledField::SampledField(LatticeGrid grid) : grid_(std::move(grid)), values_(grid_.node_count()) {}

SampledField::SampledField(LatticeGrid grid, std::vector<Complex> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.node_count())
    throw InvalidArgument("SampledField: value count " + std::to_string(values_.size()) +
                          " does not match node count " + std::to_string(grid_.node_count()));
}

SampledField SampledField::from_function(const LatticeGrid& grid,
                                         const std::function<Complex(std::span<const double>)>& fn) {
  SampledField f(grid);
  std::vector<double> x(static_cast<std::size_t>(grid.axes()));
  for (std::size_t k = 0; k < grid.node_count(); ++k) {
    grid.node_point(k, x);
    f.values_[k] = fn(x);
  }
  return f;
}

SampledField& SampledField::operator+=(const SampledField& o) {
  if (!(grid_ == o.grid_)) throw InvalidArgument("SampledField: grid mismatch");
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
  return *this;
}

SampledField& SampledField::operator-=(const SampledField& o) {
  if (!(grid_ == o.grid_)) throw InvalidArgument("SampledField: grid mismatch");
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
  return *this;
}

SampledField& SampledField::operator*=(Complex s) {
  for (auto& v : values_) v *= s;
  return *this;
}

SampledField operator+(SampledField a, const SampledField& b) { return a += b; }
SampledField operator-(SampledField a, const SampledField& b) { return a -= b; }
SampledField operator*(Complex s, SampledField a) { return a *= s; }

// ---------------------------------------------------------------- norms

namespace {

double pairwise_rec(const double* v, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += v[k];
    return s;
  }
  std::size_t h = n / 2;
  return pairwise_rec(v, h) + pairwise_rec(v + h, n - h);
}

bool is_inf(double p) { return std::isinf(p) && p > 0; }

void check_exponent(double p) {
  if (!(p == 1.0 || p == 2.0 || is_inf(p))) throw InvalidArgument("norm exponent must be 1, 2 or inf");
}

double power(double v, double p) { return p == 1.0 ? v : (p == 2.0 ? v * v : std::pow(v, p)); }

void check_finite(const SampledField& f) {
  for (const auto& v : f.values())
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw NumericError("norm of a field with non-finite samples");
}

}  // namespace

double pairwise_sum(std::span<const double> values) { return pairwise_rec(values.data(), values.size()); }

double lp_norm(const SampledField& f, double p) {
  check_exponent(p);
  check_finite(f);
  if (is_inf(p)) {
    double m = 0.0;
    for (const auto& v : f.values()) m = std::max(m, std::abs(v));
    return m;
  }
  std::vector<double> terms(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) terms[k] = power(std::abs(f[k]), p);
  double s = pairwise_sum(terms) * f.grid().cell_volume();
  return p == 1.0 ? s : std::sqrt(s);
}

double mixed_norm(const SampledField& f, FactorSet outer_factors, double outer, double inner,
                  const FactorMasks& masks) {
  check_exponent(outer);
  check_exponent(inner);
  check_finite(f);
  const LatticeGrid& g = f.grid();
  const ProductSpace& sp = g.space();
  int d = sp.factors();
  if (!outer_factors.subset_of(FactorSet::all(d)))
    throw InvalidArgument("mixed_norm: partition inconsistent with grid dimensionality");
  if (!masks.empty() && masks.size() != static_cast<std::size_t>(d))
    throw InvalidArgument("mixed_norm: need one mask slot per factor");
  for (int i = 0; i < static_cast<int>(masks.size()); ++i)
    if (!masks[static_cast<std::size_t>(i)].empty() &&
        masks[static_cast<std::size_t>(i)].size() != g.factor_node_count(i))
      throw InvalidArgument("mixed_norm: mask size mismatch for factor " + std::to_string(i));

  std::size_t outer_count = 1, inner_count = 1;
  double outer_vol = 1.0, inner_vol = 1.0;
  for (int i = 0; i < d; ++i) {
    if (outer_factors.contains(i)) {
      outer_count *= g.factor_node_count(i);
      outer_vol *= g.factor_cell_volume(i);
    } else {
      inner_count *= g.factor_node_count(i);
      inner_vol *= g.factor_cell_volume(i);
    }
  }

  // buckets[outer][inner]; keys combine factor sub-node indices in factor order.
  std::vector<double> buckets(outer_count * inner_count, 0.0);
  for (std::size_t k = 0; k < f.size(); ++k) {
    std::size_t ok = 0, ik = 0;
    bool keep = true;
    for (int i = 0; i < d; ++i) {
      std::size_t sub = g.factor_node(k, i);
      if (!masks.empty() && !masks[static_cast<std::size_t>(i)].empty() && !masks[static_cast<std::size_t>(i)][sub]) keep = false;
      if (outer_factors.contains(i))
        ok = ok * g.factor_node_count(i) + sub;
      else
        ik = ik * g.factor_node_count(i) + sub;
    }
    double a = keep ? std::abs(f[k]) : 0.0;
    buckets[ok * inner_count + ik] = is_inf(inner) ? a : power(a, inner);
  }

  std::vector<double> inner_vals(outer_count);
  for (std::size_t o = 0; o < outer_count; ++o) {
    std::span<const double> row(buckets.data() + o * inner_count, inner_count);
    if (is_inf(inner)) {
      inner_vals[o] = *std::max_element(row.begin(), row.end());
    } else {
      double s = pairwise_sum(row) * inner_vol;
      inner_vals[o] = inner == 1.0 ? s : std::sqrt(s);
    }
  }
  if (is_inf(outer)) return *std::max_element(inner_vals.begin(), inner_vals.end());
  for (auto& v : inner_vals) v = power(v, outer);
  double s = pairwise_sum(inner_vals) * outer_vol;
  return outer == 1.0 ? s : std::sqrt(s);
}

double mixed_norm(const SampledField& f, const IndexPartition& partition, double outer, double inner) {
  if (partition.d != f.grid().space().factors())
    throw InvalidArgument("mixed_norm: partition inconsistent with grid dimensionality");
  partition.validate();
  return mixed_norm(f, partition.I, outer, inner);
}

double relative_l2_error(const SampledField& f, const SampledField& reference) {
  double den = lp_norm(reference, 2.0);
  double num = lp_norm(f - reference, 2.0);
  return den == 0.0 ? num : num / den;
}

// ---------------------------------------------------------------- transforms

namespace {

std::mutex& planner_lock() {
  static std::mutex m;
  return m;
}

void run_fft(std::vector<Complex>& data, const LatticeGrid& g, int sign) {
  std::vector<int> n(g.point_counts());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_lock());
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    plan = fftw_plan_dft(static_cast<int>(n.size()), n.data(), p, p, sign, FFTW_ESTIMATE);
  }
  if (!plan) throw Error("FFTW planning failed");
  fftw_execute(plan);
  std::lock_guard<std::mutex> lock(planner_lock());
  fftw_destroy_plan(plan);
}

// (-1)^{sum of slot indices}: the phase of the half-width shift x_0 = -extent.
void apply_parity(std::vector<Complex>& data, const LatticeGrid& g, double scale) {
  std::vector<int> idx(static_cast<std::size_t>(g.axes()));
  for (std::size_t k = 0; k < data.size(); ++k) {
    g.unravel(k, idx);
    int parity = 0;
    for (int q : idx) parity += q;
    data[k] *= (parity & 1) ? -scale : scale;
  }
}

}  // namespace

std::vector<Complex> forward_transform(const SampledField& f) {
  std::vector<Complex> data(f.values().begin(), f.values().end());
  run_fft(data, f.grid(), FFTW_FORWARD);
  apply_parity(data, f.grid(), f.grid().cell_volume());
  return data;
}

SampledField inverse_transform(const LatticeGrid& grid, std::span<const Complex> spectrum) {
  if (spectrum.size() != grid.node_count()) throw InvalidArgument("inverse_transform: size mismatch");
  std::vector<Complex> data(spectrum.begin(), spectrum.end());
  apply_parity(data, grid, grid.frequency_cell_volume());
  run_fft(data, grid, FFTW_BACKWARD);
  return SampledField(grid, std::move(data));
}

// ---------------------------------------------------------------- binary container

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw Error("read_field: truncated container");
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | b[k];
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void write_field(std::ostream& out, const SampledField& f) {
  const LatticeGrid& g = f.grid();
  const ProductSpace& sp = g.space();
  put_u64(out, static_cast<std::uint64_t>(sp.factors()));
  for (int n : sp.dims()) put_u64(out, static_cast<std::uint64_t>(n));
  for (int a = 0; a < g.axes(); ++a) put_u64(out, static_cast<std::uint64_t>(g.points(a)));
  for (int a = 0; a < g.axes(); ++a) put_f64(out, g.extent(a));
  for (const auto& v : f.values()) {
    put_f64(out, v.real());
    put_f64(out, v.imag());
  }
  if (!out) throw Error("write_field: stream error");
}

SampledField read_field(std::istream& in) {
  std::uint64_t d = get_u64(in);
  if (d == 0 || d > 32) throw Error("read_field: bad factor count");
  std::vector<int> dims;
  for (std::uint64_t i = 0; i < d; ++i) dims.push_back(static_cast<int>(get_u64(in)));
  ProductSpace sp(dims);
  std::vector<int> pts;
  std::vector<double> ext;
  for (int a = 0; a < sp.total_dim(); ++a) pts.push_back(static_cast<int>(get_u64(in)));
  for (int a = 0; a < sp.total_dim(); ++a) ext.push_back(get_f64(in));
  LatticeGrid g(sp, ext, pts);
  std::vector<Complex> vals(g.node_count());
  for (auto& v : vals) {
    double re = get_f64(in);
    double im = get_f64(in);
    v = {re, im};
  }
  return SampledField(g, std::move(vals));
}

void write_field_file(const std::string& path, const SampledField& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_field(out, f);
}

SampledField read_field_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_field(in);
}

}  // namespace mpfio
