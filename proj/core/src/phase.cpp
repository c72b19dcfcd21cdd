#include "mpfio/phase.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "mpfio/decomp.hpp"
#include "mpfio/error.hpp"

namespace mpfio {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void check_dims(int dim, std::span<const double> x, std::span<const double> xi) {
  if (static_cast<int>(x.size()) != dim || static_cast<int>(xi.size()) != dim)
    throw InvalidArgument("phase: coordinate dimension mismatch");
}

class Identity final : public PhaseFactor {
 public:
  using PhaseFactor::PhaseFactor;
  std::string tag() const override { return "identity"; }
  double value(std::span<const double> x, std::span<const double> xi) const override { return dot(x, xi); }
  void gradient(std::span<const double> x, std::span<const double>, std::span<double> out) const override {
    std::copy(x.begin(), x.end(), out.begin());
  }
  bool has_analytic_gradient() const override { return true; }
  bool linear_in_x() const override { return true; }
  double frequency_part(std::span<const double>) const override { return 0.0; }
};

class Translation final : public PhaseFactor {
 public:
  Translation(int dim, double a) : PhaseFactor(dim), a_(a) {}
  std::string tag() const override {
    std::ostringstream os;
    os << "translation(" << a_ << ")";
    return os.str();
  }
  double value(std::span<const double> x, std::span<const double> xi) const override {
    return dot(x, xi) + frequency_part(xi);
  }
  void gradient(std::span<const double> x, std::span<const double>, std::span<double> out) const override {
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + a_;
  }
  bool has_analytic_gradient() const override { return true; }
  bool linear_in_x() const override { return true; }
  double frequency_part(std::span<const double> xi) const override {
    double s = 0.0;
    for (double c : xi) s += c;
    return a_ * s;
  }

 private:
  double a_;
};

class Halfwave final : public PhaseFactor {
 public:
  using PhaseFactor::PhaseFactor;
  std::string tag() const override { return "halfwave"; }
  double value(std::span<const double> x, std::span<const double> xi) const override {
    return dot(x, xi) + norm(xi);
  }
  void gradient(std::span<const double> x, std::span<const double> xi, std::span<double> out) const override {
    double r = norm(xi);
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + (r > 0.0 ? xi[k] / r : 0.0);
  }
  bool has_analytic_gradient() const override { return true; }
  bool linear_in_x() const override { return true; }
  double frequency_part(std::span<const double> xi) const override { return norm(xi); }
};

double max_bump_slope() {
  static const double value = [] {
    double m = 0.0;
    for (int k = 1; k < 20000; ++k) m = std::max(m, std::abs(bump_derivative(1.0 + k / 20000.0)));
    return m;
  }();
  return value;
}

class Perturbed final : public PhaseFactor {
 public:
  Perturbed(int dim, double eps, double radius) : PhaseFactor(dim), eps_(eps), radius_(radius) {
    if (!(radius > 0.0)) throw InvalidArgument("perturbed phase: radius must be positive");
    // det(I + eps grad g (x) xi/|xi|) = 1 + eps grad g . xi/|xi| >= 1 - eps max|grad g|.
    double worst = 1.0 - std::abs(eps) * max_bump_slope() * 2.0 / radius;
    if (worst < 0.1)
      throw InvalidArgument("perturbed phase: eps too large, mixed Hessian may degenerate (det lower bound " +
                            std::to_string(worst) + ")");
  }
  std::string tag() const override {
    std::ostringstream os;
    os << "perturbed(" << eps_ << ")";
    return os.str();
  }
  double g(std::span<const double> x) const { return bump(2.0 * norm(x) / radius_); }
  double value(std::span<const double> x, std::span<const double> xi) const override {
    return dot(x, xi) + eps_ * g(x) * norm(xi);
  }
  void gradient(std::span<const double> x, std::span<const double> xi, std::span<double> out) const override {
    double r = norm(xi);
    double gx = g(x);
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + (r > 0.0 ? eps_ * gx * xi[k] / r : 0.0);
  }
  bool has_analytic_gradient() const override { return true; }

 private:
  double eps_;
  double radius_;
};

class Custom final : public PhaseFactor {
 public:
  Custom(int dim, std::string tag, std::function<double(std::span<const double>, std::span<const double>)> v,
         std::function<void(std::span<const double>, std::span<const double>, std::span<double>)> g)
      : PhaseFactor(dim), tag_(std::move(tag)), value_(std::move(v)), grad_(std::move(g)) {
    if (!value_) throw InvalidArgument("custom phase: value callback required");
  }
  std::string tag() const override { return tag_; }
  double value(std::span<const double> x, std::span<const double> xi) const override { return value_(x, xi); }
  void gradient(std::span<const double> x, std::span<const double> xi, std::span<double> out) const override {
    if (grad_)
      grad_(x, xi, out);
    else
      gradient_fd(x, xi, 1e-4, out);
  }
  bool has_analytic_gradient() const override { return static_cast<bool>(grad_); }

 private:
  std::string tag_;
  std::function<double(std::span<const double>, std::span<const double>)> value_;
  std::function<void(std::span<const double>, std::span<const double>, std::span<double>)> grad_;
};

}  // namespace

PhaseFactor::PhaseFactor(int dim) : dim_(dim) {
  if (dim < 1 || dim > 3) throw InvalidArgument("phase factor dimension must be 1, 2 or 3");
}

void PhaseFactor::gradient(std::span<const double> x, std::span<const double> xi, std::span<double> out) const {
  gradient_fd(x, xi, 1e-4, out);
}

double PhaseFactor::frequency_part(std::span<const double>) const {
  throw InvalidArgument("phase factor '" + tag() + "' is not linear in x");
}

void PhaseFactor::gradient_fd(std::span<const double> x, std::span<const double> xi, double h,
                              std::span<double> out) const {
  check_dims(dim_, x, xi);
  std::vector<double> p(xi.begin(), xi.end());
  for (int k = 0; k < dim_; ++k) {
    auto kk = static_cast<std::size_t>(k);
    p[kk] = xi[kk] + h;
    double fp = value(x, p);
    p[kk] = xi[kk] - h;
    double fm = value(x, p);
    p[kk] = xi[kk];
    out[kk] = (fp - fm) / (2.0 * h);
  }
}

PhaseFactorPtr identity_factor(int dim) { return std::make_shared<Identity>(dim); }
PhaseFactorPtr translation_factor(int dim, double a) { return std::make_shared<Translation>(dim, a); }
PhaseFactorPtr halfwave_factor(int dim) { return std::make_shared<Halfwave>(dim); }
PhaseFactorPtr perturbed_factor(int dim, double eps, double radius) {
  return std::make_shared<Perturbed>(dim, eps, radius);
}
PhaseFactorPtr custom_factor(
    int dim, std::string tag, std::function<double(std::span<const double>, std::span<const double>)> value,
    std::function<void(std::span<const double>, std::span<const double>, std::span<double>)> gradient) {
  return std::make_shared<Custom>(dim, std::move(tag), std::move(value), std::move(gradient));
}

// ---------------------------------------------------------------- PhaseSpec

PhaseSpec::PhaseSpec(ProductSpace space, std::vector<PhaseFactorPtr> factors)
    : space_(std::move(space)), factors_(std::move(factors)) {
  if (static_cast<int>(factors_.size()) != space_.factors())
    throw InvalidArgument("PhaseSpec: need one factor per parameter");
  for (int i = 0; i < space_.factors(); ++i) {
    if (!factors_[static_cast<std::size_t>(i)]) throw InvalidArgument("PhaseSpec: null factor");
    if (factors_[static_cast<std::size_t>(i)]->dim() != space_.factor_dim(i))
      throw InvalidArgument("PhaseSpec: factor " + std::to_string(i) + " dimension mismatch");
  }
}

namespace {

template <class Make>
PhaseSpec uniform(const ProductSpace& space, Make make) {
  std::vector<PhaseFactorPtr> f;
  for (int n : space.dims()) f.push_back(make(n));
  return PhaseSpec(space, std::move(f));
}

}  // namespace

PhaseSpec PhaseSpec::identity(const ProductSpace& space) { return uniform(space, identity_factor); }
PhaseSpec PhaseSpec::translation(const ProductSpace& space, double a) {
  return uniform(space, [a](int n) { return translation_factor(n, a); });
}
PhaseSpec PhaseSpec::halfwave(const ProductSpace& space) { return uniform(space, halfwave_factor); }
PhaseSpec PhaseSpec::perturbed(const ProductSpace& space, double eps, double radius) {
  return uniform(space, [eps, radius](int n) { return perturbed_factor(n, eps, radius); });
}

std::string PhaseSpec::tag() const {
  std::string first = factors_.front()->tag();
  bool same = std::all_of(factors_.begin(), factors_.end(), [&](const auto& f) { return f->tag() == first; });
  if (same) return first;
  std::string out;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (i) out += '*';
    out += factors_[i]->tag();
  }
  return out;
}

bool PhaseSpec::linear_in_x() const {
  return std::all_of(factors_.begin(), factors_.end(), [](const auto& f) { return f->linear_in_x(); });
}

double PhaseSpec::value(std::span<const double> x, std::span<const double> xi) const {
  if (static_cast<int>(x.size()) != space_.total_dim() || static_cast<int>(xi.size()) != space_.total_dim())
    throw InvalidArgument("eval_phase: coordinate dimension mismatch");
  double s = 0.0;
  for (int i = 0; i < space_.factors(); ++i) {
    auto off = static_cast<std::size_t>(space_.axis_offset(i));
    auto nd = static_cast<std::size_t>(space_.factor_dim(i));
    s += factors_[static_cast<std::size_t>(i)]->value(x.subspan(off, nd), xi.subspan(off, nd));
  }
  if (!std::isfinite(s)) throw NumericError("eval_phase: non-finite phase value");
  return s;
}

double eval_phase(const PhaseSpec& phi, std::span<const double> x, std::span<const double> xi) {
  return phi.value(x, xi);
}

// ---------------------------------------------------------------- checks

double check_homogeneity(const PhaseSpec& phi, const LatticeGrid& grid, std::size_t samples,
                         std::span<const double> scales, std::uint64_t seed) {
  if (!(phi.space() == grid.space())) throw InvalidArgument("check_homogeneity: space mismatch");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const ProductSpace& sp = phi.space();
  std::size_t n = static_cast<std::size_t>(sp.total_dim());
  std::vector<double> x(n), xi(n), txi(n);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t a = 0; a < n; ++a) x[a] = unit(rng) * grid.extent(static_cast<int>(a));
    for (int i = 0; i < sp.factors(); ++i) {
      int off = sp.axis_offset(i), nd = sp.factor_dim(i);
      double floor = 1.0 / grid.period(off);
      double r;
      do {
        r = 0.0;
        for (int a = off; a < off + nd; ++a) {
          xi[static_cast<std::size_t>(a)] = unit(rng) * grid.max_frequency(a);
          r += xi[static_cast<std::size_t>(a)] * xi[static_cast<std::size_t>(a)];
        }
      } while (std::sqrt(r) < floor);
    }
    double base = phi.value(x, xi);
    for (double t : scales) {
      for (std::size_t a = 0; a < n; ++a) txi[a] = t * xi[a];
      double defect = std::abs(phi.value(x, txi) - t * base) / (1.0 + std::abs(t * base));
      worst = std::max(worst, defect);
    }
  }
  return worst;
}

namespace {

double determinant(std::vector<double> m, int n) {
  if (n == 1) return m[0];
  if (n == 2) return m[0] * m[3] - m[1] * m[2];
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

}  // namespace

double check_nondegeneracy(const PhaseSpec& phi, const LatticeGrid& grid, std::size_t samples, std::uint64_t seed,
                           double fd_step) {
  if (!(phi.space() == grid.space())) throw InvalidArgument("check_nondegeneracy: space mismatch");
  const ProductSpace& sp = phi.space();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<std::size_t> pick(0, grid.node_count() - 1);
  double worst = std::numeric_limits<double>::infinity();
  std::vector<double> x(static_cast<std::size_t>(sp.total_dim()));
  for (std::size_t s = 0; s < samples; ++s) {
    grid.node_point(pick(rng), x);
    for (int i = 0; i < sp.factors(); ++i) {
      int off = sp.axis_offset(i), nd = sp.factor_dim(i);
      double h = fd_step > 0.0 ? fd_step : std::max(1e-4, grid.spacing(off) / 16.0);
      std::vector<double> xi_(static_cast<std::size_t>(nd)), xv(x.begin() + off, x.begin() + off + nd);
      double r = 0.0;
      while (r < 1e-12) {
        r = 0.0;
        for (auto& c : xi_) {
          c = gauss(rng);
          r += c * c;
        }
      }
      for (auto& c : xi_) c /= std::sqrt(r);
      const PhaseFactor& f = phi.factor(i);
      std::vector<double> m(static_cast<std::size_t>(nd * nd));
      auto eval = [&](int a, double sa, int b, double sb) {
        std::vector<double> xx(xv), pp(xi_);
        xx[static_cast<std::size_t>(a)] += sa * h;
        pp[static_cast<std::size_t>(b)] += sb * h;
        return f.value(xx, pp);
      };
      for (int a = 0; a < nd; ++a)
        for (int b = 0; b < nd; ++b) {
          double v = (eval(a, 1, b, 1) - eval(a, 1, b, -1) - eval(a, -1, b, 1) + eval(a, -1, b, -1)) / (4.0 * h * h);
          if (!std::isfinite(v)) throw NumericError("check_nondegeneracy: non-finite second difference");
          m[static_cast<std::size_t>(a * nd + b)] = v;
        }
      worst = std::min(worst, std::abs(determinant(m, nd)));
    }
  }
  return worst;
}

double psi_remainder(const PhaseSpec& phi, int i, std::span<const double> x_i, std::span<const double> xi_i,
                     std::span<const double> direction) {
  const PhaseFactor& f = phi.factor(i);
  check_dims(f.dim(), x_i, xi_i);
  if (static_cast<int>(direction.size()) != f.dim()) throw InvalidArgument("psi_remainder: direction dimension");
  std::vector<double> g(static_cast<std::size_t>(f.dim()));
  f.gradient(x_i, direction, g);
  return f.value(x_i, xi_i) - dot(g, xi_i);
}

}  // namespace mpfio
