#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mpfio/lattice.hpp"

namespace mpfio {

/// sigma_i(x_i, xi_i). Either a separable pair cutoff(x_i) * multiplier(xi_i)
/// or, when `joint` is set, a general function of both.
struct SymbolFactor {
  std::function<double(std::span<const double>)> cutoff;
  std::function<Complex(std::span<const double>)> multiplier;
  std::function<Complex(std::span<const double>, std::span<const double>)> joint;

  bool separable() const { return !joint; }
  Complex operator()(std::span<const double> x, std::span<const double> xi) const {
    return joint ? joint(x, xi) : cutoff(x) * multiplier(xi);
  }
};

/// chi(x) = bump(2|x| / radius): 1 on |x| <= radius/2, 0 for |x| >= radius.
double support_cutoff(std::span<const double> x, double radius);

/// Orders m_i = -(n_i - 1)/2.
std::vector<double> critical_order(const ProductSpace& space);

/// Amplitude sigma(x, xi) of declared class S^m_{rho,delta}.
class SymbolSpec {
 public:
  using Callback = std::function<Complex(std::span<const double>, std::span<const double>)>;

  /// General callback-backed symbol. Values for |x_i| > support_radius are
  /// forced to zero.
  SymbolSpec(ProductSpace space, std::vector<double> order, double rho, double delta, double support_radius,
             Callback fn, std::string tag);
  /// Product of per-factor pieces.
  static SymbolSpec factorized(ProductSpace space, std::vector<double> order, double rho, double delta,
                               double support_radius, std::vector<SymbolFactor> factors, std::string tag);

  /// chi(x), order 0.
  static SymbolSpec bump_const(const ProductSpace& space, double radius);
  /// sigma = 1 everywhere, order 0 (no x cutoff).
  static SymbolSpec unit(const ProductSpace& space);
  /// chi(x) prod_i (1 + |xi_i|^2)^{m_i/2}.
  static SymbolSpec bessel_power(const ProductSpace& space, std::vector<double> m, double radius);
  /// bessel_power at the critical order.
  static SymbolSpec critical(const ProductSpace& space, double radius);
  /// chi(x) prod_i cos(|xi_i|^{1-rho}), order 0 in S_{rho,0}.
  static SymbolSpec rough_rho(const ProductSpace& space, double rho, double radius);
  /// prod_i (1 + |xi_i|^2)^{m_i/2} without an x cutoff (a Fourier multiplier).
  static SymbolSpec bessel_multiplier(const ProductSpace& space, std::vector<double> m);

  /// Same amplitude, different declared order (for order checks).
  SymbolSpec with_order(std::vector<double> order) const;

  const ProductSpace& space() const { return space_; }
  const std::vector<double>& order() const { return order_; }
  double rho() const { return rho_; }
  double delta() const { return delta_; }
  double support_radius() const { return radius_; }
  const std::string& tag() const { return tag_; }

  bool is_factorized() const { return !factors_.empty(); }
  /// Factorized and every factor is cutoff(x_i) * multiplier(xi_i).
  bool is_separable() const;
  const SymbolFactor& factor(int i) const { return factors_.at(static_cast<std::size_t>(i)); }

  Complex eval(std::span<const double> x, std::span<const double> xi) const;

 private:
  SymbolSpec() = default;
  ProductSpace space_{std::vector<int>{1}};
  std::vector<double> order_;
  double rho_ = 1.0;
  double delta_ = 0.0;
  double radius_ = std::numeric_limits<double>::infinity();
  Callback fn_;
  std::vector<SymbolFactor> factors_;
  std::string tag_;
};

Complex eval_symbol(const SymbolSpec& s, std::span<const double> x, std::span<const double> xi);

/// Pointwise product; orders add, rho = min, delta = max.
SymbolSpec product(const SymbolSpec& a, const SymbolSpec& b);

struct OrderConstant {
  std::vector<int> alpha;  // xi multi-index, one entry per axis
  std::vector<int> beta;   // x multi-index
  std::vector<double> per_level;
  double constant = 0.0;
  double drift = 1.0;  // growth of the running max over the top three levels
  bool stable = true;
};

struct OrderReport {
  std::vector<OrderConstant> entries;
  int levels = 0;
  double drift_limit = 2.0;
  bool pass = true;
};

struct OrderCheckOptions {
  int max_alpha = 2;
  int max_beta = 1;
  std::size_t samples_per_level = 48;
  int top_level = 8;  // dyadic radii 2^0 .. 2^top_level
  double drift_limit = 2.0;
  std::uint64_t seed = 7;
};

/// Measured C_{alpha,beta} = sup |d^alpha_xi d^beta_x sigma| / prod (1+|xi_i|)^{m_i - rho|alpha_i| + delta|beta_i|}
/// per dyadic level by central differences.
OrderReport check_order(const SymbolSpec& s, const OrderCheckOptions& options = {});

}  // namespace mpfio
