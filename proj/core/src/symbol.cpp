#include "mpfio/symbol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "mpfio/decomp.hpp"
#include "mpfio/error.hpp"

namespace mpfio {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

std::span<const double> factor_slice(const ProductSpace& sp, int i, std::span<const double> v) {
  return v.subspan(static_cast<std::size_t>(sp.axis_offset(i)), static_cast<std::size_t>(sp.factor_dim(i)));
}

void check_order_vector(const ProductSpace& space, const std::vector<double>& order) {
  if (static_cast<int>(order.size()) != space.factors())
    throw InvalidArgument("SymbolSpec: need one order entry per factor");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::function<double(std::span<const double>)> cutoff_fn(double radius) {
  if (std::isinf(radius)) return [](std::span<const double>) { return 1.0; };
  return [radius](std::span<const double> x) { return support_cutoff(x, radius); };
}

}  // namespace

double support_cutoff(std::span<const double> x, double radius) { return bump(2.0 * norm(x) / radius); }

std::vector<double> critical_order(const ProductSpace& space) {
  std::vector<double> m;
  for (int n : space.dims()) m.push_back(-(n - 1) / 2.0);
  return m;
}

SymbolSpec::SymbolSpec(ProductSpace space, std::vector<double> order, double rho, double delta,
                       double support_radius, Callback fn, std::string tag)
    : space_(std::move(space)),
      order_(std::move(order)),
      rho_(rho),
      delta_(delta),
      radius_(support_radius),
      fn_(std::move(fn)),
      tag_(std::move(tag)) {
  check_order_vector(space_, order_);
  if (!(rho_ >= 0.5 && rho_ <= 1.0)) throw InvalidArgument("SymbolSpec: rho must lie in [1/2, 1]");
  if (!(delta_ >= 0.0 && delta_ <= 1.0)) throw InvalidArgument("SymbolSpec: delta must lie in [0, 1]");
  if (!(radius_ > 0.0)) throw InvalidArgument("SymbolSpec: support radius must be positive");
  if (!fn_) throw InvalidArgument("SymbolSpec: callback required");
}

SymbolSpec SymbolSpec::factorized(ProductSpace space, std::vector<double> order, double rho, double delta,
                                  double support_radius, std::vector<SymbolFactor> factors, std::string tag) {
  if (static_cast<int>(factors.size()) != space.factors())
    throw InvalidArgument("SymbolSpec: need one factor per parameter");
  for (const auto& f : factors)
    if (!f.joint && (!f.cutoff || !f.multiplier))
      throw InvalidArgument("SymbolSpec: factor needs cutoff and multiplier, or a joint callback");
  ProductSpace sp = space;
  auto fs = factors;
  Callback fn = [sp, fs](std::span<const double> x, std::span<const double> xi) {
    Complex v = 1.0;
    for (int i = 0; i < sp.factors(); ++i)
      v *= fs[static_cast<std::size_t>(i)](factor_slice(sp, i, x), factor_slice(sp, i, xi));
    return v;
  };
  SymbolSpec s(std::move(space), std::move(order), rho, delta, support_radius, std::move(fn), std::move(tag));
  s.factors_ = std::move(factors);
  return s;
}

SymbolSpec SymbolSpec::bump_const(const ProductSpace& space, double radius) {
  std::vector<SymbolFactor> f;
  for (int i = 0; i < space.factors(); ++i)
    f.push_back({cutoff_fn(radius), [](std::span<const double>) { return Complex(1.0); }, {}});
  return factorized(space, std::vector<double>(static_cast<std::size_t>(space.factors()), 0.0), 1.0, 0.0, radius,
                    std::move(f), "bump_const");
}

SymbolSpec SymbolSpec::unit(const ProductSpace& space) {
  std::vector<SymbolFactor> f;
  double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < space.factors(); ++i)
    f.push_back({cutoff_fn(inf), [](std::span<const double>) { return Complex(1.0); }, {}});
  return factorized(space, std::vector<double>(static_cast<std::size_t>(space.factors()), 0.0), 1.0, 0.0, inf,
                    std::move(f), "unit");
}

SymbolSpec SymbolSpec::bessel_power(const ProductSpace& space, std::vector<double> m, double radius) {
  check_order_vector(space, m);
  std::vector<SymbolFactor> f;
  std::string tag = "bessel_power(";
  for (std::size_t i = 0; i < m.size(); ++i) {
    double e = m[i] / 2.0;
    f.push_back({cutoff_fn(radius),
                 [e](std::span<const double> xi) {
                   double r2 = 0.0;
                   for (double c : xi) r2 += c * c;
                   return Complex(e == 0.0 ? 1.0 : std::pow(1.0 + r2, e));
                 },
                 {}});
    tag += (i ? "," : "") + fmt(m[i]);
  }
  tag += ")";
  return factorized(space, m, 1.0, 0.0, radius, std::move(f), tag);
}

SymbolSpec SymbolSpec::critical(const ProductSpace& space, double radius) {
  SymbolSpec s = bessel_power(space, critical_order(space), radius);
  s.tag_ = "critical_order";
  return s;
}

SymbolSpec SymbolSpec::rough_rho(const ProductSpace& space, double rho, double radius) {
  if (!(rho >= 0.5 && rho <= 1.0)) throw InvalidArgument("rough_rho: rho must lie in [1/2, 1]");
  std::vector<SymbolFactor> f;
  double e = 1.0 - rho;
  for (int i = 0; i < space.factors(); ++i)
    f.push_back({cutoff_fn(radius), [e](std::span<const double> xi) { return Complex(std::cos(std::pow(norm(xi), e))); },
                 {}});
  return factorized(space, std::vector<double>(static_cast<std::size_t>(space.factors()), 0.0), rho, 0.0, radius,
                    std::move(f), "rough_rho(" + fmt(rho) + ")");
}

SymbolSpec SymbolSpec::bessel_multiplier(const ProductSpace& space, std::vector<double> m) {
  SymbolSpec s = bessel_power(space, std::move(m), std::numeric_limits<double>::infinity());
  s.tag_ = "bessel_multiplier";
  return s;
}

SymbolSpec SymbolSpec::with_order(std::vector<double> order) const {
  check_order_vector(space_, order);
  SymbolSpec s = *this;
  s.order_ = std::move(order);
  return s;
}

bool SymbolSpec::is_separable() const {
  return is_factorized() && std::all_of(factors_.begin(), factors_.end(), [](const auto& f) { return f.separable(); });
}

Complex SymbolSpec::eval(std::span<const double> x, std::span<const double> xi) const {
  if (static_cast<int>(x.size()) != space_.total_dim() || static_cast<int>(xi.size()) != space_.total_dim())
    throw InvalidArgument("eval_symbol: coordinate dimension mismatch");
  if (!std::isinf(radius_))
    for (int i = 0; i < space_.factors(); ++i)
      if (norm(factor_slice(space_, i, x)) > radius_) return 0.0;
  Complex v = fn_(x, xi);
  if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw NumericError("eval_symbol: non-finite amplitude");
  return v;
}

Complex eval_symbol(const SymbolSpec& s, std::span<const double> x, std::span<const double> xi) {
  return s.eval(x, xi);
}

SymbolSpec product(const SymbolSpec& a, const SymbolSpec& b) {
  if (!(a.space() == b.space())) throw InvalidArgument("product: symbols live on different spaces");
  std::vector<double> m(a.order().size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = a.order()[i] + b.order()[i];
  double rho = std::min(a.rho(), b.rho());
  double delta = std::max(a.delta(), b.delta());
  double radius = std::min(a.support_radius(), b.support_radius());
  std::string tag = a.tag() + "*" + b.tag();
  if (a.is_factorized() && b.is_factorized()) {
    std::vector<SymbolFactor> f;
    for (int i = 0; i < a.space().factors(); ++i) {
      SymbolFactor fa = a.factor(i), fb = b.factor(i);
      if (fa.separable() && fb.separable()) {
        f.push_back({[fa, fb](std::span<const double> x) { return fa.cutoff(x) * fb.cutoff(x); },
                     [fa, fb](std::span<const double> xi) { return fa.multiplier(xi) * fb.multiplier(xi); },
                     {}});
      } else {
        f.push_back({{}, {}, [fa, fb](std::span<const double> x, std::span<const double> xi) {
                       return fa(x, xi) * fb(x, xi);
                     }});
      }
    }
    return SymbolSpec::factorized(a.space(), m, rho, delta, radius, std::move(f), tag);
  }
  SymbolSpec sa = a, sb = b;
  return SymbolSpec(a.space(), m, rho, delta, radius,
                    [sa, sb](std::span<const double> x, std::span<const double> xi) {
                      return sa.eval(x, xi) * sb.eval(x, xi);
                    },
                    tag);
}

// ---------------------------------------------------------------- check_order

namespace {

void enumerate(int n, int max_total, std::vector<int>& cur, int pos, std::vector<std::vector<int>>& out) {
  if (pos == n) {
    out.push_back(cur);
    return;
  }
  int used = 0;
  for (int k = 0; k < pos; ++k) used += cur[static_cast<std::size_t>(k)];
  for (int v = 0; v + used <= max_total; ++v) {
    cur[static_cast<std::size_t>(pos)] = v;
    enumerate(n, max_total, cur, pos + 1, out);
  }
  cur[static_cast<std::size_t>(pos)] = 0;
}

std::vector<std::vector<int>> multi_indices(int n, int max_total) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(n), 0);
  enumerate(n, max_total, cur, 0, out);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    int sa = 0, sb = 0;
    for (int v : a) sa += v;
    for (int v : b) sb += v;
    return sa < sb;
  });
  return out;
}

struct Stencil {
  std::vector<std::pair<int, double>> taps;  // offset in units of h, weight * h^order
};

Stencil stencil(int order) {
  if (order == 0) return {{{0, 1.0}}};
  if (order == 1) return {{{1, 0.5}, {-1, -0.5}}};
  if (order == 2) return {{{1, 1.0}, {0, -2.0}, {-1, 1.0}}};
  throw InvalidArgument("check_order: derivative order above 2 unsupported");
}

}  // namespace

OrderReport check_order(const SymbolSpec& s, const OrderCheckOptions& o) {
  const ProductSpace& sp = s.space();
  const int n = sp.total_dim();
  const int d = sp.factors();
  auto alphas = multi_indices(n, o.max_alpha);
  auto betas = multi_indices(n, o.max_beta);
  const int levels = o.top_level + 1;
  if (levels < 3) throw InvalidArgument("check_order: need at least three dyadic levels");

  // Same x samples, directions and radial offsets at every level.
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double xr = std::isinf(s.support_radius()) ? 1.0 : s.support_radius();
  std::vector<std::vector<double>> xs, dirs, fracs;
  for (std::size_t k = 0; k < o.samples_per_level; ++k) {
    std::vector<double> x(static_cast<std::size_t>(n)), u(static_cast<std::size_t>(n)), f(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      int off = sp.axis_offset(i), nd = sp.factor_dim(i);
      double r2 = 0.0;
      for (int a = off; a < off + nd; ++a) {
        u[static_cast<std::size_t>(a)] = gauss(rng);
        r2 += u[static_cast<std::size_t>(a)] * u[static_cast<std::size_t>(a)];
      }
      for (int a = off; a < off + nd; ++a) u[static_cast<std::size_t>(a)] /= std::sqrt(r2);
      double rad = xr * std::pow(uni(rng), 1.0 / nd);
      double x2 = 0.0;
      std::vector<double> g(static_cast<std::size_t>(nd));
      for (auto& c : g) {
        c = gauss(rng);
        x2 += c * c;
      }
      for (int a = 0; a < nd; ++a) x[static_cast<std::size_t>(off + a)] = rad * g[static_cast<std::size_t>(a)] / std::sqrt(x2);
      f[static_cast<std::size_t>(i)] = uni(rng);
    }
    xs.push_back(x);
    dirs.push_back(u);
    fracs.push_back(f);
  }

  const double hx = 1e-3 * std::min(xr, 1.0);
  OrderReport rep;
  rep.levels = levels;
  rep.drift_limit = o.drift_limit;

  std::vector<double> xi(static_cast<std::size_t>(n)), xx(static_cast<std::size_t>(n)), pp(static_cast<std::size_t>(n));
  for (const auto& alpha : alphas)
    for (const auto& beta : betas) {
      OrderConstant entry;
      entry.alpha = alpha;
      entry.beta = beta;
      entry.per_level.assign(static_cast<std::size_t>(levels), 0.0);
      for (int lev = 0; lev < levels; ++lev) {
        double best = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
          std::vector<double> hxi(static_cast<std::size_t>(n));
          double weight = 1.0;
          for (int i = 0; i < d; ++i) {
            double r = std::ldexp(1.0 + fracs[k][static_cast<std::size_t>(i)], lev);
            int off = sp.axis_offset(i), nd = sp.factor_dim(i);
            int ai = 0, bi = 0;
            for (int a = off; a < off + nd; ++a) {
              xi[static_cast<std::size_t>(a)] = r * dirs[k][static_cast<std::size_t>(a)];
              hxi[static_cast<std::size_t>(a)] = 1e-2 * (1.0 + r);
              ai += alpha[static_cast<std::size_t>(a)];
              bi += beta[static_cast<std::size_t>(a)];
            }
            double e = s.order()[static_cast<std::size_t>(i)] - s.rho() * ai + s.delta() * bi;
            weight *= std::pow(1.0 + r, e);
          }
          // Tensor-product stencil over all xi and x axes.
          std::vector<Stencil> st;
          for (int a = 0; a < n; ++a) st.push_back(stencil(alpha[static_cast<std::size_t>(a)]));
          for (int a = 0; a < n; ++a) st.push_back(stencil(beta[static_cast<std::size_t>(a)]));
          std::vector<std::size_t> pos(st.size(), 0);
          Complex acc = 0.0;
          for (;;) {
            double w = 1.0;
            for (int a = 0; a < n; ++a) {
              auto [off_xi, w_xi] = st[static_cast<std::size_t>(a)].taps[pos[static_cast<std::size_t>(a)]];
              auto [off_x, w_x] = st[static_cast<std::size_t>(n + a)].taps[pos[static_cast<std::size_t>(n + a)]];
              pp[static_cast<std::size_t>(a)] = xi[static_cast<std::size_t>(a)] + off_xi * hxi[static_cast<std::size_t>(a)];
              xx[static_cast<std::size_t>(a)] = xs[k][static_cast<std::size_t>(a)] + off_x * hx;
              w *= w_xi * w_x;
            }
            acc += w * s.eval(xx, pp);
            std::size_t c = 0;
            while (c < st.size() && ++pos[c] == st[c].taps.size()) pos[c++] = 0;
            if (c == st.size()) break;
          }
          double scale = 1.0;
          for (int a = 0; a < n; ++a) {
            scale *= std::pow(hxi[static_cast<std::size_t>(a)], alpha[static_cast<std::size_t>(a)]);
            scale *= std::pow(hx, beta[static_cast<std::size_t>(a)]);
          }
          double v = std::abs(acc) / scale / weight;
          if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
          best = std::max(best, v);
        }
        entry.per_level[static_cast<std::size_t>(lev)] = best;
      }
      entry.constant = *std::max_element(entry.per_level.begin(), entry.per_level.end());
      // The constant is a sup over all xi, so compare running maxima: a
      // symbol that oscillates slower than one period per level is stable,
      // a mis-declared order still grows geometrically.
      std::vector<double> running(entry.per_level.size());
      std::partial_sum(entry.per_level.begin(), entry.per_level.end(), running.begin(),
                       [](double a, double b) { return std::max(a, b); });
      double hi = running.back();
      double lo = running[running.size() - 3];
      if (!std::isfinite(entry.constant)) {
        entry.stable = false;
        entry.drift = std::numeric_limits<double>::infinity();
      } else if (hi <= 1e-9) {
        // Identically zero up to difference noise.
        entry.drift = 1.0;
        entry.stable = true;
      } else {
        entry.drift = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
        entry.stable = entry.drift < o.drift_limit;
      }
      rep.pass = rep.pass && entry.stable;
      rep.entries.push_back(std::move(entry));
    }
  return rep;
}

}  // namespace mpfio
