#pragma once

// Reference computations written straight from the definitions, without
// the library's FFT or table machinery. Slow; small grids only.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "mpfio/lattice.hpp"

namespace oracle {

using mpfio::Complex;

inline Complex cis(double t) { return std::polar(1.0, 2.0 * std::numbers::pi * t); }

/// All grid frequencies as full vectors, in node order of signed indices.
inline std::vector<std::vector<double>> frequencies(const mpfio::LatticeGrid& g) {
  std::vector<std::vector<double>> out;
  std::vector<int> idx(static_cast<std::size_t>(g.axes()));
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    g.unravel(k, idx);
    std::vector<double> xi;
    for (int a = 0; a < g.axes(); ++a) xi.push_back(g.frequency(a, idx[static_cast<std::size_t>(a)] - g.points(a) / 2));
    out.push_back(xi);
  }
  return out;
}

inline std::vector<std::vector<double>> nodes(const mpfio::LatticeGrid& g) {
  std::vector<std::vector<double>> out;
  std::vector<double> x(static_cast<std::size_t>(g.axes()));
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    g.node_point(k, x);
    out.push_back(x);
  }
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

/// fhat(xi) = sum_x f(x) e^{-2 pi i x.xi} dx, by direct summation.
inline Complex fourier(const mpfio::SampledField& f, const std::vector<double>& xi) {
  const auto& g = f.grid();
  auto xs = nodes(g);
  Complex s = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) s += f[k] * cis(-dot(xs[k], xi));
  return s * g.cell_volume();
}

/// Band-limited random field: a few random grid frequencies with |xi_a| <= band.
inline mpfio::SampledField random_trig(const mpfio::LatticeGrid& g, int terms, double band, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<std::vector<double>> ks;
  std::vector<Complex> cs;
  for (int t = 0; t < terms; ++t) {
    std::vector<double> k;
    for (int a = 0; a < g.axes(); ++a) {
      int m_max = static_cast<int>(std::floor(band * g.period(a)));
      std::uniform_int_distribution<int> pick(-m_max, m_max);
      k.push_back(pick(rng) / g.period(a));
    }
    ks.push_back(k);
    cs.emplace_back(gauss(rng), gauss(rng));
  }
  return mpfio::SampledField::from_function(g, [&](std::span<const double> x) {
    std::vector<double> xv(x.begin(), x.end());
    Complex v = 0.0;
    for (std::size_t t = 0; t < ks.size(); ++t) v += cs[t] * cis(dot(xv, ks[t]));
    return v;
  });
}

inline double max_abs_diff(const mpfio::SampledField& a, const mpfio::SampledField& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace oracle

#include "mpfio/phase.hpp"
#include "mpfio/symbol.hpp"

namespace oracle {

/// Direct double sum of the operator definition with f-hat by direct
/// summation; `weight` multiplies the integrand per full frequency vector.
template <class Weight>
mpfio::SampledField apply(const mpfio::PhaseSpec& phi, const mpfio::SymbolSpec& sigma, const mpfio::SampledField& f,
                          Weight weight) {
  const auto& g = f.grid();
  auto xs = nodes(g);
  auto xis = frequencies(g);
  std::vector<Complex> fh(xis.size());
  std::vector<double> w(xis.size());
  for (std::size_t k = 0; k < xis.size(); ++k) {
    w[k] = weight(xis[k]);
    if (w[k] != 0.0) fh[k] = fourier(f, xis[k]);
  }
  mpfio::SampledField out(g);
  for (std::size_t q = 0; q < xs.size(); ++q) {
    Complex s = 0.0;
    for (std::size_t k = 0; k < xis.size(); ++k)
      if (w[k] != 0.0) s += w[k] * cis(phi.value(xs[q], xis[k])) * sigma.eval(xs[q], xis[k]) * fh[k];
    out[q] = s * g.frequency_cell_volume();
  }
  return out;
}

/// Indicator of |xi_i| <= 2^{J+1} on every factor.
inline auto sharp_box(const mpfio::ProductSpace& sp, std::vector<int> J) {
  return [sp, J](const std::vector<double>& xi) {
    for (int i = 0; i < sp.factors(); ++i) {
      double r2 = 0.0;
      for (int a = sp.axis_offset(i); a < sp.axis_offset(i) + sp.factor_dim(i); ++a) r2 += xi[a] * xi[a];
      if (std::sqrt(r2) > std::ldexp(1.0, J[i] + 1)) return 0.0;
    }
    return 1.0;
  };
}

}  // namespace oracle
