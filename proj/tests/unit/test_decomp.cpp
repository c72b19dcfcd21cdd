#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "mpfio/decomp.hpp"
#include "mpfio/error.hpp"

using namespace mpfio;

namespace {

std::vector<double> random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  std::vector<double> v(static_cast<std::size_t>(n));
  double s = 0.0;
  for (auto& c : v) {
    c = g(rng);
    s += c * c;
  }
  for (auto& c : v) c /= std::sqrt(s);
  return v;
}

double chord(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("bump plateaus and transition") {
  CHECK(bump(0.7) == 1.0);
  CHECK(bump(-1.0) == 1.0);
  CHECK(bump(2.3) == 0.0);
  CHECK(bump(2.0) == 0.0);
  CHECK(bump(1.5) > 0.0);
  CHECK(bump(1.5) < 1.0);
  CHECK(bump(1.5) + bump_complement(1.5) == doctest::Approx(1.0).epsilon(1e-15));
  // symmetric glue: value at the midpoint is 1/2
  CHECK(bump(1.5) == doctest::Approx(0.5));
  double prev = 1.0;
  for (double t = 1.0; t <= 2.0; t += 1.0 / 64) {
    double v = bump(t);
    CHECK(v <= prev);
    CHECK(v >= 0.0);
    prev = v;
  }
}

TEST_CASE("bump derivatives vanish at the matching points") {
  // finite differences of order 1..4 near t = 1 and t = 2 are tiny
  for (double t0 : {1.0, 2.0}) {
    for (double eps : {0.02, 0.04}) {
      double d1 = (bump(t0 + eps) - bump(t0 - eps)) / (2 * eps);
      CHECK(std::abs(d1) < 1e-8);
    }
  }
  CHECK(bump_derivative(1.5) < 0.0);
  CHECK(bump_derivative(0.5) == 0.0);
  CHECK(bump_derivative(2.5) == 0.0);
  const double h = 1e-6;
  for (double t : {1.2, 1.5, 1.8})
    CHECK(bump_derivative(t) == doctest::Approx((bump(t + h) - bump(t - h)) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("dyadic pieces") {
  for (int j = 1; j <= 8; ++j) CHECK(lp_weight(j, std::ldexp(1.0, j)) == 1.0);
  CHECK(lp_weight(1, 0.5) == 0.0);
  double s = 0.0;
  for (int j = 0; j <= 5; ++j) s += lp_weight(j, 7.0);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(lp_weight(0, 0.3) == 1.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int J : {0, 3, 8}) {
    for (int k = 0; k < 500; ++k) {
      double r = u(rng) * std::ldexp(1.0, J);
      double sum = 0.0;
      for (int j = 0; j <= J; ++j) sum += lp_weight(j, r);
      CHECK(std::abs(sum - 1.0) <= 1e-12);
      CHECK(lp_partial_sum(J, r) == 1.0);
    }
  }
  // exact shell support
  for (int j = 1; j <= 8; ++j) {
    for (int k = 0; k < 200; ++k) {
      double r = u(rng) * std::ldexp(1.0, j + 3);
      if (r < std::ldexp(1.0, j - 1) || r > std::ldexp(1.0, j + 1)) CHECK(lp_weight(j, r) == 0.0);
    }
  }
  std::vector<double> xi = {3.0, 4.0};
  CHECK(lp_weight(2, xi) == lp_weight(2, 5.0));
}

TEST_CASE("direction grid counts") {
  auto g1 = direction_grid(1, 9);
  CHECK(g1.size() == 2);
  CHECK(g1.direction(0)[0] == 1.0);
  CHECK(g1.direction(1)[0] == -1.0);
  CHECK(direction_grid(2, 4).size() == 26);
  CHECK(direction_grid(2, 0).size() == 7);
  CHECK(direction_grid(3, 2).size() == static_cast<std::size_t>(std::ceil(16 * std::numbers::pi)));
  CHECK_THROWS_AS(direction_grid(4, 1), InvalidArgument);
  CHECK_THROWS_AS(direction_grid(2, -1), InvalidArgument);

  for (int n : {2, 3}) {
    double lo = 1e300, hi = 0.0;
    for (int j = 2; j <= 10; ++j) {
      double ratio = static_cast<double>(direction_grid(n, j).size()) / std::pow(2.0, j * (n - 1) / 2.0);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    CHECK(hi / lo < 1.5);
  }
}

TEST_CASE("direction grids cover and separate") {
  std::mt19937_64 rng(5);
  for (int n : {2, 3}) {
    for (int j : {0, 2, 4, 6}) {
      auto grid = direction_grid(n, j);
      double cover = std::pow(2.0, -j / 2.0);
      for (int s = 0; s < 2000; ++s) {
        auto u = random_unit(rng, n);
        double best = 10.0;
        for (std::size_t nu = 0; nu < grid.size(); ++nu) best = std::min(best, chord(u, grid.direction(nu)));
        CHECK(best <= cover);
      }
      CHECK(grid.min_separation() >= 0.25 * cover);
      for (std::size_t nu = 0; nu < grid.size(); ++nu) {
        double norm = chord(grid.direction(nu), std::vector<double>(static_cast<std::size_t>(n), 0.0));
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("angular cutoffs") {
  SUBCASE("half-line split") {
    SectorCutoffs c(direction_grid(1, 3));
    std::vector<double> pos = {3.0}, neg = {-0.2};
    CHECK(angular_weight(c, 0, pos) == 1.0);
    CHECK(angular_weight(c, 1, pos) == 0.0);
    CHECK(angular_weight(c, 1, neg) == 1.0);
  }
  SUBCASE("exact neighbor spacing gives one third") {
    // Neighbour chord exactly 2^{-j/2}. At j = 8 the second neighbours sit at
    // scaled distance 2 - 1e-3 where the bump underflows to 0.
    const int j = 8;
    double spacing = std::pow(2.0, -j / 2.0);
    double step = 2.0 * std::asin(spacing / 2.0);
    std::vector<double> flat;
    for (int k = -3; k <= 3; ++k) {
      flat.push_back(std::cos(k * step));
      flat.push_back(std::sin(k * step));
    }
    // close the circle coarsely on the far side so the denominator is defined there
    for (int k = 1; k <= 15; ++k) {
      double th = 3 * step + k * (2 * std::numbers::pi - 6 * step) / 16;
      flat.push_back(std::cos(th));
      flat.push_back(std::sin(th));
    }
    SectorCutoffs c(AngularGrid::from_directions(2, j, flat));
    std::vector<double> xi = {5.0, 0.0};
    CHECK(angular_weight(c, 3, xi) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(c.denominator(xi) == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("normalization and support") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> rad(0.01, 500.0);
    for (int n : {1, 2, 3}) {
      for (int j = 0; j <= 8; ++j) {
        SectorCutoffs c(direction_grid(n, j));
        std::vector<std::pair<int, double>> w;
        for (int s = 0; s < (n == 1 ? 50 : 150); ++s) {
          auto u = random_unit(rng, n);
          double r = rad(rng);
          std::vector<double> xi(u.size());
          for (std::size_t a = 0; a < u.size(); ++a) xi[a] = r * u[a];
          CHECK(c.denominator(xi) >= 1.0);
          c.weights(xi, w);
          double sum = 0.0;
          for (auto& [nu, v] : w) {
            sum += v;
            CHECK(chord(u, c.grid().direction(static_cast<std::size_t>(nu))) <= 2.0 * std::pow(2.0, -j / 2.0));
          }
          CHECK(std::abs(sum - 1.0) <= 1e-12);
          // the span-based single lookup agrees with the batch
          if (!w.empty()) CHECK(c.weight(static_cast<std::size_t>(w[0].first), xi) == w[0].second);
        }
      }
    }
  }
  SUBCASE("errors") {
    SectorCutoffs c(direction_grid(2, 2));
    std::vector<double> zero = {0.0, 0.0}, xi = {1.0, 0.0};
    CHECK_THROWS_AS(angular_weight(c, 0, zero), InvalidArgument);
    CHECK_THROWS_AS(angular_weight(c, 1000, xi), InvalidArgument);
    // a single direction cannot cover the circle
    SectorCutoffs sparse(AngularGrid::from_directions(2, 2, {1.0, 0.0}));
    std::vector<double> back = {-1.0, 0.0};
    CHECK_THROWS_AS(sparse.denominator(back), NumericError);
  }
}

TEST_CASE("tangential derivative bounds are stable in j") {
  // |d^a chi / d theta^a| scaled by 2^{-a j/2}: measured maxima should not drift with j
  const double r = 1.0;
  for (int a : {1, 2}) {
    std::vector<double> consts;
    for (int j = 2; j <= 8; j += 2) {
      SectorCutoffs c(direction_grid(2, j));
      double h = 1e-3 * std::pow(2.0, -j / 2.0);
      double best = 0.0;
      for (int s = 0; s < 400; ++s) {
        double th = 2 * std::numbers::pi * s / 400.0;
        auto at = [&](double t) {
          std::vector<double> xi = {r * std::cos(t), r * std::sin(t)};
          return c.weight(0, xi);
        };
        double d = a == 1 ? (at(th + h) - at(th - h)) / (2 * h) : (at(th + h) - 2 * at(th) + at(th - h)) / (h * h);
        best = std::max(best, std::abs(d) * std::pow(2.0, -a * j / 2.0));
      }
      consts.push_back(best);
    }
    double lo = *std::min_element(consts.begin(), consts.end());
    double hi = *std::max_element(consts.begin(), consts.end());
    CHECK(hi / lo < 2.0);
  }
}

TEST_CASE("direction export") {
  auto txt = export_directions(direction_grid(2, 0));
  std::istringstream is(txt);
  std::string line;
  int lines = 0;
  while (std::getline(is, line))
    if (!line.empty() && line[0] != '#') ++lines;
  CHECK(lines == 7);
}
