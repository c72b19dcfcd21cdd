#include <doctest.h>

#include <cmath>
#include <random>

#include "mpfio/decomp.hpp"
#include "mpfio/error.hpp"
#include "mpfio/evaluator.hpp"
#include "mpfio/parallel.hpp"
#include "oracles.hpp"

using namespace mpfio;

namespace {

double rel(const SampledField& a, const SampledField& b) { return relative_l2_error(a, b); }

Complex inner(const SampledField& a, const SampledField& b) {
  Complex s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::conj(a[k]) * b[k];
  return s;
}

SampledField random_field(const LatticeGrid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  SampledField f(g);
  for (std::size_t k = 0; k < g.node_count(); ++k) f[k] = {gauss(rng), gauss(rng)};
  return f;
}

}  // namespace

TEST_CASE("max truncation level") {
  auto g = make_grid(ProductSpace({2}), 1.0, 64);  // band 16
  CHECK(max_truncation_level(g, 0) == 3);
  auto g2 = make_grid(ProductSpace({1}), 0.75, 128);  // band 42.67
  CHECK(max_truncation_level(g2, 0) == 4);
  CHECK_THROWS_AS(make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g, 4),
                  InvalidArgument);
}

TEST_CASE("identity phase inverts the transform on band-limited data") {
  for (int pts : {32, 128}) {
    auto g = make_grid(ProductSpace({2}), 1.0, pts);
    auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g);
    auto f = oracle::random_trig(g, 6, 0.3 * g.max_frequency(0), 1);
    CHECK(rel(apply(op, f), f) <= 1e-10);
  }
}

TEST_CASE("translation phase shifts the input") {
  auto g = make_grid(ProductSpace({1, 1}), 1.0, 32);
  auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::translation(g.space(), 0.5), g);
  // Explicit trig sum so the shifted field is exact.
  std::vector<std::pair<std::vector<double>, Complex>> terms = {{{1.5, -2.0}, {1.0, 0.5}}, {{-3.0, 0.5}, {-0.3, 0.2}}};
  auto eval = [&](double x0, double x1) {
    Complex v = 0.0;
    for (auto& [k, c] : terms) v += c * oracle::cis(k[0] * x0 + k[1] * x1);
    return v;
  };
  auto f = SampledField::from_function(g, [&](std::span<const double> x) { return eval(x[0], x[1]); });
  auto shifted = SampledField::from_function(g, [&](std::span<const double> x) { return eval(x[0] + 0.5, x[1] + 0.5); });
  CHECK(rel(apply(op, f), shifted) <= 1e-10);
}

TEST_CASE("halfwave multiplies a single frequency by e^{2 pi i |k|}") {
  auto g = make_grid(ProductSpace({2}), 1.0, 64);
  auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::halfwave(g.space()), g);
  auto f = SampledField::from_function(g, [](std::span<const double> x) { return oracle::cis(3 * x[0] + 4 * x[1]); });
  auto expect = f;
  expect *= oracle::cis(5.0);
  CHECK(rel(apply(op, f), expect) <= 1e-10);
}

TEST_CASE("direct apply matches the brute-force oracle") {
  SUBCASE("halfwave, critical symbol, n=2") {
    auto g = make_grid(ProductSpace({2}), 1.0, 16);
    auto sym = SymbolSpec::critical(g.space(), 1.2);
    auto phi = PhaseSpec::halfwave(g.space());
    auto op = make_operator(sym, phi, g, 1);
    auto f = random_field(g, 2);
    auto ref = oracle::apply(phi, sym, f, oracle::sharp_box(g.space(), op.levels));
    CHECK(rel(apply(op, f), ref) <= 1e-12);
    ApplyRequest generic;
    generic.use_structure = false;
    CHECK(rel(evaluate(op, f, generic), ref) <= 1e-12);
  }
  SUBCASE("perturbed phase, d=2") {
    auto g = make_grid(ProductSpace({1, 1}), 1.0, 16);
    auto sym = SymbolSpec::rough_rho(g.space(), 0.5, 0.9);
    auto phi = PhaseSpec::perturbed(g.space(), 0.1, 1.0);
    auto op = make_operator(sym, phi, g, {0, 1});
    auto f = random_field(g, 3);
    auto ref = oracle::apply(phi, sym, f, oracle::sharp_box(g.space(), op.levels));
    CHECK(rel(apply(op, f), ref) <= 1e-12);
    ApplyRequest generic;
    generic.use_structure = false;
    CHECK(rel(evaluate(op, f, generic), ref) <= 1e-12);
  }
  SUBCASE("general callback symbol") {
    auto g = make_grid(ProductSpace({1}), 1.0, 16);
    SymbolSpec sym(g.space(), {0.0}, 1.0, 0.0, 0.8,
                   [](std::span<const double> x, std::span<const double> xi) {
                     return Complex(std::cos(x[0] * xi[0] / (1.0 + std::abs(xi[0]))), 0.1 * x[0]);
                   },
                   "mixed");
    auto phi = PhaseSpec::halfwave(g.space());
    auto op = make_operator(sym, phi, g, 1);
    auto f = random_field(g, 4);
    CHECK(rel(apply(op, f), oracle::apply(phi, sym, f, oracle::sharp_box(g.space(), op.levels))) <= 1e-12);
  }
}

TEST_CASE("smooth truncation weights the sum by bump(2^-J |xi|)") {
  auto g = make_grid(ProductSpace({1}), 1.0, 32);
  auto sym = SymbolSpec::bump_const(g.space(), 0.9);
  auto phi = PhaseSpec::halfwave(g.space());
  auto op = make_operator(sym, phi, g, 2, Truncation::smooth);
  auto f = random_field(g, 5);
  auto ref = oracle::apply(phi, sym, f, [](const std::vector<double>& xi) { return bump(std::abs(xi[0]) / 4.0); });
  CHECK(rel(apply(op, f), ref) <= 1e-12);
}

TEST_CASE("multiplier path agrees with the direct path, forward and adjoint") {
  auto g = make_grid(ProductSpace({2}), 1.0, 32);
  auto op = make_operator(SymbolSpec::critical(g.space(), 0.9), PhaseSpec::halfwave(g.space()), g, -1,
                          Truncation::smooth);
  auto f = random_field(g, 6);
  ApplyRequest fast;
  fast.path = ApplyPath::multiplier;
  CHECK(rel(evaluate(op, f, fast), apply(op, f)) <= 1e-12);
  CHECK(rel(evaluate_adjoint(op, f, fast), apply_adjoint(op, f)) <= 1e-12);

  auto bad = make_operator(SymbolSpec::critical(g.space(), 0.9), PhaseSpec::perturbed(g.space(), 0.1), g);
  CHECK_THROWS_AS(evaluate(bad, f, fast), InvalidArgument);
}

TEST_CASE("adjoint is the conjugate transpose of the node map") {
  auto g = make_grid(ProductSpace({1, 1}), 1.0, 16);
  for (auto phi : {PhaseSpec::halfwave(g.space()), PhaseSpec::perturbed(g.space(), 0.1)}) {
    auto op = make_operator(SymbolSpec::critical(g.space(), 0.9), phi, g);
    auto f = random_field(g, 7), h = random_field(g, 8);
    Complex lhs = inner(h, apply(op, f));
    Complex rhs = inner(apply_adjoint(op, h), f);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
  }
}

TEST_CASE("factorized path matches direct") {
  SUBCASE("identity * identity with bump cutoffs") {
    auto g = make_grid(ProductSpace({1, 1}), 1.0, 32);
    auto op = make_operator(SymbolSpec::bump_const(g.space(), 0.8), PhaseSpec::identity(g.space()), g);
    auto f = random_field(g, 9);
    CHECK(rel(apply_factorized(op, f), apply(op, f)) <= 1e-10);
  }
  SUBCASE("halfwave * identity") {
    auto g = make_grid(ProductSpace({1, 1}), 1.0, 32);
    PhaseSpec phi(g.space(), {halfwave_factor(1), identity_factor(1)});
    auto op = make_operator(SymbolSpec::critical(g.space(), 0.8), phi, g);
    auto f = random_field(g, 10);
    CHECK(rel(apply_factorized(op, f), apply(op, f)) <= 1e-10);
  }
  SUBCASE("dims (2,1), perturbed * halfwave, joint factor") {
    auto g = make_grid(ProductSpace({2, 1}), 1.0, 8);
    PhaseSpec phi(g.space(), {perturbed_factor(2, 0.1), halfwave_factor(1)});
    std::vector<SymbolFactor> fs = {
        {{}, {}, [](std::span<const double> x, std::span<const double> xi) {
           return Complex(support_cutoff(x, 0.9) / std::sqrt(1.0 + xi[0] * xi[0] + xi[1] * xi[1]), x[0]);
         }},
        {[](std::span<const double> x) { return support_cutoff(x, 0.9); },
         [](std::span<const double> xi) { return Complex(std::cos(xi[0])); }, {}}};
    auto sym = SymbolSpec::factorized(g.space(), {-1.0, 0.0}, 1.0, 0.0, 0.9, fs, "test");
    auto op = make_operator(sym, phi, g);
    auto f = random_field(g, 11);
    CHECK(rel(apply_factorized(op, f), apply(op, f)) <= 1e-10);
  }
  SUBCASE("non-factorizable symbol is rejected") {
    auto g = make_grid(ProductSpace({1, 1}), 1.0, 8);
    SymbolSpec sym(g.space(), {0.0, 0.0}, 1.0, 0.0, 1.0,
                   [](std::span<const double> x, std::span<const double>) { return Complex(1.0 + x[0] * x[1]); }, "x");
    auto op = make_operator(sym, PhaseSpec::identity(g.space()), g);
    CHECK_THROWS_AS(apply_factorized(op, random_field(g, 1)), InvalidArgument);
  }
}

TEST_CASE("Littlewood-Paley pieces reconstruct the operator") {
  auto g = make_grid(ProductSpace({1, 1}), 1.0, 32);  // J = 2 per factor
  auto op = make_operator(SymbolSpec::critical(g.space(), 0.9), PhaseSpec::halfwave(g.space()), g);
  auto f = oracle::random_trig(g, 8, 4.0, 12);  // band <= 2^J
  SampledField sum(g);
  for (int j0 = 0; j0 <= 2; ++j0)
    for (int j1 = 0; j1 <= 2; ++j1) sum += apply_partial(op, f, {j0, j1});
  CHECK(rel(sum, apply(op, f)) <= 1e-10);

  SampledField one(g);
  for (int j0 = 0; j0 <= 2; ++j0) one += apply_partial(op, f, {j0, std::nullopt});
  CHECK(rel(one, apply(op, f)) <= 1e-10);

  CHECK_THROWS_AS(apply_partial(op, f, {3, std::nullopt}), InvalidArgument);
  CHECK_THROWS_AS(apply_partial(op, f, {-1, std::nullopt}), InvalidArgument);
}

TEST_CASE("partial operators vanish off their shell") {
  auto g = make_grid(ProductSpace({1}), 2.0, 128);  // band 16, J = 3
  auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g);
  // fhat supported at |xi| = 2.5, inside shell j = 2
  auto g2 = make_grid(ProductSpace({1}), 1.0, 256);
  auto op2 = make_operator(SymbolSpec::unit(g2.space()), PhaseSpec::identity(g2.space()), g2);
  auto f2 = SampledField::from_function(g2, [](std::span<const double> x) { return oracle::cis(2.5 * x[0]); });
  const double scale = lp_norm(f2, 2.0);
  CHECK(lp_norm(apply_partial(op2, f2, {4}), 2.0) <= 1e-14 * scale);
  CHECK(lp_norm(apply_partial(op2, f2, {5}), 2.0) <= 1e-14 * scale);
  CHECK(lp_norm(apply_partial(op2, f2, {2}), 2.0) > 0.0);

  // j = 0 block on the identity operator is the low-pass filter bump(|xi|).
  auto h = random_field(g, 13);
  auto low = apply_partial(op, h, {0});
  auto spec = forward_transform(h);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= bump(std::abs(g.frequency_of_slot(0, static_cast<int>(k))));
  CHECK(rel(low, inverse_transform(g, spec)) <= 1e-12);
}

TEST_CASE("sectors sum to the partial operator") {
  SUBCASE("n = 2") {
    auto g = make_grid(ProductSpace({2}), 1.0, 32);
    auto op = make_operator(SymbolSpec::critical(g.space(), 0.9), PhaseSpec::halfwave(g.space()), g);
    auto f = random_field(g, 14);
    for (int j : {0, 2}) {
      auto partial = apply_partial(op, f, {j});
      SampledField sum(g);
      std::size_t count = direction_grid(2, j).size();
      for (std::size_t nu = 0; nu < count; ++nu) sum += apply_sector(op, f, {j}, {nu});
      CHECK(rel(sum, partial) <= 1e-11);
    }
    CHECK_THROWS_AS(apply_sector(op, f, {2}, {99}), InvalidArgument);
    CHECK_THROWS_AS(apply_sector(op, f, {std::nullopt}, {0}), InvalidArgument);
  }
  SUBCASE("n = 1 halves") {
    auto g = make_grid(ProductSpace({1}), 1.0, 64);
    auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g);
    auto f = random_field(g, 15);
    auto pos = apply_sector(op, f, {3}, {0});
    auto neg = apply_sector(op, f, {3}, {1});
    CHECK(rel(pos + neg, apply_partial(op, f, {3})) <= 1e-12);
    auto spec = forward_transform(pos);
    for (std::size_t k = 0; k < spec.size(); ++k)
      if (g.frequency_of_slot(0, static_cast<int>(k)) < 0) CHECK(std::abs(spec[k]) <= 1e-12);
  }
}

TEST_CASE("single sector output stays in its cone") {
  auto g = make_grid(ProductSpace({2}), 1.0, 64);
  auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g);
  auto f = random_field(g, 16);
  const int j = 3;
  const std::size_t nu = 5;
  auto out = apply_sector(op, f, {j}, {nu});
  auto spec = forward_transform(out);
  auto dirs = direction_grid(2, j);
  auto dir = dirs.direction(nu);
  double in = 0.0, total = 0.0;
  std::vector<int> idx(2);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    g.unravel(k, idx);
    double x0 = g.frequency_of_slot(0, idx[0]), x1 = g.frequency_of_slot(1, idx[1]);
    double r = std::hypot(x0, x1);
    double m = std::norm(spec[k]);
    total += m;
    if (r > 0 && std::hypot(x0 / r - dir[0], x1 / r - dir[1]) <= 2.0 * std::pow(2.0, -j / 2.0)) in += m;
  }
  CHECK(in / total >= 0.9);
  CHECK(in / total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kernel values") {
  auto g = make_grid(ProductSpace({1}), 1.0, 32);
  auto sym = SymbolSpec::bump_const(g.space(), 0.8);
  auto op = make_operator(sym, PhaseSpec::identity(g.space()), g);
  std::vector<double> x = {0.1};
  Complex k0 = kernel_value(op, {2}, {}, x, x);
  double expect = 0.0;
  for (int q = 0; q < 32; ++q) expect += lp_weight(2, std::abs(g.frequency_of_slot(0, q))) * g.frequency_cell_volume();
  CHECK(k0.imag() == doctest::Approx(0.0));
  CHECK(k0.real() == doctest::Approx(expect));
  CHECK(k0.real() > 0.0);

  auto unit = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g);
  double h = g.spacing(0);
  for (double y : {-0.3, 0.0, 0.45}) {
    std::vector<double> a = {0.2}, b = {y}, a2 = {0.2 + h}, b2 = {y + h};
    CHECK(std::abs(kernel_value(unit, {1}, {0}, a, b) - kernel_value(unit, {1}, {0}, a2, b2)) <= 1e-12);
  }
}

TEST_CASE("halfwave sector kernel decays transverse to its direction") {
  auto g = make_grid(ProductSpace({2}), 2.0, 512);  // band 64, J = 5
  auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::halfwave(g.space()), g);
  const int j = 5;
  auto dirs = direction_grid(2, j);
  auto dir = dirs.direction(0);  // (1, 0)
  std::vector<double> y = {0.0, 0.0};
  std::vector<double> peak = {y[0] - dir[0], y[1] - dir[1]};
  double k_peak = std::abs(kernel_value(op, {j}, {0}, peak, y));
  std::vector<double> off = {peak[0], peak[1] + 8.0 * std::pow(2.0, -j / 2.0)};
  double k_off = std::abs(kernel_value(op, {j}, {0}, off, y));
  CHECK(k_peak >= 100.0 * k_off);
}

TEST_CASE("linearity and determinism") {
  auto g = make_grid(ProductSpace({1, 1}), 1.0, 32);
  auto op = make_operator(SymbolSpec::critical(g.space(), 0.9), PhaseSpec::perturbed(g.space(), 0.1), g);
  auto f = random_field(g, 17), h = random_field(g, 18);
  Complex a(0.3, -1.2), b(-2.0, 0.4);
  auto lhs = apply(op, a * f + b * h);
  auto rhs = a * apply(op, f) + b * apply(op, h);
  CHECK(rel(lhs, rhs) <= 1e-12);

  set_worker_count(1);
  auto serial = apply(op, f);
  auto serial_fact = apply_factorized(op, f);
  set_worker_count(4);
  auto par = apply(op, f);
  auto par_fact = apply_factorized(op, f);
  set_worker_count(0);
  CHECK(oracle::max_abs_diff(serial, par) == 0.0);
  CHECK(oracle::max_abs_diff(serial_fact, par_fact) == 0.0);
}

TEST_CASE("truncation defect") {
  auto g = make_grid(ProductSpace({1}), 1.0, 64);  // J = 3
  auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g);
  auto low = SampledField::from_function(g, [](std::span<const double> x) { return oracle::cis(2.0 * x[0]); });
  CHECK(truncation_defect(op, low) <= 1e-28);
  auto high = low + SampledField::from_function(g, [](std::span<const double> x) { return oracle::cis(10.0 * x[0]); });
  CHECK(truncation_defect(op, high) == doctest::Approx(0.5));
}

TEST_CASE("factorized path on randomized specs") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<int>> layouts = {{1, 1}, {2, 1}, {1, 2}, {1, 1, 1}};
  for (int trial = 0; trial < 24; ++trial) {
    auto dims = layouts[static_cast<std::size_t>(trial) % layouts.size()];
    ProductSpace sp(dims);
    int pts = sp.total_dim() == 2 ? 24 : 12;
    auto g = make_grid(sp, 0.75 + 0.5 * u(rng), pts);
    std::vector<PhaseFactorPtr> fs;
    for (int i = 0; i < sp.factors(); ++i) {
      int n = sp.factor_dim(i);
      switch (static_cast<int>(4 * u(rng))) {
        case 0: fs.push_back(identity_factor(n)); break;
        case 1: fs.push_back(translation_factor(n, u(rng) - 0.5)); break;
        case 2: fs.push_back(halfwave_factor(n)); break;
        default: fs.push_back(perturbed_factor(n, 0.1 * u(rng))); break;
      }
    }
    PhaseSpec phi(sp, fs);
    double radius = 0.5 + 0.5 * u(rng);
    auto sym = u(rng) < 0.5 ? SymbolSpec::critical(sp, radius) : SymbolSpec::rough_rho(sp, 0.5 + 0.5 * u(rng), radius);
    std::vector<int> levels;
    for (int i = 0; i < sp.factors(); ++i) levels.push_back(static_cast<int>(u(rng) * (max_truncation_level(g, i) + 1)));
    auto op = make_operator(sym, phi, g, levels, u(rng) < 0.5 ? Truncation::sharp : Truncation::smooth);
    auto f = random_field(g, 100 + static_cast<std::uint64_t>(trial));
    CAPTURE(trial);
    CHECK(rel(apply_factorized(op, f), apply(op, f)) <= 1e-10);
  }
}
