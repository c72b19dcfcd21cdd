#include <doctest.h>

#include <cmath>

#include "mpfio/error.hpp"
#include "mpfio/verify.hpp"

using namespace mpfio;

TEST_CASE("identity operator has norm one") {
  auto g = make_grid(ProductSpace({2}), 1.0, 16);
  auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g);
  auto est = l2_norm_estimate(op);
  CHECK(est.converged);
  CHECK(est.norm == doctest::Approx(1.0).epsilon(1e-8));
  REQUIRE(est.dense_norm);
  CHECK(*est.dense_norm == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("diagonal multiplier norm is its value at the origin") {
  auto g = make_grid(ProductSpace({2}), 1.0, 32);
  auto op = make_operator(SymbolSpec::bessel_multiplier(g.space(), {-0.5}), PhaseSpec::identity(g.space()), g);
  auto est = l2_norm_estimate(op);
  CHECK(est.norm == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("power iteration matches the dense oracle on a 32x32 halfwave") {
  auto g = make_grid(ProductSpace({2}), 1.0, 32);
  auto op = make_operator(SymbolSpec::critical(g.space(), 0.8), PhaseSpec::halfwave(g.space()), g);
  L2Options o;
  o.path = ApplyPath::direct;
  auto est = l2_norm_estimate(op, o);
  REQUIRE(est.dense_norm);
  CHECK(std::abs(est.norm - *est.dense_norm) <= 1e-6 * *est.dense_norm);
  CHECK(dense_operator_norm(op, ApplyPath::multiplier) == doctest::Approx(*est.dense_norm).epsilon(1e-10));

  auto r = l2_norm_report(op, o);
  CHECK(r.criterion("matches_dense"));
  CHECK(r.passed());
}

TEST_CASE("power iteration rejects too few iterations") {
  auto g = make_grid(ProductSpace({1}), 1.0, 16);
  auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g);
  L2Options o;
  o.iterations = 5;
  CHECK_THROWS_AS(l2_norm_estimate(op, o), InvalidArgument);
}

TEST_CASE("majorization decays above the atom level on a line") {
  auto g = make_grid(ProductSpace({1}), 4.0, 4096);
  auto op = make_operator(SymbolSpec::bump_const(g.space(), 3.0), PhaseSpec::identity(g.space()), g);
  auto atom = make_tensor_atom(g, midpoint_center(g), {0.125}, AtomProfile::odd_bump);
  MajorizationOptions o;
  o.C = 2.0;
  o.offsets = {-3, -2, -1, 0, 1, 2, 3, 4};
  auto r = majorization_sweep(op, atom, o);
  CHECK(r.scalar("slope_above_k") <= -0.8);
  CHECK(r.criterion("diagonal_within_l2_bound"));
  CHECK(r.fits().size() == 2);
  CHECK(r.passed());

  MajorizationOptions huge = o;
  huge.C = 1e6;
  CHECK_THROWS_AS(majorization_sweep(op, atom, huge), InvalidArgument);
}

TEST_CASE("kernel decay exponent for n = 2") {
  auto r = bessel_decay({});
  CHECK(r.scalar("exponent") == doctest::Approx(-1.5).epsilon(0.1));
  CHECK(r.passed());

  BesselOptions control;
  control.points = 256;
  control.control = true;
  auto c = bessel_decay(control);
  CHECK(c.criterion("discrete_delta"));
  CHECK(c.fits().empty());

  BesselOptions coarse;
  coarse.points = 64;
  coarse.level = 3;
  CHECK_THROWS_AS(bessel_decay(coarse), InvalidArgument);
}

TEST_CASE("remainder sweep") {
  ProductSpace sp({2});
  PsiOptions o;
  o.samples = 100;
  auto id = psi_bound_sweep(PhaseSpec::identity(sp), o);
  CHECK(id.scalar("max_psi") == 0.0);
  CHECK(id.passed());

  auto hw = psi_bound_sweep(PhaseSpec::halfwave(sp), o);
  CHECK(hw.scalar("max_psi") > 0.1);
  CHECK(hw.scalar("max_psi") < 4.0);
  CHECK(hw.passed());

  auto p05 = psi_bound_sweep(PhaseSpec::perturbed(sp, 0.05), o);
  auto p10 = psi_bound_sweep(PhaseSpec::perturbed(sp, 0.1), o);
  CHECK(p10.passed());
  CHECK(p10.scalar("max_psi") == doctest::Approx(2.0 * p05.scalar("max_psi")).epsilon(0.2));
}

TEST_CASE("sector kernel is localized in its rectangle") {
  auto g = make_grid(ProductSpace({2}), 1.0, 256);
  auto op = make_operator(SymbolSpec::unit(g.space()), PhaseSpec::identity(g.space()), g);
  auto r = sector_localization(op, {});
  CHECK(r.criterion("drop_1_to_4"));
  CHECK(r.criterion("far_fraction"));
  CHECK(r.scalar("decay_exponent") < -2.0);

  LocalizationOptions whole;
  whole.lambdas = {1.0, 1e4};
  whole.far_lambda = 1e4;
  whole.far_limit = 0.0;
  CHECK(sector_localization(op, whole).scalar("far_fraction") == 0.0);
}

TEST_CASE("region ratio stable for the identity phase") {
  auto g = make_grid(ProductSpace({1}), 8.0, 2048);
  auto r = region_measure(PhaseSpec::identity(g.space()), g, {});
  CHECK(r.passed());
  CHECK(r.tables().front().rows.size() == 5);
}

TEST_CASE("identity checks") {
  PartitionOptions p;
  p.samples = 500;
  auto part = partition_check(p);
  CHECK(part.passed());
  CHECK(part.scalar("radial_defect") <= 1e-12);

  AtomValidityOptions a;
  a.count = 20;
  CHECK(atom_validity(a).passed());

  InversionOptions inv;
  inv.points = {16, 32};
  CHECK(inversion_check(inv).passed());

  auto g = make_grid(ProductSpace({1, 1}), 1.0, 16);
  auto op = make_operator(SymbolSpec::critical(g.space(), 0.8), PhaseSpec::halfwave(g.space()), g);
  ConsistencyOptions c;
  c.inputs = 2;
  CHECK(decomposition_consistency(op, c).passed());

  FactorizedOptions f;
  f.specs = 4;
  f.speed_points = 16;
  f.min_speedup = 0.0;
  auto fr = factorized_check(f);
  CHECK(fr.criterion("matches_direct"));
}

TEST_CASE("reports are deterministic and keep timings apart") {
  auto run = [] {
    PartitionOptions p;
    p.samples = 200;
    p.max_level = 3;
    auto r = partition_check(p);
    r.timing("wall", 12.5);
    return r;
  };
  auto a = run(), b = run();
  CHECK(a.to_json() == b.to_json());
  CHECK(a.spec_hash() == b.spec_hash());
  CHECK(a.to_json().find("wall") == std::string::npos);
  CHECK(a.timing_json().find("12.5") != std::string::npos);

  PartitionOptions other;
  other.samples = 201;
  CHECK(partition_check(other).spec_hash() != a.spec_hash());
}

TEST_CASE("report bookkeeping") {
  ExperimentReport r("x");
  LineFit small;
  small.n = 3;
  CHECK_THROWS_AS(r.fit("f", small), InvalidArgument);
  CHECK_THROWS_AS(r.scalar("missing"), InvalidArgument);
  CHECK(r.passed());
  r.criterion("a", true);
  r.criterion("b", false);
  CHECK_FALSE(r.passed());
  auto& t = r.table("t", {"k", "v"});
  t.rows.push_back({1.0, 0.5});
  CHECK(table_csv(r.tables().front()) == "k,v\n1,0.5\n");
}

TEST_CASE("band limited field stays in its band") {
  auto g = make_grid(ProductSpace({1}), 1.0, 64);
  auto f = band_limited_field(g, {4.0}, 3);
  auto spec = forward_transform(f);
  double outside = 0.0, total = 0.0;
  for (int q = 0; q < 64; ++q) {
    double m = std::norm(spec[static_cast<std::size_t>(q)]);
    total += m;
    if (std::abs(g.frequency_of_slot(0, q)) > 4.0) outside += m;
  }
  CHECK(total > 0.0);
  CHECK(outside <= 1e-24 * total);
}
