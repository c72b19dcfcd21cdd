#include <doctest.h>

#include <cmath>

#include "mpfio/atom.hpp"
#include "mpfio/error.hpp"

using namespace mpfio;

TEST_CASE("dyadic index") {
  CHECK(dyadic_index(0.5) == 1);
  CHECK(dyadic_index(0.3) == 2);
  CHECK(dyadic_index(0.25) == 2);
  CHECK(dyadic_index(1.0) == 0);
  CHECK(dyadic_index(1.5) == 0);
  CHECK_FALSE(dyadic_index(2.5).has_value());
  for (double r = 0.001; r <= 1.0; r *= 1.37) {
    int k = *dyadic_index(r);
    CHECK(std::ldexp(1.0, -k) <= r);
    CHECK(r <= std::ldexp(1.0, 1 - k));
  }
}

TEST_CASE("tensor atom normalization and cancellation") {
  SUBCASE("d=1 n=1 odd bump") {
    auto g = make_grid(ProductSpace({1}), 1.0, 256);
    auto a = make_tensor_atom(g, {0.1}, {0.5}, AtomProfile::odd_bump);
    CHECK(lp_norm(a.samples, 2.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    Complex s = 0.0;
    for (std::size_t k = 0; k < a.samples.size(); ++k) s += a.samples[k];
    CHECK(std::abs(s) * g.cell_volume() <= 1e-12);
    CHECK(a.k[0] == 1);
    CHECK(validate_atom(a).all_ok());
  }
  SUBCASE("d=2 dims (1,1)") {
    auto g = make_grid(ProductSpace({1, 1}), 1.0, 128);
    auto a = make_tensor_atom(g, {0.0, 0.1}, {0.5, 0.25}, AtomProfile::two_hump);
    CHECK(a.measure() == doctest::Approx(0.125));
    CHECK(lp_norm(a.samples, 2.0) == doctest::Approx(std::sqrt(8.0)).epsilon(1e-12));
    CHECK(validate_atom(a).all_ok());
  }
  SUBCASE("d=1 n=2 tensor odd on 128^2") {
    auto g = make_grid(ProductSpace({2}), 1.0, 128);
    auto a = make_tensor_atom(g, {0.05, -0.1}, {0.25}, parse_profile("tensor-odd"));
    auto rep = validate_atom(a);
    CHECK(rep.l2_ok);
    CHECK(rep.support_ok);
    CHECK(rep.cancel_ok[0]);
    CHECK(rep.l1_ok);
  }
  SUBCASE("every profile on mixed dims") {
    auto g = make_grid(ProductSpace({1, 2}), 1.0, 48);
    for (auto p : {AtomProfile::odd_bump, AtomProfile::two_hump, AtomProfile::random_mix}) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto a = make_tensor_atom(g, {0.01, -0.02, 0.03}, {0.3, 0.4}, p, seed);
        auto rep = validate_atom(a);
        CAPTURE(to_string(p));
        CHECK(rep.all_ok());
        CHECK(rep.l1_norm <= std::sqrt(a.measure()) * rep.l2_norm * (1 + 1e-9));
      }
    }
  }
}

TEST_CASE("atom errors") {
  auto g = make_grid(ProductSpace({1}), 1.0, 64);
  CHECK_THROWS_AS(make_tensor_atom(g, {0.0}, {-0.1}, AtomProfile::odd_bump), InvalidArgument);
  CHECK_THROWS_AS(make_tensor_atom(g, {0.0}, {1.9}, AtomProfile::odd_bump), InvalidArgument);
  CHECK_THROWS_AS(make_tensor_atom(g, {0.0}, {0.5, 0.5}, AtomProfile::odd_bump), InvalidArgument);
  CHECK_THROWS_AS(parse_profile("spiky"), InvalidArgument);
  CHECK(parse_profile("odd-bump") == AtomProfile::odd_bump);
}

TEST_CASE("validation catches broken atoms") {
  auto g = make_grid(ProductSpace({1, 1}), 1.0, 64);
  auto c = make_tensor_atom(g, {0.0, 0.0}, {0.5, 0.5}, AtomProfile::constant);
  auto rep = validate_atom(c);
  CHECK(rep.l2_ok);
  CHECK_FALSE(rep.cancel_ok[0]);
  CHECK_FALSE(rep.cancel_ok[1]);
  // every slice of a constant atom integrates to its L1 mass
  CHECK(rep.cancel_defect[0] == doctest::Approx(1.0));

  auto a = make_tensor_atom(g, {0.0, 0.0}, {0.5, 0.5}, AtomProfile::odd_bump);
  auto doubled = a;
  doubled.samples *= 2.0;
  CHECK_FALSE(validate_atom(doubled).l2_ok);

  auto leaked = a;
  leaked.samples[0] = 1.0;
  CHECK_FALSE(validate_atom(leaked).support_ok);
}

TEST_CASE("sum atoms") {
  auto g = make_grid(ProductSpace({1, 1}), 1.0, 64);
  auto a = make_tensor_atom(g, {0.0, 0.0}, {0.5, 0.5}, AtomProfile::odd_bump);
  auto b = make_tensor_atom(g, {0.0, 0.0}, {0.5, 0.5}, AtomProfile::two_hump);
  auto same = make_sum_atom({{1.0, a}});
  CHECK(relative_l2_error(same.samples, a.samples) <= 1e-15);
  auto two = make_sum_atom({{1.0, a}, {1.0, b}});
  CHECK(lp_norm(two.samples, 2.0) == doctest::Approx(std::sqrt(1.0 / a.measure())).epsilon(1e-12));
  CHECK(validate_atom(two).all_ok());
  auto c = make_tensor_atom(g, {0.0, 0.0}, {0.5, 0.5}, AtomProfile::random_mix, 7);
  CHECK(validate_atom(make_sum_atom({{0.3, a}, {-1.2, b}, {0.8, c}})).all_ok());
  auto other = make_tensor_atom(g, {0.1, 0.0}, {0.5, 0.5}, AtomProfile::odd_bump);
  CHECK_THROWS_AS(make_sum_atom({{1.0, a}, {1.0, other}}), InvalidArgument);
}

TEST_CASE("index partition") {
  auto p = index_partition(std::vector<double>{0.5, 4.0}, FactorSet::from_bits(1));
  CHECK(p.K.members() == std::vector<int>{0});
  CHECK(p.J2.members() == std::vector<int>{1});
  auto q = index_partition(std::vector<double>{0.5, 0.25}, FactorSet::from_bits(1));
  CHECK(q.J1.members() == std::vector<int>{1});
  CHECK(q.J2.size() == 0);
  auto r = index_partition(std::vector<double>{2.0, 3.0}, FactorSet());
  CHECK(r.K.size() == 0);
  CHECK(r.J2.size() == 2);
  CHECK_THROWS_AS(index_partition(std::vector<double>{2.0, 0.5}, FactorSet::from_bits(1)), InvalidArgument);
  auto s = index_partition(std::vector<double>{0.5, 0.25, 0.1}, FactorSet::from_bits(7), FactorSet::from_bits(2));
  CHECK(s.I1.members() == std::vector<int>{1});
  CHECK(s.I2.members() == std::vector<int>{0, 2});
}

TEST_CASE("atom descriptor") {
  auto g = make_grid(ProductSpace({1}), 1.0, 64);
  auto a = make_tensor_atom(g, {0.125}, {0.25}, AtomProfile::two_hump, 4);
  auto s = describe_atom(a);
  CHECK(s.find("two_hump") != std::string::npos);
  CHECK(s.find("0.125") != std::string::npos);
}
