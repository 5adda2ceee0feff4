#include "doctest.h"
#include "htica/centroid_body.hpp"
#include "htica/lp_core.hpp"

#include <cmath>
#include <random>

using namespace htica;
using namespace htica::centroid;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

SampledCentroidBody body_of(std::initializer_list<std::initializer_list<double>> pts) {
  const auto N = static_cast<Eigen::Index>(pts.size());
  const auto n = static_cast<Eigen::Index>(pts.begin()->size());
  MatrixXd P(n, N);
  Eigen::Index c = 0;
  for (const auto& p : pts) {
    Eigen::Index r = 0;
    for (double v : p) P(r++, c) = v;
    ++c;
  }
  return SampledCentroidBody(P);
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

MatrixXd random_points(Eigen::Index n, Eigen::Index N, Rng& rng) {
  std::normal_distribution<double> g;
  MatrixXd P(n, N);
  for (Eigen::Index c = 0; c < N; ++c)
    for (Eigen::Index r = 0; r < n; ++r) P(r, c) = g(rng);
  return P;
}

}  // namespace

TEST_CASE("support function examples") {
  CHECK(support_function(body_of({{1, 0}}), vec({0, 1})) == doctest::Approx(0.0));
  CHECK(support_function(body_of({{1, 0}}), vec({1, 0})) == doctest::Approx(1.0));
  CHECK(support_function(body_of({{1, 0}, {0, 1}}), vec({1, 1})) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(support_function(body_of({{1, 0}}), vec({0, 0})), std::invalid_argument);
}

TEST_CASE("membership examples") {
  const auto seg = body_of({{1, 0}});
  CHECK(membership(seg, vec({0, 0})));
  CHECK_FALSE(membership(seg, vec({1.5, 0})));
  CHECK(membership(seg, vec({-1, 0})));
  CHECK_FALSE(membership(seg, vec({0.2, 1e-6})));
  CHECK_THROWS_AS(membership(seg, vec({0, 0, 0})), std::invalid_argument);
  CHECK_THROWS_AS(SampledCentroidBody(MatrixXd(2, 0)), std::invalid_argument);
}

TEST_CASE("zonotope polygon examples") {
  const auto one = zonotope_polygon_2d(body_of({{1, 0}}));
  REQUIRE(one.size() == 2);
  CHECK(one[0].isApprox(Vector2d(-1, 0)));
  CHECK(one[1].isApprox(Vector2d(1, 0)));

  const auto sq = zonotope_polygon_2d(body_of({{1, 0}, {0, 1}}));
  REQUIRE(sq.size() == 4);
  for (const auto& v : sq) {
    CHECK(std::abs(v.x()) == doctest::Approx(0.5));
    CHECK(std::abs(v.y()) == doctest::Approx(0.5));
  }
  CHECK_THROWS_AS(zonotope_polygon_2d(body_of({{1, 0, 0}})), std::invalid_argument);

  Rng rng = make_rng(11);
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index N = 1 + t % 20;
    const auto poly = zonotope_polygon_2d(SampledCentroidBody(random_points(2, N, rng)));
    CHECK(poly.size() <= static_cast<std::size_t>(2 * N));
  }
}

TEST_CASE("membership agrees with the planar polygon oracle") {
  Rng rng = make_rng(2024);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int mismatches = 0;
  int inside = 0;
  for (int t = 0; t < 500; ++t) {
    const Eigen::Index N = 1 + t % 10;
    // Some degenerate bodies: all points on one line.
    MatrixXd P = random_points(2, N, rng);
    if (t % 25 == 0) P.row(1) = 0.5 * P.row(0);
    const SampledCentroidBody body(P);
    const auto poly = zonotope_polygon_2d(body);
    Vector2d q(u(rng), u(rng));
    if (t % 25 == 0) q.y() = 0.5 * q.x();
    // Skip queries within 1e-7 of the boundary where both sides are tolerance-bound.
    const bool a = polygon_contains(poly, q, 1e-7);
    const bool b = polygon_contains(poly, q, -1e-7);
    if (a != b && poly.size() > 2) continue;
    const bool lp = membership(body, q);
    if (lp != a) ++mismatches;
    inside += lp;
  }
  CHECK(mismatches == 0);
  CHECK(inside > 50);
}

TEST_CASE("minkowski functional examples and consistency") {
  const auto seg = body_of({{1, 0}});
  CHECK(minkowski_functional(seg, vec({0.5, 0})) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(minkowski_functional(seg, vec({0, 0})) == 0.0);
  CHECK(std::isinf(minkowski_functional(seg, vec({0, 1}))));

  Rng rng = make_rng(77);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  int disagreements = 0;
  for (int t = 0; t < 500; ++t) {
    const Eigen::Index n = 2 + t % 2;
    const SampledCentroidBody body(random_points(n, 3 + t % 8, rng));
    VectorXd q(n);
    for (auto& x : q) x = u(rng);
    const double phi = minkowski_functional(body, q);
    if (std::abs(phi - 1.0) < 1e-7) continue;
    if ((phi <= 1.0) != membership(body, q)) ++disagreements;
  }
  CHECK(disagreements == 0);
}

TEST_CASE("minkowski functional is positively homogeneous") {
  Rng rng = make_rng(5);
  for (int t = 0; t < 50; ++t) {
    const SampledCentroidBody body(random_points(3, 12, rng));
    const VectorXd q = random_points(3, 1, rng).col(0);
    const double base = minkowski_functional(body, q);
    for (double c : {0.25, 3.0, 17.5}) {
      CHECK(minkowski_functional(body, c * q) == doctest::Approx(c * base).epsilon(1e-8));
    }
  }
}

TEST_CASE("symmetry, equivariance and support consistency") {
  Rng rng = make_rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const MatrixXd P = random_points(3, 8, rng);
    const SampledCentroidBody body(P);
    VectorXd q(3);
    for (auto& x : q) x = u(rng);
    const bool in = membership(body, q);
    CHECK(in == membership(body, -q));

    MatrixXd T = random_points(3, 3, rng) + 3.0 * MatrixXd::Identity(3, 3);
    CHECK(in == membership(SampledCentroidBody(T * P), T * q));

    if (in) {
      for (int k = 0; k < 5; ++k) {
        const VectorXd th = random_points(3, 1, rng).col(0);
        CHECK(q.dot(th) <= support_function(body, th) * th.norm() + 1e-9);
      }
    }
  }
}

TEST_CASE("dual witness reconstructs the query") {
  const auto seg = body_of({{1, 0}});
  const auto w = dual_witness(seg, vec({0.5, 0}));
  REQUIRE(w.has_value());
  CHECK((*w)[0] == doctest::Approx(0.5));
  const auto z = dual_witness(seg, vec({0, 0}));
  REQUIRE(z.has_value());
  CHECK(z->cwiseAbs().maxCoeff() <= 1.0);
  CHECK_FALSE(dual_witness(seg, vec({2, 0})).has_value());

  Rng rng = make_rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const MatrixXd P = random_points(4, 15, rng);
    VectorXd lam(15);
    for (auto& x : lam) x = u(rng);
    const VectorXd q = P * lam / 15.0;
    const auto wit = dual_witness(SampledCentroidBody(P), q);
    REQUIRE(wit.has_value());
    CHECK(wit->cwiseAbs().maxCoeff() <= 1.0);
    CHECK((P * *wit / 15.0 - q).norm() <= 1e-8);
  }
}

TEST_CASE("oracle sample size") {
  OracleParams p;
  p.epsilon = 0.5;
  p.delta = 0.2;
  p.gamma = 0.9;
  p.M = 1.5;
  const Eigen::Index n = 2;

  // Hand substitution with s_M = s_m = 1: r = eps / (2n).
  const long double r = 0.5L / 4.0L;
  const long double c = 8.0L * 1.5L * 2.0L;
  const long double b1 = std::pow(c / (r * r * 0.2L), 3.0L / 0.9L);
  const long double b2 = std::pow(c / r, 0.5L + 1.0L / 0.9L);
  const auto got = oracle_sample_size(p, n);
  CHECK(got.radius == doctest::Approx(0.125));
  CHECK(got.variance_branch == doctest::Approx(static_cast<double>(b1)).epsilon(1e-12));
  CHECK(got.threshold_branch == doctest::Approx(static_cast<double>(b2)).epsilon(1e-12));
  CHECK(got.N == std::ceil(static_cast<double>(std::max(b1, b2))));

  // gamma close to 1.
  p.gamma = 0.999;
  const auto near1 = oracle_sample_size(p, n);
  const long double v1 = std::pow(c / (r * r * 0.2L), 3.0L / 0.999L);
  const long double v2 = std::pow(c / r, 0.5L + 1.0L / 0.999L);
  CHECK(near1.N == doctest::Approx(static_cast<double>(std::max(v1, v2))).epsilon(1e-12));

  // Conditioning shrinks the radius.
  p.s_M = 4.0;
  p.s_m = 0.5;
  CHECK(oracle_sample_size(p, n).radius == doctest::Approx(0.5 * 0.5 / (2.0 * 2.0 * 4.0)));

  double prev = 0.0;
  p = OracleParams{};
  for (double eps : {1.0, 0.5, 0.2, 0.1, 0.05}) {
    p.epsilon = eps;
    const double N = oracle_sample_size(p, 3).N;
    CHECK(N > prev);
    prev = N;
  }

  OracleParams bad;
  bad.s_m = 2.0;
  CHECK_THROWS_AS(oracle_sample_size(bad, 2), std::invalid_argument);
  bad = OracleParams{};
  bad.gamma = 1.0;
  CHECK_THROWS_AS(oracle_sample_size(bad, 2), std::invalid_argument);
}

TEST_CASE("weak membership oracle on the uniform product model") {
  const auto model = ICAModelSpec::identity_uniform(3);
  OracleParams params;
  params.epsilon = 0.1;
  params.delta = 0.1;
  const std::size_t N = 2000;

  int yes_origin = 0, no_far = 0, yes_inner = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(1234, static_cast<std::uint64_t>(t));
    yes_origin += weak_membership_oracle(VectorXd::Zero(3), model, params, rng, N).yes;
    no_far += !weak_membership_oracle(vec({10, 0, 0}), model, params, rng, N).yes;
    yes_inner += weak_membership_oracle(vec({0.9, 0, 0}), model, params, rng, N).yes;
  }
  CHECK(yes_origin == trials);
  CHECK(no_far >= 0.9 * trials);
  CHECK(yes_inner >= 0.9 * trials);

  Rng rng = make_rng(1);
  const auto ans = weak_membership_oracle(VectorXd::Zero(3), model, params, rng, 100);
  CHECK(ans.N_used == 100);
  CHECK(ans.N_formula > 1e20);
  CHECK_THROWS_AS(weak_membership_oracle(VectorXd::Zero(3), model, params, rng),
                  std::invalid_argument);
}

TEST_CASE("scaling sandwich for normalized sources") {
  const auto model = ICAModelSpec::identity_uniform(3);
  const double eps = 0.1;
  int ok_inner = 0, ok_outer = 0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(555, static_cast<std::uint64_t>(t));
    const SampledCentroidBody body(model.sample(5000, rng));
    bool inner = true;
    for (int i = 0; i < 3; ++i) {
      const double phi = minkowski_functional(body, VectorXd::Unit(3, i));
      inner = inner && phi >= 1.0 - eps && phi <= 1.0 / (1.0 - eps);
    }
    ok_inner += inner;
    ok_outer += !membership(body, vec({1.0 + eps, 0.3, -0.3})) &&
                !membership(body, vec({0.2, -(1.0 + eps), 0.0}));
  }
  CHECK(ok_inner >= 0.9 * trials);
  CHECK(ok_outer >= 0.9 * trials);
}

TEST_CASE("approximation check") {
  const auto model = ICAModelSpec::identity_uniform(3);
  const double eps = 0.1, delta = 0.1, gamma = 0.5;
  Rng rng = make_rng(8);
  for (int t = 0; t < 20; ++t) {
    CHECK(approximation_check(model, VectorXd::Zero(3), eps, delta, gamma, rng, 500).within);
    CHECK(approximation_check(model, VectorXd::Zero(3), eps, delta, gamma, rng, 500,
                              [](const VectorXd&) { return 1.0; })
              .within);
  }

  // sign(x_1) witness: p = (E|X_1|, 0, 0) = e_1.
  const auto sign1 = [](const VectorXd& x) { return x[0] >= 0.0 ? 1.0 : -1.0; };
  int success = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    Rng r = make_rng(4321, static_cast<std::uint64_t>(t));
    const auto res = approximation_check(model, vec({1, 0, 0}), eps, delta, gamma, r, 2000, sign1);
    success += res.within;
    CHECK(res.N_used == 2000);
  }
  CHECK(success >= (1.0 - delta) * trials);

  const double M = model.coordinate_moment_bound(gamma);
  CHECK(M == doctest::Approx(std::pow(2.0, 1.5) / 2.5));
  CHECK(approximation_sample_size(M, 3, eps, delta, gamma) ==
        doctest::Approx(std::pow(8.0 * M * 9.0 / (eps * eps * delta), 6.5)));
  CHECK(innerball_sample_size(2.0, 2, 0.1, 0.1, 0.5) ==
        doctest::Approx(std::pow(16.0 * 2.0 * 16.0 / (0.01 * 0.1), 6.5)));
}

TEST_CASE("model validation and sampling") {
  auto m = ICAModelSpec::identity_uniform(2);
  m.mixing(1, 1) = 0.0;
  m.mixing(1, 0) = 0.0;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);

  ICAModelSpec h{MatrixXd::Identity(2, 2),
                 {heavy_tail::HeavyTailSpec::symmetric_pareto(0.5),
                  heavy_tail::HeavyTailSpec::symmetric_pareto(0.5, 4.0)}};
  h.validate();
  Rng a = make_rng(9), b = make_rng(9);
  const MatrixXd s1 = h.sample(20000, a);
  CHECK(s1 == h.sample(20000, b));
  CHECK(s1.row(1).cwiseAbs().mean() == doctest::Approx(1.0).epsilon(0.03));
}
