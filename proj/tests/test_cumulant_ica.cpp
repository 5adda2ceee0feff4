#include "doctest.h"
#include "htica/cumulant_ica.hpp"

#include <Eigen/SVD>

#include <array>
#include <cmath>
#include <random>
#include <sstream>

using namespace htica;
using namespace htica::cumulant;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd gaussian_samples(Eigen::Index count, Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd X(count, n);
  for (Eigen::Index r = 0; r < count; ++r)
    for (Eigen::Index c = 0; c < n; ++c) X(r, c) = z(rng);
  return X;
}

// Standard error of the plug-in estimate of the canonical entry `idx`,
// from the sample variance of the per-row products (delta method ignored;
// the correction terms are O(1/N)).
double product_se(const MatrixXd& X, const std::vector<int>& idx) {
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const MatrixXd Y = X.rowwise() - mean;
  VectorXd prod = VectorXd::Ones(X.rows());
  for (int i : idx) prod = prod.cwiseProduct(Y.col(i));
  const double mu = prod.mean();
  const double var = (prod.array() - mu).square().mean();
  return std::sqrt(var / static_cast<double>(X.rows()));
}

double max_abs_diff(const CumulantTensor& a, const CumulantTensor& b) {
  double m = 0.0;
  for (std::size_t c = 0; c < a.canonical_size(); ++c)
    m = std::max(m, std::abs(a.canonical_values()[c] - b.canonical_values()[c]));
  return m;
}

PoissonReduction random_reduction(Eigen::Index n, Eigen::Index m, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  PoissonReduction r;
  r.A = MatrixXd::NullaryExpr(n, m, [&] { return z(rng); });
  r.w = VectorXd::NullaryExpr(m, [&] { return u(rng); });
  r.w /= r.w.sum();
  r.lambda = 0.5 + 9.5 * u(rng);
  r.noise_tau = u(rng);
  return r;
}

}  // namespace

TEST_CASE("tensor storage is symmetric and canonical") {
  CumulantTensor t(3, 3);
  CHECK(t.canonical_size() == 10);
  const std::array<int, 3> a{2, 0, 1};
  t.at(a) = 4.5;
  for (const auto& p : std::vector<std::array<int, 3>>{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 1, 0}})
    CHECK(t(p) == 4.5);
  CHECK(CumulantTensor(4, 4).canonical_size() == 35);
  CHECK_THROWS_AS(CumulantTensor(5, 2), std::invalid_argument);
  CHECK_THROWS_AS(CumulantTensor(1, 2), std::invalid_argument);
  const std::array<int, 3> bad{0, 0, 3};
  CHECK_THROWS_AS(t(bad), std::invalid_argument);
}

TEST_CASE("vectorize_tensor examples and round trip") {
  CumulantTensor id(2, 2);
  id.at(std::array<int, 2>{0, 0}) = 1.0;
  id.at(std::array<int, 2>{1, 1}) = 1.0;
  const VectorXd v = vectorize_tensor(id);
  CHECK(v.size() == 4);
  CHECK(v[0] == 1.0);
  CHECK(v[1] == 0.0);
  CHECK(v[2] == 0.0);
  CHECK(v[3] == 1.0);

  Rng rng = make_rng(11);
  std::normal_distribution<double> z;
  for (int order = 2; order <= 4; ++order) {
    CumulantTensor s(order, 3), t(order, 3);
    for (auto& x : s.canonical_values()) x = z(rng);
    for (auto& x : t.canonical_values()) x = z(rng);
    const CumulantTensor back = tensor_from_vector(order, 3, vectorize_tensor(s));
    CHECK(max_abs_diff(back, s) == 0.0);

    // Entrywise inner product over the full n^l array.
    double entrywise = 0.0;
    const std::size_t full = static_cast<std::size_t>(std::pow(3, order));
    for (std::size_t p = 0; p < full; ++p) {
      std::vector<int> idx(static_cast<std::size_t>(order));
      std::size_t q = p;
      for (int k = order - 1; k >= 0; --k) {
        idx[static_cast<std::size_t>(k)] = static_cast<int>(q % 3);
        q /= 3;
      }
      entrywise += s(idx) * t(idx);
    }
    CHECK(vectorize_tensor(s).dot(vectorize_tensor(t)) == doctest::Approx(entrywise).epsilon(1e-14));
  }
  VectorXd asym = VectorXd::Zero(4);
  asym[1] = 1.0;
  CHECK_THROWS_AS(tensor_from_vector(2, 2, asym), std::invalid_argument);
}

TEST_CASE("tensor json round trip") {
  Rng rng = make_rng(5);
  std::normal_distribution<double> z;
  CumulantTensor t(4, 2);
  for (auto& x : t.canonical_values()) x = z(rng);
  nlohmann::json j;
  to_json(j, t);
  CHECK(j["shape"] == nlohmann::json::array({2, 2, 2, 2}));
  CHECK(j["values"].size() == 16);
  const CumulantTensor back = tensor_from_json(nlohmann::json::parse(j.dump()));
  CHECK(max_abs_diff(back, t) == 0.0);
  j["shape"] = {2, 3, 2, 2};
  CHECK_THROWS_AS(tensor_from_json(j), std::invalid_argument);
}

TEST_CASE("samples csv round trip is bit exact") {
  Rng rng = make_rng(6);
  const MatrixXd X = gaussian_samples(50, 3, rng);
  std::stringstream ss;
  write_samples_csv(ss, X);
  CHECK(read_samples_csv(ss) == X);
  std::stringstream with_header("x0,x1\n1,2\n3,4\n");
  const MatrixXd Y = read_samples_csv(with_header);
  CHECK(Y.rows() == 2);
  CHECK(Y(1, 0) == 3.0);
  std::stringstream ragged("1,2\n3\n");
  CHECK_THROWS_AS(read_samples_csv(ragged), std::invalid_argument);
  std::stringstream junk("1,2\nfoo,4\n");
  CHECK_THROWS_AS(read_samples_csv(junk), std::invalid_argument);
}

TEST_CASE("estimate_cumulant preconditions") {
  const MatrixXd X = MatrixXd::Random(100, 2);
  CHECK_THROWS_AS(estimate_cumulant(X, 1), std::invalid_argument);
  CHECK_THROWS_AS(estimate_cumulant(X, 5), std::invalid_argument);
  CHECK_THROWS_AS(estimate_cumulant(MatrixXd::Random(39, 2), 4), std::invalid_argument);
  CHECK_NOTHROW(estimate_cumulant(MatrixXd::Random(40, 2), 4));
}

TEST_CASE("Gaussian fourth cumulant vanishes") {
  Rng rng = make_rng(21);
  const MatrixXd X = gaussian_samples(1000000, 3, rng);
  const CumulantTensor k4 = estimate_cumulant(X, 4);
  const auto& canon = k4.canonical_indices();
  for (std::size_t c = 0; c < canon.size(); ++c) {
    // SE of the fourth cumulant of a standard Gaussian entry is at most
    // that of the raw fourth product (for i=j=k=l: sqrt(96/N)).
    const double se = product_se(X, canon[c]);
    CHECK(std::abs(k4.canonical_values()[c]) <= 5.0 * se);
  }
}

TEST_CASE("Poisson cumulants equal the mean") {
  Rng rng = make_rng(22);
  std::poisson_distribution<long> P(2.0);
  MatrixXd X(1000000, 1);
  for (Eigen::Index r = 0; r < X.rows(); ++r) X(r, 0) = static_cast<double>(P(rng));
  const std::array<int, 2> i2{0, 0};
  const std::array<int, 3> i3{0, 0, 0};
  const double k2 = estimate_cumulant(X, 2)(i2);
  const double k3 = estimate_cumulant(X, 3)(i3);
  // Var of (x-mu)^2 is mu4 - mu2^2 = (mu + 3mu^2) - mu^2 = 10 at mu = 2;
  // var of (x-mu)^3 is mu6 - mu3^2 = 150 - 4 = 146.
  const double N = static_cast<double>(X.rows());
  CHECK(std::abs(k2 - 2.0) <= 5.0 * std::sqrt(10.0 / N));
  CHECK(std::abs(k3 - 2.0) <= 5.0 * std::sqrt(146.0 / N));
}

TEST_CASE("shift invariance") {
  // N a power of two and integer data keep centering exact, so the
  // shifted estimate matches bit for bit.
  Rng rng = make_rng(23);
  std::uniform_int_distribution<int> d(-20, 20);
  MatrixXd X(4096, 3);
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    for (Eigen::Index c = 0; c < 3; ++c) X(r, c) = d(rng);
  const Eigen::RowVector3d shift(7.0, -3.0, 1024.0);
  const MatrixXd Xs = X.rowwise() + shift;
  for (int order = 2; order <= 4; ++order)
    CHECK(max_abs_diff(estimate_cumulant(X, order), estimate_cumulant(Xs, order)) == 0.0);

  // General data: equal up to rounding in the mean.
  const MatrixXd G = gaussian_samples(5000, 3, rng);
  const MatrixXd Gs = G.rowwise() + Eigen::RowVector3d(0.37, -1.9, 3.3);
  for (int order = 2; order <= 4; ++order)
    CHECK(max_abs_diff(estimate_cumulant(G, order), estimate_cumulant(Gs, order)) <= 1e-12);
}

TEST_CASE("multilinearity under scaling") {
  Rng rng = make_rng(24);
  const MatrixXd X = gaussian_samples(5000, 3, rng);
  for (int order = 2; order <= 4; ++order) {
    const CumulantTensor base = estimate_cumulant(X, order);
    for (double c : {2.0, 0.5, -4.0}) {
      const CumulantTensor scaled = estimate_cumulant(c * X, order);
      const double f = std::pow(c, order);
      for (std::size_t i = 0; i < base.canonical_size(); ++i)
        CHECK(scaled.canonical_values()[i] == f * base.canonical_values()[i]);
    }
    const double c = -1.7, f = std::pow(c, order);
    const CumulantTensor scaled = estimate_cumulant(c * X, order);
    for (std::size_t i = 0; i < base.canonical_size(); ++i)
      CHECK(scaled.canonical_values()[i] ==
            doctest::Approx(f * base.canonical_values()[i]).epsilon(1e-12).scale(1e-12));
  }
}

TEST_CASE("independent coordinates have vanishing cross-cumulants") {
  Rng rng = make_rng(25);
  PoissonReduction r;
  r.A = MatrixXd::Identity(3, 3);
  r.w = VectorXd::Constant(3, 1.0 / 3.0);
  r.lambda = 6.0;
  const MatrixXd X = sample_reduction(r, 1000000, rng);
  for (int order = 3; order <= 4; ++order) {
    const CumulantTensor k = estimate_cumulant(X, order);
    const auto& canon = k.canonical_indices();
    for (std::size_t c = 0; c < canon.size(); ++c) {
      if (canon[c].front() == canon[c].back()) continue;
      CHECK(std::abs(k.canonical_values()[c]) <= 5.0 * product_se(X, canon[c]));
    }
  }
}

TEST_CASE("Gaussian noise leaves third and fourth cumulants unchanged") {
  PoissonReduction clean;
  clean.A = (MatrixXd(2, 2) << 1.0, 0.5, -0.3, 1.2).finished();
  clean.w = VectorXd::Constant(2, 0.5);
  clean.lambda = 4.0;
  PoissonReduction noisy = clean;
  noisy.noise_tau = 1.0;
  Rng r1 = make_rng(26, 0), r2 = make_rng(26, 1);
  const MatrixXd X = sample_reduction(clean, 1000000, r1);
  const MatrixXd Z = sample_reduction(noisy, 1000000, r2);
  for (int order = 3; order <= 4; ++order) {
    const CumulantTensor a = estimate_cumulant(X, order), b = estimate_cumulant(Z, order);
    const auto& canon = a.canonical_indices();
    for (std::size_t c = 0; c < canon.size(); ++c) {
      const double se = std::hypot(product_se(X, canon[c]), product_se(Z, canon[c]));
      CHECK(std::abs(a.canonical_values()[c] - b.canonical_values()[c]) <= 5.0 * se);
    }
  }
}

TEST_CASE("sample_reduction moments") {
  SUBCASE("zero mixing and zero noise give zero samples") {
    PoissonReduction r;
    r.A = MatrixXd::Zero(2, 3);
    r.w = VectorXd::Constant(3, 1.0 / 3.0);
    r.lambda = 3.0;
    Rng rng = make_rng(1);
    CHECK(sample_reduction(r, 100, rng).isZero(0.0));
  }
  SUBCASE("mean and covariance") {
    PoissonReduction r;
    r.A = (MatrixXd(2, 3) << 1.0, 0.0, 2.0, -1.0, 1.0, 0.5).finished();
    r.w = (VectorXd(3) << 0.2, 0.5, 0.3).finished();
    r.lambda = 3.0;
    r.noise_tau = 0.7;
    Rng rng = make_rng(27);
    const MatrixXd X = sample_reduction(r, 1000000, rng);
    const VectorXd rate = r.w * r.lambda;
    const VectorXd mean = r.A * rate;
    const MatrixXd cov = r.A * rate.asDiagonal() * r.A.transpose() +
                         r.noise_tau * r.noise_tau * MatrixXd::Identity(2, 2);
    const double N = static_cast<double>(X.rows());
    const Eigen::RowVectorXd m = X.colwise().mean();
    for (int i = 0; i < 2; ++i) CHECK(std::abs(m[i] - mean[i]) <= 5.0 * std::sqrt(cov(i, i) / N));
    const CumulantTensor k2 = estimate_cumulant(X, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const std::array<int, 2> ij{i, j};
        const double se = product_se(X, {i, j});
        CHECK(std::abs(k2(ij) - cov(i, j)) <= 5.0 * se);
      }
  }
  SUBCASE("validation") {
    PoissonReduction r;
    r.A = MatrixXd::Identity(2, 2);
    r.w = VectorXd::Constant(2, 0.5);
    r.lambda = 0.0;
    Rng rng = make_rng(1);
    CHECK_THROWS_AS(sample_reduction(r, 10, rng), std::invalid_argument);
    r.lambda = 1.0;
    r.w[0] = 0.6;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r.w[0] = 0.5;
    r.noise_tau = -1.0;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  }
}

TEST_CASE("khatri_rao_power layout and norms") {
  const MatrixXd e1 = (MatrixXd(2, 1) << 1.0, 0.0).finished();
  const MatrixXd k = khatri_rao_power(e1, 2);
  CHECK(k.rows() == 4);
  CHECK(k(0, 0) == 1.0);
  CHECK(k.col(0).tail(3).isZero(0.0));

  // Entry (i, j, l) of column k is A_ik A_jk A_lk at lexicographic position.
  const MatrixXd A = (MatrixXd(2, 2) << 1.0, 2.0, 3.0, -1.0).finished();
  const MatrixXd k3 = khatri_rao_power(A, 3);
  CHECK(k3(0b011, 0) == 1.0 * 3.0 * 3.0);
  CHECK(k3(0b110, 1) == -1.0 * -1.0 * 2.0);
  CHECK(k3(0b100, 1) == -1.0 * 2.0 * 2.0);

  Rng rng = make_rng(30);
  const MatrixXd R = MatrixXd::NullaryExpr(3, 4, [&] { return std::normal_distribution<double>()(rng); });
  for (int order = 2; order <= 4; ++order) {
    const MatrixXd K = khatri_rao_power(R, order);
    for (int c = 0; c < 4; ++c)
      CHECK(K.col(c).norm() == doctest::Approx(std::pow(R.col(c).norm(), order)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(khatri_rao_power(R, 1), std::invalid_argument);
}

TEST_CASE("khatri_rao_power reproduces the analytic cumulant") {
  Rng rng = make_rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const PoissonReduction r = random_reduction(3, 4, rng);
    for (int order = 3; order <= 4; ++order) {
      const VectorXd lhs = vectorize_tensor(analytic_cumulant(r, order));
      const VectorXd rhs = r.lambda * khatri_rao_power(r.A, order) * r.w;
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("multilinear_kr2 examples and singular value comparison") {
  const MatrixXd e1 = (MatrixXd(3, 1) << 1.0, 0.0, 0.0).finished();
  CHECK(multilinear_kr2(e1).isZero(0.0));
  const MatrixXd ones = MatrixXd::Ones(3, 1);
  const MatrixXd k = multilinear_kr2(ones);
  CHECK(k.rows() == 3);
  CHECK(k == MatrixXd::Ones(3, 1));
  const MatrixXd B = (MatrixXd(3, 1) << 2.0, 3.0, 5.0).finished();
  const MatrixXd kb = multilinear_kr2(B);
  CHECK(kb(0, 0) == 6.0);   // (1,2)
  CHECK(kb(1, 0) == 10.0);  // (1,3)
  CHECK(kb(2, 0) == 15.0);  // (2,3)
  CHECK_THROWS_AS(multilinear_kr2(MatrixXd::Ones(1, 2)), std::invalid_argument);

  Rng rng = make_rng(32);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 100; ++trial) {
    const MatrixXd A = MatrixXd::NullaryExpr(5, 6, [&] { return z(rng); });
    const double s_full = Eigen::JacobiSVD<MatrixXd>(khatri_rao_power(A, 2)).singularValues().tail(1)[0];
    const double s_off = Eigen::JacobiSVD<MatrixXd>(multilinear_kr2(A)).singularValues().tail(1)[0];
    CHECK(s_full >= s_off * (1.0 - 1e-12));
  }
}

TEST_CASE("pseudo-inverse is a left inverse at full column rank") {
  Rng rng = make_rng(33);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd A = MatrixXd::NullaryExpr(4, 4, [&] { return z(rng); });
    for (int order = 3; order <= 4; ++order) {
      const MatrixXd K = khatri_rao_power(A, order);
      const MatrixXd P = pseudo_inverse(K);
      CHECK((P * K - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("simplex projection") {
  const VectorXd in = (VectorXd(3) << 0.2, 0.3, 0.5).finished();
  CHECK((project_to_simplex(in) - in).norm() <= 1e-15);
  const VectorXd neg = (VectorXd(3) << -0.1, 0.4, 0.8).finished();
  const VectorXd p = project_to_simplex(neg);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p[0] == 0.0);
  CHECK(p[1] == doctest::Approx(0.3));
  CHECK(p[2] == doctest::Approx(0.7));
}

TEST_CASE("analytic weight recovery is exact") {
  Rng rng = make_rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const PoissonReduction r = random_reduction(4, 4, rng);
    for (int order = 3; order <= 4; ++order) {
      const WeightEstimate est = recover_weights_from_tensor(analytic_cumulant(r, order), r.A, r.lambda);
      CHECK((est.raw - r.w).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  SUBCASE("single component") {
    PoissonReduction r;
    r.A = (MatrixXd(3, 1) << 0.3, -2.0, 1.1).finished();
    r.w = VectorXd::Ones(1);
    r.lambda = 2.5;
    for (int order = 2; order <= 4; ++order) {
      if (order == 2) r.noise_tau = 0.0;
      const WeightEstimate est = recover_weights_from_tensor(analytic_cumulant(r, order), r.A, r.lambda);
      CHECK(est.raw[0] == doctest::Approx(1.0).epsilon(1e-13));
    }
  }
}

TEST_CASE("rank-deficient mixing is reported") {
  MatrixXd A(2, 3);
  A << 1.0, 0.0, 1.0, 0.0, 1.0, 1.0;
  A.col(2) = A.col(0);
  CumulantTensor k(3, 2);
  CHECK_THROWS_AS(recover_weights_from_tensor(k, A, 1.0), RankDeficient);
  try {
    recover_weights_from_tensor(k, A, 1.0);
  } catch (const RankDeficient& e) {
    CHECK(std::string(e.what()).find("rank deficient") != std::string::npos);
  }
}

TEST_CASE("sampled weight recovery with identity mixing") {
  PoissonReduction r;
  r.A = MatrixXd::Identity(3, 3);
  r.w = (VectorXd(3) << 0.2, 0.3, 0.5).finished();
  r.lambda = 5.0;
  r.noise_tau = 1.0;
  Rng rng = make_rng(35);
  const MatrixXd X = sample_reduction(r, 2000000, rng);
  const WeightEstimate est = recover_weights(X, r.A, r.lambda, 3);
  CHECK((est.raw - r.w).cwiseAbs().maxCoeff() <= 0.05);
  CHECK(est.projected.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((est.projected.array() >= 0.0).all());
}
