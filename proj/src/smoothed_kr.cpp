#include "htica/smoothed_kr.hpp"

#include "htica/cumulant_ica.hpp"
#include "htica/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace htica::smoothed {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Index pair_count(Index n) { return n * (n - 1) / 2; }

}  // namespace

MatrixXd perturb(const MatrixXd& M, double sigma, Rng& rng) {
  require(sigma > 0.0 && std::isfinite(sigma), "perturb: sigma must be positive");
  std::normal_distribution<double> z(0.0, sigma);
  MatrixXd out = M;
  // Column-major fill keeps the draw order independent of storage layout.
  for (Index c = 0; c < out.cols(); ++c)
    for (Index r = 0; r < out.rows(); ++r) out(r, c) += z(rng);
  return out;
}

double sigma_min(const MatrixXd& B) {
  if (B.size() == 0) return 0.0;
  const Eigen::JacobiSVD<MatrixXd> svd(B);
  return svd.singularValues().minCoeff();
}

ColumnDistance column_distance(const MatrixXd& B, Index k) {
  require(k >= 0 && k < B.cols(), "column_distance: column index out of range");
  const Index r = B.rows(), c = B.cols();
  MatrixXd others(r, c - 1);
  others << B.leftCols(k), B.rightCols(c - 1 - k);
  const VectorXd col = B.col(k);

  ColumnDistance out;
  if (c == 1) {
    out.distance = col.norm();
    if (out.distance > 0.0) out.normal = col / out.distance;
    return out;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(others);
  qr.setThreshold(1e-12);
  require(qr.rank() == c - 1, "column_distance: the other columns are linearly dependent");
  const VectorXd z = qr.householderQ().transpose() * col;
  VectorXd tail = VectorXd::Zero(r);
  tail.tail(r - (c - 1)) = z.tail(r - (c - 1));
  out.distance = tail.norm();
  if (out.distance > 0.0) out.normal = qr.householderQ() * (tail / out.distance);
  return out;
}

double min_column_distance(const MatrixXd& B) {
  double best = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < B.cols(); ++k) best = std::min(best, column_distance(B, k).distance);
  return best;
}

PolynomialCheck polynomial_check(const MatrixXd& M, const MatrixXd& N, Index k, const VectorXd& u) {
  const Index n = M.rows();
  require(N.rows() == n && N.cols() == M.cols(), "polynomial_check: M and N differ in shape");
  require(k >= 0 && k < M.cols(), "polynomial_check: column index out of range");
  require(u.size() == pair_count(n), "polynomial_check: u must have C(n,2) entries");
  PolynomialCheck out;
  Index p = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j, ++p) {
      out.pure_m += u[p] * M(i, k) * M(j, k);
      out.cross_mn += u[p] * M(i, k) * N(j, k);
      out.cross_nm += u[p] * N(i, k) * M(j, k);
      out.pure_n += u[p] * N(i, k) * N(j, k);
    }
  }
  const MatrixXd sum = M + N;
  out.lhs = u.dot(cumulant::multilinear_kr2(sum.col(k)).col(0));
  out.rhs = out.pure_m + out.cross_mn + out.cross_nm + out.pure_n;
  out.match = std::abs(out.lhs - out.rhs) <= 1e-10 * std::max(1.0, std::abs(out.lhs));
  return out;
}

VarianceCheck variance_lower_bound_check(const VectorXd& u, const VectorXd& m_col, double sigma) {
  const Index n = m_col.size();
  require(n >= 2 && u.size() == pair_count(n), "variance_lower_bound_check: u must have C(n,2) entries");
  require(sigma > 0.0, "variance_lower_bound_check: sigma must be positive");
  // Linear coefficient of N_i: sum over pairs containing i of u_ij m_j.
  VectorXd a = VectorXd::Zero(n);
  Index p = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j, ++p) {
      a[i] += u[p] * m_col[j];
      a[j] += u[p] * m_col[i];
    }
  const double s2 = sigma * sigma;
  VarianceCheck out;
  out.bound_sigma4 = s2 * s2 * u.squaredNorm();
  out.analytic_variance = s2 * a.squaredNorm() + out.bound_sigma4;
  out.holds = out.analytic_variance >= out.bound_sigma4;
  return out;
}

VarianceCheck variance_lower_bound_check(const VectorXd& u, const VectorXd& m_col, double sigma,
                                         std::size_t draws, Rng& rng) {
  VarianceCheck out = variance_lower_bound_check(u, m_col, sigma);
  require(draws >= 2, "variance_lower_bound_check: need at least two draws");
  const Index n = m_col.size();
  std::normal_distribution<double> z(0.0, sigma);
  VectorXd x(n);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    for (Index i = 0; i < n; ++i) x[i] = m_col[i] + z(rng);
    double v = 0.0;
    Index p = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j, ++p) v += u[p] * x[i] * x[j];
    const double delta = v - mean;
    mean += delta / static_cast<double>(d + 1);
    m2 += delta * (v - mean);
  }
  out.monte_carlo_variance = m2 / static_cast<double>(draws - 1);
  return out;
}

double SmoothedExperiment::threshold() const {
  return sigma * sigma / std::pow(static_cast<double>(n()), 7.0);
}

void SmoothedExperiment::validate() const {
  require(n() >= 2, "smoothed experiment: n must be at least 2");
  require(base.cols() == pair_count(n()),
          "smoothed experiment: base matrix must have C(n,2) = " + std::to_string(pair_count(n())) +
              " columns, got " + std::to_string(base.cols()));
  require(base.allFinite(), "smoothed experiment: base matrix has non-finite entries");
  require(sigma > 0.0 && std::isfinite(sigma), "smoothed experiment: sigma must be positive");
  require(trials >= 1, "smoothed experiment: trials must be at least 1");
}

MatrixXd SmoothedExperiment::zero_base(int n) {
  require(n >= 2, "zero_base: n must be at least 2");
  return MatrixXd::Zero(n, pair_count(n));
}

MatrixXd SmoothedExperiment::collinear_base(int n) {
  require(n >= 2, "collinear_base: n must be at least 2");
  return MatrixXd::Ones(n, pair_count(n));
}

MatrixXd SmoothedExperiment::base_from_csv(std::istream& is) { return cumulant::read_samples_csv(is); }

SmoothedSummary smoothed_experiment(const SmoothedExperiment& exp, std::uint64_t seed,
                                    unsigned threads) {
  exp.validate();
  const double thr = exp.threshold();
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(exp.trials));

  parallel_for(outcomes.size(), threads, [&](std::size_t t) {
    TrialOutcome& o = outcomes[t];
    o.seed = derive_seed(seed, t);
    Rng rng(o.seed);
    const MatrixXd A = perturb(exp.base, exp.sigma, rng);
    const MatrixXd B = cumulant::multilinear_kr2(A);
    const Index m = B.cols();
    o.sigma_min = sigma_min(B);
    o.below_threshold = o.sigma_min <= thr;
    o.full_rank = o.sigma_min > 1e-12;
    if (!o.full_rank) {
      o.sandwich_holds = false;
      o.polynomial_holds = false;
      return;
    }
    const Index probe = static_cast<Index>(t % static_cast<std::size_t>(m));
    o.min_column_distance = std::numeric_limits<double>::infinity();
    VectorXd probe_normal;
    for (Index k = 0; k < m; ++k) {
      const ColumnDistance cd = column_distance(B, k);
      o.min_column_distance = std::min(o.min_column_distance, cd.distance);
      if (k == probe) probe_normal = cd.normal;
    }
    const double bound = o.min_column_distance / std::sqrt(static_cast<double>(m));
    o.sandwich_holds = o.sigma_min >= bound - 1e-9 * std::max(1.0, bound);
    if (probe_normal.size() == 0) {
      o.polynomial_holds = false;
      return;
    }
    const PolynomialCheck pc = polynomial_check(exp.base, A - exp.base, probe, probe_normal);
    o.polynomial_residual = std::abs(pc.lhs - pc.rhs);
    o.polynomial_holds = pc.match;
  });

  SmoothedSummary s;
  s.n = static_cast<int>(exp.n());
  s.sigma = exp.sigma;
  s.trials = exp.trials;
  s.threshold = thr;
  std::vector<double> mins;
  int below = 0;
  for (const auto& o : outcomes) {
    mins.push_back(o.sigma_min);
    below += o.below_threshold;
    s.rank_failures += !o.full_rank;
    s.sandwich_failures += !o.sandwich_holds;
    s.polynomial_failures += !o.polynomial_holds;
  }
  s.fraction_below = static_cast<double>(below) / static_cast<double>(exp.trials);
  std::sort(mins.begin(), mins.end());
  for (double p : {0.0, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0}) {
    const double pos = p * static_cast<double>(mins.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, mins.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    s.sigma_min_quantiles.emplace_back(p, mins[lo] + frac * (mins[hi] - mins[lo]));
  }
  s.outcomes = std::move(outcomes);
  return s;
}

void to_json(nlohmann::json& j, const SmoothedSummary& s) {
  nlohmann::json q = nlohmann::json::array();
  for (const auto& [p, v] : s.sigma_min_quantiles) q.push_back({{"p", p}, {"value", v}});
  j = nlohmann::json{{"n", s.n},
                     {"sigma", s.sigma},
                     {"trials", s.trials},
                     {"threshold", s.threshold},
                     {"fraction_below", s.fraction_below},
                     {"sigma_min_quantiles", q},
                     {"rank_failures", s.rank_failures},
                     {"sandwich_failures", s.sandwich_failures},
                     {"polynomial_failures", s.polynomial_failures}};
}

}  // namespace htica::smoothed
