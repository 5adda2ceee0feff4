#pragma once

// Smallest singular value of the off-diagonal Khatri-Rao square
// (M + N)^{(-)2} of a Gaussian-perturbed n x C(n,2) base matrix, measured
// against sigma^2 / n^7.

#include "htica/rng.hpp"

#include <Eigen/Dense>
#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace htica::smoothed {

/// M + N with N_ij iid N(0, sigma^2).
Eigen::MatrixXd perturb(const Eigen::MatrixXd& M, double sigma, Rng& rng);

/// Smallest of the min(rows, cols) singular values (full SVD).
double sigma_min(const Eigen::MatrixXd& B);

struct ColumnDistance {
  double distance = 0.0;
  /// Unit vector orthogonal to the other columns with u^T C_k = distance;
  /// empty when C_k lies in their span.
  Eigen::VectorXd normal;
};

/// Distance of column k from the span of the remaining columns, by the
/// residual of an orthogonal projection. Throws std::invalid_argument if
/// the remaining columns are linearly dependent.
ColumnDistance column_distance(const Eigen::MatrixXd& B, Eigen::Index k);

/// min over k of column_distance(B, k).distance.
double min_column_distance(const Eigen::MatrixXd& B);

struct PolynomialCheck {
  double pure_m = 0.0;   // sum u_ij M_ik M_jk
  double cross_mn = 0.0; // sum u_ij M_ik N_jk
  double cross_nm = 0.0; // sum u_ij N_ik M_jk
  double pure_n = 0.0;   // sum u_ij N_ik N_jk
  double lhs = 0.0;      // u^T ((M + N)^{(-)2})_k
  double rhs = 0.0;      // sum of the four terms
  bool match = false;    // |lhs - rhs| <= 1e-10 max(1, |lhs|)
};

/// u is indexed by pairs i < j in lexicographic order, length C(n,2).
PolynomialCheck polynomial_check(const Eigen::MatrixXd& M, const Eigen::MatrixXd& N, Eigen::Index k,
                                 const Eigen::VectorXd& u);

struct VarianceCheck {
  /// sigma^2 sum_i (sum_{j != i} u_ij m_j)^2 + sigma^4 sum_{i<j} u_ij^2.
  double analytic_variance = 0.0;
  /// sigma^4 sum u_ij^2 (= sigma^4 for unit u).
  double bound_sigma4 = 0.0;
  bool holds = false;
  std::optional<double> monte_carlo_variance;
};

/// Variance of sum_{i<j} u_ij (m_i + N_i)(m_j + N_j), N_i ~ N(0, sigma^2).
VarianceCheck variance_lower_bound_check(const Eigen::VectorXd& u, const Eigen::VectorXd& m_col,
                                         double sigma);
/// As above, plus the sample variance over `draws` perturbations.
VarianceCheck variance_lower_bound_check(const Eigen::VectorXd& u, const Eigen::VectorXd& m_col,
                                         double sigma, std::size_t draws, Rng& rng);

struct SmoothedExperiment {
  Eigen::MatrixXd base;  // n x C(n,2)
  double sigma = 1.0;
  int trials = 100;

  Eigen::Index n() const { return base.rows(); }
  double threshold() const;  // sigma^2 / n^7
  void validate() const;

  static Eigen::MatrixXd zero_base(int n);
  /// Every column equal to the all-ones vector.
  static Eigen::MatrixXd collinear_base(int n);
  /// Comma-separated rows; a non-numeric first line is skipped.
  static Eigen::MatrixXd base_from_csv(std::istream& is);
};

struct TrialOutcome {
  std::uint64_t seed = 0;
  double sigma_min = 0.0;
  double min_column_distance = 0.0;
  bool below_threshold = false;
  bool full_rank = true;
  /// sigma_min >= min_column_distance / sqrt(#cols) - 1e-9.
  bool sandwich_holds = true;
  /// |lhs - rhs| of polynomial_check at column trial % #cols with u the
  /// normal from column_distance.
  double polynomial_residual = 0.0;
  bool polynomial_holds = true;
};

struct SmoothedSummary {
  int n = 0;
  double sigma = 0.0;
  int trials = 0;
  double threshold = 0.0;
  double fraction_below = 0.0;
  /// At probabilities {0, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 1}.
  std::vector<std::pair<double, double>> sigma_min_quantiles;
  int rank_failures = 0;
  int sandwich_failures = 0;
  int polynomial_failures = 0;
  std::vector<TrialOutcome> outcomes;
};

/// Trial t uses make_rng(seed, t); results do not depend on `threads`.
SmoothedSummary smoothed_experiment(const SmoothedExperiment& exp, std::uint64_t seed,
                                    unsigned threads = 1);

/// {n, sigma, trials, threshold, fraction_below, sigma_min_quantiles, ...};
/// per-trial outcomes are left out.
void to_json(nlohmann::json& j, const SmoothedSummary& s);

}  // namespace htica::smoothed
