#pragma once

// The centroid body of a finite sample x^(1..N) is the zonotope
// (1/N) * sum_i [-x^(i), x^(i)]. Membership and the Minkowski functional
// reduce to bounded LPs over lambda in [-1,1]^N.

#include "htica/heavy_tail.hpp"
#include "htica/rng.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <variant>
#include <vector>

namespace htica::centroid {

class SampledCentroidBody {
 public:
  /// `points` is n x N, one sample per column. Throws on N == 0 or n == 0.
  explicit SampledCentroidBody(Eigen::MatrixXd points);

  const Eigen::MatrixXd& points() const { return points_; }
  Eigen::Index dimension() const { return points_.rows(); }
  Eigen::Index count() const { return points_.cols(); }

 private:
  Eigen::MatrixXd points_;
};

/// Uniform on [-2, 2]; E|S| = 1.
struct UniformSource {};

using SourceDistribution = std::variant<UniformSource, heavy_tail::HeavyTailSpec>;

struct ICAModelSpec {
  Eigen::MatrixXd mixing;
  std::vector<SourceDistribution> sources;

  /// A square with finite condition number, one normalized source per column.
  void validate() const;

  /// n x count matrix of draws of X = A S.
  Eigen::MatrixXd sample(std::size_t count, Rng& rng) const;

  /// Upper bound on E|X_j|^{1+gamma} over coordinates j, from Minkowski's
  /// inequality on the rows of A.
  double coordinate_moment_bound(double gamma) const;

  static ICAModelSpec identity_uniform(Eigen::Index n);
};

struct OracleParams {
  double epsilon = 0.1;
  double delta = 0.1;
  double s_M = 1.0;
  double s_m = 1.0;
  double gamma = 0.5;
  double M = 2.0;

  void validate() const;
};

double support_function(const SampledCentroidBody& body, const Eigen::VectorXd& direction);

struct MembershipAnswer {
  bool inside = false;
  int lp_iterations = 0;
};

MembershipAnswer membership_detail(const SampledCentroidBody& body, const Eigen::VectorXd& q);

/// Exact LP feasibility of (1/N) sum lambda_i x_i = q, lambda in [-1,1]^N.
bool membership(const SampledCentroidBody& body, const Eigen::VectorXd& q);

/// 1/lambda* of the scaled-membership LP: 0 when the LP is unbounded
/// (q = 0), +inf when lambda* = 0 (q outside the span of the sample).
double minkowski_functional(const SampledCentroidBody& body, const Eigen::VectorXd& q);

/// Feasible lambda in [-1,1]^N reproducing q, or nullopt when q is outside.
std::optional<Eigen::VectorXd> dual_witness(const SampledCentroidBody& body,
                                            const Eigen::VectorXd& q);

struct OracleSampleSize {
  /// Conservative inner radius eps * s_m / (2 n s_M).
  double radius;
  double variance_branch;
  double threshold_branch;
  /// ceil(max(branches)); may be +inf in double.
  double N;
};

OracleSampleSize oracle_sample_size(const OracleParams& params, Eigen::Index n);

struct OracleAnswer {
  bool yes = false;
  double N_formula = 0.0;
  std::size_t N_used = 0;
  int lp_iterations = 0;
};

/// Draws N samples of X = A S and answers YES iff q is in the sampled body.
/// `N_override` replaces the (usually astronomical) formula sample size;
/// without it, a formula N above `max_samples` is rejected.
OracleAnswer weak_membership_oracle(const Eigen::VectorXd& q, const ICAModelSpec& model,
                                    const OracleParams& params, Rng& rng,
                                    std::optional<std::size_t> N_override = {},
                                    std::size_t max_samples = 50'000'000);

/// CCW vertex cycle of a planar sampled body (N <= 20).
std::vector<Eigen::Vector2d> zonotope_polygon_2d(const SampledCentroidBody& body);

/// Point-in-convex-polygon for a CCW cycle; degenerate cycles (point,
/// segment) are handled. `tol` is an absolute slack.
bool polygon_contains(const std::vector<Eigen::Vector2d>& ccw, const Eigen::Vector2d& q,
                      double tol = 1e-12);

/// (8 M n^2 / (eps^2 delta))^{1/2 + 3/gamma}.
double approximation_sample_size(double M, Eigen::Index n, double epsilon, double delta,
                                 double gamma);

/// (16 M n^4 / (eps'^2 delta'))^{1/2 + 3/gamma}. The placement of delta' in
/// the source statement is ambiguous; it is taken as a divisor here.
double innerball_sample_size(double M, Eigen::Index n, double epsilon_prime,
                             double delta_prime, double gamma);

using WitnessFunction = std::function<double(const Eigen::VectorXd&)>;

struct ApproximationResult {
  bool within = false;
  /// Upper bound on dist(p, sampled body).
  double distance_bound = 0.0;
  double N_formula = 0.0;
  std::size_t N_used = 0;
};

/// Draws a sample and certifies dist(p, body) <= epsilon from two upper
/// bounds: the radial gap |p| (1 - 1/phi(p)), and, when a witness
/// lambda: R^n -> [-1,1] is given, |p - (1/N) sum lambda(x_i) x_i|.
ApproximationResult approximation_check(const ICAModelSpec& model, const Eigen::VectorXd& p,
                                        double epsilon, double delta, double gamma, Rng& rng,
                                        std::optional<std::size_t> N_override = {},
                                        const WitnessFunction& witness = {},
                                        std::size_t max_samples = 50'000'000);

}  // namespace htica::centroid
