#pragma once

// Pairs of unit-covariance Gaussian mixtures on disjoint mean sets that are
// nearly indistinguishable: interpolate a smooth f with Gaussian kernels on
// two interleaved node sets, subtract, and split the difference by sign.

#include "htica/rng.hpp"

#include <Eigen/Dense>
#include "json.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace htica::gmm {

/// n x k, one point per column.
using PointCloud = Eigen::MatrixXd;

/// (2 pi)^{-n/2} exp(-|x - z|^2 / 2).
double gaussian_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& z);

/// Kernel smoothing of the indicator of [0,1]^n:
/// prod_i (Phi(1 - x_i) - Phi(-x_i)).
double target_f(const Eigen::VectorXd& x);

struct SignedGaussianCombination {
  Eigen::MatrixXd means;          // n x m
  Eigen::VectorXd coefficients;   // m, any sign, none zero

  Eigen::Index dimension() const { return means.rows(); }
  Eigen::Index size() const { return means.cols(); }
  double operator()(const Eigen::VectorXd& x) const;
  /// Throws unless means are pairwise distinct and coefficients nonzero.
  void validate() const;
};

struct GaussianMixture {
  Eigen::MatrixXd means;  // n x m
  Eigen::VectorXd weights;

  Eigen::Index dimension() const { return means.rows(); }
  Eigen::Index size() const { return means.cols(); }
  double operator()(const Eigen::VectorXd& x) const;
  /// Positive weights summing to 1 within 1e-12, distinct means.
  void validate() const;
  SignedGaussianCombination as_signed() const { return {means, weights}; }
};

void to_json(nlohmann::json& j, const GaussianMixture& m);
void from_json(const nlohmann::json& j, GaussianMixture& m);

enum class SolvePrecision { Double, Extended };

struct InterpolationOptions {
  /// Extended runs the eigendecomposition, node values and solve with
  /// 100 decimal digits; kernel matrices here reach condition ~1e50.
  SolvePrecision precision = SolvePrecision::Extended;
  /// Relative eigenvalue cutoff; negative selects 1e-14 (double) or
  /// 1e-80 (extended).
  double relative_cutoff = -1.0;
};

struct InterpolationResult {
  PointCloud nodes;
  Eigen::VectorXd coefficients;
  /// lambda_max / lambda_min of K_X (inf if not positive definite).
  double condition_number = 0.0;
  double max_node_residual = 0.0;
  int discarded_eigenvalues = 0;
  /// More than half the spectrum fell below the cutoff.
  bool cutoff_dominated = false;
  /// Sum of coefficients, accumulated at solve precision.
  double coefficient_sum = 0.0;

  double operator()(const Eigen::VectorXd& x) const;
  SignedGaussianCombination as_signed() const;
};

/// Solves K_X w = f(X) by symmetric eigendecomposition with a relative
/// spectral cutoff. Throws std::invalid_argument on duplicate nodes.
InterpolationResult interpolate(const PointCloud& X, const InterpolationOptions& opt = {});

/// Max over the regular grid of spacing 1/resolution on [0,1]^n of the
/// distance to X, plus the cell correction sqrt(n) / (2 resolution).
double fill(const PointCloud& X, int grid_resolution = 1000);

/// Per axis t_j = j / (2k - 1), j = 0 .. 2k-1; the (2k)^n grid is split by
/// parity of the index sum into (even, odd).
std::pair<PointCloud, PointCloud> interleaved_grids(int k, int n);

PointCloud uniform_points(Eigen::Index count, int n, Rng& rng);

enum class L1Method { Auto, Quadrature, MonteCarlo };

struct L1Options {
  L1Method method = L1Method::Auto;
  double tolerance = 1e-13;  // adaptive Simpson, n = 1
  /// Panels per axis for the n = 2 tensor Gauss-Legendre rule; it is also
  /// run at twice this and Richardson-extrapolated.
  int gl_panels = 64;
  std::uint64_t mc_samples = 200000;
  std::uint64_t mc_seed = 0;
};

struct L1Estimate {
  double value = 0.0;
  /// Quadrature: analytic bound on the mass outside the integration box,
  /// plus the coarse/fine panel difference for n = 2. Monte Carlo: the
  /// standard error.
  double error_bound = 0.0;
  L1Method method = L1Method::Quadrature;
};

/// Quadrature for n <= 2 on [min mean - 10, max mean + 10]^n; importance
/// sampling from the normalized |coefficient| mixture otherwise.
L1Estimate l1_distance(const SignedGaussianCombination& a, const SignedGaussianCombination& b,
                       const L1Options& opt = {});
L1Estimate l1_distance(const GaussianMixture& p, const GaussianMixture& q,
                       const L1Options& opt = {});

class DegenerateSplit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfusableOptions {
  InterpolationOptions interpolation;
  L1Options l1;
  bool compute_l1 = true;
};

struct ConfusablePair {
  GaussianMixture p;
  GaussianMixture q;
  double alpha = 0.0;
  double beta = 0.0;
  /// alpha - beta at solve precision.
  double alpha_minus_beta = 0.0;
  double ratio_gap = 0.0;  // |1 - beta / alpha|
  /// L1(p, q), when computed.
  std::optional<double> l1;
  /// |f_X - f_Y|_1 = |p_1 - p_2|_1, when computed.
  std::optional<double> l1_unnormalized;
  InterpolationResult fx;
  InterpolationResult fy;
  /// f_X - f_Y with shared means merged and zero terms dropped.
  SignedGaussianCombination difference;
};

/// Throws DegenerateSplit when f_X - f_Y has no positive or no negative
/// coefficient.
ConfusablePair confusable_pair(const PointCloud& X, const PointCloud& Y,
                               const ConfusableOptions& opt = {});

struct PigeonholeResult {
  GaussianMixture p;
  GaussianMixture q;
  /// Fill of each of the 4k groups of k nodes.
  std::vector<double> group_fill;
  /// Group-pair indices used (one entry if a single pair already balanced).
  std::vector<int> pairs_used;
  /// L1 of each pair used, in order, and of the final (p, q), when computed.
  std::vector<double> pair_l1;
  std::optional<double> l1;
};

/// 4k^2 uniform points in [0,1]^n, 4k groups of k, group pairs (2g, 2g+1).
/// Returns a pair with equal component counts, combining two pairs with
/// equal count difference when needed.
PigeonholeResult pigeonhole_construction(int k, int n, Rng& rng,
                                         const ConfusableOptions& opt = {});

enum class NodeScheme { InterleavedGrid, UniformRandom };

struct SweepRow {
  int k = 0;
  double h = 0.0;
  double sup_error = 0.0;
  double condition_number = 0.0;
  double max_node_residual = 0.0;
};

/// For each k, interpolates target_f on the even half of the interleaved
/// grid (or as many uniform points) and measures the sup error on a 10^4
/// point probe grid over [-0.5, 1.5]^n. n must be 1 or 2.
std::vector<SweepRow> interpolation_error_sweep(const std::vector<int>& k_list, int n,
                                                NodeScheme scheme, Rng& rng,
                                                const InterpolationOptions& opt = {});

}  // namespace htica::gmm
