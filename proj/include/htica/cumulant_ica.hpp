#pragma once

// Sample cumulant tensors (orders 2-4), Khatri-Rao column powers, and
// recovery of Gaussian mixture weights through the Poisson ICA reduction
// X = A S + eta, S_i ~ Poisson(w_i lambda), whose order-l cumulant is
// lambda * A^{(l)} w for l > 2.

#include "htica/rng.hpp"

#include <Eigen/Dense>
#include "json.hpp"

#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

namespace htica::cumulant {

/// Fully symmetric order-l tensor on R^n. One value per sorted index
/// tuple; reads accept any permutation.
class CumulantTensor {
 public:
  CumulantTensor(int order, Eigen::Index dimension);

  int order() const { return order_; }
  Eigen::Index dimension() const { return dim_; }

  double operator()(std::span<const int> index) const;
  double& at(std::span<const int> index);

  /// Number of distinct entries, C(n + l - 1, l).
  std::size_t canonical_size() const { return values_.size(); }
  /// Sorted index tuples in lexicographic order, matching canonical_values.
  const std::vector<std::vector<int>>& canonical_indices() const { return canon_; }
  std::vector<double>& canonical_values() { return values_; }
  const std::vector<double>& canonical_values() const { return values_; }

 private:
  std::size_t slot(std::span<const int> index) const;

  int order_;
  Eigen::Index dim_;
  std::vector<std::vector<int>> canon_;
  std::vector<double> values_;
  std::vector<std::size_t> full_to_canon_;
};

/// Lexicographic flattening of length n^l (first index most significant).
Eigen::VectorXd vectorize_tensor(const CumulantTensor& t);

/// Inverse of vectorize_tensor; throws unless v is symmetric within
/// 1e-12 * max|v|.
CumulantTensor tensor_from_vector(int order, Eigen::Index dimension, const Eigen::VectorXd& v);

/// samples is count x n, one observation per row. Plug-in central moments:
/// covariance, third central moment, and the fourth cumulant
/// E[xixjxkxl] - E[xixj]E[xkxl] - E[xixk]E[xjxl] - E[xixl]E[xjxk].
CumulantTensor estimate_cumulant(const Eigen::MatrixXd& samples, int order);

/// Column k is vec(A_k (x) ... (x) A_k), l factors.
Eigen::MatrixXd khatri_rao_power(const Eigen::MatrixXd& A, int order);

/// Rows (i, j), i < j, lexicographic; entry (A_k)_i (A_k)_j.
Eigen::MatrixXd multilinear_kr2(const Eigen::MatrixXd& A);

struct PoissonReduction {
  Eigen::MatrixXd A;  // n x m, columns are the component means
  Eigen::VectorXd w;  // m, on the simplex
  double lambda = 1.0;
  double noise_tau = 0.0;

  void validate() const;
};

/// count x n matrix, rows A s + eta.
Eigen::MatrixXd sample_reduction(const PoissonReduction& model, std::size_t count, Rng& rng);

/// Exact cumulant of X: lambda sum_k w_k A_k^{(x) l}, plus tau^2 I at l = 2.
CumulantTensor analytic_cumulant(const PoissonReduction& model, int order);

class RankDeficient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WeightEstimate {
  /// (1/lambda) pinv(A^{(l)}) vec(kappa), unclipped.
  Eigen::VectorXd raw;
  /// Euclidean projection of raw onto the probability simplex.
  Eigen::VectorXd projected;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
};

/// Throws RankDeficient when sigma_min(A^{(l)}) <= 1e-10 sigma_max.
WeightEstimate recover_weights_from_tensor(const CumulantTensor& kappa, const Eigen::MatrixXd& A,
                                           double lambda);
WeightEstimate recover_weights(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& A,
                               double lambda, int order);

/// Moore-Penrose pseudo-inverse with cutoff 1e-10 sigma_max.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& M);

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

/// One observation per line, comma separated, %.17g. A first line that
/// does not parse as numbers is treated as a header.
void write_samples_csv(std::ostream& os, const Eigen::MatrixXd& samples);
Eigen::MatrixXd read_samples_csv(std::istream& is);

/// {"order": l, "shape": [n, ...], "values": [lexicographic flattening]}.
void to_json(nlohmann::json& j, const CumulantTensor& t);
CumulantTensor tensor_from_json(const nlohmann::json& j);

}  // namespace htica::cumulant
