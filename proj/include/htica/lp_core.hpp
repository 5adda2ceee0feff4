#pragma once

// Dense bounded-variable primal simplex for
//
//   maximize  c^T x   subject to  A x = b,  lower <= x <= upper.
//
// Bounds may be infinite. Rows are equilibrated internally, so scaling a row
// together with its right-hand side never changes the reported status.

#include <Eigen/Dense>

#include <optional>

namespace htica::lp {

class BoundedLP {
 public:
  /// Throws std::invalid_argument on shape mismatch or lower > upper.
  /// An empty objective means "zero objective" (pure feasibility).
  BoundedLP(Eigen::MatrixXd eq_matrix, Eigen::VectorXd eq_rhs, Eigen::VectorXd lower,
            Eigen::VectorXd upper, Eigen::VectorXd objective = {});

  const Eigen::MatrixXd& eq_matrix() const { return eq_matrix_; }
  const Eigen::VectorXd& eq_rhs() const { return eq_rhs_; }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  const Eigen::VectorXd& objective() const { return objective_; }

  Eigen::Index n_constraints() const { return eq_matrix_.rows(); }
  Eigen::Index n_vars() const { return eq_matrix_.cols(); }

 private:
  Eigen::MatrixXd eq_matrix_;
  Eigen::VectorXd eq_rhs_;
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  Eigen::VectorXd objective_;
};

enum class Status { Optimal, Infeasible, Unbounded };

const char* to_string(Status s);

struct LPSolution {
  Status status = Status::Infeasible;
  /// Present for Optimal and Unbounded (last feasible basic point).
  std::optional<Eigen::VectorXd> point;
  /// +inf when Unbounded, -inf when Infeasible.
  double objective_value = 0.0;
  int iterations = 0;
  /// Number of perturbed restarts needed after a singular basis or stall.
  int restarts = 0;
};

struct SolverOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-9;
  double pivot_tol = 1e-9;
  /// Consecutive degenerate pivots before switching from Dantzig to Bland.
  int degenerate_limit = 50;
  int refactor_every = 64;
  /// 0 selects 20 * (rows + vars) + 1000.
  int max_iterations = 0;
  /// Optional crash start: each boxed variable starts at the bound nearer
  /// to hint[j] instead of its lower bound. Ignored on the restart.
  std::optional<Eigen::VectorXd> start_hint;
};

LPSolution solve(const BoundedLP& problem, const SolverOptions& options = {});

/// True iff solve() with the objective zeroed returns Optimal.
bool feasible(const BoundedLP& problem, const SolverOptions& options = {});

}  // namespace htica::lp
