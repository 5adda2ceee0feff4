#include "htica/lp_core.hpp"

#include "htica/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace htica::lp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

BoundedLP::BoundedLP(MatrixXd eq_matrix, VectorXd eq_rhs, VectorXd lower, VectorXd upper,
                     VectorXd objective)
    : eq_matrix_(std::move(eq_matrix)),
      eq_rhs_(std::move(eq_rhs)),
      lower_(std::move(lower)),
      upper_(std::move(upper)),
      objective_(std::move(objective)) {
  const Index n = eq_matrix_.cols();
  if (eq_rhs_.size() != eq_matrix_.rows()) {
    throw std::invalid_argument("BoundedLP: eq_rhs has " + std::to_string(eq_rhs_.size()) +
                                " entries but eq_matrix has " +
                                std::to_string(eq_matrix_.rows()) + " rows");
  }
  if (lower_.size() != n || upper_.size() != n) {
    throw std::invalid_argument("BoundedLP: bound vectors must have one entry per column");
  }
  if (objective_.size() == 0) objective_ = VectorXd::Zero(n);
  if (objective_.size() != n) {
    throw std::invalid_argument("BoundedLP: objective must have one entry per column");
  }
  for (Index j = 0; j < n; ++j) {
    if (std::isnan(lower_[j]) || std::isnan(upper_[j]) || lower_[j] > upper_[j]) {
      throw std::invalid_argument("BoundedLP: lower > upper for variable " + std::to_string(j));
    }
  }
  if (!eq_matrix_.allFinite() || !eq_rhs_.allFinite() || !objective_.allFinite()) {
    throw std::invalid_argument("BoundedLP: non-finite coefficient");
  }
}

const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "Optimal";
    case Status::Infeasible: return "Infeasible";
    case Status::Unbounded: return "Unbounded";
  }
  return "?";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarState : std::uint8_t { Basic, AtLower, AtUpper, AtZero };

struct SingularBasis {};
struct IterationLimit {};

struct Outcome {
  Status status;
  VectorXd point;
  int iterations;
};

class Simplex {
 public:
  Simplex(const BoundedLP& problem, const SolverOptions& opt, bool bland_only, double relax)
      : opt_(opt), bland_only_(bland_only), bland_(bland_only) {
    const MatrixXd& A = problem.eq_matrix();
    const VectorXd& b = problem.eq_rhs();
    ns_ = A.cols();

    // Equilibrate rows; drop 0 = 0 rows, flag 0 = b rows.
    std::vector<Index> kept;
    std::vector<double> scale;
    for (Index i = 0; i < A.rows(); ++i) {
      const double amax = A.row(i).cwiseAbs().maxCoeff();
      const double s = std::max(amax, std::abs(b[i]));
      if (s == 0.0) continue;
      if (amax == 0.0) trivially_infeasible_ = true;
      kept.push_back(i);
      scale.push_back(s);
    }
    m_ = static_cast<Index>(kept.size());
    nt_ = ns_ + m_;

    A_ = MatrixXd::Zero(m_, nt_);
    b_.resize(m_);
    for (Index r = 0; r < m_; ++r) {
      A_.row(r).head(ns_) = A.row(kept[r]) / scale[r];
      b_[r] = b[kept[r]] / scale[r];
    }

    lo_.resize(nt_);
    up_.resize(nt_);
    lo_.head(ns_) = problem.lower();
    up_.head(ns_) = problem.upper();
    if (relax > 0.0) {
      for (Index j = 0; j < ns_; ++j) {
        const double d = relax * (1.0 + static_cast<double>(j % 7));
        if (std::isfinite(lo_[j])) lo_[j] -= d;
        if (std::isfinite(up_[j])) up_[j] += d;
      }
    }
    lo_.tail(m_).setZero();
    up_.tail(m_).setConstant(kInf);

    max_iter_ = opt.max_iterations > 0 ? opt.max_iterations
                                        : static_cast<int>(20 * (m_ + ns_) + 1000);
  }

  Outcome run(const VectorXd& objective) {
    if (trivially_infeasible_) return {Status::Infeasible, {}, 0};

    x_ = VectorXd::Zero(nt_);
    state_.assign(static_cast<std::size_t>(nt_), VarState::AtLower);
    for (Index j = 0; j < ns_; ++j) {
      const bool prefer_upper = opt_.start_hint && std::isfinite(up_[j]) &&
                                (!std::isfinite(lo_[j]) ||
                                 (*opt_.start_hint)[j] > 0.5 * (lo_[j] + up_[j]));
      if (prefer_upper) {
        x_[j] = up_[j];
        state_[j] = VarState::AtUpper;
      } else if (std::isfinite(lo_[j])) {
        x_[j] = lo_[j];
        state_[j] = VarState::AtLower;
      } else if (std::isfinite(up_[j])) {
        x_[j] = up_[j];
        state_[j] = VarState::AtUpper;
      } else {
        x_[j] = 0.0;
        state_[j] = VarState::AtZero;
      }
    }
    const VectorXd residual = b_ - A_.leftCols(ns_) * x_.head(ns_);
    head_.resize(static_cast<std::size_t>(m_));
    for (Index r = 0; r < m_; ++r) {
      const Index a = ns_ + r;
      A_(r, a) = residual[r] >= 0.0 ? 1.0 : -1.0;
      x_[a] = std::abs(residual[r]);
      state_[a] = VarState::Basic;
      head_[r] = a;
    }
    refactor();

    // Phase 1: drive the artificial variables to zero.
    VectorXd cost = VectorXd::Zero(nt_);
    cost.tail(m_).setConstant(-1.0);
    iterate(cost, /*phase_one=*/true);
    if (m_ > 0 && x_.tail(m_).maxCoeff() > opt_.feas_tol) {
      return {Status::Infeasible, {}, iterations_};
    }
    expel_artificials();

    // Phase 2 on the original objective; artificials are frozen at zero.
    for (Index a = ns_; a < nt_; ++a) {
      up_[a] = 0.0;
      if (state_[a] != VarState::Basic) {
        state_[a] = VarState::AtLower;
        x_[a] = 0.0;
      }
    }
    refactor();
    cost.setZero();
    cost.head(ns_) = objective;
    const bool bounded = iterate(cost, /*phase_one=*/false);
    return {bounded ? Status::Optimal : Status::Unbounded, x_.head(ns_), iterations_};
  }

 private:
  void refactor() {
    since_refactor_ = 0;
    if (m_ == 0) {
      Binv_.resize(0, 0);
      return;
    }
    MatrixXd B(m_, m_);
    for (Index r = 0; r < m_; ++r) B.col(r) = A_.col(head_[r]);
    Eigen::FullPivLU<MatrixXd> lu(B);
    if (!lu.isInvertible()) throw SingularBasis{};
    Binv_ = lu.inverse();
    const double cond = B.cwiseAbs().rowwise().sum().maxCoeff() *
                        Binv_.cwiseAbs().rowwise().sum().maxCoeff();
    if (!std::isfinite(cond) || cond > 1e13) throw SingularBasis{};

    VectorXd rhs = b_;
    for (Index j = 0; j < nt_; ++j) {
      if (state_[j] != VarState::Basic && x_[j] != 0.0) rhs -= A_.col(j) * x_[j];
    }
    const VectorXd xb = Binv_ * rhs;
    for (Index r = 0; r < m_; ++r) x_[head_[r]] = xb[r];
  }

  // Returns false when the objective is unbounded along an improving ray.
  bool iterate(const VectorXd& cost, bool phase_one) {
    int degenerate = 0;
    bland_ = bland_only_;
    VectorXd cb(m_);
    for (;;) {
      if (iterations_ >= max_iter_) throw IterationLimit{};
      if (since_refactor_ >= opt_.refactor_every) refactor();

      for (Index r = 0; r < m_; ++r) cb[r] = cost[head_[r]];
      const VectorXd y = Binv_.transpose() * cb;
      const VectorXd d = cost - A_.transpose() * y;

      Index enter = -1;
      double best = 0.0;
      for (Index j = 0; j < nt_; ++j) {
        const VarState s = state_[j];
        if (s == VarState::Basic || lo_[j] == up_[j]) continue;
        const bool up_ok = (s == VarState::AtLower || s == VarState::AtZero) && d[j] > opt_.opt_tol;
        const bool down_ok =
            (s == VarState::AtUpper || s == VarState::AtZero) && d[j] < -opt_.opt_tol;
        if (!up_ok && !down_ok) continue;
        if (bland_) {
          enter = j;
          break;
        }
        if (std::abs(d[j]) > best) {
          best = std::abs(d[j]);
          enter = j;
        }
      }
      if (enter < 0) return true;

      const double dir = d[enter] > 0.0 ? 1.0 : -1.0;
      const VectorXd alpha = Binv_ * A_.col(enter);

      double theta = dir > 0.0 ? up_[enter] - x_[enter] : x_[enter] - lo_[enter];
      if (!std::isfinite(theta)) theta = kInf;
      Index leave = -1;
      bool leave_to_lower = false;
      constexpr double tie = 1e-12;
      for (Index r = 0; r < m_; ++r) {
        if (std::abs(alpha[r]) <= opt_.pivot_tol) continue;
        const Index v = head_[r];
        const double rate = -dir * alpha[r];
        double lim;
        bool to_lower;
        if (rate < 0.0) {
          if (!std::isfinite(lo_[v])) continue;
          lim = (x_[v] - lo_[v]) / -rate;
          to_lower = true;
        } else {
          if (!std::isfinite(up_[v])) continue;
          lim = (up_[v] - x_[v]) / rate;
          to_lower = false;
        }
        lim = std::max(lim, 0.0);
        bool take = lim < theta - tie;
        if (!take && leave >= 0 && lim <= theta + tie) {
          take = bland_ ? v < head_[leave] : std::abs(alpha[r]) > std::abs(alpha[leave]);
        }
        if (take) {
          theta = std::min(theta, lim);
          leave = r;
          leave_to_lower = to_lower;
        }
      }

      if (!std::isfinite(theta)) {
        if (phase_one) throw SingularBasis{};
        return false;
      }

      ++iterations_;
      ++since_refactor_;
      x_[enter] += dir * theta;
      for (Index r = 0; r < m_; ++r) x_[head_[r]] -= dir * theta * alpha[r];

      if (leave < 0) {
        // Bound flip, basis unchanged.
        state_[enter] = dir > 0.0 ? VarState::AtUpper : VarState::AtLower;
        x_[enter] = dir > 0.0 ? up_[enter] : lo_[enter];
      } else {
        const Index v = head_[leave];
        state_[v] = leave_to_lower ? VarState::AtLower : VarState::AtUpper;
        x_[v] = leave_to_lower ? lo_[v] : up_[v];
        pivot(leave, enter, alpha);
      }

      if (theta <= tie) {
        if (++degenerate > opt_.degenerate_limit) bland_ = true;
      } else {
        degenerate = 0;
        bland_ = bland_only_;
      }
    }
  }

  void pivot(Index row, Index enter, const VectorXd& alpha) {
    head_[row] = enter;
    state_[enter] = VarState::Basic;
    Binv_.row(row) /= alpha[row];
    for (Index i = 0; i < m_; ++i) {
      if (i != row && alpha[i] != 0.0) Binv_.row(i) -= alpha[i] * Binv_.row(row);
    }
  }

  // After phase 1, swap zero-valued basic artificials for structural columns
  // where possible. Rows where no swap exists are redundant.
  void expel_artificials() {
    for (Index r = 0; r < m_; ++r) {
      if (head_[r] < ns_) continue;
      const Eigen::RowVectorXd row = Binv_.row(r) * A_.leftCols(ns_);
      Index best = -1;
      double mag = 1e-7;
      for (Index j = 0; j < ns_; ++j) {
        if (state_[j] == VarState::Basic) continue;
        if (std::abs(row[j]) > mag) {
          mag = std::abs(row[j]);
          best = j;
        }
      }
      if (best < 0) continue;
      const Index a = head_[r];
      const VectorXd alpha = Binv_ * A_.col(best);
      state_[a] = VarState::AtLower;
      x_[a] = 0.0;
      pivot(r, best, alpha);
    }
    refactor();
  }

  SolverOptions opt_;
  bool bland_only_;
  bool bland_;
  bool trivially_infeasible_ = false;
  Index ns_ = 0;
  Index m_ = 0;
  Index nt_ = 0;
  MatrixXd A_;
  VectorXd b_;
  VectorXd lo_;
  VectorXd up_;
  VectorXd x_;
  std::vector<VarState> state_;
  std::vector<Index> head_;
  MatrixXd Binv_;
  int iterations_ = 0;
  int since_refactor_ = 0;
  int max_iter_ = 0;
};

// Checks the candidate against the original (unscaled, unrelaxed) problem
// and clips entries that sit within tolerance of a bound.
bool certify(const BoundedLP& p, VectorXd& x, const SolverOptions& opt) {
  for (Index j = 0; j < x.size(); ++j) {
    if (x[j] < p.lower()[j]) {
      if (x[j] < p.lower()[j] - opt.feas_tol) return false;
      x[j] = p.lower()[j];
    }
    if (x[j] > p.upper()[j]) {
      if (x[j] > p.upper()[j] + opt.feas_tol) return false;
      x[j] = p.upper()[j];
    }
  }
  const VectorXd res = p.eq_matrix() * x - p.eq_rhs();
  for (Index i = 0; i < res.size(); ++i) {
    const double scale = std::max(
        {1.0, std::abs(p.eq_rhs()[i]), p.eq_matrix().row(i).cwiseAbs().maxCoeff()});
    if (std::abs(res[i]) > opt.feas_tol * scale) return false;
  }
  return true;
}

}  // namespace

LPSolution solve(const BoundedLP& problem, const SolverOptions& options) {
  if (options.start_hint && options.start_hint->size() != problem.n_vars()) {
    throw std::invalid_argument("solve: start_hint must have one entry per variable");
  }
  LPSolution out;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const bool restart = attempt > 0;
    SolverOptions opt = options;
    if (restart) opt.refactor_every = std::min(opt.refactor_every, 8);
    if (restart) opt.start_hint.reset();
    try {
      Simplex simplex(problem, opt, /*bland_only=*/restart, restart ? 1e-12 : 0.0);
      Outcome o = simplex.run(problem.objective());
      out.iterations += o.iterations;
      out.restarts = attempt;
      out.status = o.status;
      if (o.status == Status::Infeasible) {
        out.point.reset();
        out.objective_value = -std::numeric_limits<double>::infinity();
        return out;
      }
      if (!certify(problem, o.point, options)) continue;
      out.objective_value = o.status == Status::Unbounded
                                ? std::numeric_limits<double>::infinity()
                                : problem.objective().dot(o.point);
      out.point = std::move(o.point);
      return out;
    } catch (const SingularBasis&) {
      continue;
    } catch (const IterationLimit&) {
      continue;
    }
  }
  throw NumericalError("lp::solve: no certified answer after perturbed restart");
}

bool feasible(const BoundedLP& problem, const SolverOptions& options) {
  const BoundedLP zero(problem.eq_matrix(), problem.eq_rhs(), problem.lower(), problem.upper(),
                       Eigen::VectorXd::Zero(problem.n_vars()));
  return solve(zero, options).status == Status::Optimal;
}

}  // namespace htica::lp
