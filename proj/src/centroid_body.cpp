#include "htica/centroid_body.hpp"

#include "htica/lp_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace htica::centroid {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_query(const SampledCentroidBody& body, const VectorXd& q) {
  require(q.size() == body.dimension(), "query has dimension " + std::to_string(q.size()) +
                                            ", body has dimension " +
                                            std::to_string(body.dimension()));
}

MatrixXd scaled_generators(const SampledCentroidBody& body) {
  return body.points() / static_cast<double>(body.count());
}

// Start the simplex at the vertex of the zonotope extreme in direction q;
// from there few columns have to move.
lp::SolverOptions crash_towards(const SampledCentroidBody& body, const VectorXd& q,
                                Index extra = 0) {
  lp::SolverOptions opt;
  VectorXd hint = VectorXd::Zero(body.count() + extra);
  hint.head(body.count()) = (body.points().transpose() * q).cwiseSign();
  opt.start_hint = std::move(hint);
  return opt;
}

double cross(const Vector2d& a, const Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

double draw_source(const SourceDistribution& src, Rng& rng) {
  if (std::holds_alternative<UniformSource>(src)) {
    return std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
  }
  const auto& spec = std::get<heavy_tail::HeavyTailSpec>(src);
  const double u = 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double mag = spec.scale * std::pow(u, -1.0 / spec.tail_shape);
  return std::bernoulli_distribution(0.5)(rng) ? mag : -mag;
}

double source_abs_moment(const SourceDistribution& src, double p) {
  if (std::holds_alternative<UniformSource>(src)) return std::pow(2.0, p) / (p + 1.0);
  return std::get<heavy_tail::HeavyTailSpec>(src).abs_moment(p);
}

std::size_t resolve_sample_count(double formula, std::optional<std::size_t> override_n,
                                 std::size_t max_samples) {
  if (override_n) {
    require(*override_n >= 1, "sample count override must be positive");
    return *override_n;
  }
  require(std::isfinite(formula) && formula <= static_cast<double>(max_samples),
          "formula sample size exceeds max_samples; supply an explicit override");
  return static_cast<std::size_t>(formula);
}

}  // namespace

SampledCentroidBody::SampledCentroidBody(MatrixXd points) : points_(std::move(points)) {
  require(points_.cols() >= 1, "SampledCentroidBody needs at least one point");
  require(points_.rows() >= 1, "SampledCentroidBody needs positive dimension");
  require(points_.allFinite(), "SampledCentroidBody points must be finite");
}

void ICAModelSpec::validate() const {
  require(mixing.rows() == mixing.cols() && mixing.rows() > 0, "mixing matrix must be square");
  require(static_cast<Index>(sources.size()) == mixing.cols(),
          "need one source distribution per column of the mixing matrix");
  const Eigen::JacobiSVD<MatrixXd> svd(mixing);
  const auto& sv = svd.singularValues();
  require(sv.minCoeff() > 0.0 && std::isfinite(sv.maxCoeff() / sv.minCoeff()),
          "mixing matrix must be invertible");
  for (const auto& s : sources) {
    if (const auto* h = std::get_if<heavy_tail::HeavyTailSpec>(&s)) h->validate();
  }
}

MatrixXd ICAModelSpec::sample(std::size_t count, Rng& rng) const {
  const Index n = mixing.rows();
  MatrixXd s(n, static_cast<Index>(count));
  for (Index c = 0; c < s.cols(); ++c) {
    for (Index i = 0; i < n; ++i) s(i, c) = draw_source(sources[static_cast<std::size_t>(i)], rng);
  }
  return mixing * s;
}

double ICAModelSpec::coordinate_moment_bound(double gamma) const {
  const double p = 1.0 + gamma;
  double worst = 0.0;
  for (Index j = 0; j < mixing.rows(); ++j) {
    double norm = 0.0;
    for (Index i = 0; i < mixing.cols(); ++i) {
      norm += std::abs(mixing(j, i)) *
              std::pow(source_abs_moment(sources[static_cast<std::size_t>(i)], p), 1.0 / p);
    }
    worst = std::max(worst, std::pow(norm, p));
  }
  return worst;
}

ICAModelSpec ICAModelSpec::identity_uniform(Index n) {
  return {MatrixXd::Identity(n, n), std::vector<SourceDistribution>(static_cast<std::size_t>(n),
                                                                    UniformSource{})};
}

void OracleParams::validate() const {
  require(epsilon > 0.0, "epsilon must be positive");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  require(s_m > 0.0 && s_M >= s_m, "need s_M >= s_m > 0");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0,1)");
  require(M > 1.0, "M must exceed 1");
}

double support_function(const SampledCentroidBody& body, const VectorXd& direction) {
  check_query(body, direction);
  const double norm = direction.norm();
  require(norm > 0.0, "support_function: zero direction");
  const VectorXd proj = body.points().transpose() * (direction / norm);
  return proj.cwiseAbs().sum() / static_cast<double>(body.count());
}

MembershipAnswer membership_detail(const SampledCentroidBody& body, const VectorXd& q) {
  check_query(body, q);
  const Index N = body.count();
  const lp::BoundedLP problem(scaled_generators(body), q, VectorXd::Constant(N, -1.0),
                              VectorXd::Constant(N, 1.0));
  const auto sol = lp::solve(problem, crash_towards(body, q));
  return {sol.status == lp::Status::Optimal, sol.iterations};
}

bool membership(const SampledCentroidBody& body, const VectorXd& q) {
  return membership_detail(body, q).inside;
}

double minkowski_functional(const SampledCentroidBody& body, const VectorXd& q) {
  check_query(body, q);
  const Index N = body.count();
  const Index n = body.dimension();
  MatrixXd A(n, N + 1);
  A.leftCols(N) = scaled_generators(body);
  A.col(N) = -q;
  VectorXd lo = VectorXd::Constant(N + 1, -1.0), up = VectorXd::Constant(N + 1, 1.0);
  lo[N] = 0.0;
  up[N] = kInf;
  VectorXd c = VectorXd::Zero(N + 1);
  c[N] = 1.0;
  const auto sol =
      lp::solve(lp::BoundedLP(A, VectorXd::Zero(n), lo, up, c), crash_towards(body, q, 1));
  if (sol.status == lp::Status::Unbounded) return 0.0;
  if (sol.status != lp::Status::Optimal) {
    // lambda = 0 is always feasible.
    throw std::logic_error("minkowski_functional: scaled-membership LP reported infeasible");
  }
  const double t = sol.objective_value;
  return t > 0.0 ? 1.0 / t : kInf;
}

std::optional<VectorXd> dual_witness(const SampledCentroidBody& body, const VectorXd& q) {
  check_query(body, q);
  const Index N = body.count();
  const auto sol = lp::solve(lp::BoundedLP(scaled_generators(body), q,
                                           VectorXd::Constant(N, -1.0),
                                           VectorXd::Constant(N, 1.0)),
                             crash_towards(body, q));
  if (sol.status != lp::Status::Optimal) return std::nullopt;
  return sol.point;
}

OracleSampleSize oracle_sample_size(const OracleParams& params, Index n) {
  params.validate();
  require(n >= 1, "dimension must be positive");
  const double nd = static_cast<double>(n);
  const double g = params.gamma;
  const double r = params.epsilon * params.s_m / (2.0 * nd * params.s_M);
  const double c = 8.0 * params.M * nd * std::pow(params.s_M, 1.0 + g);
  OracleSampleSize out;
  out.radius = r;
  out.variance_branch = std::pow(c / (r * r * params.delta), 3.0 / g);
  out.threshold_branch = std::pow(c / r, 0.5 + 1.0 / g);
  out.N = std::ceil(std::max(out.variance_branch, out.threshold_branch));
  return out;
}

OracleAnswer weak_membership_oracle(const VectorXd& q, const ICAModelSpec& model,
                                    const OracleParams& params, Rng& rng,
                                    std::optional<std::size_t> N_override,
                                    std::size_t max_samples) {
  model.validate();
  require(q.size() == model.mixing.rows(), "query dimension does not match the model");
  OracleAnswer out;
  out.N_formula = oracle_sample_size(params, q.size()).N;
  out.N_used = resolve_sample_count(out.N_formula, N_override, max_samples);
  const SampledCentroidBody body(model.sample(out.N_used, rng));
  const auto m = membership_detail(body, q);
  out.yes = m.inside;
  out.lp_iterations = m.lp_iterations;
  return out;
}

std::vector<Vector2d> zonotope_polygon_2d(const SampledCentroidBody& body) {
  require(body.dimension() == 2, "zonotope_polygon_2d needs a planar body");
  require(body.count() <= 20, "zonotope_polygon_2d supports at most 20 generators");

  // Orient every generator into the half-plane angle in [0, pi).
  std::vector<Vector2d> gens;
  const MatrixXd g = scaled_generators(body);
  for (Index i = 0; i < g.cols(); ++i) {
    Vector2d v = g.col(i);
    if (v.isZero(0.0)) continue;
    if (v.y() < 0.0 || (v.y() == 0.0 && v.x() < 0.0)) v = -v;
    gens.push_back(v);
  }
  if (gens.empty()) return {Vector2d::Zero()};
  std::sort(gens.begin(), gens.end(), [](const Vector2d& a, const Vector2d& b) {
    return std::atan2(a.y(), a.x()) < std::atan2(b.y(), b.x());
  });
  // Parallel generators contribute one edge.
  std::vector<Vector2d> merged;
  for (const auto& v : gens) {
    if (!merged.empty() &&
        std::abs(cross(merged.back(), v)) <= 1e-14 * merged.back().norm() * v.norm()) {
      merged.back() += v;
    } else {
      merged.push_back(v);
    }
  }

  Vector2d start = Vector2d::Zero();
  for (const auto& v : merged) start -= v;
  std::vector<Vector2d> out;
  out.reserve(2 * merged.size());
  Vector2d cur = start;
  for (const auto& v : merged) {
    out.push_back(cur);
    cur += 2.0 * v;
  }
  for (const auto& v : merged) {
    out.push_back(cur);
    cur -= 2.0 * v;
  }
  return out;
}

bool polygon_contains(const std::vector<Vector2d>& ccw, const Vector2d& q, double tol) {
  if (ccw.empty()) return false;
  if (ccw.size() == 1) return (q - ccw[0]).norm() <= tol;
  if (ccw.size() == 2) {
    const Vector2d d = ccw[1] - ccw[0];
    const double t = std::clamp((q - ccw[0]).dot(d) / d.squaredNorm(), 0.0, 1.0);
    return (ccw[0] + t * d - q).norm() <= tol;
  }
  for (std::size_t i = 0; i < ccw.size(); ++i) {
    const Vector2d& a = ccw[i];
    const Vector2d& b = ccw[(i + 1) % ccw.size()];
    const Vector2d e = b - a;
    if (cross(e, q - a) < -tol * e.norm()) return false;
  }
  return true;
}

double approximation_sample_size(double M, Index n, double epsilon, double delta, double gamma) {
  require(M > 0.0 && n >= 1 && epsilon > 0.0 && delta > 0.0 && gamma > 0.0 && gamma < 1.0,
          "approximation_sample_size: parameter out of range");
  const double nd = static_cast<double>(n);
  return std::pow(8.0 * M * nd * nd / (epsilon * epsilon * delta), 0.5 + 3.0 / gamma);
}

double innerball_sample_size(double M, Index n, double epsilon_prime, double delta_prime,
                             double gamma) {
  require(M > 0.0 && n >= 1 && epsilon_prime > 0.0 && delta_prime > 0.0 && gamma > 0.0 &&
              gamma < 1.0,
          "innerball_sample_size: parameter out of range");
  const double n4 = std::pow(static_cast<double>(n), 4.0);
  return std::pow(16.0 * M * n4 / (epsilon_prime * epsilon_prime * delta_prime),
                  0.5 + 3.0 / gamma);
}

ApproximationResult approximation_check(const ICAModelSpec& model, const VectorXd& p,
                                        double epsilon, double delta, double gamma, Rng& rng,
                                        std::optional<std::size_t> N_override,
                                        const WitnessFunction& witness,
                                        std::size_t max_samples) {
  model.validate();
  require(p.size() == model.mixing.rows(), "point dimension does not match the model");
  ApproximationResult out;
  out.N_formula = approximation_sample_size(model.coordinate_moment_bound(gamma), p.size(),
                                            epsilon, delta, gamma);
  out.N_used = resolve_sample_count(out.N_formula, N_override, max_samples);
  const SampledCentroidBody body(model.sample(out.N_used, rng));

  const double phi = minkowski_functional(body, p);
  double bound = phi <= 1.0 ? 0.0 : (std::isfinite(phi) ? p.norm() * (1.0 - 1.0 / phi) : kInf);
  if (witness) {
    VectorXd z = VectorXd::Zero(p.size());
    for (Index i = 0; i < body.count(); ++i) {
      const double l = std::clamp(witness(body.points().col(i)), -1.0, 1.0);
      z += l * body.points().col(i);
    }
    z /= static_cast<double>(body.count());
    bound = std::min(bound, (p - z).norm());
  }
  out.distance_bound = bound;
  out.within = bound <= epsilon;
  return out;
}

}  // namespace htica::centroid
