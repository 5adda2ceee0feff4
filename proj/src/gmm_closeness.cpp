#include "htica/gmm_closeness.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/mpfr.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>

namespace htica::gmm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

namespace bmp = boost::multiprecision;
using Real = bmp::number<bmp::mpfr_float_backend<100>, bmp::et_off>;

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
Real normal_cdf(const Real& x) { return boost::math::erfc(-x / sqrt(Real(2))) / 2; }

template <class T>
T pi_v() {
  if constexpr (std::is_same_v<T, double>) {
    return std::numbers::pi;
  } else {
    return boost::math::constants::pi<T>();
  }
}

template <class T>
T kernel_t(const MatrixXd& X, Index i, Index j) {
  using std::exp;
  T d2 = 0;
  for (Index r = 0; r < X.rows(); ++r) {
    const T d = T(X(r, i)) - T(X(r, j));
    d2 += d * d;
  }
  using std::pow;
  return exp(-d2 / 2) / pow(2 * pi_v<T>(), T(X.rows()) / 2);
}

template <class T>
T target_t(const MatrixXd& X, Index col) {
  T v = 1;
  for (Index r = 0; r < X.rows(); ++r) {
    const T x(X(r, col));
    v *= normal_cdf(T(1) - x) - normal_cdf(-x);
  }
  return v;
}

// Cyclic Jacobi on a dense symmetric n x n matrix (row-major). On return
// the diagonal of `a` holds the eigenvalues and `v` (row-major) has the
// eigenvectors in its columns.
template <class T>
void jacobi_eigen(std::vector<T>& a, int n, std::vector<T>& v) {
  using std::abs;
  using std::sqrt;
  v.assign(static_cast<std::size_t>(n * n), T(0));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i * n + i)] = 1;
  auto A = [&](int i, int j) -> T& { return a[static_cast<std::size_t>(i * n + j)]; };
  auto V = [&](int i, int j) -> T& { return v[static_cast<std::size_t>(i * n + j)]; };

  T total = 0;
  for (const T& x : a) total += x * x;
  const T eps = std::numeric_limits<T>::epsilon();
  const T stop = eps * eps * total;

  for (int sweep = 0; sweep < 100; ++sweep) {
    T off = 0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off <= stop) return;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (A(p, q) == 0) continue;
        const T theta = (A(q, q) - A(p, p)) / (2 * A(p, q));
        T t = 1 / (abs(theta) + sqrt(theta * theta + 1));
        if (theta < 0) t = -t;
        const T c = 1 / sqrt(t * t + 1);
        const T s = t * c;
        for (int k = 0; k < n; ++k) {
          const T akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const T apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        A(p, q) = 0;
        A(q, p) = 0;
        for (int k = 0; k < n; ++k) {
          const T vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  throw std::runtime_error("jacobi_eigen: no convergence after 100 sweeps");
}

template <class T>
struct Solved {
  InterpolationResult result;
  std::vector<T> w;
};

template <class T>
Solved<T> solve_kernel_system(const PointCloud& X, double cutoff) {
  using std::abs;
  const int k = static_cast<int>(X.cols());
  std::vector<T> K(static_cast<std::size_t>(k * k));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j <= i; ++j)
      K[static_cast<std::size_t>(i * k + j)] = K[static_cast<std::size_t>(j * k + i)] =
          kernel_t<T>(X, i, j);
  std::vector<T> f(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) f[static_cast<std::size_t>(i)] = target_t<T>(X, i);

  std::vector<T> a = K, v;
  jacobi_eigen(a, k, v);
  std::vector<T> lam(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) lam[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i * k + i)];
  const T lmax = *std::max_element(lam.begin(), lam.end());
  const T lmin = *std::min_element(lam.begin(), lam.end());

  Solved<T> out;
  out.w.assign(static_cast<std::size_t>(k), T(0));
  int discarded = 0;
  for (int j = 0; j < k; ++j) {
    const T l = lam[static_cast<std::size_t>(j)];
    if (!(l > T(cutoff) * lmax)) {
      ++discarded;
      continue;
    }
    T proj = 0;
    for (int i = 0; i < k; ++i) proj += v[static_cast<std::size_t>(i * k + j)] * f[static_cast<std::size_t>(i)];
    proj /= l;
    for (int i = 0; i < k; ++i) out.w[static_cast<std::size_t>(i)] += proj * v[static_cast<std::size_t>(i * k + j)];
  }

  T resid = 0, sum = 0;
  for (int i = 0; i < k; ++i) {
    T r = -f[static_cast<std::size_t>(i)];
    for (int j = 0; j < k; ++j) r += K[static_cast<std::size_t>(i * k + j)] * out.w[static_cast<std::size_t>(j)];
    resid = std::max(resid, T(abs(r)));
    sum += out.w[static_cast<std::size_t>(i)];
  }

  auto& r = out.result;
  r.nodes = X;
  r.coefficients.resize(k);
  for (int i = 0; i < k; ++i) r.coefficients[i] = static_cast<double>(out.w[static_cast<std::size_t>(i)]);
  r.condition_number = lmin > 0 ? static_cast<double>(lmax / lmin) : kInf;
  r.max_node_residual = static_cast<double>(resid);
  r.discarded_eigenvalues = discarded;
  r.cutoff_dominated = 2 * discarded > k;
  r.coefficient_sum = static_cast<double>(sum);
  return out;
}

void check_nodes(const PointCloud& X) {
  require(X.rows() >= 1 && X.cols() >= 1, "interpolate: empty node set");
  require(X.allFinite(), "interpolate: non-finite node");
  for (Index i = 0; i < X.cols(); ++i)
    for (Index j = i + 1; j < X.cols(); ++j)
      require(X.col(i) != X.col(j), "interpolate: duplicate node " + std::to_string(j));
}

double resolve_cutoff(const InterpolationOptions& opt) {
  if (opt.relative_cutoff >= 0.0) return opt.relative_cutoff;
  return opt.precision == SolvePrecision::Double ? 1e-14 : 1e-80;
}

double combination_value(const MatrixXd& means, const VectorXd& c, const VectorXd& x) {
  const double norm = std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(means.rows()));
  double s = 0.0;
  for (Index i = 0; i < means.cols(); ++i) {
    s += c[i] * std::exp(-0.5 * (x - means.col(i)).squaredNorm());
  }
  return norm * s;
}

void check_distinct(const MatrixXd& means, const char* what) {
  for (Index i = 0; i < means.cols(); ++i)
    for (Index j = i + 1; j < means.cols(); ++j)
      require(means.col(i) != means.col(j), std::string(what) + ": repeated mean");
}

int default_fill_resolution(Index n) { return n == 1 ? 1000 : (n == 2 ? 200 : 20); }

// Adaptive Simpson with the usual Richardson correction.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

std::pair<double, double> box_of(const SignedGaussianCombination& a,
                                 const SignedGaussianCombination& b, Index axis) {
  double lo = kInf, hi = -kInf;
  for (const auto* s : {&a, &b}) {
    if (s->size() == 0) continue;
    lo = std::min(lo, s->means.row(axis).minCoeff());
    hi = std::max(hi, s->means.row(axis).maxCoeff());
  }
  return {lo - 10.0, hi + 10.0};
}

GaussianMixture concat_half(const GaussianMixture& a, const GaussianMixture& b) {
  GaussianMixture m;
  m.means.resize(a.dimension(), a.size() + b.size());
  m.means << a.means, b.means;
  m.weights.resize(a.size() + b.size());
  m.weights << 0.5 * a.weights, 0.5 * b.weights;
  return m;
}

PointCloud columns(const PointCloud& P, Index start, Index count) {
  return P.middleCols(start, count);
}

template <class T>
ConfusablePair confusable_impl(const PointCloud& X, const PointCloud& Y,
                               const ConfusableOptions& opt) {
  using std::abs;
  const double cut = resolve_cutoff(opt.interpolation);
  auto sx = solve_kernel_system<T>(X, cut);
  auto sy = solve_kernel_system<T>(Y, cut);

  // Merge coincident means so each appears once with its net coefficient.
  std::map<std::vector<double>, T> net;
  std::vector<std::vector<double>> order;
  auto add = [&](const PointCloud& P, const std::vector<T>& w, int sign) {
    for (Index i = 0; i < P.cols(); ++i) {
      std::vector<double> key(P.col(i).data(), P.col(i).data() + P.rows());
      auto [it, inserted] = net.emplace(key, T(0));
      if (inserted) order.push_back(key);
      it->second += sign * w[static_cast<std::size_t>(i)];
    }
  };
  add(X, sx.w, +1);
  add(Y, sy.w, -1);

  T alpha = 0, beta = 0;
  std::vector<std::pair<std::vector<double>, T>> pos, neg;
  for (const auto& key : order) {
    const T c = net[key];
    if (c > 0) {
      pos.emplace_back(key, c);
      alpha += c;
    } else if (c < 0) {
      neg.emplace_back(key, -c);
      beta -= c;
    }
  }
  if (pos.empty() || neg.empty()) {
    throw DegenerateSplit("degenerate split: f_X - f_Y has no " +
                          std::string(pos.empty() ? "positive" : "negative") + " coefficient");
  }

  const Index n = X.rows();
  auto build = [&](const auto& part, const T& total, GaussianMixture& mix, VectorXd& raw) {
    mix.means.resize(n, static_cast<Index>(part.size()));
    mix.weights.resize(static_cast<Index>(part.size()));
    raw.resize(static_cast<Index>(part.size()));
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto c = static_cast<Index>(i);
      for (Index r = 0; r < n; ++r) mix.means(r, c) = part[i].first[static_cast<std::size_t>(r)];
      mix.weights[c] = static_cast<double>(part[i].second / total);
      raw[c] = static_cast<double>(part[i].second);
    }
  };

  ConfusablePair out;
  VectorXd raw_p, raw_q;
  build(pos, alpha, out.p, raw_p);
  build(neg, beta, out.q, raw_q);
  out.alpha = static_cast<double>(alpha);
  out.beta = static_cast<double>(beta);
  out.alpha_minus_beta = static_cast<double>(alpha - beta);
  out.ratio_gap = static_cast<double>(abs(T(1) - beta / alpha));

  out.difference.means.resize(n, out.p.size() + out.q.size());
  out.difference.means << out.p.means, out.q.means;
  out.difference.coefficients.resize(out.p.size() + out.q.size());
  out.difference.coefficients << raw_p, -raw_q;

  if (opt.compute_l1) {
    out.l1 = l1_distance(out.p, out.q, opt.l1).value;
    out.l1_unnormalized =
        l1_distance(SignedGaussianCombination{out.p.means, raw_p},
                    SignedGaussianCombination{out.q.means, raw_q}, opt.l1)
            .value;
  }
  out.fx = std::move(sx.result);
  out.fy = std::move(sy.result);
  return out;
}

}  // namespace

double gaussian_kernel(const VectorXd& x, const VectorXd& z) {
  require(x.size() == z.size(), "gaussian_kernel: dimension mismatch");
  return std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(x.size())) *
         std::exp(-0.5 * (x - z).squaredNorm());
}

double target_f(const VectorXd& x) {
  double v = 1.0;
  for (Index i = 0; i < x.size(); ++i) v *= normal_cdf(1.0 - x[i]) - normal_cdf(-x[i]);
  return v;
}

double SignedGaussianCombination::operator()(const VectorXd& x) const {
  return combination_value(means, coefficients, x);
}

void SignedGaussianCombination::validate() const {
  require(coefficients.size() == means.cols(), "combination: one coefficient per mean");
  require((coefficients.array() != 0.0).all(), "combination: zero coefficient stored");
  check_distinct(means, "combination");
}

double GaussianMixture::operator()(const VectorXd& x) const {
  return combination_value(means, weights, x);
}

void GaussianMixture::validate() const {
  require(weights.size() == means.cols() && weights.size() > 0,
          "mixture: one weight per mean, at least one component");
  require((weights.array() > 0.0).all(), "mixture: weights must be positive");
  require(std::abs(weights.sum() - 1.0) <= 1e-12, "mixture: weights must sum to 1");
  check_distinct(means, "mixture");
}

void to_json(nlohmann::json& j, const GaussianMixture& m) {
  j = nlohmann::json{{"dimension", m.dimension()}, {"components", nlohmann::json::array()}};
  for (Index i = 0; i < m.size(); ++i) {
    std::vector<double> mean(m.means.col(i).data(), m.means.col(i).data() + m.dimension());
    j["components"].push_back({{"mean", mean}, {"weight", m.weights[i]}});
  }
}

void from_json(const nlohmann::json& j, GaussianMixture& m) {
  const auto n = j.at("dimension").get<Index>();
  const auto& comps = j.at("components");
  m.means.resize(n, static_cast<Index>(comps.size()));
  m.weights.resize(static_cast<Index>(comps.size()));
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const auto mean = comps[i].at("mean").get<std::vector<double>>();
    require(static_cast<Index>(mean.size()) == n, "mixture json: mean has wrong dimension");
    for (Index r = 0; r < n; ++r) m.means(r, static_cast<Index>(i)) = mean[static_cast<std::size_t>(r)];
    m.weights[static_cast<Index>(i)] = comps[i].at("weight").get<double>();
  }
  m.validate();
}

double InterpolationResult::operator()(const VectorXd& x) const {
  return combination_value(nodes, coefficients, x);
}

SignedGaussianCombination InterpolationResult::as_signed() const {
  return {nodes, coefficients};
}

InterpolationResult interpolate(const PointCloud& X, const InterpolationOptions& opt) {
  check_nodes(X);
  const double cut = resolve_cutoff(opt);
  if (opt.precision == SolvePrecision::Double) return solve_kernel_system<double>(X, cut).result;
  return solve_kernel_system<Real>(X, cut).result;
}

double fill(const PointCloud& X, int grid_resolution) {
  require(X.cols() >= 1, "fill: empty node set");
  require(grid_resolution >= 1, "fill: grid_resolution must be positive");
  const Index n = X.rows();
  const double g = 1.0 / grid_resolution;
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  VectorXd p(n);
  double worst = 0.0;
  for (;;) {
    for (Index r = 0; r < n; ++r) p[r] = idx[static_cast<std::size_t>(r)] * g;
    worst = std::max(worst, (X.colwise() - p).colwise().squaredNorm().minCoeff());
    Index r = 0;
    while (r < n && ++idx[static_cast<std::size_t>(r)] > grid_resolution) {
      idx[static_cast<std::size_t>(r)] = 0;
      ++r;
    }
    if (r == n) break;
  }
  return std::sqrt(worst) + g * std::sqrt(static_cast<double>(n)) / 2.0;
}

std::pair<PointCloud, PointCloud> interleaved_grids(int k, int n) {
  require(k >= 1 && n >= 1, "interleaved_grids: k and n must be positive");
  const int side = 2 * k;
  Index total = 1;
  for (int i = 0; i < n; ++i) total *= side;
  PointCloud even(n, total / 2), odd(n, total / 2);
  Index ne = 0, no = 0;
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (Index c = 0; c < total; ++c) {
    int parity = 0;
    VectorXd p(n);
    for (int r = 0; r < n; ++r) {
      p[r] = static_cast<double>(idx[static_cast<std::size_t>(r)]) / (side - 1);
      parity += idx[static_cast<std::size_t>(r)];
    }
    if (parity % 2 == 0) {
      even.col(ne++) = p;
    } else {
      odd.col(no++) = p;
    }
    for (int r = 0; r < n && ++idx[static_cast<std::size_t>(r)] == side; ++r) {
      idx[static_cast<std::size_t>(r)] = 0;
    }
  }
  return {even, odd};
}

PointCloud uniform_points(Index count, int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud P(n, count);
  for (Index c = 0; c < count; ++c)
    for (Index r = 0; r < n; ++r) P(r, c) = u(rng);
  return P;
}

L1Estimate l1_distance(const SignedGaussianCombination& a, const SignedGaussianCombination& b,
                       const L1Options& opt) {
  require(a.dimension() == b.dimension(), "l1_distance: dimension mismatch");
  require(a.size() + b.size() > 0, "l1_distance: both combinations are empty");
  const Index n = a.dimension();
  L1Method method = opt.method;
  if (method == L1Method::Auto) method = n <= 2 ? L1Method::Quadrature : L1Method::MonteCarlo;
  require(method != L1Method::Quadrature || n <= 2,
          "l1_distance: quadrature supports dimension 1 or 2 only");

  const double mass = a.coefficients.cwiseAbs().sum() + b.coefficients.cwiseAbs().sum();
  auto diff = [&](const VectorXd& x) { return std::abs(a(x) - b(x)); };
  L1Estimate out;
  out.method = method;

  if (method == L1Method::Quadrature) {
    // Each component has at most 2 Phi(-10) of its mass outside per axis.
    out.error_bound = static_cast<double>(n) * 2.0 * normal_cdf(-10.0) * mass;
    const auto [lo0, hi0] = box_of(a, b, 0);
    if (n == 1) {
      VectorXd x(1);
      auto f = [&](double t) {
        x[0] = t;
        return diff(x);
      };
      const int panels = static_cast<int>(std::ceil((hi0 - lo0) / 0.5));
      const double w = (hi0 - lo0) / panels;
      double total = 0.0;
      for (int i = 0; i < panels; ++i) {
        const double s = lo0 + i * w, e = s + w;
        const double fs = f(s), fm = f(0.5 * (s + e)), fe = f(e);
        const double whole = w / 6.0 * (fs + 4.0 * fm + fe);
        total += adaptive_simpson(f, s, e, fs, fm, fe, whole, opt.tolerance / panels, 40);
      }
      out.value = total;
    } else {
      const auto [lo1, hi1] = box_of(a, b, 1);
      using GL = boost::math::quadrature::gauss<double, 8>;
      VectorXd x(2);
      auto tensor = [&](int P) {
        const double w0 = (hi0 - lo0) / P, w1 = (hi1 - lo1) / P;
        auto inner = [&](double u) {
          double s = 0.0;
          for (int j = 0; j < P; ++j) {
            s += GL::integrate(
                [&](double v) {
                  x[0] = u;
                  x[1] = v;
                  return diff(x);
                },
                lo1 + j * w1, lo1 + (j + 1) * w1);
          }
          return s;
        };
        double total = 0.0;
        for (int i = 0; i < P; ++i) total += GL::integrate(inner, lo0 + i * w0, lo0 + (i + 1) * w0);
        return total;
      };
      // The kink along the zero set of a - b makes the panel rule O(P^-2);
      // one Richardson step removes the leading term.
      const double coarse = tensor(opt.gl_panels);
      const double fine = tensor(2 * opt.gl_panels);
      out.error_bound += std::abs(fine - coarse);
      const double total = (4.0 * fine - coarse) / 3.0;
      out.value = total;
    }
    return out;
  }

  // Importance sampling from g = sum |c_i| K(., mu_i) / mass.
  require(opt.mc_samples >= 2, "l1_distance: need at least 2 Monte Carlo samples");
  const Index m = a.size() + b.size();
  MatrixXd mu(n, m);
  VectorXd wt(m);
  mu << a.means, b.means;
  wt << a.coefficients.cwiseAbs(), b.coefficients.cwiseAbs();
  const VectorXd g_coef = wt / mass;
  std::discrete_distribution<Index> pick(wt.data(), wt.data() + m);
  std::normal_distribution<double> z;
  Rng rng = make_rng(opt.mc_seed);
  double mean = 0.0, m2 = 0.0;
  VectorXd x(n);
  for (std::uint64_t s = 0; s < opt.mc_samples; ++s) {
    const Index c = pick(rng);
    for (Index r = 0; r < n; ++r) x[r] = mu(r, c) + z(rng);
    const double ratio = diff(x) / combination_value(mu, g_coef, x);
    const double delta = ratio - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (ratio - mean);
  }
  const double ns = static_cast<double>(opt.mc_samples);
  out.value = mean;
  out.error_bound = std::sqrt(m2 / (ns - 1.0) / ns);
  return out;
}

L1Estimate l1_distance(const GaussianMixture& p, const GaussianMixture& q, const L1Options& opt) {
  return l1_distance(p.as_signed(), q.as_signed(), opt);
}

ConfusablePair confusable_pair(const PointCloud& X, const PointCloud& Y,
                               const ConfusableOptions& opt) {
  check_nodes(X);
  check_nodes(Y);
  require(X.rows() == Y.rows(), "confusable_pair: node sets differ in dimension");
  if (opt.interpolation.precision == SolvePrecision::Double) {
    return confusable_impl<double>(X, Y, opt);
  }
  return confusable_impl<Real>(X, Y, opt);
}

PigeonholeResult pigeonhole_construction(int k, int n, Rng& rng, const ConfusableOptions& opt) {
  require(k >= 2, "pigeonhole_construction: k must be at least 2");
  require(n >= 1, "pigeonhole_construction: n must be positive");
  const Index groups = 4 * k;
  const PointCloud pts = uniform_points(groups * k, n, rng);

  PigeonholeResult out;
  const int res = default_fill_resolution(n);
  for (Index g = 0; g < groups; ++g) out.group_fill.push_back(fill(columns(pts, g * k, k), res));

  ConfusableOptions no_l1 = opt;
  no_l1.compute_l1 = false;
  std::vector<ConfusablePair> pairs;
  for (Index g = 0; g < 2 * k; ++g) {
    try {
      pairs.push_back(confusable_pair(columns(pts, 2 * g * k, k), columns(pts, (2 * g + 1) * k, k),
                                      no_l1));
    } catch (const DegenerateSplit& e) {
      throw DegenerateSplit(std::string(e.what()) + " (groups " + std::to_string(2 * g) + ", " +
                            std::to_string(2 * g + 1) + ")");
    }
    // Orient so that |p| <= |q|.
    if (pairs.back().p.size() > pairs.back().q.size()) std::swap(pairs.back().p, pairs.back().q);
  }

  auto pair_l1 = [&](int g) { return l1_distance(pairs[static_cast<std::size_t>(g)].p,
                                                 pairs[static_cast<std::size_t>(g)].q, opt.l1)
                                  .value; };

  for (int g = 0; g < 2 * k; ++g) {
    const auto& pr = pairs[static_cast<std::size_t>(g)];
    if (pr.p.size() == pr.q.size()) {
      out.p = pr.p;
      out.q = pr.q;
      out.pairs_used = {g};
      if (opt.compute_l1) {
        out.pair_l1 = {pair_l1(g)};
        out.l1 = out.pair_l1[0];
      }
      return out;
    }
  }

  // With 2k nodes per pair the difference is even and lies in [2 - 2k, -2]:
  // at most k - 1 values for 2k pairs.
  std::map<Index, int> seen;
  for (int g = 0; g < 2 * k; ++g) {
    const auto& pr = pairs[static_cast<std::size_t>(g)];
    const Index d = pr.p.size() - pr.q.size();
    const auto it = seen.find(d);
    if (it == seen.end()) {
      seen.emplace(d, g);
      continue;
    }
    const auto& first = pairs[static_cast<std::size_t>(it->second)];
    out.p = concat_half(first.p, pr.q);
    out.q = concat_half(pr.p, first.q);
    out.pairs_used = {it->second, g};
    if (opt.compute_l1) {
      out.pair_l1 = {pair_l1(it->second), pair_l1(g)};
      out.l1 = l1_distance(out.p, out.q, opt.l1).value;
    }
    return out;
  }
  throw std::logic_error("pigeonhole_construction: no repeated count difference");
}

std::vector<SweepRow> interpolation_error_sweep(const std::vector<int>& k_list, int n,
                                                NodeScheme scheme, Rng& rng,
                                                const InterpolationOptions& opt) {
  require(n == 1 || n == 2, "interpolation_error_sweep: n must be 1 or 2");
  const int per_axis = n == 1 ? 10000 : 100;
  const Index probes = 10000;
  MatrixXd probe(n, probes);
  for (Index c = 0; c < probes; ++c) {
    Index rest = c;
    for (int r = 0; r < n; ++r) {
      probe(r, c) = -0.5 + 2.0 * static_cast<double>(rest % per_axis) / (per_axis - 1);
      rest /= per_axis;
    }
  }

  std::vector<SweepRow> rows;
  for (int k : k_list) {
    PointCloud X = interleaved_grids(k, n).first;
    if (scheme == NodeScheme::UniformRandom) X = uniform_points(X.cols(), n, rng);
    const auto interp = interpolate(X, opt);
    SweepRow row;
    row.k = k;
    row.h = fill(X, default_fill_resolution(n));
    row.condition_number = interp.condition_number;
    row.max_node_residual = interp.max_node_residual;
    for (Index c = 0; c < probes; ++c) {
      row.sup_error = std::max(row.sup_error, std::abs(interp(probe.col(c)) - target_f(probe.col(c))));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace htica::gmm
