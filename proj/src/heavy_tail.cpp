#include "htica/heavy_tail.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace htica::heavy_tail {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_common(double epsilon, double M, double gamma, double gamma_max = 1.0,
                  bool gamma_max_open = true) {
  require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0,1)");
  require(M > 1.0, "M must exceed 1");
  require(gamma > 0.0 && (gamma_max_open ? gamma < gamma_max : gamma <= gamma_max),
          "gamma must lie in (0,1)");
}

// Neumaier variant of Kahan summation.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double uniform_open0(Rng& rng) {
  // (0, 1]
  return 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace

HeavyTailSpec HeavyTailSpec::symmetric_pareto(double gamma, std::optional<double> alpha) {
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0,1)");
  HeavyTailSpec s;
  s.gamma = gamma;
  s.tail_shape = alpha.value_or(1.0 + 2.0 * gamma);
  require(s.tail_shape > 1.0 + gamma, "tail_shape must exceed 1 + gamma");
  s.scale = (s.tail_shape - 1.0) / s.tail_shape;
  s.moment_bound_M = s.abs_moment(1.0 + gamma);
  s.validate();
  return s;
}

double HeavyTailSpec::abs_moment(double p) const {
  require(p < tail_shape, "moment order must be below tail_shape");
  return tail_shape * std::pow(scale, p) / (tail_shape - p);
}

void HeavyTailSpec::validate() const {
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0,1)");
  require(tail_shape > 1.0 + gamma, "tail_shape must exceed 1 + gamma");
  require(scale > 0.0, "scale must be positive");
  require(moment_bound_M > 1.0, "moment_bound_M must exceed 1");
  require(std::abs(abs_moment(1.0) - 1.0) <= 1e-12, "HeavyTailSpec must be normalized to E|X| = 1");
  require(moment_bound_M >= abs_moment(1.0 + gamma) * (1.0 - 1e-12),
          "moment_bound_M is below E|X|^{1+gamma}");
}

double empirical_abs_mean(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("empirical_abs_mean: empty sample");
  CompensatedSum s;
  for (double x : samples) s.add(std::abs(x));
  return s.value() / static_cast<double>(samples.size());
}

double raw_chebyshev_bound(double epsilon, double N, double M, double gamma) {
  check_common(epsilon, M, gamma);
  require(N >= 1.0, "N must be at least 1");
  return 8.0 * M / (epsilon * epsilon * std::pow(N, gamma / 3.0));
}

double chebyshev_failure_bound(double epsilon, double N, double M, double gamma) {
  return std::min(1.0, raw_chebyshev_bound(epsilon, N, M, gamma));
}

double sample_threshold(double epsilon, double M, double gamma) {
  check_common(epsilon, M, gamma, 1.0, /*gamma_max_open=*/false);
  return std::pow(8.0 * M / epsilon, 0.5 + 1.0 / gamma);
}

std::uint64_t min_samples(double epsilon, double M, double gamma) {
  check_common(epsilon, M, gamma);
  const double n = std::ceil(sample_threshold(epsilon, M, gamma));
  if (!(n < 18446744073709551615.0)) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(n);
}

double AnalysisConstants::N_of_T(double T) const {
  return std::pow(T, 1.0 + gamma / 2.0) /
         (epsilon_prime * std::pow(M, gamma / (2.0 * (1.0 + gamma))));
}

AnalysisConstants analysis_constants(double epsilon_prime, double M, double gamma) {
  require(epsilon_prime > 0.0 && epsilon_prime < 0.5, "epsilon_prime must lie in (0,1/2)");
  require(M > 1.0, "M must exceed 1");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0,1)");
  return {epsilon_prime, M, gamma, std::pow(M / epsilon_prime, 1.0 / gamma)};
}

std::vector<double> sample_heavy(const HeavyTailSpec& spec, std::size_t count, Rng& rng) {
  spec.validate();
  std::vector<double> out(count);
  const double inv_alpha = 1.0 / spec.tail_shape;
  std::bernoulli_distribution sign(0.5);
  for (double& x : out) {
    const double magnitude = spec.scale * std::pow(uniform_open0(rng), -inv_alpha);
    x = sign(rng) ? magnitude : -magnitude;
  }
  return out;
}

double simulate_abs_mean(const HeavyTailSpec& spec, std::uint64_t N, Rng& rng,
                         const SamplerOptions& opt) {
  require(N >= 1, "N must be at least 1");
  const double a = spec.tail_shape;
  const double s = spec.scale;
  const double inv_alpha = 1.0 / a;

  if (N <= opt.exact_limit || static_cast<double>(N) <= opt.expected_tail_draws) {
    // Sign does not affect |X|, so only the magnitude is drawn.
    CompensatedSum sum;
    for (std::uint64_t i = 0; i < N; ++i) sum.add(s * std::pow(uniform_open0(rng), -inv_alpha));
    return sum.value() / static_cast<double>(N);
  }

  const double Nd = static_cast<double>(N);
  const double p_tail = opt.expected_tail_draws / Nd;
  const double T = s * std::pow(p_tail, -inv_alpha);

  const auto K = std::binomial_distribution<std::uint64_t>(N, p_tail)(rng);
  CompensatedSum sum;
  for (std::uint64_t i = 0; i < K; ++i) sum.add(T * std::pow(uniform_open0(rng), -inv_alpha));

  // Moments of |X| conditioned on |X| <= T.
  const double sa = std::pow(s, a);
  const double m1 = a * sa * (std::pow(s, 1.0 - a) - std::pow(T, 1.0 - a)) / (a - 1.0);
  const double m2 = std::abs(a - 2.0) < 1e-12
                        ? a * s * s * std::log(T / s)
                        : a * sa * (std::pow(T, 2.0 - a) - std::pow(s, 2.0 - a)) / (2.0 - a);
  const double mean = m1 / (1.0 - p_tail);
  const double var = std::max(0.0, m2 / (1.0 - p_tail) - mean * mean);
  const double bulk_n = static_cast<double>(N - K);
  const double bulk = bulk_n * mean + std::sqrt(bulk_n * var) *
                                          std::normal_distribution<double>(0.0, 1.0)(rng);
  sum.add(bulk);
  return sum.value() / Nd;
}

ConcentrationReport estimate_failure_rate(const HeavyTailSpec& spec, double epsilon,
                                          std::uint64_t N, std::uint64_t trials,
                                          std::uint64_t master_seed,
                                          const FailureRateOptions& opt) {
  spec.validate();
  require(trials > 0, "trials must be positive");
  if (opt.strict) {
    require(N >= min_samples(epsilon, spec.moment_bound_M, spec.gamma),
            "N is below min_samples in strict mode");
  }
  ConcentrationReport r;
  r.epsilon = epsilon;
  r.N = N;
  r.trials = trials;
  r.bound = chebyshev_failure_bound(epsilon, static_cast<double>(N), spec.moment_bound_M,
                                    spec.gamma);
  r.hybrid_sampler = N > opt.sampler.exact_limit &&
                     static_cast<double>(N) > opt.sampler.expected_tail_draws;
  r.trial_means.reserve(trials);
  for (std::uint64_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(master_seed, t);
    const double m = simulate_abs_mean(spec, N, rng, opt.sampler);
    r.trial_means.push_back(m);
    if (std::abs(m - 1.0) > epsilon) ++r.failures;
  }
  const double p = static_cast<double>(r.failures) / static_cast<double>(trials);
  r.empirical_rate = p;
  r.ci_half_width = 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  return r;
}

}  // namespace htica::heavy_tail
