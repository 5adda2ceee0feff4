#pragma once

// Heavy-tailed empirical absolute-mean estimation: the sample-size and
// failure-probability formulas for a symmetric X with E|X|^{1+gamma} <= M,
// a symmetrized Pareto test distribution, and a Monte Carlo harness.

#include "htica/rng.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace htica::heavy_tail {

/// Symmetrized Pareto: |X| = scale * Pareto(x_m = 1, alpha = tail_shape),
/// uniform random sign.
struct HeavyTailSpec {
  double gamma = 0.5;
  double moment_bound_M = 0.0;
  double tail_shape = 2.0;
  double scale = 0.5;

  /// Normalized so E|X| = 1; M is set to the exact (1+gamma)-th absolute
  /// moment. alpha defaults to 1 + 2 gamma.
  static HeavyTailSpec symmetric_pareto(double gamma, std::optional<double> alpha = {});

  /// Exact E|X|^p for p < tail_shape.
  double abs_moment(double p) const;

  /// Throws std::invalid_argument unless gamma in (0,1), M > 1,
  /// tail_shape > 1 + gamma, E|X| = 1 and M >= E|X|^{1+gamma}.
  void validate() const;
};

/// (|x_1| + ... + |x_N|) / N with compensated summation.
double empirical_abs_mean(std::span<const double> samples);

/// 8M / (eps^2 N^{gamma/3}), unclamped.
double raw_chebyshev_bound(double epsilon, double N, double M, double gamma);

/// min(1, raw_chebyshev_bound(...)).
double chebyshev_failure_bound(double epsilon, double N, double M, double gamma);

/// (8M/eps)^{1/2 + 1/gamma} before rounding. Accepts gamma = 1 as a limit.
double sample_threshold(double epsilon, double M, double gamma);

/// ceil(sample_threshold), saturating at UINT64_MAX.
std::uint64_t min_samples(double epsilon, double M, double gamma);

/// Constants from the truncation argument behind the bound.
struct AnalysisConstants {
  double epsilon_prime;
  double M;
  double gamma;
  /// (M / eps')^{1/gamma}: truncation level where M / T0^gamma = eps'.
  double T0;

  /// Sample size balancing the union and Chebyshev terms at threshold T.
  double N_of_T(double T) const;
};

AnalysisConstants analysis_constants(double epsilon_prime, double M, double gamma);

std::vector<double> sample_heavy(const HeavyTailSpec& spec, std::size_t count, Rng& rng);

struct SamplerOptions {
  /// Above this N a trial draws the K exceedances of a high threshold
  /// exactly and replaces the bounded bulk sum by its moment-matched normal.
  std::uint64_t exact_limit = std::uint64_t{1} << 20;
  /// Expected number of exact tail draws in hybrid mode.
  double expected_tail_draws = 256.0;
};

/// Draws N samples (or their hybrid surrogate) and returns the empirical
/// absolute mean.
double simulate_abs_mean(const HeavyTailSpec& spec, std::uint64_t N, Rng& rng,
                         const SamplerOptions& opt = {});

struct ConcentrationReport {
  double epsilon = 0.0;
  std::uint64_t N = 0;
  double bound = 1.0;
  double empirical_rate = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t failures = 0;
  /// 95% normal-approximation half-width of empirical_rate.
  double ci_half_width = 0.0;
  bool hybrid_sampler = false;
  std::vector<double> trial_means;
};

struct FailureRateOptions {
  /// Reject N below min_samples(epsilon, M, gamma).
  bool strict = false;
  SamplerOptions sampler;
};

/// Fraction of trials with |empirical_abs_mean - 1| > epsilon. Trial t uses
/// the stream derive_seed(master_seed, t).
ConcentrationReport estimate_failure_rate(const HeavyTailSpec& spec, double epsilon,
                                          std::uint64_t N, std::uint64_t trials,
                                          std::uint64_t master_seed,
                                          const FailureRateOptions& opt = {});

}  // namespace htica::heavy_tail
