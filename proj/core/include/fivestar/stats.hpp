#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace fivestar {

/// Standard normal density.
double normal_pdf(double z);
/// Standard normal CDF, Phi(z).
double normal_cdf(double z);
/// Upper tail 1 - Phi(z), accurate for large z.
double normal_sf(double z);
/// Inverse of Phi. p must lie in (0, 1).
double normal_quantile(double p);
/// Upper tail of the chi-square distribution with `df` degrees of freedom.
double chisq_sf(double x, double df);

/// Deterministic 64-bit mixer used to derive independent seeds from (seed, index) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits. Independent of the standard
/// library's distribution implementations, so streams are reproducible across toolchains.
double uniform01(Rng& rng);
/// Standard normal draw (polar Box-Muller on uniform01).
double standard_normal(Rng& rng);
/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);
/// In-place Fisher-Yates shuffle driven by uniform_index.
template <class T>
void shuffle(std::vector<T>& values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(values[i - 1], values[j]);
  }
}

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator).
double sample_sd(std::span<const double> x);
/// Linear-interpolated quantile (type 7).
double quantile(std::vector<double> x, double prob);

}  // namespace fivestar
