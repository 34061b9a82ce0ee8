#include "fivestar/amalgam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "fivestar/error.hpp"
#include "fivestar/stats.hpp"

namespace fivestar {

std::string to_string(Track t) { return t == Track::tr ? "TR" : "HR"; }
std::string to_string(WeightScheme w) { return w == WeightScheme::by_n ? "by_n" : "by_n_over_sd"; }

CombinedZ combine_z(std::span<const StratumEstimate> strata) {
  if (strata.empty()) throw ValidationError("combine_z: no usable strata");
  double num_i = 0.0, den_i = 0.0, num_ii = 0.0, n2 = 0.0, cross = 0.0;
  for (const auto& s : strata) {
    if (!(s.variance > 0.0) || !std::isfinite(s.delta) || !(s.n > 0.0))
      throw ValidationError("combine_z: stratum " + std::to_string(s.stratum) + " is not usable");
    const double sd = std::sqrt(s.variance);
    num_i += s.n * s.delta;
    den_i += s.n * s.n * s.variance;
    num_ii += s.n * s.delta / sd;
    n2 += s.n * s.n;
    cross += s.n * s.n * sd;
  }
  CombinedZ out;
  out.z_i = num_i / std::sqrt(den_i);
  out.z_ii = num_ii / std::sqrt(n2);
  out.rho = std::min(1.0, cross / (std::sqrt(den_i) * std::sqrt(n2)));
  return out;
}

namespace {

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("correlation must lie in [0, 1]");
}

// (1 / 2pi) * integral over [0, asin rho] of exp(-z^2 / (1 + sin t)); equals Phi2(z, z; rho) - Phi(z)^2
double diagonal_excess(double z, double rho) {
  if (rho == 0.0) return 0.0;
  const double top = std::asin(rho);
  auto f = [z](double t) { return std::exp(-z * z / (1.0 + std::sin(t))); };
  double error = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, top, 12, 1e-13, &error);
  return value / (2.0 * std::numbers::pi);
}

}  // namespace

double bivariate_normal_equal_cdf(double z, double rho) {
  check_rho(rho);
  if (rho == 1.0) return normal_cdf(z);
  const double phi = normal_cdf(z);
  return phi * phi + diagonal_excess(z, rho);
}

double zmax_density(double z, double rho) {
  check_rho(rho);
  return 2.0 * normal_pdf(z) * normal_cdf(std::sqrt((1.0 - rho) / (1.0 + rho)) * z);
}

double zmax_p(double z, double rho) {
  check_rho(rho);
  if (rho == 1.0) return normal_sf(z);
  // 1 - Phi(z)^2 written through the upper tail to keep precision for large z
  const double q = normal_sf(z);
  return std::max(0.0, q * (2.0 - q) - diagonal_excess(z, rho));
}

double zmax_quantile(double alpha, double rho) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("zmax_quantile: alpha must lie in (0, 1)");
  check_rho(rho);
  if (rho == 1.0) return normal_quantile(1.0 - alpha);
  auto residual = [&](double z) { return zmax_p(z, rho) - alpha; };
  // P(Z > z) <= P(max > z) <= 2 P(Z > z) brackets the root
  double lo = normal_quantile(1.0 - alpha) - 1e-6;
  double hi = alpha < 0.5 ? normal_quantile(1.0 - alpha / 2.0) + 1e-6 : lo + 10.0;
  while (residual(lo) < 0.0) lo -= 1.0;
  while (residual(hi) > 0.0) hi += 1.0;
  std::uintmax_t iterations = 200;
  auto bracket = boost::math::tools::toms748_solve(residual, lo, hi, boost::math::tools::eps_tolerance<double>(50),
                                                   iterations);
  double z = 0.5 * (bracket.first + bracket.second);
  for (int k = 0; k < 3; ++k) {
    const double f = zmax_density(z, rho);
    if (f <= 0.0) break;
    const double next = z + residual(z) / f;
    if (!std::isfinite(next)) break;
    z = next;
  }
  return z;
}

AmalgamResult amalgamate(std::span<const StratumEstimate> strata, Track track, double alpha, double test_level) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("amalgamate: alpha must lie in (0, 1)");
  if (!(test_level > 0.0 && test_level < 1.0)) throw ValidationError("amalgamate: test level must lie in (0, 1)");
  const CombinedZ z = combine_z(strata);
  AmalgamResult out;
  out.track = track;
  out.alpha = alpha;
  out.test_level = test_level;
  out.z_i = z.z_i;
  out.z_ii = z.z_ii;
  out.rho = z.rho;
  out.scheme = z.z_ii > z.z_i ? WeightScheme::by_n_over_sd : WeightScheme::by_n;
  out.z_max = std::max(z.z_i, z.z_ii);
  out.p = zmax_p(out.z_max, out.rho);
  out.reject = out.p < test_level;

  double sw = 0.0, swd = 0.0, sw2v = 0.0;
  for (const auto& s : strata) {
    const double w = out.scheme == WeightScheme::by_n ? s.n : s.n / std::sqrt(s.variance);
    sw += w;
    swd += w * s.delta;
    sw2v += w * w * s.variance;
    out.strata_used.push_back(s.stratum);
  }
  out.delta = swd / sw;
  out.variance = sw2v / (sw * sw);
  out.critical = zmax_quantile(alpha / 2.0, out.rho);
  const double half = out.critical * std::sqrt(out.variance);
  out.lower = out.delta - half;
  out.upper = out.delta + half;
  if (track == Track::tr) {
    out.estimate = std::exp(out.delta);
    out.estimate_lower = std::exp(out.lower);
    out.estimate_upper = std::exp(out.upper);
  } else {
    out.estimate = std::exp(-out.delta);
    out.estimate_lower = std::exp(-out.upper);
    out.estimate_upper = std::exp(-out.lower);
  }
  return out;
}

AmalgamResult amalgamate_tr(std::span<const StratumEffect> effects, double alpha, double test_level) {
  std::vector<StratumEstimate> usable;
  std::vector<int> excluded;
  for (const auto& e : effects) {
    if (e.degenerate || !(e.variance > 0.0)) {
      excluded.push_back(e.stratum);
      continue;
    }
    usable.push_back({e.stratum, static_cast<double>(e.n), e.delta, e.variance});
  }
  if (usable.empty()) throw NumericalError("time-ratio amalgamation: every stratum is degenerate");
  auto out = amalgamate(usable, Track::tr, alpha, test_level);
  out.strata_excluded = excluded;
  return out;
}

AmalgamResult amalgamate_hr(std::span<const StratumEffect> effects, double alpha, double test_level) {
  std::vector<StratumEstimate> usable;
  std::vector<int> excluded;
  for (const auto& e : effects) {
    if (e.degenerate || !e.hr.available || !(e.hr.se > 0.0)) {
      excluded.push_back(e.stratum);
      continue;
    }
    usable.push_back({e.stratum, static_cast<double>(e.n), -e.hr.log_hr, e.hr.se * e.hr.se});
  }
  if (usable.empty()) throw NumericalError("hazard-ratio amalgamation: every stratum is degenerate");
  auto out = amalgamate(usable, Track::hr, alpha, test_level);
  out.strata_excluded = excluded;
  return out;
}

nlohmann::json to_json(const AmalgamResult& r) {
  nlohmann::json j;
  j["track"] = to_string(r.track);
  j["z_i"] = r.z_i;
  j["z_ii"] = r.z_ii;
  j["z_max"] = r.z_max;
  j["rho"] = r.rho;
  j["p_one_tailed"] = r.p;
  j["reject"] = r.reject;
  j["test_level"] = r.test_level;
  j["weight_scheme"] = to_string(r.scheme);
  j["delta"] = r.delta;
  j["v_delta"] = r.variance;
  j["critical_value"] = r.critical;
  j["delta_ci"] = {r.lower, r.upper};
  j[r.track == Track::tr ? "time_ratio" : "hazard_ratio"] = r.estimate;
  j["ci"] = {r.estimate_lower, r.estimate_upper};
  j["alpha"] = r.alpha;
  j["strata_used"] = r.strata_used;
  j["strata_excluded"] = r.strata_excluded;
  return j;
}

}  // namespace fivestar
