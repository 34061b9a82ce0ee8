#include "fivestar/mvn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "fivestar/error.hpp"
#include "fivestar/stats.hpp"

namespace fivestar {

double inverse_normal(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0 ? -val : val;
}

namespace {

constexpr std::array<double, 12> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
constexpr int kShifts = 12;
constexpr double kPivotTol = 1e-10;

// Lower-triangular factor of a PSD matrix; columns with a vanishing pivot are zeroed.
Eigen::MatrixXd semidefinite_cholesky(const Eigen::MatrixXd& a) {
  const Eigen::Index d = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double s = a(j, j) - l.row(j).head(j).squaredNorm();
    if (s <= kPivotTol) continue;
    l(j, j) = std::sqrt(s);
    for (Eigen::Index i = j + 1; i < d; ++i) l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return l;
}

}  // namespace

MvnEstimate mvn_cdf(const Eigen::MatrixXd& correlation, const Eigen::VectorXd& upper, std::uint64_t seed,
                    double abs_error, long max_points) {
  const Eigen::Index d = correlation.rows();
  if (d == 0 || correlation.cols() != d || upper.size() != d) throw ValidationError("mvn_cdf: dimension mismatch");
  if (static_cast<std::size_t>(d) > kPrimes.size() + 1) throw ValidationError("mvn_cdf: dimension too large");

  const Eigen::MatrixXd l = semidefinite_cholesky(correlation);
  Rng rng(seed);

  auto integrand = [&](const double* w) {
    double f = 1.0;
    double y[16];
    for (Eigen::Index i = 0; i < d; ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < i; ++j) s += l(i, j) * y[j];
      if (l(i, i) > 0.0) {
        double e = normal_cdf((upper(i) - s) / l(i, i));
        f *= e;
        if (f == 0.0) return 0.0;
        if (i + 1 < d) {
          double u = std::clamp(w[i] * e, 1e-300, 1.0 - 1e-16);
          y[i] = inverse_normal(u);
        }
      } else {
        if (s > upper(i)) return 0.0;
        y[i] = 0.0;
      }
    }
    return f;
  };

  const Eigen::Index dims = std::max<Eigen::Index>(d - 1, 1);
  std::vector<double> gen(static_cast<std::size_t>(dims));
  for (Eigen::Index k = 0; k < dims; ++k) gen[static_cast<std::size_t>(k)] = std::sqrt(kPrimes[static_cast<std::size_t>(k)]);

  MvnEstimate out;
  long n = 256;
  double total_mean = 0.0;
  for (;;) {
    std::array<double, kShifts> shift_means{};
    std::vector<double> shift(static_cast<std::size_t>(dims));
    std::vector<double> w(static_cast<std::size_t>(dims));
    for (int s = 0; s < kShifts; ++s) {
      for (auto& v : shift) v = uniform01(rng);
      double acc = 0.0;
      for (long j = 1; j <= n; ++j) {
        for (std::size_t k = 0; k < w.size(); ++k) {
          double x = std::fmod(static_cast<double>(j) * gen[k] + shift[k], 1.0);
          w[k] = std::abs(2.0 * x - 1.0);  // baker's transform
        }
        acc += integrand(w.data());
      }
      shift_means[static_cast<std::size_t>(s)] = acc / static_cast<double>(n);
    }
    double m = 0.0;
    for (double v : shift_means) m += v;
    m /= kShifts;
    double var = 0.0;
    for (double v : shift_means) var += (v - m) * (v - m);
    var /= static_cast<double>(kShifts * (kShifts - 1));
    total_mean = m;
    out.error = 3.0 * std::sqrt(var);
    out.points = n * kShifts;
    if (out.error <= abs_error || n >= max_points) break;
    n *= 2;
  }
  out.value = std::clamp(total_mean, 0.0, 1.0);
  return out;
}

}  // namespace fivestar
