#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pathlab {

// Manifolds are represented in ambient coordinates (n+1 for the sphere and
// the hyperboloid), so the stack capacity is one above the largest intrinsic
// dimension we support.
inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Compensated (Neumaier) summation. Reductions over path ensembles run in a
// fixed chunk order, so results are identical regardless of worker count;
// compensation keeps the fixed order from accumulating drift.
class NeumaierSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  void merge(const NeumaierSum& other) {
    add(other.sum_);
    comp_ += other.comp_;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Streaming mean / variance with deterministic merge.
class RunningStat {
 public:
  void add(double x) {
    n_ += 1;
    sum_.add(x);
    sumsq_.add(x * x);
  }
  void merge(const RunningStat& o) {
    n_ += o.n_;
    sum_.merge(o.sum_);
    sumsq_.merge(o.sumsq_);
  }
  std::int64_t count() const { return n_; }
  double mean() const { return n_ > 0 ? sum_.value() / double(n_) : 0.0; }
  double variance() const {
    if (n_ < 2) return 0.0;
    double m = mean();
    double v = (sumsq_.value() - double(n_) * m * m) / double(n_ - 1);
    return std::max(v, 0.0);
  }
  double stddev() const { return std::sqrt(variance()); }
  double stderror() const { return n_ > 0 ? stddev() / std::sqrt(double(n_)) : 0.0; }

 private:
  std::int64_t n_ = 0;
  NeumaierSum sum_;
  NeumaierSum sumsq_;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
  double width() const { return hi - lo; }
};

// Inverse standard normal CDF, Acklam's rational approximation refined by one
// Halley step. Relative error below 1e-13 on (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement against erfc.
  double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

// Two-sided critical value at confidence `level` (e.g. 0.99 -> 2.5758...).
inline double z_two_sided(double level) { return normal_quantile(0.5 + level / 2.0); }
// One-sided critical value at significance alpha (e.g. 0.01 -> 2.3263...).
inline double z_one_sided(double alpha) { return normal_quantile(1.0 - alpha); }

// Bias-corrected Euclidean norm of an estimated mean vector.
// E|M|^2 = |mu|^2 + tr(Cov(M)), and to first order
// E|M| = |mu| + (tr(Cov) - M'Cov M/|M|^2) / (2|M|). `cov_of_mean` is the
// covariance of the mean estimator itself.
inline double norm_bias_corrected(const Vec& mean, const Mat& cov_of_mean) {
  double nrm = mean.norm();
  double tr = cov_of_mean.trace();
  if (nrm < 1e-14) {
    // Near zero the delta method degenerates; fall back to sqrt of the
    // unbiased |mu|^2 estimate, clamped at zero.
    double sq = mean.squaredNorm() - tr;
    return sq > 0.0 ? std::sqrt(sq) : 0.0;
  }
  double along = mean.dot(cov_of_mean * mean) / (nrm * nrm);
  double corrected = nrm - (tr - along) / (2.0 * nrm);
  return std::max(corrected, 0.0);
}

// FNV-1a, used for config hashing (stable across platforms and runs).
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace pathlab
