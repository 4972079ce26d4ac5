#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "pathlab/geometry.hpp"

namespace pathlab {

// Closed-form heat semigroup data for a single base function f on a fixed
// manifold. `value`/`grad`/`hess` evaluate H_tau f at (tau, y); gradients are
// tangent vectors in ambient coordinates. Hessians are only supplied by the
// Euclidean families (the curved checks that would need them run in nested
// finite-difference mode instead).
struct Heat1P {
  std::function<double(double, const Vec&)> value;
  std::function<Vec(double, const Vec&)> grad;
  std::function<Mat(double, const Vec&)> hess;  // may be empty

  bool has_hessian() const { return bool(hess); }
};

// ---------------------------------------------------------------------------
// Euclidean families (generator Laplacian/2, Gaussian semigroup).
// ---------------------------------------------------------------------------

inline Heat1P euclid_linear(const Vec& a, double c = 0.0) {
  Heat1P f;
  f.value = [a, c](double, const Vec& y) { return a.dot(y) + c; };
  f.grad = [a](double, const Vec&) { return a; };
  f.hess = [a](double, const Vec&) { return Mat(Mat::Zero(a.size(), a.size())); };
  return f;
}

// General quadratic polynomial y'Ay + b'y + c; closed under the heat flow
// with H_tau f = f + tau tr(A).
inline Heat1P euclid_quadratic(const Mat& A, const Vec& b, double c = 0.0) {
  Mat As = 0.5 * (A + A.transpose());
  Heat1P f;
  f.value = [As, b, c](double tau, const Vec& y) {
    return y.dot(As * y) + b.dot(y) + c + tau * As.trace();
  };
  f.grad = [As, b](double, const Vec& y) { return Vec(2.0 * As * y + b); };
  f.hess = [As](double, const Vec&) { return Mat(2.0 * As); };
  return f;
}

inline Heat1P euclid_norm_squared(int n) {
  return euclid_quadratic(Mat::Identity(n, n), Vec::Zero(n), 0.0);
}

// f = exp(<a,y>/2), an eigenfunction: H_tau f = exp(|a|^2 tau/8) f.
inline Heat1P euclid_exp_half(const Vec& a) {
  Heat1P f;
  f.value = [a](double tau, const Vec& y) {
    return std::exp(0.5 * a.dot(y) + 0.125 * a.squaredNorm() * tau);
  };
  f.grad = [f, a](double tau, const Vec& y) { return Vec(0.5 * f.value(tau, y) * a); };
  f.hess = [f, a](double tau, const Vec& y) {
    return Mat(0.25 * f.value(tau, y) * (a * a.transpose()));
  };
  return f;
}

// Gaussian bump exp(-|y-c|^2 / (2 sigma^2)).
inline Heat1P euclid_gauss_bump(const Vec& c, double sigma) {
  double s2 = sigma * sigma;
  int n = int(c.size());
  Heat1P f;
  f.value = [c, s2, n](double tau, const Vec& y) {
    double v2 = s2 + tau;
    return std::pow(s2 / v2, 0.5 * n) * std::exp(-(y - c).squaredNorm() / (2.0 * v2));
  };
  f.grad = [f, c, s2](double tau, const Vec& y) {
    double v2 = s2 + tau;
    return Vec(-(y - c) / v2 * f.value(tau, y));
  };
  f.hess = [f, c, s2](double tau, const Vec& y) {
    double v2 = s2 + tau;
    Vec z = y - c;
    Mat I = Mat::Identity(z.size(), z.size());
    return Mat((z * z.transpose() / (v2 * v2) - I / v2) * f.value(tau, y));
  };
  return f;
}

// ---------------------------------------------------------------------------
// Sphere S^n(r) spectral families.
// ---------------------------------------------------------------------------

// Ambient-linear restriction <a,y> is a degree-1 eigenfunction:
// Delta f = -(n/r^2) f, so H_tau f = exp(-n tau / (2 r^2)) f.
inline Heat1P sphere_linear(int n, double r, const Vec& a, double c = 0.0) {
  double lam = 0.5 * n / (r * r);
  Heat1P f;
  f.value = [a, c, lam](double tau, const Vec& y) { return std::exp(-lam * tau) * a.dot(y) + c; };
  f.grad = [a, r, lam](double tau, const Vec& y) {
    Vec t = a - (a.dot(y) / (r * r)) * y;  // tangential projection
    return Vec(std::exp(-lam * tau) * t);
  };
  return f;
}

// Quadratic form y'Ay + b'y + c on S^n(r): the traceless part of A is an l=2
// harmonic, the trace part is constant on the sphere.
inline Heat1P sphere_quadratic(int n, double r, const Mat& A, const Vec& b, double c = 0.0) {
  Mat As = 0.5 * (A + A.transpose());
  int d = n + 1;
  Mat A0 = As - As.trace() / double(d) * Mat::Identity(d, d);
  double const_part = As.trace() / double(d) * r * r + c;
  double lam2 = (n + 1.0) / (r * r);      // l=2: l(l+n-1)/(2 r^2)
  double lam1 = 0.5 * n / (r * r);        // l=1
  Heat1P f;
  f.value = [A0, b, const_part, lam1, lam2](double tau, const Vec& y) {
    return std::exp(-lam2 * tau) * y.dot(A0 * y) + std::exp(-lam1 * tau) * b.dot(y) + const_part;
  };
  f.grad = [A0, b, r, lam1, lam2](double tau, const Vec& y) {
    Vec g = std::exp(-lam2 * tau) * 2.0 * (A0 * y) + std::exp(-lam1 * tau) * b;
    return Vec(g - (g.dot(y) / (r * r)) * y);
  };
  return f;
}

// Legendre polynomials and Gauss-Legendre quadrature, used by the zonal
// spectral semigroup on S^2.
inline void legendre_all(double u, int lmax, std::vector<double>& p, std::vector<double>& dp) {
  p.assign(lmax + 1, 0.0);
  dp.assign(lmax + 1, 0.0);
  p[0] = 1.0;
  if (lmax >= 1) p[1] = u;
  for (int l = 1; l < lmax; ++l) p[l + 1] = ((2 * l + 1) * u * p[l] - l * p[l - 1]) / (l + 1);
  if (lmax >= 1) dp[1] = 1.0;
  for (int l = 2; l <= lmax; ++l) dp[l] = dp[l - 2] + (2 * l - 1) * p[l - 1];
}

inline void gauss_legendre(int m, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.resize(m);
  weights.resize(m);
  for (int i = 0; i < m; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (m + 0.5));
    for (int it = 0; it < 100; ++it) {
      // evaluate P_m and P_m' at x
      double p0 = 1.0, p1 = x;
      for (int l = 1; l < m; ++l) {
        double p2 = ((2 * l + 1) * x * p1 - l * p0) / (l + 1);
        p0 = p1;
        p1 = p2;
      }
      double dp = m * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = x;
    for (int l = 1; l < m; ++l) {
      double p2 = ((2 * l + 1) * x * p1 - l * p0) / (l + 1);
      p0 = p1;
      p1 = p2;
    }
    double dp = m * (x * p1 - p0) / (x * x - 1.0);
    nodes[i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

// Zonal function f(y) = phi(<c,y>) on S^2(1), |c| = 1, expanded in Legendre
// polynomials: H_tau f = sum_l a_l exp(-l(l+1) tau/2) P_l(<c,y>).
inline Heat1P sphere_zonal(const Vec& c, const std::function<double(double)>& phi, int lmax = 64) {
  std::vector<double> nodes, weights;
  gauss_legendre(2 * lmax, nodes, weights);
  std::vector<double> coef(lmax + 1, 0.0);
  std::vector<double> p, dp;
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    legendre_all(nodes[q], lmax, p, dp);
    double fv = phi(nodes[q]) * weights[q];
    for (int l = 0; l <= lmax; ++l) coef[l] += fv * p[l] * (2 * l + 1) / 2.0;
  }
  int keep = lmax;
  double scale = 0.0;
  for (double a : coef) scale = std::max(scale, std::abs(a));
  while (keep > 1 && std::abs(coef[keep]) < 1e-15 * scale) --keep;
  coef.resize(keep + 1);

  Heat1P f;
  f.value = [c, coef](double tau, const Vec& y) {
    double u = std::clamp(c.dot(y), -1.0, 1.0);
    std::vector<double> p, dp;
    legendre_all(u, int(coef.size()) - 1, p, dp);
    double s = 0.0;
    for (int l = 0; l < int(coef.size()); ++l) s += coef[l] * std::exp(-0.5 * l * (l + 1) * tau) * p[l];
    return s;
  };
  f.grad = [c, coef](double tau, const Vec& y) {
    double u = std::clamp(c.dot(y), -1.0, 1.0);
    std::vector<double> p, dp;
    legendre_all(u, int(coef.size()) - 1, p, dp);
    double s = 0.0;
    for (int l = 0; l < int(coef.size()); ++l) s += coef[l] * std::exp(-0.5 * l * (l + 1) * tau) * dp[l];
    Vec t = c - c.dot(y) * y;  // nabla <c,y> on the unit sphere
    return Vec(s * t);
  };
  return f;
}

// ---------------------------------------------------------------------------
// Hyperbolic H^n(r): ambient Minkowski-linear <a,y>_M is an eigenfunction
// with Delta f = +(n/r^2) f.
// ---------------------------------------------------------------------------

inline double minkowski_dot(const Vec& a, const Vec& b) {
  double s = -a[0] * b[0];
  for (int i = 1; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Heat1P hyperbolic_linear(int n, double r, const Vec& a, double c = 0.0) {
  double lam = 0.5 * n / (r * r);
  Heat1P f;
  f.value = [a, c, lam](double tau, const Vec& y) {
    return std::exp(lam * tau) * minkowski_dot(a, y) + c;
  };
  f.grad = [a, r, lam](double tau, const Vec& y) {
    Vec t = a + (minkowski_dot(a, y) / (r * r)) * y;
    return Vec(std::exp(lam * tau) * t);
  };
  return f;
}

// ---------------------------------------------------------------------------
// Closed-form conditional models for cylinder functions.
// ---------------------------------------------------------------------------

struct CondQuery {
  const std::vector<Vec>* frozen;  // partition points with t_alpha < t
  int beta = 0;                    // number of frozen slots
  double t = 0.0;
  const Vec* y = nullptr;          // live point X_t
  bool want_hessian = false;
};

struct CondValue {
  double value = 0.0;
  Vec last_grad;               // tangent at y, ambient coordinates
  std::vector<Vec> past_grads; // per frozen slot
  Mat last_hess;               // only when requested and supported
  std::vector<Mat> mixed_hess; // D_y of past_grads, same indexing
  bool has_hessian = false;
};

class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;
  virtual CondValue eval(const CondQuery& q) const = 0;
};

class OnePointCond : public ConditionalModel {
 public:
  OnePointCond(Heat1P fam, double t1) : fam_(std::move(fam)), t1_(t1) {}
  CondValue eval(const CondQuery& q) const override {
    CondValue out;
    double tau = t1_ - q.t;
    if (tau < 0) throw std::logic_error("OnePointCond queried past its partition time");
    out.value = fam_.value(tau, *q.y);
    out.last_grad = fam_.grad(tau, *q.y);
    if (q.want_hessian) {
      if (!fam_.has_hessian()) throw CapabilityError("no closed-form Hessian for this function");
      out.last_hess = fam_.hess(tau, *q.y);
      out.has_hessian = true;
    }
    return out;
  }

 private:
  Heat1P fam_;
  double t1_;
};

class PairSumCond : public ConditionalModel {
 public:
  PairSumCond(Heat1P fa, double t1, Heat1P fb, double t2)
      : fa_(std::move(fa)), fb_(std::move(fb)), t1_(t1), t2_(t2) {}
  CondValue eval(const CondQuery& q) const override {
    CondValue out;
    if (q.beta == 0) {
      out.value = fa_.value(t1_ - q.t, *q.y) + fb_.value(t2_ - q.t, *q.y);
      out.last_grad = fa_.grad(t1_ - q.t, *q.y) + fb_.grad(t2_ - q.t, *q.y);
      if (q.want_hessian) {
        require_hessians();
        out.last_hess = fa_.hess(t1_ - q.t, *q.y) + fb_.hess(t2_ - q.t, *q.y);
        out.has_hessian = true;
      }
    } else {
      const Vec& x1 = (*q.frozen)[0];
      out.value = fa_.value(0.0, x1) + fb_.value(t2_ - q.t, *q.y);
      out.last_grad = fb_.grad(t2_ - q.t, *q.y);
      out.past_grads.push_back(fa_.grad(0.0, x1));
      if (q.want_hessian) {
        require_hessians();
        out.last_hess = fb_.hess(t2_ - q.t, *q.y);
        out.mixed_hess.push_back(Mat::Zero(q.y->size(), q.y->size()));
        out.has_hessian = true;
      }
    }
    return out;
  }

 private:
  void require_hessians() const {
    if (!fa_.has_hessian() || !fb_.has_hessian())
      throw CapabilityError("no closed-form Hessian for this function");
  }
  Heat1P fa_, fb_;
  double t1_, t2_;
};

// F = <a, X_{t1}> <b, X_{t2}> with linear slots, on Euclidean space or the
// sphere. Before t1 the conditional is the quadratic-family flow of
// <a,y> H_{t2-t1}<b,y>.
class PairProdLinearCond : public ConditionalModel {
 public:
  PairProdLinearCond(const ManifoldModel& m, const Vec& a, const Vec& b, double t1, double t2)
      : a_(a), b_(b), t1_(t1), t2_(t2), euclid_(m.kind() == ManifoldKind::Euclidean) {
    double dt = t2 - t1;
    if (m.kind() == ManifoldKind::Euclidean) {
      int n = m.dim();
      Mat A = 0.5 * (a * b.transpose() + b * a.transpose());
      quad_ = euclid_quadratic(A, Vec::Zero(n), 0.0);
      lb_ = euclid_linear(b);
      la_grad_scale_ = 1.0;
    } else if (m.kind() == ManifoldKind::Sphere) {
      int n = m.dim();
      double r = m.radius();
      double decay = std::exp(-0.5 * n / (r * r) * dt);
      Mat A = 0.5 * decay * (a * b.transpose() + b * a.transpose());
      quad_ = sphere_quadratic(n, r, A, Vec::Zero(n + 1), 0.0);
      lb_ = sphere_linear(n, r, b);
      la_grad_scale_ = 1.0;
      sphere_r_ = r;
    } else {
      throw CapabilityError("pair product closed form exists on euclidean/sphere only");
    }
  }

  CondValue eval(const CondQuery& q) const override {
    CondValue out;
    if (q.beta == 0) {
      out.value = quad_.value(t1_ - q.t, *q.y);
      out.last_grad = quad_.grad(t1_ - q.t, *q.y);
      if (q.want_hessian) {
        if (!quad_.has_hessian()) throw CapabilityError("no closed-form Hessian for this function");
        out.last_hess = quad_.hess(t1_ - q.t, *q.y);
        out.has_hessian = true;
      }
    } else {
      const Vec& x1 = (*q.frozen)[0];
      double av = a_.dot(x1);
      double bv = lb_.value(t2_ - q.t, *q.y);
      out.value = av * bv;
      out.last_grad = av * lb_.grad(t2_ - q.t, *q.y);
      Vec ga = euclid_ ? Vec(a_) : Vec(a_ - (a_.dot(x1) / (sphere_r_ * sphere_r_)) * x1);
      out.past_grads.push_back(Vec(bv * ga));
      if (q.want_hessian) {
        if (!euclid_) throw CapabilityError("no closed-form Hessian for this function");
        out.last_hess = Mat::Zero(q.y->size(), q.y->size());
        out.mixed_hess.push_back(Mat(ga * lb_.grad(t2_ - q.t, *q.y).transpose()));
        out.has_hessian = true;
      }
    }
    return out;
  }

 private:
  Vec a_, b_;
  double t1_, t2_;
  bool euclid_;
  double sphere_r_ = 1.0;
  double la_grad_scale_;
  Heat1P quad_, lb_;
};

}  // namespace pathlab
