#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pathlab/pathsim.hpp"
#include "pathlab/semigroup.hpp"

namespace pathlab {

// F(gamma) = f(gamma(t_1), ..., gamma(t_N)). `partial` returns the
// Riemannian gradient of f in its alpha-th slot (a tangent vector at the
// alpha-th point, in the manifold's point coordinates). `cond` is an optional
// registered closed form for conditionals; estimators fall back to nested
// Monte Carlo without it.
struct CylinderFunction {
  std::string name;
  std::vector<double> times;
  std::function<double(const std::vector<Vec>&)> value;
  std::function<Vec(int, const std::vector<Vec>&)> partial;
  std::shared_ptr<const ConditionalModel> cond;
  std::shared_ptr<const ConditionalModel> cond_sq;  // closed form for F^2, when available
  bool positive = false;

  int slots() const { return int(times.size()); }
  double horizon() const { return times.back(); }
  bool has_partials() const { return bool(partial); }
  bool has_closed_form() const { return bool(cond); }
};

// The points (and frames) of one path at the partition times of a cylinder
// function. Frames realize stochastic parallel transport: the coordinates of
// a tangent vector w at gamma(t_alpha) in frame U_alpha are the coordinates
// of P_{t_alpha} w in the initial frame.
struct TupleView {
  std::vector<Vec> points;
  std::vector<Mat> frames;
};

inline TupleView tuple_view(const CylinderFunction& F, const FramedPath& path) {
  TupleView tv;
  tv.points.reserve(F.slots());
  tv.frames.reserve(F.slots());
  for (double t : F.times) {
    int k = path.index_of(t);
    tv.points.push_back(path.points[k]);
    tv.frames.push_back(path.frames[k]);
  }
  return tv;
}

inline double eval(const CylinderFunction& F, const FramedPath& path) {
  return F.value(tuple_view(F, path).points);
}

// Initial-frame coordinates of P_{t_alpha} grad^(alpha) f for every slot.
// All parallel-gradient quantities assemble from these.
inline std::vector<Vec> slot_gradients(const ManifoldModel& m, const CylinderFunction& F,
                                       const TupleView& tv) {
  if (!F.has_partials()) throw CapabilityError("cylinder function has no registered partials");
  int n = m.dim();
  std::vector<Vec> out(F.slots(), Vec::Zero(n));
  for (int a = 0; a < F.slots(); ++a) {
    Vec g = F.partial(a, tv.points);
    for (int i = 0; i < n; ++i) out[a][i] = m.metric_eval(tv.points[a], tv.frames[a].col(i), g);
  }
  return out;
}

// nabla_s^par F = sum_{t_alpha >= s} P_{t_alpha} grad^(alpha) f, expressed in
// the initial frame. Piecewise constant in s on each (t_{alpha-1}, t_alpha],
// zero for s > t_N.
inline Vec parallel_gradient(const ManifoldModel& m, const CylinderFunction& F, const TupleView& tv,
                             double s) {
  std::vector<Vec> slots = slot_gradients(m, F, tv);
  Vec out = Vec::Zero(m.dim());
  for (int a = 0; a < F.slots(); ++a)
    if (F.times[a] >= s) out += slots[a];
  return out;
}

inline Vec parallel_gradient(const ManifoldModel& m, const CylinderFunction& F,
                             const FramedPath& path, double s) {
  return parallel_gradient(m, F, tuple_view(F, path), s);
}

// Suffix sums of slot gradients: suffix[a] = nabla_s^par F for
// s in (t_{a-1}, t_a]. Shared by every weighted time integral below.
inline std::vector<Vec> suffix_gradients(const std::vector<Vec>& slots) {
  std::vector<Vec> suffix(slots.size());
  if (slots.empty()) return suffix;
  suffix.back() = slots.back();
  for (int a = int(slots.size()) - 2; a >= 0; --a) suffix[a] = suffix[a + 1] + slots[a];
  return suffix;
}

// |nabla^H F|^2 = int_0^infty |nabla_s^par F|^2 ds as the exact sum over
// partition intervals (the integrand is constant on each of them).
inline double malliavin_norm_sq(const ManifoldModel& m, const CylinderFunction& F,
                                const TupleView& tv) {
  std::vector<Vec> suffix = suffix_gradients(slot_gradients(m, F, tv));
  double out = 0.0, prev = 0.0;
  for (int a = 0; a < int(suffix.size()); ++a) {
    out += (F.times[a] - prev) * suffix[a].squaredNorm();
    prev = F.times[a];
  }
  return out;
}

inline double malliavin_norm_sq(const ManifoldModel& m, const CylinderFunction& F,
                                const FramedPath& path) {
  return malliavin_norm_sq(m, F, tuple_view(F, path));
}

// int_lo^hi w(s) |nabla_s^par F|^p ds, exact in s given a closed-form segment
// integral of the weight. Used by the exponential and cosh kernels of the
// gradient, spectral-gap and log-Sobolev estimates.
inline double weighted_gradient_integral(const CylinderFunction& F, const std::vector<Vec>& suffix,
                                         double lo, double hi, double p,
                                         const std::function<double(double, double)>& segment) {
  double out = 0.0, prev = 0.0;
  for (int a = 0; a < int(suffix.size()); ++a) {
    double a0 = std::max(prev, lo), a1 = std::min(F.times[a], hi);
    if (a1 > a0) {
      double nrm = suffix[a].norm();
      out += segment(a0, a1) * (p == 2.0 ? nrm * nrm : std::pow(nrm, p));
    }
    prev = F.times[a];
  }
  return out;
}

// Segment integrals for the weights that appear in the estimates.
inline std::function<double(double, double)> weight_const() {
  return [](double a, double b) { return b - a; };
}
// integral of exp(k (r - c)) dr
inline std::function<double(double, double)> weight_exp(double k, double c) {
  return [k, c](double a, double b) {
    if (k == 0.0) return b - a;
    return (std::exp(k * (b - c)) - std::exp(k * (a - c))) / k;
  };
}
// integral of cosh(k (r - c)) dr
inline std::function<double(double, double)> weight_cosh(double k, double c) {
  return [k, c](double a, double b) {
    if (k == 0.0) return b - a;
    return (std::sinh(k * (b - c)) - std::sinh(k * (a - c))) / k;
  };
}

// ---------------------------------------------------------------------------
// Built-in test functions.
// ---------------------------------------------------------------------------

namespace detail {

// Quintic cutoff: 1 on [0, w0], 0 beyond w1.
struct Cutoff {
  double w0, w1;
  double value(double r) const {
    if (r <= w0) return 1.0;
    if (r >= w1) return 0.0;
    double x = (r - w0) / (w1 - w0);
    return 1.0 - x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
  }
  double deriv(double r) const {
    if (r <= w0 || r >= w1) return 0.0;
    double x = (r - w0) / (w1 - w0);
    return -30.0 * x * x * (x - 1.0) * (x - 1.0) / (w1 - w0);
  }
};

}  // namespace detail

// The lower-bound test function of the Ricci recovery construction:
// f1(y) = <exp_x^{-1}(y), v> cutoff(d(x,y)), which satisfies f1(x)=0,
// grad f1(x)=v and vanishing Hessian at x. On charts the inverse exponential
// is replaced by second-order normal coordinates.
class RadialLinearFunction {
 public:
  RadialLinearFunction(const ManifoldModel& m, const Vec& x, const Vec& v, double w0, double w1)
      : m_(m), x_(x), v_(v), cut_{w0, w1} {
    if (m.kind() == ManifoldKind::Chart) {
      gamma_x_ = m.christoffels_at(x);
      gx_ = m.metric_at(x);
    }
  }

  double value(const Vec& y) const {
    switch (m_.kind()) {
      case ManifoldKind::Euclidean: {
        Vec u = y - x_;
        return u.dot(v_) * cut_.value(u.norm());
      }
      case ManifoldKind::Sphere:
      case ManifoldKind::Hyperbolic: {
        Vec u = m_.log_map(x_, y);
        return m_.metric_eval(x_, u, v_) * cut_.value(m_.norm(x_, u));
      }
      case ManifoldKind::Chart: {
        Vec u = normal_coords(y);
        return u.dot(gx_ * v_) * cut_.value(std::sqrt(u.dot(gx_ * u)));
      }
    }
    return 0.0;
  }

  // Riemannian gradient at y.
  Vec grad(const Vec& y) const {
    switch (m_.kind()) {
      case ManifoldKind::Euclidean: {
        Vec u = y - x_;
        double r = u.norm();
        double chi = cut_.value(r), dchi = cut_.deriv(r);
        Vec g = chi * v_;
        if (dchi != 0.0 && r > 0) g += (u.dot(v_) * dchi / r) * u;
        return g;
      }
      case ManifoldKind::Sphere:
        return grad_sphere(y);
      case ManifoldKind::Hyperbolic:
        return grad_hyperbolic(y);
      case ManifoldKind::Chart:
        return grad_chart(y);
    }
    return Vec::Zero(y.size());
  }

 private:
  Vec normal_coords(const Vec& y) const {
    Vec u = y - x_;
    Vec u2 = u;
    for (int k = 0; k < m_.dim(); ++k) {
      double corr = 0.0;
      for (int i = 0; i < m_.dim(); ++i)
        for (int j = 0; j < m_.dim(); ++j) corr += gamma_x_.at(k, i, j) * u[i] * u[j];
      u2[k] -= 0.5 * corr;
    }
    return u2;
  }

  Vec grad_sphere(const Vec& y) const {
    double r = m_.radius(), r2 = r * r;
    double c = std::clamp(x_.dot(y) / r2, -1.0, 1.0);
    double th = std::acos(c);
    double s = std::sin(th);
    double psi = r * th;  // geodesic distance
    double chi = cut_.value(psi);
    double dchi = cut_.deriv(psi);
    if (chi == 0.0 && dchi == 0.0) return Vec::Zero(y.size());
    double yv = y.dot(v_);
    double g_th_s = th < 1e-4 ? 1.0 + th * th / 6.0 : th / s;              // th/sin th
    double coef = th < 1e-3 ? (1.0 / 3.0 + 2.0 * th * th / 15.0)
                            : (s - th * c) / (s * s * s);                  // d(th/s)/dth * (-1/s)
    Vec grad_l = g_th_s * v_ - (yv * coef / r2) * x_;
    Vec g = chi * grad_l;
    if (dchi != 0.0 && s > 1e-12) {
      double lval = g_th_s * yv;
      Vec grad_psi = -x_ / (r * s);
      g += lval * dchi * grad_psi;
    }
    return m_.tangent_project(y, g);
  }

  Vec grad_hyperbolic(const Vec& y) const {
    double r = m_.radius(), r2 = r * r;
    double c = std::max(-minkowski_dot(x_, y) / r2, 1.0);
    double th = std::acosh(c);
    double s = std::sinh(th);
    double psi = r * th;
    double chi = cut_.value(psi);
    double dchi = cut_.deriv(psi);
    if (chi == 0.0 && dchi == 0.0) return Vec::Zero(y.size());
    double yv = minkowski_dot(y, v_);
    double g_th_s = th < 1e-4 ? 1.0 - th * th / 6.0 : th / s;
    double coef = th < 1e-3 ? (-1.0 / 3.0 + 2.0 * th * th / 15.0)
                            : (s - th * std::cosh(th)) / (s * s * s);
    Vec grad_l = g_th_s * v_ - (yv * coef / r2) * x_;
    Vec g = chi * grad_l;
    if (dchi != 0.0 && s > 1e-12) {
      double lval = g_th_s * yv;
      Vec grad_psi = -x_ / (r * s);
      g += lval * dchi * grad_psi;
    }
    return m_.tangent_project(y, g);
  }

  Vec grad_chart(const Vec& y) const {
    int n = m_.dim();
    Vec u = normal_coords(y);
    Vec Gv = gx_ * v_;
    double rho2 = u.dot(gx_ * u);
    double rho = std::sqrt(std::max(rho2, 0.0));
    double chi = cut_.value(rho), dchi = cut_.deriv(rho);
    if (chi == 0.0 && dchi == 0.0) return Vec::Zero(n);
    // du^k/dy^j = delta_kj - Gamma^k_{jl}(x) (y-x)^l
    Vec w = y - x_;
    Mat J(n, n);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) {
        double gja = 0.0;
        for (int l = 0; l < n; ++l) gja += gamma_x_.at(k, j, l) * w[l];
        J(k, j) = (k == j ? 1.0 : 0.0) - gja;
      }
    Vec dl = J.transpose() * Gv;  // differential of <u, v>_{g(x)}
    Vec df = chi * dl;
    if (dchi != 0.0 && rho > 1e-12) {
      Vec drho = J.transpose() * (gx_ * u) / rho;
      df += (u.dot(Gv)) * dchi * drho;
    }
    return m_.metric_at(y).llt().solve(df);  // raise the index at y
  }

  ManifoldModel m_;
  Vec x_, v_;
  detail::Cutoff cut_;
  Christoffels gamma_x_;
  Mat gx_;
};

// Cutoff window for the recovery test functions. Brownian paths reach
// geodesic distance ~sqrt(2 n eps) by time eps, so the window must sit well
// outside that for the largest eps in use or the cutoff contaminates the
// O(eps) coefficient. On spheres the window is capped below the antipode.
struct S58Options {
  double cutoff_inner = 1.3;
  double cutoff_outer = 2.1;

  S58Options clipped_for(const ManifoldModel& m) const {
    S58Options o = *this;
    if (m.kind() == ManifoldKind::Sphere) {
      double inj = M_PI * m.radius();
      o.cutoff_inner = std::min(o.cutoff_inner, 0.40 * inj);
      o.cutoff_outer = std::min(o.cutoff_outer, 0.65 * inj);
    }
    return o;
  }
};

// F_eps(gamma) = f1(gamma(eps)).
inline CylinderFunction make_s58_one_point(const ManifoldModel& m, const Vec& x, const Vec& v,
                                           double eps, const S58Options& opt_in = {}) {
  S58Options opt = opt_in.clipped_for(m);
  auto f1 = std::make_shared<RadialLinearFunction>(m, x, v, opt.cutoff_inner, opt.cutoff_outer);
  CylinderFunction F;
  F.name = "s58_one";
  F.times = {eps};
  F.value = [f1](const std::vector<Vec>& pts) { return f1->value(pts[0]); };
  F.partial = [f1](int, const std::vector<Vec>& pts) { return f1->grad(pts[0]); };
  return F;
}

// F_eps(gamma) = f2(gamma(0), gamma(eps)) with f2(y,z) = 2 f1(y) - f1(z), the
// two-point construction whose expansion carries the opposite Ricci sign.
inline CylinderFunction make_s58_two_point(const ManifoldModel& m, const Vec& x, const Vec& v,
                                           double eps, const S58Options& opt_in = {}) {
  S58Options opt = opt_in.clipped_for(m);
  auto f1 = std::make_shared<RadialLinearFunction>(m, x, v, opt.cutoff_inner, opt.cutoff_outer);
  CylinderFunction F;
  F.name = "s58_two";
  F.times = {0.0, eps};
  F.value = [f1](const std::vector<Vec>& pts) { return 2.0 * f1->value(pts[0]) - f1->value(pts[1]); };
  F.partial = [f1](int a, const std::vector<Vec>& pts) {
    return Vec(a == 0 ? Vec(2.0 * f1->grad(pts[0])) : Vec(-f1->grad(pts[1])));
  };
  return F;
}

// ---------------------------------------------------------------------------
// Named registry used by experiment configurations.
// ---------------------------------------------------------------------------

struct BasePoint {
  Vec x;
  Mat frame;
};

inline BasePoint default_base_point(const ManifoldModel& m) {
  int d = m.ambient_dim();
  Vec x = Vec::Zero(d);
  if (m.kind() == ManifoldKind::Sphere) x[d - 1] = m.radius();
  if (m.kind() == ManifoldKind::Hyperbolic) x[0] = m.radius();
  FramePoint fp = m.canonical_frame(x);
  return BasePoint{fp.point, fp.frame};
}

inline CylinderFunction make_one_point(const std::string& name, double T, Heat1P fam,
                                       bool positive = false) {
  CylinderFunction F;
  F.name = name;
  F.times = {T};
  F.value = [fam](const std::vector<Vec>& pts) { return fam.value(0.0, pts[0]); };
  F.partial = [fam](int, const std::vector<Vec>& pts) { return fam.grad(0.0, pts[0]); };
  F.cond = std::make_shared<OnePointCond>(fam, T);
  F.positive = positive;
  return F;
}

// One-point function without a registered closed form (nested estimation).
inline CylinderFunction make_one_point_raw(const std::string& name, double T,
                                           std::function<double(const Vec&)> value,
                                           std::function<Vec(const Vec&)> grad,
                                           bool positive = false) {
  CylinderFunction F;
  F.name = name;
  F.times = {T};
  F.value = [value](const std::vector<Vec>& pts) { return value(pts[0]); };
  F.partial = [grad](int, const std::vector<Vec>& pts) { return grad(pts[0]); };
  F.positive = positive;
  return F;
}

// Builds one of the named test functions on the given manifold. Supported
// names: linear, quad, bump, exp, pair_sum, pair_prod, s58_two.
inline CylinderFunction build_function(const ManifoldModel& m, const std::string& name, double T,
                                       double s58_eps = 0.05) {
  BasePoint base = default_base_point(m);
  int n = m.dim(), d = m.ambient_dim();
  Vec a = base.frame.col(0);
  Vec a2 = n > 1 ? Vec(base.frame.col(1)) : a;

  if (name == "linear") {
    switch (m.kind()) {
      case ManifoldKind::Euclidean: return make_one_point(name, T, euclid_linear(a));
      case ManifoldKind::Sphere: return make_one_point(name, T, sphere_linear(n, m.radius(), a));
      case ManifoldKind::Hyperbolic: {
        // Minkowski pairing: use a spacelike direction.
        return make_one_point(name, T, hyperbolic_linear(n, m.radius(), a));
      }
      case ManifoldKind::Chart: {
        Vec x0 = base.x;
        auto f1 = std::make_shared<RadialLinearFunction>(m, x0, a, 1.0, 1.6);
        return make_one_point_raw(name, T,
                                  [f1](const Vec& y) { return f1->value(y); },
                                  [f1](const Vec& y) { return f1->grad(y); });
      }
    }
  }
  if (name == "quad") {
    switch (m.kind()) {
      case ManifoldKind::Euclidean: return make_one_point(name, T, euclid_norm_squared(n));
      case ManifoldKind::Sphere:
        return make_one_point(name, T, sphere_quadratic(n, m.radius(), Mat(a * a.transpose()),
                                                        Vec::Zero(d), 0.0));
      case ManifoldKind::Hyperbolic: {
        Vec av = a;
        double r2 = m.radius() * m.radius();
        return make_one_point_raw(
            name, T, [av](const Vec& y) { double u = minkowski_dot(av, y); return u * u; },
            [av, r2](const Vec& y) {
              double u = minkowski_dot(av, y);
              Vec g = 2.0 * u * av;
              return Vec(g + (minkowski_dot(g, y) / r2) * y);
            });
      }
      default: break;
    }
  }
  if (name == "bump") {
    switch (m.kind()) {
      case ManifoldKind::Euclidean: {
        Vec c = base.x;
        return make_one_point(name, T, euclid_gauss_bump(c, 0.8), true);
      }
      case ManifoldKind::Sphere: {
        if (n == 2 && std::abs(m.radius() - 1.0) < 1e-12) {
          Vec c = base.x;
          double s2 = 0.5;
          auto phi = [s2](double u) { return std::exp(-(1.0 - u) / s2); };
          return make_one_point(name, T, sphere_zonal(c, phi), true);
        }
        Vec c = base.x;
        double r2 = m.radius() * m.radius(), s2 = 0.5 * r2;
        return make_one_point_raw(
            name, T, [c, r2, s2](const Vec& y) { return std::exp(-(1.0 - c.dot(y) / r2) / s2); },
            [c, r2, s2](const Vec& y) {
              double f = std::exp(-(1.0 - c.dot(y) / r2) / s2);
              Vec g = f / s2 / r2 * c;
              return Vec(g - (g.dot(y) / r2) * y);
            },
            true);
      }
      case ManifoldKind::Hyperbolic: {
        Vec c = base.x;
        double r2 = m.radius() * m.radius(), s2 = 0.5;
        // w = -<c,y>_M / r^2 = cosh(d/r); f = exp(-(w-1)/s2)
        return make_one_point_raw(
            name, T,
            [c, r2, s2](const Vec& y) { return std::exp(-(-minkowski_dot(c, y) / r2 - 1.0) / s2); },
            [c, r2, s2](const Vec& y) {
              double f = std::exp(-(-minkowski_dot(c, y) / r2 - 1.0) / s2);
              Vec g = f / (s2 * r2) * c;
              return Vec(g + (minkowski_dot(g, y) / r2) * y);
            },
            true);
      }
      case ManifoldKind::Chart: {
        Vec c = base.x;
        double s2 = 0.5;
        auto metric = std::make_shared<ManifoldModel>(m);
        return make_one_point_raw(
            name, T, [c, s2](const Vec& y) { return std::exp(-(y - c).squaredNorm() / (2 * s2)); },
            [c, s2, metric](const Vec& y) {
              double f = std::exp(-(y - c).squaredNorm() / (2 * s2));
              Vec df = -f / s2 * (y - c);
              return Vec(metric->metric_at(y).llt().solve(df));
            },
            true);
      }
    }
  }
  if (name == "exp") {
    if (m.kind() == ManifoldKind::Euclidean) {
      CylinderFunction F = make_one_point(name, T, euclid_exp_half(a), true);
      // F^2 = exp(<2a,y>/2): registered for the log-Sobolev Hessian check.
      F.cond_sq = std::make_shared<OnePointCond>(euclid_exp_half(Vec(2.0 * a)), T);
      return F;
    }
    throw ConfigError("function 'exp' is registered on euclidean space only");
  }
  if (name == "pair_sum") {
    double t1 = T / 2;
    CylinderFunction fa = build_function(m, "linear", t1);
    CylinderFunction fb = build_function(m, "bump", T);
    CylinderFunction F;
    F.name = name;
    F.times = {t1, T};
    F.value = [fa, fb](const std::vector<Vec>& pts) {
      std::vector<Vec> p1{pts[0]}, p2{pts[1]};
      return fa.value(p1) + fb.value(p2);
    };
    F.partial = [fa, fb](int al, const std::vector<Vec>& pts) {
      std::vector<Vec> p{pts[al]};
      return al == 0 ? fa.partial(0, p) : fb.partial(0, p);
    };
    if (m.kind() == ManifoldKind::Euclidean) {
      F.cond = std::make_shared<PairSumCond>(euclid_linear(a), t1,
                                             euclid_gauss_bump(base.x, 0.8), T);
    } else if (m.kind() == ManifoldKind::Sphere && n == 2 && std::abs(m.radius() - 1.0) < 1e-12) {
      double s2 = 0.5;
      auto phi = [s2](double u) { return std::exp(-(1.0 - u) / s2); };
      F.cond = std::make_shared<PairSumCond>(sphere_linear(n, m.radius(), a), t1,
                                             sphere_zonal(base.x, phi), T);
    }
    return F;
  }
  if (name == "pair_prod") {
    double t1 = T / 2;
    CylinderFunction F;
    F.name = name;
    F.times = {t1, T};
    bool mink = m.kind() == ManifoldKind::Hyperbolic;
    Vec va = a, vb = a2;
    F.value = [va, vb, mink](const std::vector<Vec>& pts) {
      double u = mink ? minkowski_dot(va, pts[0]) : va.dot(pts[0]);
      double w = mink ? minkowski_dot(vb, pts[1]) : vb.dot(pts[1]);
      return u * w;
    };
    ManifoldKind kind = m.kind();
    double pr2 = m.kind() == ManifoldKind::Euclidean || m.kind() == ManifoldKind::Chart
                     ? 1.0
                     : m.radius() * m.radius();
    F.partial = [va, vb, mink, kind, pr2](int al, const std::vector<Vec>& pts) {
      double u = mink ? minkowski_dot(va, pts[0]) : va.dot(pts[0]);
      double w = mink ? minkowski_dot(vb, pts[1]) : vb.dot(pts[1]);
      Vec g = al == 0 ? Vec(w * va) : Vec(u * vb);
      const Vec& y = pts[al];
      if (kind == ManifoldKind::Sphere) return Vec(g - (g.dot(y) / pr2) * y);
      if (kind == ManifoldKind::Hyperbolic) return Vec(g + (minkowski_dot(g, y) / pr2) * y);
      return g;
    };
    if (m.kind() == ManifoldKind::Euclidean || m.kind() == ManifoldKind::Sphere)
      F.cond = std::make_shared<PairProdLinearCond>(m, va, vb, t1, T);
    return F;
  }
  if (name == "s58_two") {
    BasePoint bp = default_base_point(m);
    return make_s58_two_point(m, bp.x, bp.frame.col(0), s58_eps);
  }
  throw ConfigError("unknown test function '" + name + "'");
}

}  // namespace pathlab
