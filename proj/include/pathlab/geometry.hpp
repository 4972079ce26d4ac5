#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <utility>

#include "pathlab/common.hpp"

namespace pathlab {

enum class ManifoldKind { Euclidean, Sphere, Hyperbolic, Chart };

// Christoffel symbols Gamma^k_{ij} at a point, k-major.
struct Christoffels {
  int n = 0;
  double g[kMaxDim][kMaxDim][kMaxDim] = {};
  double& at(int k, int i, int j) { return g[k][i][j]; }
  double at(int k, int i, int j) const { return g[k][i][j]; }
};

// A chart-based metric on an open subset of R^n. `christoffels` is optional;
// when absent the symbols come from central differences of the metric.
struct ChartSpec {
  std::function<Mat(const Vec&)> metric;
  std::function<bool(const Vec&)> in_domain;                 // optional
  std::function<Christoffels(const Vec&)> christoffels;      // optional
  std::string name = "chart";
};

struct GeometryTolerances {
  double orthonormal_tol = 1e-9;
  double metric_fd_step = 1e-5;    // step for Christoffels from the metric
  double ricci_fd_step = 1e-4;     // step for derivatives of Christoffels
  double ricci_halving_rtol = 0.05;
  double geodesic_ode_tol = 1e-10; // per-step local error target on charts
};

// A point on M together with an orthonormal frame of T_pM (columns).
struct FramePoint {
  Vec point;
  Mat frame;
};

// Riemannian manifold presented either as a model space (closed-form
// geodesics, transport and curvature) or as chart data. Model-space points
// live in ambient coordinates: S^n(r) in R^{n+1}, hyperbolic space on the
// upper hyperboloid sheet in Minkowski R^{n,1}.
class ManifoldModel {
 public:
  static ManifoldModel euclidean(int n) { return ManifoldModel(ManifoldKind::Euclidean, n, 0.0); }
  static ManifoldModel sphere(int n, double radius = 1.0) {
    if (radius <= 0.0) throw ConfigError("sphere radius must be positive");
    return ManifoldModel(ManifoldKind::Sphere, n, radius);
  }
  static ManifoldModel hyperbolic(int n, double radius = 1.0) {
    if (radius <= 0.0) throw ConfigError("hyperbolic radius must be positive");
    return ManifoldModel(ManifoldKind::Hyperbolic, n, radius);
  }
  static ManifoldModel chart(int n, ChartSpec spec, GeometryTolerances tol = {}) {
    ManifoldModel m(ManifoldKind::Chart, n, 0.0);
    m.chart_ = std::move(spec);
    m.tol_ = tol;
    if (!m.chart_->metric) throw ConfigError("chart manifold requires a metric function");
    return m;
  }

  ManifoldKind kind() const { return kind_; }
  int dim() const { return n_; }
  int ambient_dim() const {
    return (kind_ == ManifoldKind::Sphere || kind_ == ManifoldKind::Hyperbolic) ? n_ + 1 : n_;
  }
  double radius() const { return radius_; }
  const GeometryTolerances& tolerances() const { return tol_; }
  std::string name() const {
    switch (kind_) {
      case ManifoldKind::Euclidean: return "euclidean(" + std::to_string(n_) + ")";
      case ManifoldKind::Sphere: return "sphere(" + std::to_string(n_) + ",r=" + format_radius() + ")";
      case ManifoldKind::Hyperbolic:
        return "hyperbolic(" + std::to_string(n_) + ",r=" + format_radius() + ")";
      case ManifoldKind::Chart: return chart_->name + "(" + std::to_string(n_) + ")";
    }
    return "?";
  }

  bool in_domain(const Vec& p) const {
    if (kind_ == ManifoldKind::Chart && chart_->in_domain) return chart_->in_domain(p);
    return true;
  }

  // g_p(v, w)
  double metric_eval(const Vec& p, const Vec& v, const Vec& w) const {
    switch (kind_) {
      case ManifoldKind::Euclidean: return v.dot(w);
      case ManifoldKind::Sphere: return v.dot(w);
      case ManifoldKind::Hyperbolic: return minkowski(v, w);
      case ManifoldKind::Chart: return v.dot(metric_at(p) * w);
    }
    return 0.0;
  }

  double norm(const Vec& p, const Vec& v) const {
    double s = metric_eval(p, v, v);
    return s > 0.0 ? std::sqrt(s) : 0.0;
  }

  // Chart metric with symmetry and positivity checks.
  Mat metric_at(const Vec& p) const {
    require_chart("metric_at");
    if (!in_domain(p)) throw DomainError("point outside chart domain");
    Mat g = chart_->metric(p);
    double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * (1.0 + g.cwiseAbs().maxCoeff()))
      throw NumericalError("chart metric is not symmetric at queried point");
    g = 0.5 * (g + g.transpose());
    Eigen::LLT<Mat> llt(g);
    if (llt.info() != Eigen::Success)
      throw NumericalError("chart metric is not positive definite at queried point");
    return g;
  }

  // Projects an ambient/coordinate vector onto T_pM.
  Vec tangent_project(const Vec& p, const Vec& w) const {
    switch (kind_) {
      case ManifoldKind::Euclidean:
      case ManifoldKind::Chart: return w;
      case ManifoldKind::Sphere: return w - (w.dot(p) / (radius_ * radius_)) * p;
      case ManifoldKind::Hyperbolic: return w + (minkowski(w, p) / (radius_ * radius_)) * p;
    }
    return w;
  }

  // Snaps a nearby ambient point back onto the constraint surface.
  Vec project_point(const Vec& p) const {
    if (kind_ == ManifoldKind::Sphere) return p * (radius_ / p.norm());
    if (kind_ == ManifoldKind::Hyperbolic) {
      double q = -minkowski(p, p);
      if (q <= 0.0) throw NumericalError("point left the hyperboloid sheet");
      Vec r = p * (radius_ / std::sqrt(q));
      if (r[0] < 0.0) throw NumericalError("point crossed to the lower hyperboloid sheet");
      return r;
    }
    return p;
  }

  // exp_p(h v)
  Vec geodesic_step(const Vec& p, const Vec& v, double h) const {
    if (h < 0.0) throw std::invalid_argument("geodesic_step: negative duration");
    switch (kind_) {
      case ManifoldKind::Euclidean: return p + h * v;
      case ManifoldKind::Sphere: {
        double s = v.norm();
        if (s * h == 0.0) return p;
        double th = s * h / radius_;
        return project_point(std::cos(th) * p + (radius_ * std::sin(th) / s) * v);
      }
      case ManifoldKind::Hyperbolic: {
        double s = norm(p, v);
        if (s * h == 0.0) return p;
        double th = s * h / radius_;
        return project_point(std::cosh(th) * p + (radius_ * std::sinh(th) / s) * v);
      }
      case ManifoldKind::Chart: {
        Mat none(n_, 0);
        Vec q(n_);
        integrate_chart_geodesic(p, v, h, none, q);
        return q;
      }
    }
    return p;
  }

  // Parallel transport of w along the geodesic t -> exp_p(t v), t in [0,h].
  Vec transport_vector(const Vec& p, const Vec& v, double h, const Vec& w) const {
    switch (kind_) {
      case ManifoldKind::Euclidean: return w;
      case ManifoldKind::Sphere: {
        double s = v.norm();
        if (s * h == 0.0) return w;
        double th = s * h / radius_;
        Vec u = v / s;
        double a = w.dot(u);
        return w + a * ((std::cos(th) - 1.0) * u - std::sin(th) * (p / radius_));
      }
      case ManifoldKind::Hyperbolic: {
        double s = norm(p, v);
        if (s * h == 0.0) return w;
        double th = s * h / radius_;
        Vec u = v / s;
        double a = minkowski(w, u);
        return w + a * ((std::cosh(th) - 1.0) * u + std::sinh(th) * (p / radius_));
      }
      case ManifoldKind::Chart: {
        Mat cols(n_, 1);
        cols.col(0) = w;
        Vec q(n_);
        integrate_chart_geodesic(p, v, h, cols, q);
        return cols.col(0);
      }
    }
    return w;
  }

  // Transports a whole frame and re-orthonormalizes it at the endpoint.
  FramePoint transport_frame(const Vec& p, const Vec& v, double h, const Mat& frame) const {
    FramePoint out;
    if (kind_ == ManifoldKind::Chart) {
      Mat cols = frame;
      Vec q(n_);
      integrate_chart_geodesic(p, v, h, cols, q);
      out.point = q;
      out.frame = cols;
    } else {
      out.point = geodesic_step(p, v, h);
      out.frame.resize(frame.rows(), frame.cols());
      for (int k = 0; k < frame.cols(); ++k) out.frame.col(k) = transport_vector(p, v, h, frame.col(k));
    }
    orthonormalize(out.point, out.frame);
    return out;
  }

  // Metric Gram-Schmidt, in place. Keeps the column order.
  void orthonormalize(const Vec& p, Mat& frame) const {
    int n = int(frame.cols());
    for (int k = 0; k < n; ++k) {
      Vec v = tangent_project(p, frame.col(k));
      for (int j = 0; j < k; ++j) v -= metric_eval(p, v, frame.col(j)) * frame.col(j);
      double nv = norm(p, v);
      if (nv < 1e-12) throw NumericalError("frame degenerated during orthonormalization");
      frame.col(k) = v / nv;
    }
  }

  double frame_orthonormality_defect(const Vec& p, const Mat& frame) const {
    double worst = 0.0;
    for (int i = 0; i < frame.cols(); ++i)
      for (int j = i; j < frame.cols(); ++j) {
        double gij = metric_eval(p, frame.col(i), frame.col(j));
        worst = std::max(worst, std::abs(gij - (i == j ? 1.0 : 0.0)));
      }
    return worst;
  }

  // A deterministic orthonormal frame at p (coordinate axes projected and
  // orthonormalized).
  FramePoint canonical_frame(const Vec& p) const {
    int d = ambient_dim();
    Mat frame(d, n_);
    int got = 0;
    for (int i = 0; i < d && got < n_; ++i) {
      Vec e = Vec::Zero(d);
      e[i] = 1.0;
      Vec t = tangent_project(p, e);
      for (int j = 0; j < got; ++j) t -= metric_eval(p, t, frame.col(j)) * frame.col(j);
      double nt = norm(p, t);
      if (nt > 1e-6) {
        frame.col(got++) = t / nt;
      }
    }
    if (got < n_) throw NumericalError("could not complete a frame at the given point");
    return FramePoint{p, frame};
  }

  // Inverse exponential map. Model spaces only; charts go through the
  // second-order normal-coordinate construction at the call sites that need
  // it.
  Vec log_map(const Vec& x, const Vec& y) const {
    switch (kind_) {
      case ManifoldKind::Euclidean:
      case ManifoldKind::Chart: return y - x;  // chart callers correct to second order themselves
      case ManifoldKind::Sphere: {
        double r2 = radius_ * radius_;
        double c = std::clamp(x.dot(y) / r2, -1.0, 1.0);
        double th = std::acos(c);  // distance / radius
        Vec dir = y - c * x;
        double nd = dir.norm();
        if (nd < 1e-14) {
          if (th > 1.0) throw DomainError("log_map at the antipode is undefined");
          return Vec::Zero(ambient_dim());
        }
        return (radius_ * th / nd) * dir;
      }
      case ManifoldKind::Hyperbolic: {
        double r2 = radius_ * radius_;
        double c = std::max(-minkowski(x, y) / r2, 1.0);
        double th = std::acosh(c);
        Vec dir = y + (minkowski(y, x) / r2) * x;
        double nd = norm(x, dir);
        if (nd < 1e-14) return Vec::Zero(ambient_dim());
        return (radius_ * th / nd) * dir;
      }
    }
    return y - x;
  }

  double distance(const Vec& x, const Vec& y) const { return norm(x, log_map(x, y)); }

  // Ric_p(v, w). Closed form on model spaces; finite differences of the
  // Christoffel symbols on charts (central differences, truncation O(step^2),
  // step-halving disagreement reported as a numerical error).
  double ricci_eval(const Vec& p, const Vec& v, const Vec& w) const {
    switch (kind_) {
      case ManifoldKind::Euclidean: return 0.0;
      case ManifoldKind::Sphere:
        return (n_ - 1) / (radius_ * radius_) * metric_eval(p, v, w);
      case ManifoldKind::Hyperbolic:
        return -(n_ - 1) / (radius_ * radius_) * metric_eval(p, v, w);
      case ManifoldKind::Chart: {
        double full = chart_ricci(p, v, w, tol_.ricci_fd_step);
        double half = chart_ricci(p, v, w, tol_.ricci_fd_step / 2.0);
        double scale = std::max({std::abs(full), std::abs(half), 1e-6});
        if (std::abs(full - half) > tol_.ricci_halving_rtol * scale)
          throw NumericalError("ricci finite differences disagree under step halving");
        return half;
      }
    }
    return 0.0;
  }

  // Operator-norm style bound of |Ric| at p, from the eigenvalues of the
  // Ricci tensor in an orthonormal frame.
  double ricci_bound_at(const Vec& p) const {
    if (kind_ == ManifoldKind::Euclidean) return 0.0;
    if (kind_ != ManifoldKind::Chart) return double(n_ - 1) / (radius_ * radius_);
    FramePoint fp = canonical_frame(p);
    Mat ric(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) {
        double rij = ricci_eval(p, fp.frame.col(i), fp.frame.col(j));
        ric(i, j) = rij;
        ric(j, i) = rij;
      }
    Eigen::SelfAdjointEigenSolver<Mat> es(ric);
    double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    return std::max(std::abs(lo), std::abs(hi));
  }

  Christoffels christoffels_at(const Vec& p) const {
    require_chart("christoffels_at");
    if (chart_->christoffels) return chart_->christoffels(p);
    return christoffels_fd(p);
  }

 private:
  ManifoldModel(ManifoldKind k, int n, double radius) : kind_(k), n_(n), radius_(radius) {
    if (n < 1) throw ConfigError("manifold dimension must be >= 1");
    if (n + 1 > kMaxDim) throw ConfigError("manifold dimension exceeds compiled capacity");
  }

  std::string format_radius() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", radius_);
    return buf;
  }

  void require_chart(const char* who) const {
    if (kind_ != ManifoldKind::Chart)
      throw CapabilityError(std::string(who) + " is only available on chart manifolds");
  }

  static double minkowski(const Vec& a, const Vec& b) {
    double s = -a[0] * b[0];
    for (int i = 1; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }

  Christoffels christoffels_fd(const Vec& p) const {
    double d = tol_.metric_fd_step;
    Mat g = metric_at(p);
    // dg[l] = d g_{ij} / d x^l
    Mat dg[kMaxDim];
    Vec q = p;
    for (int l = 0; l < n_; ++l) {
      q[l] = p[l] + d;
      Mat gp = metric_at(q);
      q[l] = p[l] - d;
      Mat gm = metric_at(q);
      q[l] = p[l];
      dg[l] = (gp - gm) / (2.0 * d);
    }
    Eigen::LLT<Mat> llt(g);
    Christoffels c;
    c.n = n_;
    Vec rhs(n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) {
        for (int l = 0; l < n_; ++l) rhs[l] = 0.5 * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
        Vec gam = llt.solve(rhs);
        for (int k = 0; k < n_; ++k) {
          c.at(k, i, j) = gam[k];
          c.at(k, j, i) = gam[k];
        }
      }
    return c;
  }

  double chart_ricci(const Vec& p, const Vec& v, const Vec& w, double step) const {
    // Ric_ij = d_k Gamma^k_ij - d_j Gamma^k_ik + Gamma^k_kl Gamma^l_ij
    //          - Gamma^k_jl Gamma^l_ik
    Christoffels at_p = christoffels_at(p);
    Christoffels plus[kMaxDim], minus[kMaxDim];
    Vec q = p;
    for (int l = 0; l < n_; ++l) {
      q[l] = p[l] + step;
      plus[l] = christoffels_at(q);
      q[l] = p[l] - step;
      minus[l] = christoffels_at(q);
      q[l] = p[l];
    }
    auto dgamma = [&](int l, int k, int i, int j) {
      return (plus[l].at(k, i, j) - minus[l].at(k, i, j)) / (2.0 * step);
    };
    double out = 0.0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        double rij = 0.0;
        for (int k = 0; k < n_; ++k) {
          rij += dgamma(k, k, i, j) - dgamma(j, k, i, k);
          for (int l = 0; l < n_; ++l)
            rij += at_p.at(k, k, l) * at_p.at(l, i, j) - at_p.at(k, j, l) * at_p.at(l, i, k);
        }
        out += rij * v[i] * w[j];
      }
    return out;
  }

  // RK4 with step doubling on the coupled geodesic + transport system:
  //   x' = v,  v'^k = -Gamma^k_ij v^i v^j,  w'^k = -Gamma^k_ij v^i w^j.
  // `cols` is transported in place; the endpoint lands in `x_out`.
  void integrate_chart_geodesic(const Vec& p, const Vec& v0, double h, Mat& cols, Vec& x_out) const {
    int substeps = 1;
    const int max_substeps = 4096;
    while (true) {
      Vec x1 = p, v1 = v0;
      Mat w1 = cols;
      rk4_span(x1, v1, w1, h, substeps);
      Vec x2 = p, v2 = v0;
      Mat w2 = cols;
      rk4_span(x2, v2, w2, h, 2 * substeps);
      double err = (x1 - x2).cwiseAbs().maxCoeff();
      if (cols.cols() > 0) err = std::max(err, (w1 - w2).cwiseAbs().maxCoeff());
      double scale = 1.0 + p.cwiseAbs().maxCoeff();
      if (err <= tol_.geodesic_ode_tol * scale || substeps >= max_substeps) {
        x_out = x2;
        cols = w2;
        if (!in_domain(x_out)) throw DomainError("geodesic left the chart domain");
        return;
      }
      substeps *= 2;
    }
  }

  void rk4_span(Vec& x, Vec& v, Mat& w, double h, int substeps) const {
    double dt = h / substeps;
    for (int s = 0; s < substeps; ++s) rk4_one(x, v, w, dt);
  }

  struct ChartState {
    Vec x, v;
    Mat w;
  };

  void chart_derivative(const ChartState& s, ChartState& ds) const {
    if (!in_domain(s.x)) throw DomainError("geodesic left the chart domain");
    Christoffels c = christoffels_at(s.x);
    ds.x = s.v;
    ds.v.setZero(n_);
    ds.w.setZero(s.w.rows(), s.w.cols());
    for (int k = 0; k < n_; ++k) {
      double acc = 0.0;
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) acc += c.at(k, i, j) * s.v[i] * s.v[j];
      ds.v[k] = -acc;
      for (int m = 0; m < s.w.cols(); ++m) {
        double a = 0.0;
        for (int i = 0; i < n_; ++i)
          for (int j = 0; j < n_; ++j) a += c.at(k, i, j) * s.v[i] * s.w(j, m);
        ds.w(k, m) = -a;
      }
    }
  }

  void rk4_one(Vec& x, Vec& v, Mat& w, double dt) const {
    ChartState s{x, v, w}, k1, k2, k3, k4, t;
    chart_derivative(s, k1);
    t.x = x + 0.5 * dt * k1.x;
    t.v = v + 0.5 * dt * k1.v;
    t.w = w + 0.5 * dt * k1.w;
    chart_derivative(t, k2);
    t.x = x + 0.5 * dt * k2.x;
    t.v = v + 0.5 * dt * k2.v;
    t.w = w + 0.5 * dt * k2.w;
    chart_derivative(t, k3);
    t.x = x + dt * k3.x;
    t.v = v + dt * k3.v;
    t.w = w + dt * k3.w;
    chart_derivative(t, k4);
    x += dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
    v += dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v);
    w += dt / 6.0 * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w);
  }

  ManifoldKind kind_;
  int n_;
  double radius_;
  std::optional<ChartSpec> chart_;
  GeometryTolerances tol_;
};

}  // namespace pathlab
