#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "pathlab/geometry.hpp"
#include "pathlab/rng.hpp"

namespace pathlab {

// Uniform grid 0 = tau_0 < ... < tau_K = T with step h. Cylinder partition
// times must land exactly on grid times, which is enforced by requiring h to
// divide them (the configuration invariant).
class TimeGrid {
 public:
  TimeGrid() : T_(0), h_(1), K_(0) {}
  TimeGrid(double T, double h) : T_(T), h_(h) {
    if (h <= 0.0 || T < 0.0) throw ConfigError("time grid requires h > 0 and T >= 0");
    double kd = T / h;
    K_ = int(std::llround(kd));
    if (std::abs(K_ * h - T) > 1e-9 * std::max(1.0, T))
      throw ConfigError("grid step h does not divide the horizon T");
  }

  double horizon() const { return T_; }
  double step() const { return h_; }
  int steps() const { return K_; }
  double time(int k) const { return k * h_; }

  bool contains(double t) const {
    int k = int(std::llround(t / h_));
    return k >= 0 && k <= K_ && std::abs(time(k) - t) <= 1e-9 * std::max(1.0, T_);
  }
  int index_of(double t) const {
    int k = int(std::llround(t / h_));
    if (k < 0 || k > K_ || std::abs(time(k) - t) > 1e-9 * std::max(1.0, T_))
      throw ConfigError("time " + std::to_string(t) + " is not a grid time");
    return k;
  }

 private:
  double T_, h_;
  int K_;
};

// One discrete Brownian path with its frames and driving increments.
// frames[k] columns are an orthonormal basis of the tangent space at
// points[k]; increments[k] (in frame coordinates, ~N(0,h I)) drove the step
// from k to k+1. Transport to the start is the change of frame coordinates,
// so storing frames is storing the transport.
struct FramedPath {
  double t0 = 0.0;
  double h = 0.0;
  std::vector<Vec> points;
  std::vector<Vec> increments;  // size points.size() - 1
  std::vector<Mat> frames;

  int steps() const { return int(increments.size()); }
  double time(int k) const { return t0 + k * h; }
  int index_of(double t) const {
    int k = int(std::llround((t - t0) / h));
    if (k < 0 || k >= int(points.size()) || std::abs(time(k) - t) > 1e-9)
      throw ConfigError("time is not on the path grid");
    return k;
  }
};

// Geodesic random walk: at each step draw dW ~ N(0, h I) in frame
// coordinates, move along the geodesic with velocity U dW / h for duration h,
// and carry the frame by parallel transport. Weak order 1 for E[f(X_T)];
// the generator is Laplace-Beltrami over two.
class PathWalker {
 public:
  PathWalker(const ManifoldModel& m, const FramePoint& start, double h, RngStream rng)
      : m_(&m), x_(start.point), u_(start.frame), h_(h), rng_(rng), dw_(m.dim()), v_(m.ambient_dim()) {
    sqrt_h_ = std::sqrt(h);
  }

  const Vec& point() const { return x_; }
  const Mat& frame() const { return u_; }
  const Vec& last_increment() const { return dw_; }
  RngStream& rng() { return rng_; }

  void step() {
    rng_.fill_gaussian(dw_, sqrt_h_);
    advance_with(dw_);
  }

  // Advances with externally supplied frame-coordinate increments (coupled
  // continuations reuse one draw across several walkers).
  void advance_with(const Vec& dw) {
    v_.noalias() = u_ * dw;
    v_ /= h_;
    FramePoint next = m_->transport_frame(x_, v_, h_, u_);
    x_ = next.point;
    u_ = next.frame;
  }

  void reset(const FramePoint& start) {
    x_ = start.point;
    u_ = start.frame;
  }

 private:
  const ManifoldModel* m_;
  Vec x_;
  Mat u_;
  double h_, sqrt_h_;
  RngStream rng_;
  Vec dw_, v_;
};

enum class DomainExitPolicy { Reject, Resample };

struct PathSimOptions {
  DomainExitPolicy on_domain_exit = DomainExitPolicy::Resample;
  int max_resample_attempts = 16;
};

// Samples one path over [0, T]. On chart manifolds a domain exit either
// rejects (rethrows) or restarts the walk; restarts keep consuming the same
// stream, so the result is still a pure function of (seed, stream).
inline FramedPath sample_path(const ManifoldModel& m, const FramePoint& start, const TimeGrid& grid,
                              RngStream rng, const PathSimOptions& opts = {}) {
  FramedPath path;
  path.t0 = 0.0;
  path.h = grid.step();
  int attempts = 0;
  while (true) {
    try {
      path.points.assign(1, start.point);
      path.frames.assign(1, start.frame);
      path.increments.clear();
      path.points.reserve(grid.steps() + 1);
      path.frames.reserve(grid.steps() + 1);
      path.increments.reserve(grid.steps());
      PathWalker w(m, start, grid.step(), rng);
      for (int k = 0; k < grid.steps(); ++k) {
        w.step();
        path.points.push_back(w.point());
        path.frames.push_back(w.frame());
        path.increments.push_back(w.last_increment());
      }
      rng = w.rng();
      return path;
    } catch (const DomainError&) {
      if (opts.on_domain_exit == DomainExitPolicy::Reject || ++attempts > opts.max_resample_attempts)
        throw;
      // retry from the start with the stream where it left off
    }
  }
}

// Fresh Brownian continuation of `path` from grid time t over a tail of
// `tail_steps` steps. The frames continue from U_t, so transport composes
// with the prefix.
inline FramedPath continuation(const ManifoldModel& m, const FramedPath& path, double t,
                               int tail_steps, RngStream rng, const PathSimOptions& opts = {}) {
  int k0 = path.index_of(t);
  FramePoint start{path.points[k0], path.frames[k0]};
  TimeGrid tail(tail_steps * path.h, path.h);
  FramedPath out = sample_path(m, start, tail, rng, opts);
  out.t0 = t;
  return out;
}

// Continuations from exp_{X_t}(offset_i), all driven by the same Wiener
// increments, with the start frame carried along the offset geodesic. This is
// the common-random-numbers coupling used by conditional finite differences.
inline std::vector<FramedPath> coupled_perturbed_continuations(
    const ManifoldModel& m, const FramedPath& path, double t, const std::vector<Vec>& offsets,
    int tail_steps, RngStream rng) {
  int k0 = path.index_of(t);
  const Vec& x = path.points[k0];
  const Mat& u = path.frames[k0];
  std::vector<PathWalker> walkers;
  std::vector<FramedPath> out(offsets.size());
  walkers.reserve(offsets.size());
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    double off = m.norm(x, offsets[i]);
    FramePoint start;
    if (off == 0.0) {
      start = FramePoint{x, u};
    } else {
      start = m.transport_frame(x, offsets[i] / off, off, u);
    }
    walkers.emplace_back(m, start, path.h, RngStream());
    out[i].t0 = t;
    out[i].h = path.h;
    out[i].points.assign(1, start.point);
    out[i].frames.assign(1, start.frame);
  }
  Vec dw(m.dim());
  double sh = std::sqrt(path.h);
  for (int k = 0; k < tail_steps; ++k) {
    rng.fill_gaussian(dw, sh);
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      walkers[i].advance_with(dw);
      out[i].points.push_back(walkers[i].point());
      out[i].frames.push_back(walkers[i].frame());
      out[i].increments.push_back(dw);
    }
  }
  return out;
}

// Chart-coordinate Euler-Heun (Stratonovich) scheme. Cross-check only: the
// primary scheme is the geodesic walk above. sigma is the Cholesky factor of
// g^{-1} and the Stratonovich drift removes the Ito correction from the
// Laplace-Beltrami drift.
inline FramedPath sample_path_euler_heun(const ManifoldModel& m, const Vec& start,
                                         const TimeGrid& grid, RngStream rng) {
  if (m.kind() != ManifoldKind::Chart)
    throw CapabilityError("euler-heun cross-check scheme runs on chart manifolds only");
  int n = m.dim();
  auto sigma_at = [&](const Vec& x) -> Mat {
    Mat g = m.metric_at(x);
    Mat ginv = g.llt().solve(Mat::Identity(n, n));
    return Mat(ginv.llt().matrixL());
  };
  auto strat_drift = [&](const Vec& x) -> Vec {
    Christoffels c = m.christoffels_at(x);
    Mat g = m.metric_at(x);
    Mat ginv = g.llt().solve(Mat::Identity(n, n));
    Vec b = Vec::Zero(n);
    for (int k = 0; k < n; ++k) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) acc += ginv(i, j) * c.at(k, i, j);
      b[k] = -0.5 * acc;
    }
    // Ito -> Stratonovich: subtract (1/2) sum_i (d sigma_i) sigma_i.
    double fd = 1e-6;
    Mat s0 = sigma_at(x);
    Vec corr = Vec::Zero(n);
    Vec xp(n);
    for (int l = 0; l < n; ++l) {
      xp = x;
      xp[l] += fd;
      Mat sp = sigma_at(xp);
      xp[l] -= 2 * fd;
      Mat sm = sigma_at(xp);
      Mat ds = (sp - sm) / (2 * fd);  // d sigma / d x^l
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) corr[k] += ds(k, i) * s0(l, i);
    }
    return b - 0.5 * corr;
  };
  FramedPath path;
  path.t0 = 0.0;
  path.h = grid.step();
  path.points.assign(1, start);
  Vec x = start, dw(n);
  double sh = std::sqrt(grid.step());
  for (int k = 0; k < grid.steps(); ++k) {
    rng.fill_gaussian(dw, sh);
    Vec b = strat_drift(x);
    Mat s = sigma_at(x);
    Vec pred = x + b * grid.step() + s * dw;
    Vec x_next = x + 0.5 * (b + strat_drift(pred)) * grid.step() + 0.5 * ((s + sigma_at(pred)) * dw);
    if (!m.in_domain(x_next)) throw DomainError("euler-heun path left the chart domain");
    x = x_next;
    path.points.push_back(x);
    path.increments.push_back(dw);
  }
  return path;
}

// Little-endian binary dump: header {u32 n, u32 K, f64 h}, then K+1 records
// of point (ambient), frame (ambient x n, column-major) and increment (n,
// zeros in record 0).
inline void write_path_dump(std::ostream& os, const ManifoldModel& m, const FramedPath& path) {
  auto put = [&os](const void* p, std::size_t len) { os.write(static_cast<const char*>(p), len); };
  std::uint32_t n = std::uint32_t(m.dim());
  std::uint32_t K = std::uint32_t(path.steps());
  double h = path.h;
  put(&n, 4);
  put(&K, 4);
  put(&h, 8);
  int d = m.ambient_dim();
  for (std::size_t k = 0; k < path.points.size(); ++k) {
    for (int i = 0; i < d; ++i) put(&path.points[k][i], 8);
    for (int j = 0; j < int(n); ++j)
      for (int i = 0; i < d; ++i) put(&path.frames[k](i, j), 8);
    double zero = 0.0;
    for (int j = 0; j < int(n); ++j) {
      const double* v = (k == 0) ? &zero : &path.increments[k - 1][j];
      put(v, 8);
    }
  }
}

}  // namespace pathlab
