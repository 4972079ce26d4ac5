#pragma once

#include <atomic>
#include <mutex>
#include <thread>

#include "pathlab/martingale.hpp"

namespace pathlab {

// Runs fn(first, last) over [0, n) in fixed-size chunks on `workers` threads.
// Chunk boundaries are independent of the worker count; callers write results
// into per-index slots, so the output is schedule-independent.
inline void parallel_chunks(long n, int workers, long chunk,
                            const std::function<void(long, long)>& fn) {
  if (n <= 0) return;
  workers = int(std::max<long>(1, std::min<long>(workers, (n + chunk - 1) / chunk)));
  if (workers == 1) {
    for (long lo = 0; lo < n; lo += chunk) fn(lo, std::min(n, lo + chunk));
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto body = [&]() {
    while (true) {
      long lo = next.fetch_add(chunk);
      if (lo >= n) return;
      try {
        fn(lo, std::min(n, lo + chunk));
      } catch (...) {
        std::lock_guard<std::mutex> lk(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct EnsembleSpec {
  const ManifoldModel* m = nullptr;
  TimeGrid grid;
  FramePoint start;
  long paths = 1000;
  int workers = 1;
  std::uint64_t seed = 0;
  int job = 0;
};

// Samples `paths` independent paths (stream = pack(job, i, 0, 0)) and hands
// each stored path to `fn` together with its output row. Rows are indexed by
// path, so reductions over them are deterministic.
inline std::vector<std::vector<double>> run_path_ensemble(
    const EnsembleSpec& spec, int row_width,
    const std::function<void(long, const FramedPath&, std::vector<double>&)>& fn) {
  std::vector<std::vector<double>> rows(spec.paths, std::vector<double>(row_width, 0.0));
  parallel_chunks(spec.paths, spec.workers, 16, [&](long lo, long hi) {
    for (long i = lo; i < hi; ++i) {
      RngStream rng(spec.seed, streams::pack(spec.job, i, 0, 0));
      FramedPath path = sample_path(*spec.m, spec.start, spec.grid, rng);
      fn(i, path, rows[i]);
    }
  });
  return rows;
}

// Column statistics over row-major ensemble output.
inline RunningStat column_stat(const std::vector<std::vector<double>>& rows, int col) {
  RunningStat st;
  for (const auto& r : rows) st.add(r[col]);
  return st;
}

inline std::vector<std::vector<double>> extract_columns(
    const std::vector<std::vector<double>>& rows, int first, int count) {
  std::vector<std::vector<double>> out(rows.size(), std::vector<double>(count));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int q = 0; q < count; ++q) out[i][q] = rows[i][first + q];
  return out;
}

// Coupled finite-difference estimate of the base-point gradient
// grad_x E[F]: pairs of path families started at exp_x(+/- delta u_j), all
// driven by common increments. Returns the mean difference-quotient vector in
// the initial frame together with the covariance of that mean.
struct BasePointGradient {
  Vec mean;
  Mat cov_of_mean;
  long samples = 0;
  double norm_unbiased_sq() const {
    return mean.squaredNorm() - cov_of_mean.trace();
  }
  double norm_corrected() const { return norm_bias_corrected(mean, cov_of_mean); }
};

inline BasePointGradient base_point_gradient(const EnsembleSpec& spec, const CylinderFunction& F,
                                             double fd_step) {
  const ManifoldModel& m = *spec.m;
  int n = m.dim();
  std::vector<std::vector<double>> rows(spec.paths, std::vector<double>(n, 0.0));
  parallel_chunks(spec.paths, spec.workers, 16, [&](long lo, long hi) {
    std::vector<Vec> offsets(2 * n, Vec::Zero(m.ambient_dim()));
    for (long i = lo; i < hi; ++i) {
      RngStream rng(spec.seed, streams::pack(spec.job, i, 0, 0));
      for (int j = 0; j < n; ++j) {
        offsets[2 * j] = fd_step * spec.start.frame.col(j);
        offsets[2 * j + 1] = -fd_step * spec.start.frame.col(j);
      }
      FramedPath base;
      base.t0 = 0.0;
      base.h = spec.grid.step();
      base.points.assign(1, spec.start.point);
      base.frames.assign(1, spec.start.frame);
      auto conts = coupled_perturbed_continuations(m, base, 0.0, offsets, spec.grid.steps(), rng);
      for (int j = 0; j < n; ++j) {
        double fp = eval(F, conts[2 * j]);
        double fm = eval(F, conts[2 * j + 1]);
        rows[i][j] = (fp - fm) / (2.0 * fd_step);
      }
    }
  });
  BasePointGradient out;
  out.samples = spec.paths;
  out.mean = Vec::Zero(n);
  for (const auto& r : rows)
    for (int j = 0; j < n; ++j) out.mean[j] += r[j];
  out.mean /= double(spec.paths);
  out.cov_of_mean = Mat::Zero(n, n);
  for (const auto& r : rows) {
    Vec d(n);
    for (int j = 0; j < n; ++j) d[j] = r[j] - out.mean[j];
    out.cov_of_mean += d * d.transpose();
  }
  if (spec.paths > 1) out.cov_of_mean /= double(spec.paths - 1) * double(spec.paths);
  return out;
}

}  // namespace pathlab
