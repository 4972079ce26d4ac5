#pragma once

#include <chrono>
#include <map>

#include "pathlab/ensemble.hpp"

namespace pathlab {

// One inequality/identity check: LHS and RHS estimates with confidence
// intervals, the discretization margin, and the verdict.
struct EstimateReport {
  std::string tag;
  std::string manifold;
  std::string function;
  double kappa = 0.0;
  double ricci_sup_observed = 0.0;
  double lhs = 0.0, rhs = 0.0;
  Interval lhs_ci, rhs_ci;
  double slack = 0.0;  // rhs - lhs for inequalities; deviation for identities
  Interval slack_ci;
  double margin = 0.0;
  Verdict verdict = Verdict::Inconclusive;
  bool expected_fail = false;
  std::string note;
  long paths = 0;
  long inner = 0;
  double runtime_seconds = 0.0;  // recorded in the manifest, not in reports.json
  std::map<std::string, double> extra;
};

struct CheckBudgets {
  long outer_paths = 2000;
  int inner_budget = 512;       // continuations for conditional values
  int replicates = 32;          // coupled-FD replicates per conditional gradient
  double fd_step = 1e-3;
  int check_nodes = 9;
  int prefixes = 8;
  int prefix_replicates = 128;  // replicates for per-prefix gradient estimates
  int rhs_budget = 384;         // continuations for conditional RHS averages
  int cond_continuations = 128; // conditional submartingale variant
};

struct CheckContext {
  const ManifoldModel* m = nullptr;
  const CylinderFunction* F = nullptr;
  TimeGrid grid;
  FramePoint start;
  CheckBudgets budgets;
  double kappa = 0.0;
  double margin_coeff = 0.25;  // additive discretization margin c sqrt(h) * scale
  std::uint64_t seed = 0;
  int job = 0;
  int workers = 1;
};

inline double margin_for(const CheckContext& ctx, double scale) {
  return ctx.margin_coeff * std::sqrt(ctx.grid.step()) * std::max(std::abs(scale), 1e-12);
}

class ScopedTimer {
 public:
  explicit ScopedTimer(double* out) : out_(out), t0_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    *out_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  double* out_;
  std::chrono::steady_clock::time_point t0_;
};

// kappa policy: sup of |Ric| over points visited by a small pilot ensemble,
// plus 5% headroom. Constant on the model spaces.
inline double sample_ricci_sup(const ManifoldModel& m, const FramePoint& start,
                               const TimeGrid& grid, std::uint64_t seed, int pilot_paths = 4) {
  if (m.kind() != ManifoldKind::Chart) return m.ricci_bound_at(start.point);
  double sup = m.ricci_bound_at(start.point);
  for (int i = 0; i < pilot_paths; ++i) {
    RngStream rng(seed, streams::pack(4095, i, 0, 0));
    PathWalker w(m, start, grid.step(), rng);
    for (int k = 0; k < grid.steps(); ++k) {
      w.step();
      if (k % 50 == 0) sup = std::max(sup, m.ricci_bound_at(w.point()));
    }
  }
  return sup;
}

inline Mat ricci_frame_matrix(const ManifoldModel& m, const Vec& x, const Mat& u) {
  int n = m.dim();
  Mat R(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double rij = m.ricci_eval(x, u.col(i), u.col(j));
      R(i, j) = rij;
      R(j, i) = rij;
    }
  return R;
}

// Check times: roughly uniform over [0, T], snapped to the grid, always
// including 0, T and every partition time (the parallel gradient jumps
// there).
inline std::vector<double> check_times(const CylinderFunction& F, const TimeGrid& grid, int count) {
  std::vector<int> idx;
  idx.push_back(0);
  idx.push_back(grid.steps());
  for (double t : F.times) idx.push_back(grid.index_of(t));
  for (int q = 1; q + 1 < count; ++q) {
    double t = grid.horizon() * q / double(count - 1);
    idx.push_back(int(std::llround(t / grid.step())));
  }
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  std::vector<double> times;
  for (int k : idx) times.push_back(grid.time(k));
  return times;
}

// s-values exercised by the C-checks: 0, plus a representative of the last
// inter-partition segment for multi-point functions (the parallel gradient is
// constant on each segment, so one representative per regime suffices).
inline std::vector<double> default_s_values(const CylinderFunction& F) {
  std::vector<double> s{0.0};
  if (F.slots() > 1) {
    double lo = F.times[F.slots() - 2], hi = F.times.back();
    s.push_back(0.5 * (lo + hi));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Conditional-ingredient ensemble pass.
// ---------------------------------------------------------------------------

struct CondIngredientFlags {
  bool nsq = false;       // |nabla_s F_t|^2 (unbiased)
  bool nrm = false;       // |nabla_s F_t| (jackknife)
  bool cross = false;     // |nabla_s F_t| |nabla_t F_t| (jackknife)
  bool nrmt = false;      // |nabla_t F_t| (jackknife)
  bool grad = false;      // mean gradient vectors + Ricci-applied live gradient
  bool riccross = false;  // Ric_t(nabla_s F_t, nabla_t F_t) (unbiased bilinear)
  bool hess = false;      // closed-form |nabla_t nabla_s F_t|^2 and parallel Laplacian
};

struct CondIngredients {
  std::vector<double> s_values;
  std::vector<double> node_times;
  // indexed [s][path][node]
  std::vector<std::vector<std::vector<double>>> nsq, nrm, cross, riccross, hsq, lap;
  std::vector<std::vector<double>> nrmt;  // [path][node]
  // [s][path][node*n + c] mean gradient components; ricg: Ric_t applied to the
  // live gradient, [path][node*n + c]
  std::vector<std::vector<std::vector<double>>> grad;
  std::vector<std::vector<double>> ricg;
  int n = 0;
};

inline CondIngredients conditional_ingredients(const CheckContext& ctx,
                                               const CondIngredientFlags& flags,
                                               const std::vector<double>& s_values) {
  const ManifoldModel& m = *ctx.m;
  const CylinderFunction& F = *ctx.F;
  int n = m.dim();
  CondIngredients out;
  out.n = n;
  out.s_values = s_values;
  out.node_times = check_times(F, ctx.grid, ctx.budgets.check_nodes);
  int Q = int(out.node_times.size());
  int S = int(s_values.size());
  long N = ctx.budgets.outer_paths;
  auto alloc = [&](std::vector<std::vector<std::vector<double>>>& a, int width) {
    a.assign(S, std::vector<std::vector<double>>(N, std::vector<double>(width, 0.0)));
  };
  if (flags.nsq) alloc(out.nsq, Q);
  if (flags.nrm) alloc(out.nrm, Q);
  if (flags.cross) alloc(out.cross, Q);
  if (flags.riccross) alloc(out.riccross, Q);
  if (flags.hess) {
    alloc(out.hsq, Q);
    alloc(out.lap, Q);
  }
  if (flags.grad) alloc(out.grad, Q * n);
  if (flags.nrmt || flags.cross) out.nrmt.assign(N, std::vector<double>(Q, 0.0));
  if (flags.grad) out.ricg.assign(N, std::vector<double>(Q * n, 0.0));

  bool need_ric = flags.grad || flags.riccross;
  EnsembleSpec spec{&m, ctx.grid, ctx.start, N, ctx.workers, ctx.seed, ctx.job};
  CondBudgets cb{ctx.budgets.inner_budget, ctx.budgets.replicates, ctx.budgets.fd_step};

  run_path_ensemble(spec, 1, [&](long i, const FramedPath& path, std::vector<double>&) {
    TupleView tv = tuple_view(F, path);
    for (int q = 0; q < Q; ++q) {
      double t = out.node_times[q];
      int k = path.index_of(t);
      CondSamples cs;
      if (t >= F.horizon() - 1e-12) {
        cs = conditional_exact_terminal(m, F, tv);
      } else {
        PrefixState pre = prefix_at(F, path, k);
        cs = conditional_gradient_samples(m, F, pre, path.h, cb, [&](int b) {
          return RngStream(ctx.seed, streams::pack(ctx.job, i, q + 1, b));
        });
      }
      Mat R;
      if (need_ric) R = ricci_frame_matrix(m, path.points[k], path.frames[k]);
      if (flags.nrmt || flags.cross) out.nrmt[i][q] = cs.norm_jackknife(t);
      for (int si = 0; si < S; ++si) {
        double s = s_values[si];
        if (t < s) continue;  // nabla_s F_t vanishes below s
        if (flags.nsq) out.nsq[si][i][q] = cs.norm_sq_unbiased(s);
        if (flags.nrm) out.nrm[si][i][q] = cs.norm_jackknife(s);
        if (flags.cross) out.cross[si][i][q] = cs.prod_norm_jackknife(s, t);
        if (flags.riccross) out.riccross[si][i][q] = cs.bilinear_unbiased(s, t, R);
        if (flags.grad) {
          Vec g = cs.grad_mean(s);
          for (int c = 0; c < n; ++c) out.grad[si][i][q * n + c] = g[c];
        }
        if (flags.hess) {
          PrefixState pre = prefix_at(F, path, k);
          Mat M = second_parallel_gradient(m, F, pre, s, path.h, SecondGradientMethod::ClosedForm,
                                           cb, StreamFactory());
          out.hsq[si][i][q] = M.squaredNorm();
          out.lap[si][i][q] = M.trace();
        }
      }
      if (flags.grad) {
        Vec gt = cs.grad_mean(t);
        Vec rg = R * gt;
        for (int c = 0; c < n; ++c) out.ricg[i][q * n + c] = rg[c];
      }
    }
  });
  return out;
}

// Trapezoid cumulative integral of per-node integrand values, within node q0..Q.
inline std::vector<double> cumulative_trapezoid(const std::vector<double>& times,
                                                const std::vector<double>& vals, int q0) {
  std::vector<double> out(times.size(), 0.0);
  for (int q = q0 + 1; q < int(times.size()); ++q)
    out[q] = out[q - 1] + 0.5 * (vals[q] + vals[q - 1]) * (times[q] - times[q - 1]);
  return out;
}

inline double matrix_scale(const std::vector<std::vector<double>>& Y, int q0) {
  RunningStat st;
  for (const auto& row : Y)
    for (int q = q0; q < int(row.size()); ++q) st.add(std::abs(row[q]));
  return st.count() ? st.mean() : 1.0;
}

// ---------------------------------------------------------------------------
// check_C: the Bochner-inequality family (C1..C5) as submartingale tests of
// the compensated processes. C1/C2 need closed-form Hessians (Euclidean
// scope); C3/C4/C5 run anywhere. C5 additionally runs the conditional
// variant on fixed path prefixes.
// ---------------------------------------------------------------------------

enum class CVariant { C1, C2, C3, C4, C5 };

inline const char* cvariant_name(CVariant v) {
  switch (v) {
    case CVariant::C1: return "C1";
    case CVariant::C2: return "C2";
    case CVariant::C3: return "C3";
    case CVariant::C4: return "C4";
    case CVariant::C5: return "C5";
  }
  return "?";
}

namespace detail {

// Y matrices for one s-value of a C-variant; nodes before s are excluded.
struct CompensatedProcess {
  std::vector<double> times;  // from the first node >= s
  std::vector<std::vector<double>> Y;
  int q0 = 0;
};

inline CompensatedProcess build_c_process(const CondIngredients& ing, int si, CVariant v,
                                          double kappa, int n) {
  const auto& times = ing.node_times;
  double s = ing.s_values[si];
  int Q = int(times.size());
  int q0 = 0;
  while (q0 < Q && times[q0] < s - 1e-12) ++q0;
  long N = long(ing.nrmt.empty() ? (ing.nsq.empty() ? ing.nrm[si].size() : ing.nsq[si].size())
                                 : ing.nrmt.size());
  CompensatedProcess cp;
  cp.q0 = q0;
  cp.times.assign(times.begin() + q0, times.end());
  cp.Y.assign(N, std::vector<double>(Q - q0, 0.0));
  std::vector<double> integrand(Q, 0.0);
  for (long i = 0; i < N; ++i) {
    switch (v) {
      case CVariant::C1:
        for (int q = 0; q < Q; ++q)
          integrand[q] = ing.hsq[si][i][q] - kappa * ing.cross[si][i][q];
        break;
      case CVariant::C2:
        for (int q = 0; q < Q; ++q)
          integrand[q] =
              ing.lap[si][i][q] * ing.lap[si][i][q] / double(n) - kappa * ing.cross[si][i][q];
        break;
      case CVariant::C3:
        for (int q = 0; q < Q; ++q) integrand[q] = -kappa * ing.cross[si][i][q];
        break;
      case CVariant::C4:
      case CVariant::C5:
        for (int q = 0; q < Q; ++q) integrand[q] = -0.5 * kappa * ing.nrmt[i][q];
        break;
    }
    std::vector<double> cum = cumulative_trapezoid(times, integrand, q0);
    const auto& proc = (v == CVariant::C4 || v == CVariant::C5) ? ing.nrm[si] : ing.nsq[si];
    for (int q = q0; q < Q; ++q) cp.Y[i][q - q0] = proc[i][q] - cum[q];
  }
  return cp;
}

}  // namespace detail

inline EstimateReport check_C(const CheckContext& ctx, CVariant variant) {
  EstimateReport rep;
  ScopedTimer timer(&rep.runtime_seconds);
  rep.tag = cvariant_name(variant);
  rep.manifold = ctx.m->name();
  rep.function = ctx.F->name;
  rep.kappa = ctx.kappa;
  rep.paths = ctx.budgets.outer_paths;
  rep.inner = ctx.budgets.replicates;
  rep.ricci_sup_observed = sample_ricci_sup(*ctx.m, ctx.start, ctx.grid, ctx.seed);

  CondIngredientFlags flags;
  bool squared = variant == CVariant::C1 || variant == CVariant::C2 || variant == CVariant::C3;
  flags.nsq = squared;
  flags.cross = squared;
  flags.nrm = !squared;
  flags.nrmt = true;
  flags.hess = (variant == CVariant::C1 || variant == CVariant::C2);
  std::vector<double> s_values = default_s_values(*ctx.F);
  CondIngredients ing = conditional_ingredients(ctx, flags, s_values);

  Verdict worst = Verdict::Pass;
  double worst_drift = 0.0;
  Interval worst_ci;
  double margin_used = 0.0;
  for (int si = 0; si < int(s_values.size()); ++si) {
    detail::CompensatedProcess cp =
        detail::build_c_process(ing, si, variant, ctx.kappa, ctx.m->dim());
    double margin = margin_for(ctx, matrix_scale(cp.Y, 0));
    margin_used = std::max(margin_used, margin);
    MartingaleTestResult r =
        pairwise_drift_test(rep.tag, cp.times, cp.Y, margin, 0.01, /*one_sided=*/true);
    rep.extra["drift_s" + std::to_string(si)] = r.estimate;
    if (r.verdict == Verdict::Fail) worst = Verdict::Fail;
    if (si == 0 || r.estimate < worst_drift) {
      worst_drift = r.estimate;
      worst_ci = r.ci;
    }
  }

  // Conditional variant for C5: fixed prefixes, fresh continuation ensembles.
  if (variant == CVariant::C5 && ctx.budgets.prefixes > 0) {
    const ManifoldModel& m = *ctx.m;
    const CylinderFunction& F = *ctx.F;
    double s = 0.0;
    int Q = int(ing.node_times.size());
    int qp = Q / 2;
    double tp = ing.node_times[qp];
    double T = ing.node_times.back();
    std::vector<double> y1;
    std::vector<std::vector<double>> y2;
    for (int p = 0; p < std::min<long>(ctx.budgets.prefixes, ctx.budgets.outer_paths); ++p) {
      RngStream rng(ctx.seed, streams::pack(ctx.job, p, 0, 0));
      FramedPath path = sample_path(m, ctx.start, ctx.grid, rng);
      // Y_{tp} of the prefix, from the same estimator as the ensemble pass
      double cum = 0.0;
      for (int q = 1; q <= qp; ++q)
        cum += 0.25 * ctx.kappa * (ing.nrmt[p][q] + ing.nrmt[p][q - 1]) *
               (ing.node_times[q] - ing.node_times[q - 1]);
      y1.push_back(ing.nrm[0][p][qp] + cum);
      double psi_tp = ing.nrmt[p][qp];
      int kp = path.index_of(tp);
      int tail = ctx.grid.steps() - kp;
      std::vector<double> samples;
      for (int c = 0; c < ctx.budgets.cond_continuations; ++c) {
        FramedPath contp =
            continuation(m, path, tp, tail, RngStream(ctx.seed, streams::pack(ctx.job, p, Q + 2, c)));
        // terminal tuple: prefix slots before tp, continuation slots after
        TupleView tv;
        for (int a = 0; a < F.slots(); ++a) {
          if (F.times[a] < tp) {
            int ka = path.index_of(F.times[a]);
            tv.points.push_back(path.points[ka]);
            tv.frames.push_back(path.frames[ka]);
          } else {
            int ka = contp.index_of(F.times[a]);
            tv.points.push_back(contp.points[ka]);
            tv.frames.push_back(contp.frames[ka]);
          }
        }
        std::vector<Vec> slots = slot_gradients(m, F, tv);
        std::vector<Vec> suffix = suffix_gradients(slots);
        Vec gs = parallel_gradient(m, F, tv, s);
        double psi_T = suffix.back().norm();  // |nabla_T F_T|
        double comp = cum + 0.5 * ctx.kappa * 0.5 * (psi_tp + psi_T) * (T - tp);
        samples.push_back(gs.norm() + comp);
      }
      y2.push_back(std::move(samples));
    }
    double margin = margin_for(ctx, matrix_scale(ing.nrm[0], 0));
    MartingaleTestResult rc = conditional_submartingale_test("C5-conditional", y1, y2, margin);
    rep.extra["conditional_drift"] = rc.estimate;
    if (rc.verdict == Verdict::Fail) worst = Verdict::Fail;
  }

  rep.lhs = worst_drift;
  rep.lhs_ci = worst_ci;
  rep.slack = worst_drift;
  rep.slack_ci = worst_ci;
  rep.margin = margin_used;
  rep.verdict = worst;
  rep.note = "compensated-process submartingale test (worst pair drift reported)";
  return rep;
}

// ---------------------------------------------------------------------------
// Evolution drift checks: parallel-gradient evolution and the Bochner
// formula, as compensated zero-drift tests.
// ---------------------------------------------------------------------------

inline EstimateReport check_pargrad_evolution(const CheckContext& ctx, double s = 0.0) {
  EstimateReport rep;
  ScopedTimer timer(&rep.runtime_seconds);
  rep.tag = "PARGRAD_EVOLUTION";
  rep.manifold = ctx.m->name();
  rep.function = ctx.F->name;
  rep.kappa = ctx.kappa;
  rep.paths = ctx.budgets.outer_paths;
  rep.ricci_sup_observed = sample_ricci_sup(*ctx.m, ctx.start, ctx.grid, ctx.seed);

  CondIngredientFlags flags;
  flags.grad = true;
  CondIngredients ing = conditional_ingredients(ctx, flags, {s});
  int n = ing.n;
  int Q = int(ing.node_times.size());
  int q0 = 0;
  while (q0 < Q && ing.node_times[q0] < s - 1e-12) ++q0;
  long N = ctx.budgets.outer_paths;

  // componentwise compensated process V_c(t) = grad_c - (1/2) int Ric(grad_t)_c
  Verdict verdict = Verdict::Pass;
  double worst = 0.0;
  Interval worst_ci;
  double margin_used = 0.0;
  for (int c = 0; c < n; ++c) {
    std::vector<std::vector<double>> Y(N, std::vector<double>(Q - q0, 0.0));
    std::vector<double> integrand(Q, 0.0);
    for (long i = 0; i < N; ++i) {
      for (int q = 0; q < Q; ++q) integrand[q] = 0.5 * ing.ricg[i][q * n + c];
      std::vector<double> cum = cumulative_trapezoid(ing.node_times, integrand, q0);
      for (int q = q0; q < Q; ++q) Y[i][q - q0] = ing.grad[0][i][q * n + c] - cum[q];
    }
    double margin = margin_for(ctx, matrix_scale(Y, 0));
    margin_used = std::max(margin_used, margin);
    std::vector<double> times(ing.node_times.begin() + q0, ing.node_times.end());
    MartingaleTestResult r = pairwise_drift_test("pargrad", times, Y, margin, 0.01,
                                                 /*one_sided=*/false);
    rep.extra["drift_c" + std::to_string(c)] = r.estimate;
    if (r.verdict == Verdict::Fail) verdict = Verdict::Fail;
    if (std::abs(r.estimate) > std::abs(worst)) {
      worst = r.estimate;
      worst_ci = r.ci;
    }
  }
  rep.lhs = worst;
  rep.lhs_ci = worst_ci;
  rep.slack = worst;
  rep.slack_ci = worst_ci;
  rep.margin = margin_used;
  rep.verdict = verdict;
  rep.note = "zero-drift test of the compensated parallel gradient";
  return rep;
}

inline EstimateReport check_bochner_drift(const CheckContext& ctx, double s = 0.0,
                                          double drift_target = 0.0, bool have_target = false) {
  EstimateReport rep;
  ScopedTimer timer(&rep.runtime_seconds);
  rep.tag = "BOCHNER_DRIFT";
  rep.manifold = ctx.m->name();
  rep.function = ctx.F->name;
  rep.kappa = ctx.kappa;
  rep.paths = ctx.budgets.outer_paths;
  rep.ricci_sup_observed = sample_ricci_sup(*ctx.m, ctx.start, ctx.grid, ctx.seed);

  CondIngredientFlags flags;
  flags.nsq = true;
  flags.riccross = true;
  flags.hess = true;  // euclidean closed-form scope; curved runs need nested_fd
  if (ctx.m->kind() != ManifoldKind::Euclidean && !ctx.F->has_closed_form())
    throw CapabilityError("bochner drift check needs closed-form Hessians or nested_fd scope");
  CondIngredients ing = conditional_ingredients(ctx, flags, {s});
  int Q = int(ing.node_times.size());
  int q0 = 0;
  while (q0 < Q && ing.node_times[q0] < s - 1e-12) ++q0;
  long N = ctx.budgets.outer_paths;
  std::vector<std::vector<double>> Y(N, std::vector<double>(Q - q0, 0.0));
  std::vector<double> integrand(Q, 0.0);
  for (long i = 0; i < N; ++i) {
    for (int q = 0; q < Q; ++q) integrand[q] = ing.hsq[0][i][q] + ing.riccross[0][i][q];
    std::vector<double> cum = cumulative_trapezoid(ing.node_times, integrand, q0);
    for (int q = q0; q < Q; ++q) Y[i][q - q0] = ing.nsq[0][i][q] - cum[q];
  }
  std::vector<double> times(ing.node_times.begin() + q0, ing.node_times.end());
  double margin = margin_for(ctx, matrix_scale(Y, 0));
  MartingaleTestResult r = pairwise_drift_test("bochner", times, Y, margin, 0.01, false);
  rep.lhs = r.estimate;
  rep.lhs_ci = r.ci;
  rep.slack = r.estimate;
  rep.slack_ci = r.ci;
  rep.margin = margin;
  rep.verdict = r.verdict;
  rep.note = "compensated |nabla_s F_t|^2 zero-drift test";

  // Raw drift of |nabla_s F_t|^2 over the whole window against a closed-form
  // target (the euclidean quadratic acceptance case).
  if (have_target) {
    RunningStat raw;
    for (long i = 0; i < N; ++i)
      raw.add((ing.nsq[0][i][Q - 1] - ing.nsq[0][i][q0]) /
              (ing.node_times[Q - 1] - ing.node_times[q0]));
    double z = z_two_sided(0.99);
    rep.extra["raw_drift"] = raw.mean();
    rep.extra["raw_drift_halfwidth"] = z * raw.stderror();
    rep.extra["raw_drift_target"] = drift_target;
    if (std::abs(raw.mean() - drift_target) > z * raw.stderror() + margin)
      rep.verdict = Verdict::Fail;
  }
  return rep;
}

}  // namespace pathlab
