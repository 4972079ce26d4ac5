#pragma once

#include "pathlab/verify.hpp"

namespace pathlab {

// Twisted Ornstein-Uhlenbeck quadratic form along one path:
//   int_{t0}^{t1} cosh(kappa (s-t0)/2) |nabla_s F|^2 ds
//   + (1 - e^{-kappa(t1-t0)})/2 * int_{t1}^{T} e^{kappa (s-t1)/2} |nabla_s F|^2 ds.
// At kappa = 0, t0 = 0, t1 = T this is the Malliavin norm (classical
// Ornstein-Uhlenbeck form). The tail integral stops at t_N where the terminal
// gradient vanishes.
inline double twisted_ou_form(const CylinderFunction& F, const std::vector<Vec>& suffix, double t0,
                              double t1, double kappa) {
  double head =
      weighted_gradient_integral(F, suffix, t0, t1, 2.0, weight_cosh(0.5 * kappa, t0));
  double tail_factor = kappa == 0.0 ? 0.0 : 0.5 * (1.0 - std::exp(-kappa * (t1 - t0)));
  double tail = 0.0;
  if (tail_factor != 0.0 && F.horizon() > t1)
    tail = weighted_gradient_integral(F, suffix, t1, F.horizon(), 2.0,
                                      weight_exp(0.5 * kappa, t1));
  return head + tail_factor * tail;
}

// ---------------------------------------------------------------------------
// check_G: pointwise gradient estimates for martingales at fixed (s, t), on a
// family of fixed path prefixes with fresh continuation ensembles.
// ---------------------------------------------------------------------------

enum class GVariant { G1, G2 };

inline EstimateReport check_G(const CheckContext& ctx, GVariant variant, double s, double t,
                              const char* tag_override = nullptr) {
  EstimateReport rep;
  ScopedTimer timer(&rep.runtime_seconds);
  rep.tag = tag_override ? tag_override : (variant == GVariant::G1 ? "G1" : "G2");
  rep.manifold = ctx.m->name();
  rep.function = ctx.F->name;
  rep.kappa = ctx.kappa;
  rep.ricci_sup_observed = sample_ricci_sup(*ctx.m, ctx.start, ctx.grid, ctx.seed);
  const ManifoldModel& m = *ctx.m;
  const CylinderFunction& F = *ctx.F;
  double kappa = ctx.kappa;
  double T = F.horizon();
  int P = ctx.budgets.prefixes;
  rep.paths = P;
  rep.inner = ctx.budgets.rhs_budget;

  int kt = ctx.grid.index_of(t);
  int tail = ctx.grid.steps() - kt;
  double z = z_one_sided(0.01 / std::max(P, 1));
  double zci = z_two_sided(0.99);
  bool fail = false;
  double min_slack = std::numeric_limits<double>::infinity();
  Interval min_slack_ci;
  double lhs_rep = 0.0, rhs_rep = 0.0;
  double margin_used = 0.0;
  CondBudgets cb{ctx.budgets.inner_budget, ctx.budgets.prefix_replicates, ctx.budgets.fd_step};

  for (int p = 0; p < P; ++p) {
    RngStream rng(ctx.seed, streams::pack(ctx.job, p, 0, 0));
    FramedPath path = sample_path(m, ctx.start, ctx.grid, rng);
    PrefixState pre = prefix_at(F, path, kt);

    double lhs, lhs_se;
    if (t >= T - 1e-12) {
      TupleView tv = tuple_view(F, path);
      Vec g = parallel_gradient(m, F, tv, s);
      lhs = variant == GVariant::G1 ? g.norm() : g.squaredNorm();
      lhs_se = 0.0;
    } else {
      CondSamples cs = conditional_gradient_samples(m, F, pre, path.h, cb, [&](int b) {
        return RngStream(ctx.seed, streams::pack(ctx.job, p, 1, b));
      });
      Vec mean = cs.grad_mean(s);
      Mat cov = cs.cov_of_mean(s);
      if (variant == GVariant::G1) {
        lhs = cs.norm_jackknife(s);
        Vec dir = mean.norm() > 1e-12 ? Vec(mean / mean.norm()) : Vec(Vec::Zero(cs.n));
        lhs_se = mean.norm() > 1e-12 ? std::sqrt(std::max(dir.dot(cov * dir), 0.0))
                                     : std::sqrt(std::max(cov.trace(), 0.0));
      } else {
        lhs = cs.norm_sq_unbiased(s);
        lhs_se = 2.0 * std::sqrt(std::max(mean.dot(cov * mean), 0.0));
      }
    }

    RunningStat rhs_st;
    for (int c = 0; c < ctx.budgets.rhs_budget; ++c) {
      FramedPath cont =
          continuation(m, path, t, tail, RngStream(ctx.seed, streams::pack(ctx.job, p, 2, c)));
      TupleView tv;
      for (int a = 0; a < F.slots(); ++a) {
        if (F.times[a] < t) {
          int ka = path.index_of(F.times[a]);
          tv.points.push_back(path.points[ka]);
          tv.frames.push_back(path.frames[ka]);
        } else {
          int ka = cont.index_of(F.times[a]);
          tv.points.push_back(cont.points[ka]);
          tv.frames.push_back(cont.frames[ka]);
        }
      }
      std::vector<Vec> suffix = suffix_gradients(slot_gradients(m, F, tv));
      Vec gs = Vec::Zero(m.dim());
      for (int a = 0; a < F.slots(); ++a)
        if (F.times[a] >= s) {
          gs = suffix[a];
          break;
        }
      double term;
      if (variant == GVariant::G1) {
        term = gs.norm() + 0.5 * kappa * weighted_gradient_integral(F, suffix, t, T, 1.0,
                                                                    weight_exp(0.5 * kappa, t));
      } else {
        term = gs.squaredNorm() + 0.5 * kappa * weighted_gradient_integral(
                                                    F, suffix, t, T, 2.0, weight_exp(0.5 * kappa, t));
      }
      rhs_st.add(term);
    }
    double prefactor = variant == GVariant::G1 ? 1.0 : std::exp(0.5 * kappa * (T - t));
    double rhs = prefactor * rhs_st.mean();
    double rhs_se = prefactor * rhs_st.stderror();
    double margin = margin_for(ctx, std::max(std::abs(rhs), std::abs(lhs)));
    margin_used = std::max(margin_used, margin);
    double slack = rhs - lhs;
    double se = std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se);
    if (slack + z * se < -margin) fail = true;
    if (slack < min_slack) {
      min_slack = slack;
      min_slack_ci = Interval{slack - zci * se, slack + zci * se};
      lhs_rep = lhs;
      rhs_rep = rhs;
    }
  }
  rep.lhs = lhs_rep;
  rep.rhs = rhs_rep;
  rep.slack = min_slack;
  rep.slack_ci = min_slack_ci;
  rep.margin = margin_used;
  rep.verdict = fail ? Verdict::Fail : Verdict::Pass;
  rep.extra["s"] = s;
  rep.extra["t"] = t;
  rep.note = "per-prefix conditional estimate (min slack over prefixes reported)";
  return rep;
}

// ---------------------------------------------------------------------------
// check_R: the characterization battery R2..R7.
// ---------------------------------------------------------------------------

enum class RVariant { R2, R3, R4, R5, R6, R7 };

inline const char* rvariant_name(RVariant v) {
  switch (v) {
    case RVariant::R2: return "R2";
    case RVariant::R3: return "R3";
    case RVariant::R4: return "R4";
    case RVariant::R5: return "R5";
    case RVariant::R6: return "R6";
    case RVariant::R7: return "R7";
  }
  return "?";
}

// Terminal-ensemble rows shared by the R checks.
namespace detail {

struct TerminalRows {
  std::vector<std::vector<double>> rows;  // layout decided by the caller
};

}  // namespace detail

inline EstimateReport check_R(const CheckContext& ctx, RVariant variant, double t0 = 0.0,
                              double t1 = -1.0) {
  const ManifoldModel& m = *ctx.m;
  const CylinderFunction& F = *ctx.F;
  double kappa = ctx.kappa;
  double T = F.horizon();
  if (t1 < 0.0) t1 = T;

  if (variant == RVariant::R4 || variant == RVariant::R5) {
    // Re-expressions of G1/G2 at s = t via d[F,F]_t = |nabla_t F_t|^2 dt
    // (quadratic-variation identity); verified as such.
    double t = 0.5 * T;
    EstimateReport rep = check_G(ctx, variant == RVariant::R4 ? GVariant::G1 : GVariant::G2,
                                 ctx.grid.time(ctx.grid.index_of(t)), ctx.grid.time(ctx.grid.index_of(t)),
                                 rvariant_name(variant));
    rep.note = "re-expression of the gradient estimate at s = t via the "
               "quadratic-variation identity";
    return rep;
  }

  EstimateReport rep;
  ScopedTimer timer(&rep.runtime_seconds);
  rep.tag = rvariant_name(variant);
  rep.manifold = m.name();
  rep.function = F.name;
  rep.kappa = kappa;
  rep.paths = ctx.budgets.outer_paths;
  rep.ricci_sup_observed = sample_ricci_sup(m, ctx.start, ctx.grid, ctx.seed);
  double z = z_two_sided(0.99);

  if (variant == RVariant::R2 || variant == RVariant::R3) {
    EnsembleSpec fd_spec{&m, ctx.grid, ctx.start, ctx.budgets.outer_paths, ctx.workers, ctx.seed,
                         ctx.job};
    BasePointGradient bp = base_point_gradient(fd_spec, F, ctx.budgets.fd_step);
    EnsembleSpec spec = fd_spec;
    spec.job = ctx.job + 1;
    auto rows = run_path_ensemble(spec, 1, [&](long, const FramedPath& path, std::vector<double>& row) {
      TupleView tv = tuple_view(F, path);
      std::vector<Vec> suffix = suffix_gradients(slot_gradients(m, F, tv));
      Vec g0 = suffix.empty() ? Vec(Vec::Zero(m.dim())) : suffix[0];
      if (variant == RVariant::R2) {
        row[0] = g0.norm() + 0.5 * kappa * weighted_gradient_integral(F, suffix, 0.0, T, 1.0,
                                                                      weight_exp(0.5 * kappa, 0.0));
      } else {
        row[0] = g0.squaredNorm() + 0.5 * kappa * weighted_gradient_integral(
                                                      F, suffix, 0.0, T, 2.0, weight_exp(0.5 * kappa, 0.0));
      }
    });
    RunningStat rhs_st = column_stat(rows, 0);
    double lhs, lhs_se, rhs, rhs_se;
    if (variant == RVariant::R2) {
      lhs = bp.norm_corrected();
      Vec dir = bp.mean.norm() > 1e-12 ? Vec(bp.mean / bp.mean.norm()) : Vec(Vec::Zero(m.dim()));
      lhs_se = std::sqrt(std::max(dir.dot(bp.cov_of_mean * dir), 1e-30));
      rhs = rhs_st.mean();
      rhs_se = rhs_st.stderror();
    } else {
      lhs = bp.norm_unbiased_sq();
      lhs_se = 2.0 * std::sqrt(std::max(bp.mean.dot(bp.cov_of_mean * bp.mean), 1e-30));
      rhs = std::exp(0.5 * kappa * T) * rhs_st.mean();
      rhs_se = std::exp(0.5 * kappa * T) * rhs_st.stderror();
    }
    double margin = margin_for(ctx, std::max(std::abs(rhs), 1e-9));
    double slack = rhs - lhs;
    double se = std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se);
    rep.lhs = lhs;
    rep.rhs = rhs;
    rep.lhs_ci = Interval{lhs - z * lhs_se, lhs + z * lhs_se};
    rep.rhs_ci = Interval{rhs - z * rhs_se, rhs + z * rhs_se};
    rep.slack = slack;
    rep.slack_ci = Interval{slack - z * se, slack + z * se};
    rep.margin = margin;
    rep.verdict = (slack + z_one_sided(0.01) * se < -margin) ? Verdict::Fail : Verdict::Pass;
    rep.note = "base-point gradient via coupled central differences";
    return rep;
  }

  // R6 / R7 at (t0, t1) = (0, T): conditionals at the endpoints reduce to
  // E[F] and F itself, so both sides are plain terminal functionals.
  if (t0 != 0.0 || std::abs(t1 - T) > 1e-12)
    throw CapabilityError("R6/R7 are instantiated at (t0, t1) = (0, T)");
  if (variant == RVariant::R7 && !F.positive)
    throw CapabilityError("R7 requires a positive test function");

  EnsembleSpec spec{&m, ctx.grid, ctx.start, ctx.budgets.outer_paths, ctx.workers, ctx.seed,
                    ctx.job};
  auto rows = run_path_ensemble(spec, 3, [&](long, const FramedPath& path, std::vector<double>& row) {
    TupleView tv = tuple_view(F, path);
    std::vector<Vec> suffix = suffix_gradients(slot_gradients(m, F, tv));
    double f = F.value(tv.points);
    row[0] = f;
    row[1] = twisted_ou_form(F, suffix, t0, t1, kappa);
    row[2] = f * f;
  });
  double pref = std::exp(0.5 * kappa * (t1 - t0));
  long N = ctx.budgets.outer_paths;
  if (variant == RVariant::R6) {
    RunningStat fstat = column_stat(rows, 0);
    double fbar = fstat.mean();
    // pseudo-values for RHS - LHS with the variance influence function
    RunningStat d;
    for (const auto& r : rows) {
      double dev = r[0] - fbar;
      d.add(pref * r[1] - dev * dev * double(N) / double(N - 1));
    }
    double margin = margin_for(ctx, std::abs(d.mean()) + fstat.variance());
    rep.lhs = fstat.variance();
    rep.rhs = pref * column_stat(rows, 1).mean();
    rep.slack = d.mean();
    rep.slack_ci = Interval{d.mean() - z * d.stderror(), d.mean() + z * d.stderror()};
    rep.margin = margin;
    rep.verdict =
        (d.mean() + z_one_sided(0.01) * d.stderror() < -margin) ? Verdict::Fail : Verdict::Pass;
    rep.note = "spectral gap of the twisted Ornstein-Uhlenbeck form at (0, T)";
    return rep;
  }
  // R7: entropy of F^2 against twice the twisted form.
  RunningStat g_st = column_stat(rows, 2);
  double mu = g_st.mean();
  if (mu <= 0.0) throw NumericalError("R7: mean of F^2 is not positive");
  RunningStat d;
  for (const auto& r : rows) {
    double g = r[2];
    double ent_i = g * std::log(std::max(g, 1e-300)) - (std::log(mu) + 1.0) * g + mu;
    d.add(2.0 * pref * r[1] - ent_i);
  }
  RunningStat lhs_st;
  for (const auto& r : rows)
    lhs_st.add(r[2] * std::log(std::max(r[2], 1e-300)));
  rep.lhs = lhs_st.mean() - mu * std::log(mu);
  rep.rhs = 2.0 * pref * column_stat(rows, 1).mean();
  rep.slack = d.mean();
  rep.slack_ci = Interval{d.mean() - z * d.stderror(), d.mean() + z * d.stderror()};
  rep.margin = margin_for(ctx, std::max(rep.rhs, 1e-9));
  rep.verdict =
      (d.mean() + z_one_sided(0.01) * d.stderror() < -rep.margin) ? Verdict::Fail : Verdict::Pass;
  rep.note = "log-Sobolev inequality of the twisted form at (0, T)";
  return rep;
}

// ---------------------------------------------------------------------------
// check_H: Hessian estimates (closed-form conditional scope).
// ---------------------------------------------------------------------------

enum class HVariant { H1, H2, H3 };

inline EstimateReport check_H(const CheckContext& ctx, HVariant variant, double s = 0.0) {
  EstimateReport rep;
  ScopedTimer timer(&rep.runtime_seconds);
  rep.tag = variant == HVariant::H1 ? "H1" : variant == HVariant::H2 ? "H2" : "H3";
  rep.manifold = ctx.m->name();
  rep.function = ctx.F->name;
  rep.kappa = ctx.kappa;
  rep.paths = ctx.budgets.outer_paths;
  rep.ricci_sup_observed = sample_ricci_sup(*ctx.m, ctx.start, ctx.grid, ctx.seed);
  const ManifoldModel& m = *ctx.m;
  const CylinderFunction& F = *ctx.F;
  double kappa = ctx.kappa;
  double T = F.horizon();
  if (!F.has_closed_form())
    throw CapabilityError("Hessian checks run in the closed-form conditional scope");
  if (variant == HVariant::H3 && !(F.positive && F.cond_sq))
    throw CapabilityError("H3 needs a positive function with a registered closed form for F^2");
  double z = z_two_sided(0.99);
  CondBudgets cb{ctx.budgets.inner_budget, ctx.budgets.replicates, ctx.budgets.fd_step};

  // s-segment representatives for the double Hessian integral, clipped to t
  // at use time.
  std::vector<double> seg_lo{0.0}, seg_hi;
  for (double ta : F.times) {
    seg_hi.push_back(ta);
    seg_lo.push_back(ta);
  }
  seg_lo.pop_back();

  EnsembleSpec spec{&m, ctx.grid, ctx.start, ctx.budgets.outer_paths, ctx.workers, ctx.seed,
                    ctx.job};
  int K = ctx.grid.steps();
  int ks = ctx.grid.index_of(s);
  auto rows = run_path_ensemble(spec, 4, [&](long, const FramedPath& path, std::vector<double>& row) {
    TupleView tv = tuple_view(F, path);
    std::vector<Vec> suffix = suffix_gradients(slot_gradients(m, F, tv));
    double f = F.value(tv.points);
    row[0] = f;
    if (variant == HVariant::H1) {
      PrefixState ps = prefix_at(F, path, ks);
      CondSamples cs;
      if (s >= T - 1e-12)
        cs = conditional_exact_terminal(m, F, tv);
      else
        cs = conditional_closed_form(m, F, ps);
      double a = cs.grad_mean(s).squaredNorm();
      double hint = 0.0;
      for (int k = ks; k < K; ++k) {
        PrefixState pk = prefix_at(F, path, k);
        Mat M = second_parallel_gradient(m, F, pk, s, path.h, SecondGradientMethod::ClosedForm, cb,
                                         StreamFactory());
        hint += M.squaredNorm() * path.h;
      }
      row[1] = a + hint;
      row[2] = std::exp(0.5 * kappa * (T - s)) *
               (parallel_gradient(m, F, tv, s).squaredNorm() +
                0.5 * kappa * weighted_gradient_integral(F, suffix, s, T, 2.0,
                                                         weight_exp(0.5 * kappa, s)));
    } else if (variant == HVariant::H2) {
      double dbl = 0.0;
      for (int k = 0; k < K; ++k) {
        double t = path.time(k);
        PrefixState pk = prefix_at(F, path, k);
        for (std::size_t seg = 0; seg < seg_lo.size(); ++seg) {
          double lo = seg_lo[seg], hi = std::min(seg_hi[seg], t);
          if (hi <= lo) continue;
          double srep = 0.5 * (lo + hi);
          Mat M = second_parallel_gradient(m, F, pk, srep, path.h,
                                           SecondGradientMethod::ClosedForm, cb, StreamFactory());
          dbl += M.squaredNorm() * (hi - lo) * path.h;
        }
      }
      row[1] = dbl;
      row[2] = std::exp(0.5 * kappa * T) *
               weighted_gradient_integral(F, suffix, 0.0, T, 2.0, weight_cosh(0.5 * kappa, 0.0));
    } else {
      // H3: (1/2) int int (F^2)_t |nabla_t nabla_s log (F^2)_t|^2 ds dt
      double dbl = 0.0;
      for (int k = 0; k < K; ++k) {
        double t = path.time(k);
        PrefixState pk = prefix_at(F, path, k);
        CondQuery q;
        q.frozen = &pk.frozen_points;
        q.beta = pk.beta();
        q.t = pk.t;
        q.y = &pk.x;
        q.want_hessian = true;
        CondValue cv = F.cond_sq->eval(q);
        // nabla^2 log g = (g hess - grad grad') / g^2, then frame-transported
        int n = m.dim();
        Mat hlog(n, n);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            double hij = m.metric_eval(pk.x, pk.u.col(i), Vec(cv.last_hess * pk.u.col(j)));
            double gi = m.metric_eval(pk.x, pk.u.col(i), cv.last_grad);
            double gj = m.metric_eval(pk.x, pk.u.col(j), cv.last_grad);
            hlog(i, j) = (cv.value * hij - gi * gj) / (cv.value * cv.value);
          }
        dbl += cv.value * hlog.squaredNorm() * t * path.h;  // s-integral over [0, t]
      }
      row[1] = 0.5 * dbl;
      row[2] = 2.0 * std::exp(0.5 * kappa * T) *
               weighted_gradient_integral(F, suffix, 0.0, T, 2.0, weight_cosh(0.5 * kappa, 0.0));
      row[3] = f * f;
    }
  });

  long N = ctx.budgets.outer_paths;
  RunningStat d;
  if (variant == HVariant::H1) {
    for (const auto& r : rows) d.add(r[2] - r[1]);
    rep.lhs = column_stat(rows, 1).mean();
    rep.rhs = column_stat(rows, 2).mean();
  } else if (variant == HVariant::H2) {
    RunningStat fst = column_stat(rows, 0);
    double fbar = fst.mean();
    for (const auto& r : rows) {
      double dev = r[0] - fbar;
      d.add(r[2] - r[1] - dev * dev * double(N) / double(N - 1));
    }
    rep.lhs = fst.variance() + column_stat(rows, 1).mean();
    rep.rhs = column_stat(rows, 2).mean();
  } else {
    RunningStat gst = column_stat(rows, 3);
    double mu = gst.mean();
    for (const auto& r : rows) {
      double g = r[3];
      double ent_i = g * std::log(std::max(g, 1e-300)) - (std::log(mu) + 1.0) * g + mu;
      d.add(r[2] - r[1] - ent_i);
    }
    RunningStat ent_st;
    for (const auto& r : rows) ent_st.add(r[3] * std::log(std::max(r[3], 1e-300)));
    rep.lhs = ent_st.mean() - mu * std::log(mu) + column_stat(rows, 1).mean();
    rep.rhs = column_stat(rows, 2).mean();
  }
  rep.slack = d.mean();
  rep.slack_ci = Interval{d.mean() - z * d.stderror(), d.mean() + z * d.stderror()};
  rep.margin = margin_for(ctx, std::max(std::abs(rep.rhs), 1e-9));
  rep.verdict =
      (d.mean() + z_one_sided(0.01) * d.stderror() < -rep.margin) ? Verdict::Fail : Verdict::Pass;
  rep.extra["s"] = s;
  rep.note = "closed-form conditional scope";
  return rep;
}

}  // namespace pathlab
