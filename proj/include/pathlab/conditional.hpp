#pragma once

#include <functional>
#include <vector>

#include "pathlab/cylinder.hpp"

namespace pathlab {

// Snapshot of an outer path up to grid time t: the partition points already
// visited (with their frames, which encode transport) and the live frame
// point.
struct PrefixState {
  std::vector<Vec> frozen_points;  // partition points with t_alpha < t
  std::vector<Mat> frozen_frames;
  Vec x;  // X_t
  Mat u;  // U_t
  double t = 0.0;
  int beta() const { return int(frozen_points.size()); }
};

struct CondBudgets {
  int inner_budget = 2048;  // continuations for conditional values
  int replicates = 32;      // coupled-FD replicates for conditional gradients
  double fd_step = 1e-3;    // geodesic offset of the perturbed continuations
};

using StreamFactory = std::function<RngStream(int replicate)>;

// One replicate of the conditional-gradient estimator. `last` is the
// coupled central difference across the perturbed continuation starts (the
// live-slot partial of f_t, already in initial-frame coordinates); `past`
// holds the transported frozen-slot partials averaged over the coupled
// continuations.
struct CondReplicate {
  double value = 0.0;
  Vec last;
  std::vector<Vec> past;
};

// Replicate ensemble for nabla_s^par F_t at one (prefix, t). Exact closed
// forms are represented as a single replicate with `exact` set.
struct CondSamples {
  bool exact = false;
  int n = 0;
  std::vector<double> frozen_times;
  std::vector<CondReplicate> reps;

  int count() const { return int(reps.size()); }

  Vec grad_rep(int b, double s) const {
    Vec g = reps[b].last;
    for (std::size_t a = 0; a < frozen_times.size(); ++a)
      if (frozen_times[a] >= s) g += reps[b].past[a];
    return g;
  }

  Vec grad_mean(double s) const {
    Vec g = Vec::Zero(n);
    for (int b = 0; b < count(); ++b) g += grad_rep(b, s);
    return g / double(count());
  }

  double value_mean() const {
    double v = 0.0;
    for (const auto& r : reps) v += r.value;
    return v / double(count());
  }

  double value_se() const {
    if (exact || count() < 2) return 0.0;
    RunningStat st;
    for (const auto& r : reps) st.add(r.value);
    return st.stderror();
  }

  // Covariance of the replicate-mean gradient.
  Mat cov_of_mean(double s) const {
    Mat c = Mat::Zero(n, n);
    if (exact || count() < 2) return c;
    Vec m = grad_mean(s);
    for (int b = 0; b < count(); ++b) {
      Vec d = grad_rep(b, s) - m;
      c += d * d.transpose();
    }
    int B = count();
    return c / double(B - 1) / double(B);
  }

  // Unbiased estimator of |nabla_s^par F_t|^2 (U-statistic over replicates).
  double norm_sq_unbiased(double s) const {
    if (exact) return grad_rep(0, s).squaredNorm();
    int B = count();
    if (B < 2) throw CapabilityError("norm_sq_unbiased needs at least two replicates");
    Vec sum = Vec::Zero(n);
    double sq = 0.0;
    for (int b = 0; b < B; ++b) {
      Vec g = grad_rep(b, s);
      sum += g;
      sq += g.squaredNorm();
    }
    return (sum.squaredNorm() - sq) / (double(B) * double(B - 1));
  }

  // Jackknife-corrected |nabla_s^par F_t| (removes the O(1/B) Jensen bias of
  // the plain norm of the replicate mean).
  double norm_jackknife(double s) const {
    if (exact) return grad_rep(0, s).norm();
    int B = count();
    if (B < 2) return grad_mean(s).norm();
    Vec sum = Vec::Zero(n);
    std::vector<Vec> g(B);
    for (int b = 0; b < B; ++b) {
      g[b] = grad_rep(b, s);
      sum += g[b];
    }
    double full = (sum / double(B)).norm();
    double loo = 0.0;
    for (int b = 0; b < B; ++b) loo += ((sum - g[b]) / double(B - 1)).norm();
    loo /= double(B);
    double est = double(B) * full - double(B - 1) * loo;
    return std::max(est, 0.0);
  }

  // Unbiased estimator of the bilinear form g_{s1}' R g_{s2} of the two
  // conditional gradients (cross U-statistic; the shared inner noise of the
  // two estimates drops out of the off-diagonal pairs).
  double bilinear_unbiased(double s1, double s2, const Mat& R) const {
    if (exact) return grad_rep(0, s1).dot(R * grad_rep(0, s2));
    int B = count();
    if (B < 2) throw CapabilityError("bilinear_unbiased needs at least two replicates");
    Vec sum1 = Vec::Zero(n), sum2 = Vec::Zero(n);
    double diag = 0.0;
    for (int b = 0; b < B; ++b) {
      Vec g1 = grad_rep(b, s1), g2 = grad_rep(b, s2);
      sum1 += g1;
      sum2 += g2;
      diag += g1.dot(R * g2);
    }
    return (sum1.dot(R * sum2) - diag) / (double(B) * double(B - 1));
  }

  // Jackknife-corrected |nabla_s1 F_t| * |nabla_s2 F_t|.
  double prod_norm_jackknife(double s1, double s2) const {
    if (exact) return grad_rep(0, s1).norm() * grad_rep(0, s2).norm();
    int B = count();
    Vec sum1 = Vec::Zero(n), sum2 = Vec::Zero(n);
    std::vector<Vec> g1(B), g2(B);
    for (int b = 0; b < B; ++b) {
      g1[b] = grad_rep(b, s1);
      g2[b] = grad_rep(b, s2);
      sum1 += g1[b];
      sum2 += g2[b];
    }
    double full = (sum1 / double(B)).norm() * (sum2 / double(B)).norm();
    if (B < 2) return full;
    double loo = 0.0;
    for (int b = 0; b < B; ++b)
      loo += ((sum1 - g1[b]) / double(B - 1)).norm() * ((sum2 - g2[b]) / double(B - 1)).norm();
    loo /= double(B);
    double est = double(B) * full - double(B - 1) * loo;
    return std::max(est, 0.0);
  }
};

namespace detail {

// Initial-frame coordinates of a tangent vector at a snapshot (point, frame).
inline Vec frame_coords(const ManifoldModel& m, const Vec& p, const Mat& u, const Vec& w) {
  Vec c(u.cols());
  for (int i = 0; i < u.cols(); ++i) c[i] = m.metric_eval(p, u.col(i), w);
  return c;
}

}  // namespace detail

// Exact conditional data when t >= t_N (F is already measurable): value is
// F itself and the gradient splits into frozen-slot transported partials.
inline CondSamples conditional_exact_terminal(const ManifoldModel& m, const CylinderFunction& F,
                                              const TupleView& tv) {
  CondSamples out;
  out.exact = true;
  out.n = m.dim();
  out.frozen_times = F.times;
  CondReplicate rep;
  rep.value = F.value(tv.points);
  rep.last = Vec::Zero(m.dim());
  rep.past = slot_gradients(m, F, tv);
  out.reps.push_back(std::move(rep));
  return out;
}

// Closed-form conditional data from the registered semigroup model.
inline CondSamples conditional_closed_form(const ManifoldModel& m, const CylinderFunction& F,
                                           const PrefixState& pre) {
  CondQuery q;
  q.frozen = &pre.frozen_points;
  q.beta = pre.beta();
  q.t = pre.t;
  q.y = &pre.x;
  CondValue cv = F.cond->eval(q);
  CondSamples out;
  out.exact = true;
  out.n = m.dim();
  CondReplicate rep;
  rep.value = cv.value;
  rep.last = detail::frame_coords(m, pre.x, pre.u, cv.last_grad);
  for (int a = 0; a < q.beta; ++a) {
    out.frozen_times.push_back(F.times[a]);
    rep.past.push_back(
        detail::frame_coords(m, pre.frozen_points[a], pre.frozen_frames[a], cv.past_grads[a]));
  }
  out.reps.push_back(std::move(rep));
  return out;
}

// Nested estimator: per replicate, 2n continuations from exp_{X_t}(+/- delta
// U_t e_i) driven by one shared increment draw. The live-slot partial is the
// coupled central difference of f over the pair tuples; frozen-slot partials
// are exact transported partials of f averaged over the coupled tuples
// (the +/- average cancels the O(delta) term). Nothing here uses any of the
// martingale identities under test.
inline CondSamples estimate_conditional(const ManifoldModel& m, const CylinderFunction& F,
                                        const PrefixState& pre, double h,
                                        const CondBudgets& budgets, const StreamFactory& streams) {
  int n = m.dim();
  double delta = budgets.fd_step;
  int B = budgets.replicates;
  int beta = pre.beta();
  int total_slots = F.slots();
  int live_slots = total_slots - beta;
  if (live_slots <= 0) throw std::logic_error("estimate_conditional called past t_N");

  // steps from t to t_N
  int tail_steps = int(std::llround((F.times.back() - pre.t) / h));

  // partition step offsets within the tail
  std::vector<int> slot_offset(live_slots);
  for (int a = 0; a < live_slots; ++a)
    slot_offset[a] = int(std::llround((F.times[beta + a] - pre.t) / h));

  CondSamples out;
  out.n = n;
  out.frozen_times.assign(F.times.begin(), F.times.begin() + beta);
  out.reps.resize(B);

  int nw = 2 * n;
  std::vector<PathWalker> walkers;
  std::vector<FramePoint> starts(nw);
  std::vector<std::vector<Vec>> tuple(nw);  // full tuples, reused per replicate
  for (int w = 0; w < nw; ++w) {
    tuple[w] = pre.frozen_points;
    tuple[w].resize(total_slots, Vec::Zero(m.ambient_dim()));
  }
  Vec dw(n);
  double sh = std::sqrt(h);

  for (int b = 0; b < B; ++b) {
    RngStream rng = streams(b);
    walkers.clear();
    for (int i = 0; i < n; ++i) {
      for (double sign : {+1.0, -1.0}) {
        Vec dir = pre.u.col(i);
        FramePoint st = m.transport_frame(pre.x, sign * dir, delta, pre.u);
        walkers.emplace_back(m, st, h, RngStream());
      }
    }
    // record slot 0 of the live part if it sits exactly at t
    int next_slot = 0;
    for (int w = 0; w < nw; ++w)
      if (slot_offset[0] == 0) tuple[w][beta] = walkers[w].point();
    if (slot_offset[0] == 0) next_slot = 1;

    for (int k = 1; k <= tail_steps; ++k) {
      rng.fill_gaussian(dw, sh);
      for (int w = 0; w < nw; ++w) walkers[w].advance_with(dw);
      if (next_slot < live_slots && slot_offset[next_slot] == k) {
        for (int w = 0; w < nw; ++w) tuple[w][beta + next_slot] = walkers[w].point();
        ++next_slot;
      }
    }

    CondReplicate& rep = out.reps[b];
    rep.last.setZero(n);
    rep.past.assign(beta, Vec::Zero(n));
    rep.value = 0.0;
    for (int i = 0; i < n; ++i) {
      double fp = F.value(tuple[2 * i]);
      double fm = F.value(tuple[2 * i + 1]);
      rep.last[i] = (fp - fm) / (2.0 * delta);
      rep.value += fp + fm;
    }
    rep.value /= double(nw);
    if (beta > 0) {
      for (int w = 0; w < nw; ++w) {
        for (int a = 0; a < beta; ++a) {
          Vec g = F.partial(a, tuple[w]);
          rep.past[a] += detail::frame_coords(m, pre.frozen_points[a], pre.frozen_frames[a], g);
        }
      }
      for (int a = 0; a < beta; ++a) rep.past[a] /= double(nw);
    }
  }
  return out;
}

// Dispatch: closed form -> exact; t past t_N is the caller's business (it has
// the full tuple and should use conditional_exact_terminal).
inline CondSamples conditional_gradient_samples(const ManifoldModel& m, const CylinderFunction& F,
                                                const PrefixState& pre, double h,
                                                const CondBudgets& budgets,
                                                const StreamFactory& streams) {
  if (F.has_closed_form()) return conditional_closed_form(m, F, pre);
  if (!F.has_partials())
    throw CapabilityError("cylinder function has neither partials nor a closed form");
  return estimate_conditional(m, F, pre, h, budgets, streams);
}

struct ValueEstimate {
  double mean = 0.0;
  double se = 0.0;
  bool exact = false;
};

// Plain nested conditional value: mean of F over fresh (unperturbed)
// continuations, or the registered closed form.
inline ValueEstimate conditional_value(const ManifoldModel& m, const CylinderFunction& F,
                                       const PrefixState& pre, double h, int inner_budget,
                                       const StreamFactory& streams) {
  if (F.has_closed_form()) {
    CondSamples s = conditional_closed_form(m, F, pre);
    return ValueEstimate{s.reps[0].value, 0.0, true};
  }
  if (inner_budget < 2) throw ConfigError("conditional_value requires inner_budget >= 2");
  int beta = pre.beta();
  int total_slots = F.slots();
  int live_slots = total_slots - beta;
  int tail_steps = int(std::llround((F.times.back() - pre.t) / h));
  std::vector<int> slot_offset(live_slots);
  for (int a = 0; a < live_slots; ++a)
    slot_offset[a] = int(std::llround((F.times[beta + a] - pre.t) / h));
  std::vector<Vec> tuple = pre.frozen_points;
  tuple.resize(total_slots, Vec::Zero(m.ambient_dim()));
  RunningStat st;
  Vec dw(m.dim());
  double sh = std::sqrt(h);
  for (int b = 0; b < inner_budget; ++b) {
    RngStream rng = streams(b);
    PathWalker w(m, FramePoint{pre.x, pre.u}, h, RngStream());
    int next_slot = 0;
    if (slot_offset[0] == 0) {
      tuple[beta] = w.point();
      next_slot = 1;
    }
    for (int k = 1; k <= tail_steps; ++k) {
      rng.fill_gaussian(dw, sh);
      w.advance_with(dw);
      if (next_slot < live_slots && slot_offset[next_slot] == k) {
        tuple[beta + next_slot] = w.point();
        ++next_slot;
      }
    }
    st.add(F.value(tuple));
  }
  return ValueEstimate{st.mean(), st.stderror(), false};
}

enum class SecondGradientMethod { ClosedForm, NestedFd };

// nabla_t^par nabla_s^par F_t in initial-frame coordinates.
inline Mat second_parallel_gradient(const ManifoldModel& m, const CylinderFunction& F,
                                    const PrefixState& pre, double s, double h,
                                    SecondGradientMethod method, const CondBudgets& budgets,
                                    const StreamFactory& streams, double precision_floor = 0.25) {
  int n = m.dim();
  if (method == SecondGradientMethod::ClosedForm) {
    if (!F.has_closed_form())
      throw CapabilityError("second_parallel_gradient: no closed form registered");
    CondQuery q;
    q.frozen = &pre.frozen_points;
    q.beta = pre.beta();
    q.t = pre.t;
    q.y = &pre.x;
    q.want_hessian = true;
    CondValue cv = F.cond->eval(q);
    if (!cv.has_hessian) throw CapabilityError("second_parallel_gradient: no closed-form Hessian");
    Mat out(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double mij = m.metric_eval(pre.x, pre.u.col(i), Vec(cv.last_hess * pre.u.col(j)));
        for (int a = 0; a < q.beta; ++a)
          if (F.times[a] >= s)
            mij += m.metric_eval(pre.frozen_points[a], pre.frozen_frames[a].col(i),
                                 Vec(cv.mixed_hess[a] * pre.u.col(j)));
        out(i, j) = mij;
      }
    return out;
  }

  // Nested finite differences: columns are central differences of the
  // conditional parallel gradient across perturbed live points, coupled
  // through shared replicate streams.
  double d2 = budgets.fd_step;
  Mat out(n, n);
  double worst_rel_se = 0.0;
  for (int j = 0; j < n; ++j) {
    Vec gplus, gminus;
    Mat cov_p, cov_m;
    for (double sign : {+1.0, -1.0}) {
      Vec dir = pre.u.col(j);
      FramePoint st = m.transport_frame(pre.x, sign * dir, d2, pre.u);
      PrefixState shifted = pre;
      shifted.x = st.point;
      shifted.u = st.frame;
      CondSamples cs = conditional_gradient_samples(m, F, shifted, h, budgets, streams);
      if (sign > 0) {
        gplus = cs.grad_mean(s);
        cov_p = cs.cov_of_mean(s);
      } else {
        gminus = cs.grad_mean(s);
        cov_m = cs.cov_of_mean(s);
      }
    }
    Vec col = (gplus - gminus) / (2.0 * d2);
    out.col(j) = col;
    double se = std::sqrt((cov_p.trace() + cov_m.trace())) / (2.0 * d2);
    double scale = std::max(col.norm(), 1e-9);
    worst_rel_se = std::max(worst_rel_se, se / std::max(out.norm(), scale));
  }
  if (worst_rel_se > precision_floor)
    throw CapabilityError(
        "second_parallel_gradient: nested-fd noise above the precision floor; "
        "use the closed-form scope");
  return out;
}

}  // namespace pathlab
