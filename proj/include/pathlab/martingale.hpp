#pragma once

#include <ostream>

#include "pathlab/conditional.hpp"

namespace pathlab {

enum class Verdict { Pass, Fail, Inconclusive };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

// A time-indexed sample of one path-space process over an ensemble:
// values[i][q] is the process on path i at times[q].
struct ProcessSample {
  std::string ensemble_id;
  std::vector<double> times;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> stderrs;  // optional, same shape as values

  int paths() const { return int(values.size()); }
  int nodes() const { return int(times.size()); }
};

inline void write_process_csv(std::ostream& os, const ProcessSample& ps) {
  os << "path_id,time,value,stderr\n";
  for (int i = 0; i < ps.paths(); ++i)
    for (int q = 0; q < ps.nodes(); ++q) {
      double se = ps.stderrs.empty() ? 0.0 : ps.stderrs[i][q];
      os << i << "," << ps.times[q] << "," << ps.values[i][q] << "," << se << "\n";
    }
}

struct MartingaleTestResult {
  std::string statistic;
  double estimate = 0.0;   // worst-pair mean increment (or drift)
  Interval ci;             // its confidence interval
  double margin = 0.0;
  Verdict verdict = Verdict::Inconclusive;
  int pairs_tested = 0;
  std::string note;
};

// Tests E[Y_{t2} - Y_{t1}] >= -margin over all ordered node pairs, with a
// Bonferroni-corrected one-sided level. Differences are paired per path.
// With `two_sided` the null is zero drift: |E[Y_{t2} - Y_{t1}]| <= margin.
inline MartingaleTestResult pairwise_drift_test(const std::string& name,
                                                const std::vector<double>& times,
                                                const std::vector<std::vector<double>>& Y,
                                                double margin, double alpha = 0.01,
                                                bool one_sided = true) {
  MartingaleTestResult res;
  res.statistic = name;
  res.margin = margin;
  int Q = int(times.size());
  int npairs = Q * (Q - 1) / 2;
  if (npairs == 0 || Y.empty()) {
    res.verdict = Verdict::Inconclusive;
    res.note = "no node pairs to test";
    return res;
  }
  res.pairs_tested = npairs;
  double z = z_one_sided(alpha / npairs / (one_sided ? 1.0 : 2.0));
  double zci = z_two_sided(0.99);
  bool fail = false;
  double worst_stat = std::numeric_limits<double>::infinity();
  for (int q1 = 0; q1 < Q; ++q1)
    for (int q2 = q1 + 1; q2 < Q; ++q2) {
      RunningStat st;
      for (const auto& row : Y) st.add(row[q2] - row[q1]);
      double mean = st.mean(), se = st.stderror();
      auto consider = [&](double stat, double m, double s) {
        if (stat < worst_stat) {
          worst_stat = stat;
          res.estimate = m;
          res.ci = Interval{m - zci * s, m + zci * s};
        }
      };
      if (one_sided) {
        // reject (fail) when the upper confidence bound sits below -margin
        double upper = mean + z * se;
        consider(upper + margin, mean, se);
        if (upper < -margin) fail = true;
      } else {
        double dev = std::abs(mean) - z * se;
        consider(margin - dev, mean, se);
        if (dev > margin) fail = true;
      }
    }
  res.verdict = fail ? Verdict::Fail : Verdict::Pass;
  return res;
}

// Submartingale test of Y = process + compensator (Cor. of the martingale
// representation theorem: Y is a submartingale iff its drift is
// nonnegative).
inline MartingaleTestResult submartingale_test(const ProcessSample& process,
                                               const ProcessSample* compensator, double margin,
                                               double alpha = 0.01) {
  std::vector<std::vector<double>> Y = process.values;
  if (compensator) {
    if (compensator->times != process.times || compensator->paths() != process.paths())
      throw ConfigError("submartingale_test: compensator grid does not align with the process");
    for (int i = 0; i < process.paths(); ++i)
      for (int q = 0; q < process.nodes(); ++q) Y[i][q] += compensator->values[i][q];
  }
  return pairwise_drift_test("submartingale:" + process.ensemble_id, process.times, Y, margin,
                             alpha, true);
}

// Conditional variant on fixed path prefixes: for prefix p with current value
// y1[p], tests E[Y_{t2} | prefix] >= y1[p] - margin from a fresh continuation
// ensemble y2_samples[p].
inline MartingaleTestResult conditional_submartingale_test(
    const std::string& name, const std::vector<double>& y1,
    const std::vector<std::vector<double>>& y2_samples, double margin, double alpha = 0.01) {
  MartingaleTestResult res;
  res.statistic = name;
  res.margin = margin;
  int P = int(y1.size());
  res.pairs_tested = P;
  double z = z_one_sided(alpha / std::max(P, 1));
  double zci = z_two_sided(0.99);
  bool fail = false;
  double worst = std::numeric_limits<double>::infinity();
  for (int p = 0; p < P; ++p) {
    RunningStat st;
    for (double v : y2_samples[p]) st.add(v);
    double mean = st.mean() - y1[p], se = st.stderror();
    double upper = mean + z * se;
    if (upper + margin < worst) {
      worst = upper + margin;
      res.estimate = mean;
      res.ci = Interval{mean - zci * se, mean + zci * se};
    }
    if (upper < -margin) fail = true;
  }
  res.verdict = fail ? Verdict::Fail : Verdict::Pass;
  return res;
}

// ---------------------------------------------------------------------------
// Per-path martingale quantities.
// ---------------------------------------------------------------------------

// Prefix snapshot of a stored path at grid index k.
inline PrefixState prefix_at(const CylinderFunction& F, const FramedPath& path, int k) {
  PrefixState pre;
  double t = path.time(k);
  for (int a = 0; a < F.slots(); ++a) {
    if (F.times[a] < t) {
      int ka = path.index_of(F.times[a]);
      pre.frozen_points.push_back(path.points[ka]);
      pre.frozen_frames.push_back(path.frames[ka]);
    }
  }
  pre.x = path.points[k];
  pre.u = path.frames[k];
  pre.t = t;
  return pre;
}

// F_t along one path at the requested grid times (closed form or nested).
inline std::vector<ValueEstimate> martingale_values(const ManifoldModel& m,
                                                    const CylinderFunction& F,
                                                    const FramedPath& path,
                                                    const std::vector<double>& at_times,
                                                    int inner_budget,
                                                    const std::function<RngStream(int node, int rep)>& streams) {
  std::vector<ValueEstimate> out;
  TupleView tv;
  bool have_tv = false;
  for (std::size_t q = 0; q < at_times.size(); ++q) {
    double t = at_times[q];
    if (t >= F.horizon() - 1e-12) {
      if (!have_tv) {
        tv = tuple_view(F, path);
        have_tv = true;
      }
      out.push_back(ValueEstimate{F.value(tv.points), 0.0, true});
    } else {
      PrefixState pre = prefix_at(F, path, path.index_of(t));
      out.push_back(conditional_value(m, F, pre, path.h, inner_budget,
                                      [&](int b) { return streams(int(q), b); }));
    }
  }
  return out;
}

// nabla_t^par F_t at grid index k of a stored path, via the registered closed
// form (exact, no martingale identity involved).
inline Vec closed_form_live_gradient(const ManifoldModel& m, const CylinderFunction& F,
                                     const FramedPath& path, int k) {
  double t = path.time(k);
  if (t >= F.horizon() - 1e-12) {
    TupleView tv = tuple_view(F, path);
    return parallel_gradient(m, F, tv, t);
  }
  PrefixState pre = prefix_at(F, path, k);
  CondSamples cs = conditional_closed_form(m, F, pre);
  return cs.reps[0].last;
}

// R = F(gamma) - F_0 - sum_k <nabla_{tau_k}^par F_{tau_k}, dW_k>, with the
// path's own stored increments. Requires a registered closed form (the
// conditional gradients must not come from the identity under test).
inline double ito_reconstruction_residual(const ManifoldModel& m, const CylinderFunction& F,
                                          const FramedPath& path) {
  if (!F.has_closed_form())
    throw CapabilityError("ito_reconstruction_residual needs a registered closed form");
  double acc = 0.0;
  for (int k = 0; k < path.steps(); ++k) {
    Vec g = closed_form_live_gradient(m, F, path, k);
    acc += g.dot(path.increments[k]);
  }
  PrefixState p0 = prefix_at(F, path, 0);
  double f0 = conditional_closed_form(m, F, p0).reps[0].value;
  return eval(F, path) - f0 - acc;
}

struct QvPair {
  double quadratic_variation = 0.0;  // sum of squared increments of F_t
  double gradient_integral = 0.0;    // sum |nabla_t F_t|^2 h
};

// Ingredients of the quadratic-variation identity d[F,F]_t = |nabla_t F_t|^2 dt
// along one path (closed-form scope).
inline QvPair quadratic_variation_pair(const ManifoldModel& m, const CylinderFunction& F,
                                       const FramedPath& path) {
  if (!F.has_closed_form())
    throw CapabilityError("quadratic_variation_pair needs a registered closed form");
  QvPair out;
  double prev = 0.0;
  for (int k = 0; k <= path.steps(); ++k) {
    PrefixState pre = prefix_at(F, path, k);
    double t = path.time(k);
    double v;
    if (t >= F.horizon() - 1e-12) {
      v = eval(F, path);
    } else {
      v = conditional_closed_form(m, F, pre).reps[0].value;
    }
    if (k > 0) out.quadratic_variation += (v - prev) * (v - prev);
    prev = v;
    if (k < path.steps()) {
      Vec g = closed_form_live_gradient(m, F, path, k);
      out.gradient_integral += g.squaredNorm() * path.h;
    }
  }
  return out;
}

// Two-estimator comparison with pooled confidence interval:
// E[A] - E[B] within margin of zero. `paired` data.
inline MartingaleTestResult identity_check(const std::string& name, const std::vector<double>& a,
                                           const std::vector<double>& b, double margin,
                                           double level = 0.99) {
  MartingaleTestResult res;
  res.statistic = name;
  res.margin = margin;
  RunningStat st;
  for (std::size_t i = 0; i < a.size(); ++i) st.add(a[i] - b[i]);
  double z = z_two_sided(level);
  res.estimate = st.mean();
  res.ci = Interval{st.mean() - z * st.stderror(), st.mean() + z * st.stderror()};
  bool fail = res.ci.lo > margin || res.ci.hi < -margin;
  res.verdict = fail ? Verdict::Fail : Verdict::Pass;
  res.pairs_tested = 1;
  return res;
}

}  // namespace pathlab
