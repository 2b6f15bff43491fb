#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "specbreak/errors.hpp"
#include "specbreak/longrun.hpp"
#include "specbreak/parallel.hpp"
#include "specbreak/rng.hpp"
#include "specbreak/spectrum.hpp"

namespace specbreak {

// ---------------------------------------------------------------------------
// Limit distributions
//
// All three reference laws are suprema of functionals of iid standard
// Brownian bridges B_j(x) = W_j(x) - x W_j(1):
//   Joint:      sup_{x in [delta,1]} sum_{j<=d} B_j^2(x)
//   Individual: sup_{x in [delta,1]} |B(x)|
//   Trace:      sup_{x in [0,1]}     |B(x)|
// Paths are simulated on a uniform G-point grid from scaled Gaussian
// increments. A raw grid supremum underestimates the continuum supremum by
// O(1/sqrt(G)), which is material at the tolerances used here, so intervals
// that could contain the path supremum are refined by conditional
// Brownian-bridge bisection (between grid points, given the grid values, the
// in-fill is an exact Brownian bridge). Refinement draws are derived from
// (seed, replication, interval) counters, making the result independent of
// scheduling and of which intervals get inspected.
// ---------------------------------------------------------------------------

enum class LimitFamily { Joint, Individual, Trace };

inline const char* family_name(LimitFamily family) {
  switch (family) {
    case LimitFamily::Joint: return "J";
    case LimitFamily::Individual: return "I";
    case LimitFamily::Trace: return "M";
  }
  return "?";
}

// `grid_points == 0` means resolution-matched mode: the test wrappers replace
// it by the sample's own CUSUM grid size and turn refinement off, so the
// reference is the discrete maximum of the limit process at exactly the
// statistic's resolution. Explicit grids default to refined (continuum)
// behavior.
struct LimitDistSpec {
  LimitFamily family = LimitFamily::Joint;
  int d = 1;                 // Joint only
  double delta = 0.1;        // Joint and Individual
  int grid_points = 1000;
  int replications = 10000;
  std::uint64_t seed = 0;
  bool refine = true;

  void validate() const {
    if (grid_points < 100) throw std::invalid_argument("limit grid needs >= 100 points");
    if (replications < 1000)
      throw std::invalid_argument("limit simulation needs >= 1000 replications");
    if (family == LimitFamily::Joint && d < 1)
      throw std::invalid_argument("joint family needs d >= 1");
    if (family != LimitFamily::Trace && !(delta >= 0.0 && delta < 1.0))
      throw std::invalid_argument("delta must lie in [0,1)");
  }

  int components() const { return family == LimitFamily::Joint ? d : 1; }

  // Auto grid: match the resolution the statistic is maximized over.
  LimitDistSpec resolved_for(int n) const {
    LimitDistSpec out = *this;
    if (out.grid_points == 0) {
      out.grid_points = std::max(n, 100);
      out.refine = false;
    }
    return out;
  }

  std::string key() const {
    char buf[176];
    std::snprintf(buf, sizeof(buf), "family=%s d=%d delta=%.17g G=%d R=%d seed=%llu refine=%d",
                  family_name(family), components(),
                  family == LimitFamily::Trace ? 0.0 : delta, grid_points, replications,
                  static_cast<unsigned long long>(seed), refine ? 1 : 0);
    return buf;
  }
};

namespace detail {

inline constexpr int kRefineLevels = 6;  // local resolution 2^6 per interval

// Supremum of sum_j B_j^2 over {t >= t_min} for one replication, including
// conditional bisection of the intervals whose endpoint norms come within
// the exceedance bound of the grid supremum.
inline double bridge_sup_sq(const LimitDistSpec& spec, std::uint64_t rep, double t_min) {
  const int g_count = spec.grid_points;
  const int d = spec.components();
  const double dt = 1.0 / g_count;

  Rng rng(derive_seed(spec.seed, rep));
  std::normal_distribution<double> normal;

  // Bridge values at grid points 0..G per component.
  Eigen::MatrixXd bridge(d, g_count + 1);
  const double sd = std::sqrt(dt);
  for (int j = 0; j < d; ++j) {
    double w = 0.0;
    bridge(j, 0) = 0.0;
    for (int g = 1; g <= g_count; ++g) {
      w += sd * normal(rng);
      bridge(j, g) = w;
    }
    double w1 = bridge(j, g_count);
    for (int g = 1; g <= g_count; ++g) bridge(j, g) -= (static_cast<double>(g) / g_count) * w1;
  }

  const int g_lo = std::max(1, ceil_index(t_min * g_count));
  Eigen::VectorXd norm_sq = bridge.colwise().squaredNorm();
  double sup = 0.0;
  for (int g = g_lo; g <= g_count; ++g) sup = std::max(sup, norm_sq(g));
  if (!spec.refine) return sup;

  // Attainable in-fill exceedance of the component deviations from the
  // chord over a span of length `span_dt`: per-path failure probability
  // ~1e-9 via a union bound over all spans ever tested.
  const int refined = 1 << kRefineLevels;
  const double log_budget = std::log(2.0 * d * g_count * refined * 1e9);
  auto excess = [&](double span_dt) { return std::sqrt(0.5 * span_dt * d * log_budget); };
  const double top_excess = excess(dt);

  // Midpoint values are addressed by (replication, interval, dyadic
  // position, component), so a span sampled twice always gets the same
  // draw no matter which spans were pruned in between.
  Eigen::MatrixXd fill(d, refined + 1);
  Eigen::VectorXd fill_norm_sq(refined + 1);
  struct Span {
    int lo, hi;
  };
  Span stack[2 * kRefineLevels + 2];
  for (int g = g_lo; g <= g_count; ++g) {
    double endpoint = std::sqrt(std::max(norm_sq(g - 1), norm_sq(g)));
    double bound = endpoint + top_excess;
    if (bound * bound <= sup) continue;

    const std::uint64_t stream = derive_seed(spec.seed, rep, 0x1477ULL + g);
    fill.col(0) = bridge.col(g - 1);
    fill.col(refined) = bridge.col(g);
    fill_norm_sq(0) = norm_sq(g - 1);
    fill_norm_sq(refined) = norm_sq(g);
    const double t_left = static_cast<double>(g - 1) / g_count;

    int top = 0;
    stack[top++] = Span{0, refined};
    while (top > 0) {
      Span span = stack[--top];
      double span_dt = static_cast<double>(span.hi - span.lo) * dt / refined;
      double local = std::sqrt(std::max(fill_norm_sq(span.lo), fill_norm_sq(span.hi)));
      double local_bound = local + excess(span_dt);
      if (local_bound * local_bound <= sup) continue;
      int mid = (span.lo + span.hi) / 2;
      double cond_sd = std::sqrt(span_dt / 4.0);
      for (int j = 0; j < d; ++j)
        fill(j, mid) = 0.5 * (fill(j, span.lo) + fill(j, span.hi)) +
                       cond_sd * counter_normal(stream, static_cast<std::uint64_t>(mid) * d + j);
      fill_norm_sq(mid) = fill.col(mid).squaredNorm();
      if (t_left + mid * dt / refined >= t_min) sup = std::max(sup, fill_norm_sq(mid));
      if (mid - span.lo >= 2) {
        stack[top++] = Span{span.lo, mid};
        stack[top++] = Span{mid, span.hi};
      }
    }
  }
  return sup;
}

}  // namespace detail

// Simulated reference sample for a limit law, sorted ascending.
struct LimitTable {
  LimitDistSpec spec;
  std::vector<double> sorted;

  // Critical value at level alpha: the floor(alpha*R)-th largest replicate.
  // Together with p_value below this makes
  //   statistic > critical_value  <=>  p_value < alpha
  // exact for any reference sample.
  double quantile(double alpha) const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    std::size_t k = static_cast<std::size_t>(std::floor(alpha * sorted.size()));
    if (k < 1)
      throw std::invalid_argument("alpha too small to resolve with this many replications");
    return sorted[sorted.size() - k];
  }

  double p_value(double statistic) const {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), statistic);
    return static_cast<double>(sorted.end() - it) / sorted.size();
  }
};

inline LimitTable make_limit_table(const LimitDistSpec& spec, int threads = 0) {
  spec.validate();
  const double t_min = spec.family == LimitFamily::Trace ? 0.0 : spec.delta;
  LimitTable table;
  table.spec = spec;
  table.sorted.resize(spec.replications);
  parallel_for(spec.replications, threads, [&](std::size_t rep) {
    double sup_sq = detail::bridge_sup_sq(spec, rep, t_min);
    table.sorted[rep] = spec.family == LimitFamily::Joint ? sup_sq : std::sqrt(sup_sq);
  });
  std::sort(table.sorted.begin(), table.sorted.end());
  return table;
}

// Quantile plus the full reference sample, as one operation.
inline std::pair<double, LimitTable> limit_quantile(const LimitDistSpec& spec, double alpha,
                                                    int threads = 0) {
  LimitTable table = make_limit_table(spec, threads);
  double q = table.quantile(alpha);
  return {q, std::move(table)};
}

// ---------------------------------------------------------------------------
// Test statistics
// ---------------------------------------------------------------------------

struct TestReport {
  std::string test;  // "joint" | "eigenvalue_<j>" | "trace"
  double statistic = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  double alpha = 0.05;
  bool reject = false;
  int break_index = 0;          // grid argmax k-hat
  double break_fraction = 0.0;  // k-hat / n
  int d = 0;
  double delta = 0.0;
  std::string kernel;
  double bandwidth = 0.0;
  int limit_grid = 0;
  int limit_replications = 0;
  std::uint64_t limit_seed = 0;
  Diagnostics diagnostics;
};

// Eigenvalue-side statistics for one series, computed in a single pass:
// the partial-sample eigenvalue process, the score-based long-run covariance
// and the CUSUM statistics with their argmax locations.
struct BreakStatistics {
  int n = 0;
  int d = 0;
  double delta = 0.0;
  double bandwidth = 0.0;

  double joint_stat = 0.0;
  int joint_k = 0;
  Eigen::VectorXd indiv_stat;  // length d
  std::vector<int> indiv_k;

  Eigen::VectorXd lambda_full;  // full-sample spectrum, all D components
  Eigen::MatrixXd sigma_d;
  Diagnostics diagnostics;
};

struct TraceStatistics {
  int n = 0;
  double bandwidth = 0.0;
  double stat = 0.0;
  int k = 0;
  double sigma_t2 = 0.0;
  double trace_full = 0.0;
  Diagnostics diagnostics;
};

// kappa_n(k/n) = sqrt(n) (Lambda_hat(k/n) - (k/n) Lambda_hat(1)) for every
// grid k of the process; exactly zero at k = n.
inline Eigen::MatrixXd cusum_vector(const EigenProcess& proc) {
  const double sqrt_n = std::sqrt(static_cast<double>(proc.n));
  Eigen::RowVectorXd lambda_one = proc.values.row(proc.values.rows() - 1);
  Eigen::MatrixXd kappa(proc.values.rows(), proc.values.cols());
  for (std::size_t r = 0; r < proc.grid.size(); ++r) {
    double frac = static_cast<double>(proc.grid[r]) / proc.n;
    kappa.row(r) = sqrt_n * (proc.values.row(r) - frac * lambda_one);
  }
  return kappa;
}

inline BreakStatistics compute_break_statistics(const FunctionalSeries& series, int d,
                                                double delta, const KernelSpec& kernel) {
  const int n = series.size();
  const int dim = series.dimension();
  if (d < 1 || d > dim) throw std::invalid_argument("d must lie in 1..D");

  BreakStatistics out;
  out.n = n;
  out.d = d;
  out.delta = delta;
  out.bandwidth = resolve_bandwidth(kernel, n);

  const Eigen::MatrixXd& coeffs = series.coeffs();
  double mean_sq = coeffs.rowwise().squaredNorm().mean();

  CovarianceOperator c_full = partial_covariance(series, n);
  if (c_full.mat.trace() <= 1e-15 * std::max(1.0, mean_sq))
    throw DegenerateSpectrum("sample covariance operator is numerically zero");

  EigenSystem eig_all = eigen_decompose(c_full, dim, &out.diagnostics);
  out.lambda_full = eig_all.eigenvalues;
  check_spectral_gap(out.lambda_full, d, out.diagnostics);

  EigenSystem eig_d;
  eig_d.eigenvalues = eig_all.eigenvalues.head(d);
  eig_d.eigenvectors = eig_all.eigenvectors.leftCols(d);

  ScoreMatrix theta = scores(series, eig_d, c_full);
  out.sigma_d = lrv_matrix(theta, kernel);
  Eigen::MatrixXd sigma_inv = invert_lrv(out.sigma_d);

  Eigen::VectorXd sigma_diag = out.sigma_d.diagonal();
  double lead_sq = out.lambda_full(0) * out.lambda_full(0);
  for (int j = 0; j < d; ++j)
    if (sigma_diag(j) <= 1e-14 * lead_sq)
      throw SingularLrv("long-run variance of eigenvalue " + std::to_string(j + 1) +
                            " is numerically zero",
                        sigma_diag(j));
  Eigen::VectorXd sigma_j = sigma_diag.cwiseSqrt();

  EigenProcess proc = eigenvalue_process(series, d, delta);
  Eigen::MatrixXd kappa_all = cusum_vector(proc);

  out.indiv_stat = Eigen::VectorXd::Constant(d, -1.0);
  out.indiv_k.assign(d, proc.grid.front());
  out.joint_stat = -1.0;
  out.joint_k = proc.grid.front();
  for (std::size_t r = 0; r < proc.grid.size(); ++r) {
    int k = proc.grid[r];
    Eigen::VectorXd kappa = kappa_all.row(r).transpose();
    double quad = kappa.dot(sigma_inv * kappa);
    if (quad > out.joint_stat) {
      out.joint_stat = quad;
      out.joint_k = k;
    }
    for (int j = 0; j < d; ++j) {
      double stat = std::abs(kappa(j)) / sigma_j(j);
      if (stat > out.indiv_stat(j)) {
        out.indiv_stat(j) = stat;
        out.indiv_k[j] = k;
      }
    }
  }
  out.joint_stat = std::max(out.joint_stat, 0.0);
  out.indiv_stat = out.indiv_stat.cwiseMax(0.0);
  return out;
}

inline TraceStatistics compute_trace_statistics(const FunctionalSeries& series,
                                                const KernelSpec& kernel) {
  const int n = series.size();
  TraceStatistics out;
  out.n = n;
  out.bandwidth = resolve_bandwidth(kernel, n);

  const Eigen::MatrixXd& coeffs = series.coeffs();
  Eigen::RowVectorXd mean = coeffs.colwise().mean();
  Eigen::VectorXd xi = (coeffs.rowwise() - mean).rowwise().squaredNorm();

  TraceProcess trace = trace_process(series);
  out.trace_full = trace.values(n - 1);

  double raw = detail::kernel_lag_sum(xi, kernel.kind, out.bandwidth)(0, 0);
  if (raw <= 1e-14 * std::max(out.trace_full * out.trace_full,
                              std::numeric_limits<double>::epsilon()))
    throw SingularLrv("long-run variance of the squared norms is numerically zero", raw);
  out.sigma_t2 = raw;

  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double sigma_t = std::sqrt(out.sigma_t2);
  out.stat = -1.0;
  out.k = 1;
  for (int k = 1; k <= n; ++k) {
    double frac = static_cast<double>(k) / n;
    double stat = sqrt_n * std::abs(trace.values(k - 1) - frac * out.trace_full) / sigma_t;
    if (stat > out.stat) {
      out.stat = stat;
      out.k = k;
    }
  }
  out.stat = std::max(out.stat, 0.0);
  return out;
}

inline TestReport build_report(std::string name, double statistic, int k, int n, double alpha,
                               const LimitTable& table, const KernelSpec& kernel,
                               double bandwidth, int d, double delta, Diagnostics diagnostics) {
  TestReport report;
  report.test = std::move(name);
  report.statistic = statistic;
  report.critical_value = table.quantile(alpha);
  report.p_value = table.p_value(statistic);
  report.alpha = alpha;
  report.reject = statistic > report.critical_value;
  report.break_index = k;
  report.break_fraction = static_cast<double>(k) / n;
  report.d = d;
  report.delta = delta;
  report.kernel = kernel_name(kernel.kind);
  report.bandwidth = bandwidth;
  report.limit_grid = table.spec.grid_points;
  report.limit_replications = table.spec.replications;
  report.limit_seed = table.spec.seed;
  report.diagnostics = std::move(diagnostics);
  return report;
}

// Joint test over the top-d eigenvalues: quadratic-form CUSUM against the
// sup of a sum of d squared Brownian bridges.
inline TestReport joint_test(const FunctionalSeries& series, int d, double delta,
                             const KernelSpec& kernel, const LimitDistSpec& limit,
                             double alpha, int threads = 0) {
  BreakStatistics core = compute_break_statistics(series, d, delta, kernel);
  LimitDistSpec spec = limit.resolved_for(core.n);
  spec.family = LimitFamily::Joint;
  spec.d = d;
  spec.delta = delta;
  LimitTable table = make_limit_table(spec, threads);
  return build_report("joint", core.joint_stat, core.joint_k, core.n, alpha, table, kernel,
                      core.bandwidth, d, delta, core.diagnostics);
}

// Individual test for the j-th eigenvalue (1-based), normalized by the
// corresponding long-run standard deviation.
inline TestReport individual_test(const FunctionalSeries& series, int j, int d, double delta,
                                  const KernelSpec& kernel, const LimitDistSpec& limit,
                                  double alpha, int threads = 0) {
  if (j < 1 || j > d) throw std::invalid_argument("eigenvalue index j must lie in 1..d");
  BreakStatistics core = compute_break_statistics(series, d, delta, kernel);
  LimitDistSpec spec = limit.resolved_for(core.n);
  spec.family = LimitFamily::Individual;
  spec.delta = delta;
  LimitTable table = make_limit_table(spec, threads);
  Diagnostics diag = core.diagnostics;
  diag.push_back("statistic uses the sqrt(n)-scaled CUSUM normalization");
  return build_report("eigenvalue_" + std::to_string(j), core.indiv_stat(j - 1),
                      core.indiv_k[j - 1], core.n, alpha, table, kernel, core.bandwidth, d,
                      delta, std::move(diag));
}

// Trace test: sup over the full sample of the scaled trace CUSUM.
inline TestReport trace_test(const FunctionalSeries& series, const KernelSpec& kernel,
                             const LimitDistSpec& limit, double alpha, int threads = 0) {
  TraceStatistics core = compute_trace_statistics(series, kernel);
  LimitDistSpec spec = limit.resolved_for(core.n);
  spec.family = LimitFamily::Trace;
  LimitTable table = make_limit_table(spec, threads);
  Diagnostics diag = core.diagnostics;
  diag.push_back("statistic uses the sqrt(n)-scaled CUSUM normalization");
  return build_report("trace", core.stat, core.k, core.n, alpha, table, kernel, core.bandwidth,
                      0, 0.0, std::move(diag));
}

}  // namespace specbreak
