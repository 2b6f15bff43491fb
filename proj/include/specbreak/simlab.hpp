#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "specbreak/basis.hpp"
#include "specbreak/breaktest.hpp"
#include "specbreak/quantile_cache.hpp"
#include "specbreak/rng.hpp"

namespace specbreak {

// ---------------------------------------------------------------------------
// Data-generating processes: Gaussian Fourier-coefficient series with fast or
// slow eigenvalue decay, iid or FAR(1) dependence, and an optional one-shot
// multiplicative break in the coefficient standard deviations.
// ---------------------------------------------------------------------------

enum class Decay { Fast, Slow };
enum class Dependence { IID, FAR1 };
enum class PsiNorm { Operator, Frobenius };

inline const char* decay_name(Decay decay) { return decay == Decay::Fast ? "fast" : "slow"; }
inline const char* dependence_name(Dependence dep) {
  return dep == Dependence::IID ? "iid" : "far1";
}

inline Eigen::VectorXd decay_sigma(Decay decay, int dim) {
  Eigen::VectorXd sigma(dim);
  for (int l = 1; l <= dim; ++l)
    sigma(l - 1) = decay == Decay::Fast ? std::pow(3.0, -l) : 1.0 / l;
  return sigma;
}

struct BreakSpec {
  double tau = 0.5;
  Eigen::VectorXd b;  // length-D multipliers, all > 0
};

struct DgpSpec {
  int n = 100;
  int dim = 21;
  Decay decay = Decay::Slow;
  Dependence dependence = Dependence::IID;
  double kappa = 0.8;  // FAR(1) strength
  std::optional<BreakSpec> brk;
  std::uint64_t seed = 0;
  PsiNorm psi_norm = PsiNorm::Operator;

  void validate() const {
    if (n < 2) throw std::invalid_argument("dgp needs n >= 2");
    if (dim < 1) throw std::invalid_argument("dgp needs D >= 1");
    if (!(kappa > -1.0 && kappa < 1.0)) throw std::invalid_argument("kappa must lie in (-1,1)");
    if (brk) {
      if (!(brk->tau > 0.0 && brk->tau < 1.0))
        throw std::invalid_argument("break fraction tau must lie in (0,1)");
      if (brk->b.size() != dim) throw std::invalid_argument("break multiplier must have length D");
      if (brk->b.minCoeff() <= 0.0)
        throw std::invalid_argument("break multipliers must be positive");
    }
  }
};

namespace detail {

inline double matrix_scale(const Eigen::MatrixXd& m, PsiNorm norm) {
  if (norm == PsiNorm::Frobenius) return m.norm();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

}  // namespace detail

// Draws a coefficient series. The same underlying standard normals feed both
// regimes (scaled entrywise per regime), so a break spec with b = (1,...,1)
// produces bitwise the same output as no break under the same seed.
inline FunctionalSeries gen_series(const DgpSpec& spec) {
  spec.validate();
  const int n = spec.n;
  const int dim = spec.dim;

  Eigen::VectorXd sigma1 = decay_sigma(spec.decay, dim);
  Eigen::VectorXd sigma2 = spec.brk ? (spec.brk->b.array() * sigma1.array()).matrix() : sigma1;
  int k_star = spec.brk ? static_cast<int>(std::floor(spec.brk->tau * n + 1e-9)) : n;

  Rng rng(derive_seed(spec.seed));
  std::normal_distribution<double> normal;
  auto draw_vector = [&](Eigen::VectorXd& z) {
    for (int l = 0; l < dim; ++l) z(l) = normal(rng);
  };

  Eigen::MatrixXd coeffs(n, dim);
  Eigen::VectorXd z(dim);

  if (spec.dependence == Dependence::IID) {
    for (int i = 1; i <= n; ++i) {
      draw_vector(z);
      const Eigen::VectorXd& sigma = i <= k_star ? sigma1 : sigma2;
      coeffs.row(i - 1) = (sigma.array() * z.array()).transpose();
    }
    return FunctionalSeries(std::move(coeffs), fourier_basis(dim));
  }

  // FAR(1): x_i = kappa * Psi0 x_{i-1} + zeta_i, entry (a,b) of the random
  // operator has standard deviation sigma_a * sigma_b before rescaling to
  // unit norm; a burn-in of ceil(n/2) draws is discarded, and the post-break
  // regime restarts the recursion from the last pre-break state.
  Eigen::MatrixXd z_op(dim, dim);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) z_op(a, b) = normal(rng);

  auto make_psi = [&](const Eigen::VectorXd& sigma) {
    Eigen::MatrixXd psi =
        z_op.array() * (sigma * sigma.transpose()).array();
    return (psi / detail::matrix_scale(psi, spec.psi_norm)).eval();
  };
  Eigen::MatrixXd psi1 = spec.kappa * make_psi(sigma1);
  Eigen::MatrixXd psi2 = spec.brk ? (spec.kappa * make_psi(sigma2)).eval() : psi1;

  Eigen::VectorXd state = Eigen::VectorXd::Zero(dim);
  int burn = (n + 1) / 2;
  for (int t = 0; t < burn; ++t) {
    draw_vector(z);
    state = psi1 * state + (sigma1.array() * z.array()).matrix();
  }
  for (int i = 1; i <= n; ++i) {
    draw_vector(z);
    if (i <= k_star)
      state = psi1 * state + (sigma1.array() * z.array()).matrix();
    else
      state = psi2 * state + (sigma2.array() * z.array()).matrix();
    coeffs.row(i - 1) = state.transpose();
  }
  return FunctionalSeries(std::move(coeffs), fourier_basis(dim));
}

// ---------------------------------------------------------------------------
// Experiment driver: size/power/break-date study over a grid of cells.
// ---------------------------------------------------------------------------

enum class Setting { NullOnly = 0, S1 = 1, S2 = 2, S3 = 3, S4 = 4 };

inline std::string setting_name(Setting s) {
  return s == Setting::NullOnly ? "null" : std::to_string(static_cast<int>(s));
}

struct ExperimentConfig {
  Setting setting = Setting::NullOnly;
  Decay decay = Decay::Slow;
  Dependence dependence = Dependence::IID;
  double kappa = 0.8;
  std::vector<int> n_list;
  std::vector<double> b_grid;
  double tau = 0.5;
  int reps = 1000;
  int d = 3;
  int dim = 21;
  double delta = 0.1;
  double alpha = 0.05;
  KernelSpec kernel;
  int limit_grid = 0;  // 0 = match each cell's sample size
  int limit_reps = 10000;
  std::uint64_t limit_seed = 1;
  std::uint64_t seed = 1;
  int threads = 0;
  PsiNorm psi_norm = PsiNorm::Operator;

  void validate() const {
    if (reps < 100) throw std::invalid_argument("experiment needs reps >= 100");
    if (d < 1) throw std::invalid_argument("experiment needs d >= 1");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
  }
};

struct ExperimentRow {
  std::string setting;
  std::string decay;
  std::string dependence;
  int n = 0;
  double b = 1.0;
  double tau = 0.5;
  std::string test;
  double rejection_rate = 0.0;
  double median_break_fraction = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  int failures = 0;
};

namespace detail {

inline double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  double pos = p * (values.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  double frac = pos - lo;
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

}  // namespace detail

// Runs every cell (n x b) of the configured setting: `reps` simulated series
// per cell, all five tests applied to each, rejection rates and break-date
// quartiles per test. Cells where the long-run covariance is singular are
// counted as failures and excluded from the rates.
inline std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg,
                                                 QuantileStore* store = nullptr) {
  cfg.validate();
  const int n_tests = cfg.d + 2;  // J, I_1..I_d, M

  std::vector<double> b_values = cfg.setting == Setting::NullOnly
                                     ? std::vector<double>{1.0}
                                     : cfg.b_grid;
  if (cfg.n_list.empty() || b_values.empty()) return {};

  QuantileStore local_store("", cfg.threads);
  QuantileStore& tables = store ? *store : local_store;
  LimitDistSpec base;
  base.grid_points = cfg.limit_grid;
  base.replications = cfg.limit_reps;
  base.seed = cfg.limit_seed;

  std::vector<ExperimentRow> rows;
  std::uint64_t cell_index = 0;
  for (int n : cfg.n_list) {
    LimitDistSpec spec_j = base.resolved_for(n);
    spec_j.family = LimitFamily::Joint;
    spec_j.d = cfg.d;
    spec_j.delta = cfg.delta;
    LimitDistSpec spec_i = base.resolved_for(n);
    spec_i.family = LimitFamily::Individual;
    spec_i.delta = cfg.delta;
    LimitDistSpec spec_m = base.resolved_for(n);
    spec_m.family = LimitFamily::Trace;
    const double crit_j = tables.get(spec_j)->quantile(cfg.alpha);
    const double crit_i = tables.get(spec_i)->quantile(cfg.alpha);
    const double crit_m = tables.get(spec_m)->quantile(cfg.alpha);

    for (double b : b_values) {
      Eigen::VectorXd b_vec = Eigen::VectorXd::Ones(cfg.dim);
      switch (cfg.setting) {
        case Setting::NullOnly: break;
        case Setting::S1: b_vec(0) = b; break;
        case Setting::S2: b_vec(1) = b; break;
        case Setting::S3: b_vec(2) = b; break;
        case Setting::S4: b_vec(0) = b_vec(1) = b_vec(2) = b; break;
      }

      std::vector<std::uint8_t> failed(cfg.reps, 0);
      std::vector<std::uint8_t> rejected(cfg.reps * n_tests, 0);
      std::vector<double> fraction(cfg.reps * n_tests, 0.0);

      parallel_for(cfg.reps, cfg.threads, [&](std::size_t rep) {
        DgpSpec dgp;
        dgp.n = n;
        dgp.dim = cfg.dim;
        dgp.decay = cfg.decay;
        dgp.dependence = cfg.dependence;
        dgp.kappa = cfg.kappa;
        dgp.psi_norm = cfg.psi_norm;
        if (cfg.setting != Setting::NullOnly) dgp.brk = BreakSpec{cfg.tau, b_vec};
        dgp.seed = derive_seed(cfg.seed, cell_index, rep);
        FunctionalSeries series = gen_series(dgp);
        try {
          BreakStatistics core =
              compute_break_statistics(series, cfg.d, cfg.delta, cfg.kernel);
          TraceStatistics trace = compute_trace_statistics(series, cfg.kernel);
          std::size_t slot = rep * n_tests;
          rejected[slot] = core.joint_stat > crit_j;
          fraction[slot] = static_cast<double>(core.joint_k) / n;
          for (int j = 0; j < cfg.d; ++j) {
            rejected[slot + 1 + j] = core.indiv_stat(j) > crit_i;
            fraction[slot + 1 + j] = static_cast<double>(core.indiv_k[j]) / n;
          }
          rejected[slot + n_tests - 1] = trace.stat > crit_m;
          fraction[slot + n_tests - 1] = static_cast<double>(trace.k) / n;
        } catch (const Error&) {
          failed[rep] = 1;
        }
      });

      int failures = 0;
      for (auto f : failed) failures += f;
      for (int t = 0; t < n_tests; ++t) {
        ExperimentRow row;
        row.setting = setting_name(cfg.setting);
        row.decay = decay_name(cfg.decay);
        row.dependence = dependence_name(cfg.dependence);
        row.n = n;
        row.b = b;
        row.tau = cfg.tau;
        row.test = t == 0 ? "J" : (t <= cfg.d ? "I" + std::to_string(t) : "M");
        row.failures = failures;
        int rejections = 0;
        std::vector<double> fractions;
        fractions.reserve(cfg.reps);
        for (int rep = 0; rep < cfg.reps; ++rep) {
          if (failed[rep]) continue;
          rejections += rejected[rep * n_tests + t];
          fractions.push_back(fraction[rep * n_tests + t]);
        }
        int successes = cfg.reps - failures;
        row.rejection_rate = successes > 0 ? static_cast<double>(rejections) / successes
                                           : std::numeric_limits<double>::quiet_NaN();
        row.median_break_fraction = detail::quantile_type7(fractions, 0.5);
        row.q1 = detail::quantile_type7(fractions, 0.25);
        row.q3 = detail::quantile_type7(fractions, 0.75);
        rows.push_back(std::move(row));
      }
      ++cell_index;
    }
  }
  return rows;
}

// Fixed-order CSV used by the CLI and the reproducibility checks.
inline std::string experiment_csv(const std::vector<ExperimentRow>& rows) {
  std::ostringstream out;
  out << "setting,decay,dependence,n,b,tau,test,rejection_rate,median_break_fraction,q1,q3,"
         "failures\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%d,%g,%g,%s,%.6f,%.6f,%.6f,%.6f,%d\n",
                  r.setting.c_str(), r.decay.c_str(), r.dependence.c_str(), r.n, r.b, r.tau,
                  r.test.c_str(), r.rejection_rate, r.median_break_fraction, r.q1, r.q3,
                  r.failures);
    out << buf;
  }
  return out.str();
}

}  // namespace specbreak
