#include "specbreak/breaktest.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "specbreak/quantile_cache.hpp"
#include "specbreak/simlab.hpp"

using namespace specbreak;

namespace {

LimitDistSpec limit_spec(LimitFamily family, int d, double delta, int grid, int reps,
                         std::uint64_t seed) {
  LimitDistSpec spec;
  spec.family = family;
  spec.d = d;
  spec.delta = delta;
  spec.grid_points = grid;
  spec.replications = reps;
  spec.seed = seed;
  return spec;
}

FunctionalSeries break_series(int n, double b1, double tau, std::uint64_t seed,
                              Dependence dep = Dependence::IID) {
  DgpSpec dgp;
  dgp.n = n;
  dgp.dim = 21;
  dgp.decay = Decay::Slow;
  dgp.dependence = dep;
  dgp.seed = seed;
  if (b1 != 1.0) {
    BreakSpec brk;
    brk.tau = tau;
    brk.b = Eigen::VectorXd::Ones(21);
    brk.b(0) = b1;
    dgp.brk = brk;
  }
  return gen_series(dgp);
}

}  // namespace

TEST(CusumVector, VanishesAtEndpointAndTwoPointExample) {
  Eigen::MatrixXd coeffs(2, 1);
  coeffs << 1, -1;
  FunctionalSeries series(coeffs, fourier_basis(1));
  EigenProcess proc = eigenvalue_process(series, 1, 0.5);
  Eigen::MatrixXd kappa = cusum_vector(proc);
  EXPECT_EQ(kappa(1, 0), 0.0);           // k = n exactly zero
  EXPECT_NEAR(kappa(0, 0), 0.0, 1e-15);  // sqrt(2)(0.5 - 0.5*1.0)

  FunctionalSeries wide = break_series(60, 3.0, 0.5, 9);
  Eigen::MatrixXd kappa_wide = cusum_vector(eigenvalue_process(wide, 3, 0.1));
  EXPECT_EQ(kappa_wide.bottomRows(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(CusumVector, MaxGrowsLikeSqrtN) {
  auto mean_max = [](int n) {
    double acc = 0.0;
    const int reps = 60;
    for (int rep = 0; rep < reps; ++rep) {
      FunctionalSeries series = break_series(n, 5.0, 0.5, 7000 + rep);
      Eigen::MatrixXd kappa = cusum_vector(eigenvalue_process(series, 1, 0.1));
      acc += kappa.col(0).cwiseAbs().maxCoeff();
    }
    return acc / reps;
  };
  double m100 = mean_max(100);
  double m200 = mean_max(200);
  double m500 = mean_max(500);
  EXPECT_NEAR(m200 / m100, std::sqrt(2.0), 0.3 * std::sqrt(2.0));
  EXPECT_NEAR(m500 / m100, std::sqrt(5.0), 0.3 * std::sqrt(5.0));
}

TEST(LimitQuantile, TraceFamilyNearKolmogorovOracle) {
  auto [q, table] = limit_quantile(limit_spec(LimitFamily::Trace, 1, 0.0, 500, 20000, 42), 0.05);
  EXPECT_NEAR(q, oracle::kolmogorov_quantile(0.95), 0.025);
  EXPECT_NEAR(table.quantile(0.5), oracle::kolmogorov_quantile(0.5), 0.02);
}

TEST(LimitQuantile, JointWithOneComponentSquaresTheTraceFamily) {
  LimitDistSpec m_spec = limit_spec(LimitFamily::Trace, 1, 0.0, 400, 3000, 7);
  LimitDistSpec j_spec = limit_spec(LimitFamily::Joint, 1, 1e-9, 400, 3000, 7);
  LimitTable m_table = make_limit_table(m_spec);
  LimitTable j_table = make_limit_table(j_spec);
  for (std::size_t i = 0; i < m_table.sorted.size(); i += 97)
    EXPECT_NEAR(j_table.sorted[i], m_table.sorted[i] * m_table.sorted[i],
                1e-12 * (1.0 + j_table.sorted[i]));
  double q_m = m_table.quantile(0.05);
  EXPECT_NEAR(j_table.quantile(0.05), q_m * q_m, 1e-12 * (1.0 + q_m * q_m));
}

TEST(LimitQuantile, IndividualQuantileMonotoneInDelta) {
  LimitTable narrow = make_limit_table(limit_spec(LimitFamily::Individual, 1, 0.1, 400, 3000, 3));
  LimitTable wide = make_limit_table(limit_spec(LimitFamily::Individual, 1, 0.0, 400, 3000, 3));
  for (double alpha : {0.01, 0.05, 0.10, 0.5, 0.9})
    EXPECT_LE(narrow.quantile(alpha), wide.quantile(alpha));
}

TEST(LimitQuantile, DeterministicAcrossThreadCounts) {
  LimitDistSpec spec = limit_spec(LimitFamily::Joint, 3, 0.1, 300, 2000, 99);
  LimitTable serial = make_limit_table(spec, 1);
  LimitTable threaded = make_limit_table(spec, 3);
  ASSERT_EQ(serial.sorted.size(), threaded.sorted.size());
  for (std::size_t i = 0; i < serial.sorted.size(); ++i)
    EXPECT_EQ(serial.sorted[i], threaded.sorted[i]);
}

TEST(LimitQuantile, RejectsBadSpecs) {
  EXPECT_THROW(make_limit_table(limit_spec(LimitFamily::Trace, 1, 0.0, 50, 2000, 1)),
               std::invalid_argument);
  EXPECT_THROW(make_limit_table(limit_spec(LimitFamily::Trace, 1, 0.0, 500, 500, 1)),
               std::invalid_argument);
  EXPECT_THROW(make_limit_table(limit_spec(LimitFamily::Joint, 0, 0.1, 500, 2000, 1)),
               std::invalid_argument);
}

// The floor(alpha R)-th-largest critical value makes rejection by statistic
// and rejection by p-value the same event, ties and duplicates included.
TEST(LimitTable, PValueCriticalValueConsistency) {
  LimitTable table;
  table.spec = limit_spec(LimitFamily::Trace, 1, 0.0, 500, 1000, 0);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> coarse(0, 40);
  table.sorted.resize(1000);
  for (auto& v : table.sorted) v = coarse(rng) / 10.0;  // plenty of ties
  std::sort(table.sorted.begin(), table.sorted.end());

  for (double alpha : {0.01, 0.049, 0.05, 0.1, 0.25}) {
    double cv = table.quantile(alpha);
    for (double stat = -0.5; stat <= 4.6; stat += 0.05) {
      bool by_stat = stat > cv;
      bool by_p = table.p_value(stat) < alpha;
      EXPECT_EQ(by_stat, by_p) << "alpha=" << alpha << " stat=" << stat;
    }
  }
}

TEST(BreakTests, DetectInjectedBreakAndEstimateItsDate) {
  FunctionalSeries series = break_series(200, 5.0, 0.5, 314);
  LimitDistSpec limit = limit_spec(LimitFamily::Joint, 3, 0.1, 500, 2000, 5);
  TestReport joint = joint_test(series, 3, 0.1, KernelSpec::bartlett(), limit, 0.05);
  EXPECT_LT(joint.p_value, 0.01);
  EXPECT_TRUE(joint.reject);
  EXPECT_NEAR(joint.break_fraction, 0.5, 0.1);
  EXPECT_EQ(joint.test, "joint");
  EXPECT_EQ(joint.d, 3);
  EXPECT_DOUBLE_EQ(joint.bandwidth, 5.0);  // floor(200^(1/3))

  TestReport first = individual_test(series, 1, 3, 0.1, KernelSpec::bartlett(), limit, 0.05);
  EXPECT_LT(first.p_value, 0.01);
  EXPECT_NEAR(first.break_fraction, 0.5, 0.1);

  TestReport trace = trace_test(series, KernelSpec::bartlett(), limit, 0.05);
  EXPECT_LT(trace.p_value, 0.01);
  EXPECT_NEAR(trace.break_fraction, 0.5, 0.1);
  EXPECT_FALSE(trace.diagnostics.empty());
}

TEST(BreakTests, IdenticalCurvesErrorPaths) {
  Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(30, 3) * 2.0;
  FunctionalSeries series(constant, fourier_basis(3));
  LimitDistSpec limit = limit_spec(LimitFamily::Joint, 2, 0.1, 500, 2000, 5);
  EXPECT_THROW(joint_test(series, 2, 0.1, KernelSpec::bartlett(), limit, 0.05),
               DegenerateSpectrum);
  EXPECT_THROW(trace_test(series, KernelSpec::bartlett(), limit, 0.05), SingularLrv);
}

TEST(BreakTests, StatisticsInvariantUnderScaling) {
  FunctionalSeries series = break_series(100, 3.0, 0.5, 2020);
  BreakStatistics base = compute_break_statistics(series, 3, 0.1, KernelSpec::bartlett());
  TraceStatistics trace_base = compute_trace_statistics(series, KernelSpec::bartlett());
  for (double c : {0.1, 3.0, 100.0}) {
    FunctionalSeries scaled(series.coeffs() * c, series.basis());
    BreakStatistics got = compute_break_statistics(scaled, 3, 0.1, KernelSpec::bartlett());
    TraceStatistics trace_got = compute_trace_statistics(scaled, KernelSpec::bartlett());
    EXPECT_NEAR(got.joint_stat, base.joint_stat, 1e-8 * base.joint_stat);
    EXPECT_EQ(got.joint_k, base.joint_k);
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(got.indiv_stat(j), base.indiv_stat(j), 1e-8 * base.indiv_stat(j));
      EXPECT_EQ(got.indiv_k[j], base.indiv_k[j]);
    }
    EXPECT_NEAR(trace_got.stat, trace_base.stat, 1e-8 * trace_base.stat);
    EXPECT_EQ(trace_got.k, trace_base.k);
  }
}

TEST(BreakTests, StatisticsInvariantUnderShifts) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> quarter(-8, 8);
  Eigen::MatrixXd dyadic(16, 3);
  for (int i = 0; i < dyadic.rows(); ++i)
    for (int j = 0; j < 3; ++j) dyadic(i, j) = quarter(rng) * 0.25;
  FunctionalSeries series(dyadic, fourier_basis(3));
  Eigen::MatrixXd shifted = dyadic;
  shifted.col(0).array() += 2.0;
  shifted.col(2).array() -= 5.0;
  FunctionalSeries moved(shifted, fourier_basis(3));

  BreakStatistics a = compute_break_statistics(series, 2, 0.25, KernelSpec::bartlett());
  BreakStatistics b = compute_break_statistics(moved, 2, 0.25, KernelSpec::bartlett());
  EXPECT_EQ(a.joint_stat, b.joint_stat);
  EXPECT_EQ(a.joint_k, b.joint_k);
  EXPECT_EQ(compute_trace_statistics(series, KernelSpec::bartlett()).stat,
            compute_trace_statistics(moved, KernelSpec::bartlett()).stat);
}

TEST(BreakTests, NullPValuesApproximatelyUniform) {
  const int n = 300;
  const int reps = 1000;
  LimitTable table_j = make_limit_table(limit_spec(LimitFamily::Joint, 3, 0.1, 600, 4000, 21));
  LimitTable table_i =
      make_limit_table(limit_spec(LimitFamily::Individual, 1, 0.1, 600, 4000, 21));
  LimitTable table_m = make_limit_table(limit_spec(LimitFamily::Trace, 1, 0.0, 600, 4000, 21));

  std::vector<double> p_joint, p_first, p_trace;
  int first_at_left = 0, first_at_right = 0;
  const int k0 = ceil_index(n * 0.1);
  for (int rep = 0; rep < reps; ++rep) {
    FunctionalSeries series = break_series(n, 1.0, 0.5, 40000 + rep);
    BreakStatistics core = compute_break_statistics(series, 3, 0.1, KernelSpec::bartlett());
    TraceStatistics trace = compute_trace_statistics(series, KernelSpec::bartlett());
    p_joint.push_back(table_j.p_value(core.joint_stat));
    p_first.push_back(table_i.p_value(core.indiv_stat(0)));
    p_trace.push_back(table_m.p_value(trace.stat));
    first_at_left += core.indiv_k[0] == k0;
    first_at_right += core.indiv_k[0] == n;
  }

  auto ks_uniform = [](std::vector<double> p) {
    std::sort(p.begin(), p.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double ecdf_hi = static_cast<double>(i + 1) / p.size();
      double ecdf_lo = static_cast<double>(i) / p.size();
      ks = std::max({ks, std::abs(ecdf_hi - p[i]), std::abs(p[i] - ecdf_lo)});
    }
    return ks;
  };
  EXPECT_LT(ks_uniform(p_joint), 0.08);
  EXPECT_LT(ks_uniform(p_first), 0.08);
  EXPECT_LT(ks_uniform(p_trace), 0.08);

  // argmax should not pile up on the boundary under the null
  EXPECT_LT(first_at_left, reps / 10);
  EXPECT_LT(first_at_right, reps / 10);
}

TEST(QuantileStore, CachesAndRecoversFromCorruption) {
  auto dir = std::filesystem::temp_directory_path() / "specbreak_qcache_test";
  std::filesystem::remove_all(dir);
  LimitDistSpec spec = limit_spec(LimitFamily::Individual, 1, 0.1, 300, 2000, 77);

  QuantileStore store(dir.string());
  bool from_cache = true;
  auto first = store.get(spec, &from_cache);
  EXPECT_FALSE(from_cache);

  QuantileStore second_store(dir.string());
  auto second = second_store.get(spec, &from_cache);
  EXPECT_TRUE(from_cache);
  EXPECT_EQ(first->sorted, second->sorted);

  // corrupt every cached file, a fresh store must recompute identical values
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::ofstream out(entry.path());
    out << "garbage";
  }
  QuantileStore third_store(dir.string());
  auto third = third_store.get(spec, &from_cache);
  EXPECT_FALSE(from_cache);
  EXPECT_EQ(first->sorted, third->sorted);
  std::filesystem::remove_all(dir);
}
