#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpcp/fwt.hpp"
#include "cpcp/synthetic.hpp"
#include "test_util.hpp"

using namespace cpcp;

namespace {

CpcpProblem penalized_instance(std::uint64_t seed, Index m = 40, Index n = 30, double rho = 0.8) {
  SyntheticSpec spec;
  spec.m = m;
  spec.n = n;
  spec.r = 2;
  spec.sparse_fraction = 0.03;
  spec.sparse_amplitude = 10.0;
  spec.noise_std = 0.1;
  spec.rho = rho;
  spec.seed = seed;
  const GroundTruth gt = gen_synthetic(spec);
  return CpcpProblem(gt.mask, gt.observed, default_weights(gt.mask, gt.observed, 0.05));
}

PenalizedConfig config_for(const CpcpProblem& p, std::size_t iters) {
  PenalizedConfig c;
  c.lambda_L = p.penalized().lambda_L;
  c.lambda_S = p.penalized().lambda_S;
  c.max_iter = iters;
  return c;
}

double g_of(const BoxQp& q, double a, double b) { return q.value(a, b); }

}  // namespace

TEST(InitialBounds, Arithmetic) {
  // ||P_Omega M||^2 = 8
  const CpcpProblem p(ObservationMask::full(2, 2), {2.0, 0.0, 0.0, 2.0}, Penalized{2.0, 0.5});
  const auto b = initial_bounds(p);
  EXPECT_DOUBLE_EQ(b.U_L, 2.0);
  EXPECT_DOUBLE_EQ(b.U_S, 8.0);
  const auto q = penalized_instance(1);
  const auto bq = initial_bounds(q);
  const double g0 = 0.5 * q.observed_squared_norm();
  EXPECT_NEAR(bq.U_L * q.penalized().lambda_L, g0, 1e-12 * g0);
  EXPECT_NEAR(bq.U_S * q.penalized().lambda_S, g0, 1e-12 * g0);
}

TEST(PenalizedDirection, WeightAboveSpectrumDisablesLowRankSide) {
  std::mt19937_64 rng(2);
  const auto mask = ObservationMask::full(5, 4);
  const auto grad = testutil::randn_values(mask.size(), rng);
  const double smax = testutil::singular_values(scatter_to_dense(mask, grad))(0);
  double gmax = 0.0;
  for (double x : grad) gmax = std::max(gmax, std::abs(x));
  const BoundState b{3.0, 7.0};

  const auto d = fw_direction_penalized(mask, grad, smax * 1.01, gmax * 0.5, b);
  EXPECT_FALSE(d.low_rank_active);
  EXPECT_EQ(d.V_tL, 0.0);
  EXPECT_TRUE(d.sparse_active);
  EXPECT_EQ(d.V_tS, 7.0);
  EXPECT_EQ(std::abs(grad[d.entry]), gmax);
  EXPECT_EQ(d.sparse_value, -7.0 * sign(grad[d.entry]));

  const auto e = fw_direction_penalized(mask, grad, smax * 0.5, gmax * 2.0, b);
  EXPECT_TRUE(e.low_rank_active);
  EXPECT_EQ(e.V_tL, 3.0);
  EXPECT_EQ(e.low_rank_scale, 3.0);
  EXPECT_FALSE(e.sparse_active);
  EXPECT_NEAR(e.g_hat_L, -smax + smax * 0.5, 1e-6 * smax);
}

TEST(PenalizedDirection, ZeroGradientAndBoundaryGiveZeroPair) {
  const auto mask = ObservationMask::full(3, 3);
  const std::vector<double> zero(9, 0.0);
  const auto d = fw_direction_penalized(mask, zero, 0.1, 0.1, {1.0, 1.0});
  EXPECT_FALSE(d.low_rank_active);
  EXPECT_FALSE(d.sparse_active);
  // |G_e*| == lambda_S exactly: g_hat_S = 0 resolves to the zero pair.
  std::vector<double> g(9, 0.0);
  g[4] = -0.25;
  const auto e = fw_direction_penalized(mask, g, 10.0, 0.25, {1.0, 1.0});
  EXPECT_EQ(e.g_hat_S, 0.0);
  EXPECT_FALSE(e.sparse_active);
  EXPECT_THROW(fw_direction_penalized(mask, g, 1.0, 1.0, {0.0, 1.0}), std::invalid_argument);
}

TEST(BoxQp, ZeroDirectionsStayAtOrigin) {
  const std::vector<double> r{1.0, -2.0}, z{0.0, 0.0};
  const auto ls = exact_line_search(r, z, z, 1.0, 1.0, 0.5, 2.0, 0.3, 0.4);
  EXPECT_EQ(ls.a, 0.0);
  EXPECT_EQ(ls.b, 0.0);
}

TEST(BoxQp, InteriorMinimumMatchesLinearSolve) {
  BoxQp q;
  q.pp = 4.0;
  q.pq = 1.0;
  q.qq = 3.0;
  q.ga = -1.5;
  q.gb = -1.0;
  Eigen::Matrix2d h;
  h << q.pp, q.pq, q.pq, q.qq;
  const Eigen::Vector2d x = h.ldlt().solve(Eigen::Vector2d(-q.ga, -q.gb));
  ASSERT_TRUE(x(0) > 0 && x(0) < 1 && x(1) > 0 && x(1) < 1);
  const auto r = minimize_box_qp(q);
  EXPECT_NEAR(r.a, x(0), 1e-14);
  EXPECT_NEAR(r.b, x(1), 1e-14);
}

TEST(BoxQp, RandomInstancesAgainstGrid) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 30;
    const auto r = testutil::randn_values(n, rng, 2.0);
    auto p = testutil::randn_values(n, rng);
    auto q = testutil::randn_values(n, rng);
    if (trial % 10 == 0) q = p;                         // parallel directions
    if (trial % 10 == 1) std::fill(p.begin(), p.end(), 0.0);  // one side inactive
    const double t_L = U(rng), t_S = U(rng);
    const double dt_L = U(rng) - t_L, dt_S = U(rng) - t_S;
    const double lL = U(rng), lS = U(rng);
    const auto model = line_search_model(r, p, q, t_L, t_S, dt_L, dt_S, lL, lS);
    const auto ls = exact_line_search(r, p, q, t_L, t_S, dt_L, dt_S, lL, lS);
    auto direct = [&](double a, double b) {
      double s = 0.0;
      for (std::size_t e = 0; e < n; ++e) s += 0.5 * std::pow(r[e] + a * p[e] + b * q[e], 2);
      return s + lL * (t_L + a * dt_L) + lS * (t_S + b * dt_S);
    };
    ASSERT_GE(ls.a, 0.0);
    ASSERT_LE(ls.a, 1.0);
    ASSERT_GE(ls.b, 0.0);
    ASSERT_LE(ls.b, 1.0);
    EXPECT_NEAR(ls.value, direct(ls.a, ls.b), 1e-9 * std::abs(ls.value));
    EXPECT_NEAR(g_of(model, 0.3, 0.7), direct(0.3, 0.7), 1e-9 * std::abs(ls.value));
    EXPECT_LE(ls.value, testutil::grid_min(direct) + 1e-9) << "trial " << trial;
    for (std::size_t k : {0u, 1u, 5u, 50u}) EXPECT_LE(ls.value, direct(fw_step_size(k), fw_step_size(k)) + 1e-12);
  }
}

TEST(ProxStepSparse, Examples) {
  const std::vector<double> s{3.0, -2.0, 0.5}, zero(3, 0.0);
  EXPECT_EQ(prox_step_sparse(s, zero, 0.25), (std::vector<double>{2.75, -1.75, 0.25}));
  const std::vector<double> r{2.9, -1.95, 0.4};
  EXPECT_EQ(prox_step_sparse(s, r, 0.25), std::vector<double>(3, 0.0));
  EXPECT_THROW(prox_step_sparse(s, zero, -1.0), std::invalid_argument);
}

TEST(UpdateBounds, ProportionalToObjective) {
  const BoundState b{10.0, 40.0};  // g = 20 with lambda_L = 2, lambda_S = 0.5
  const auto h = update_bounds(b, 10.0, 2.0, 0.5);
  EXPECT_DOUBLE_EQ(h.U_L, 5.0);
  EXPECT_DOUBLE_EQ(h.U_S, 20.0);
  const auto same = update_bounds(b, 20.0, 2.0, 0.5);
  EXPECT_DOUBLE_EQ(same.U_L, 10.0);
  EXPECT_DOUBLE_EQ(same.U_S, 40.0);
  EXPECT_THROW(update_bounds(b, 20.001, 2.0, 0.5), std::logic_error);
}

TEST(StoppingCheck, Window) {
  std::vector<double> g{1.0};
  for (int i = 0; i < 5; ++i) g.push_back(g.back() * (1 - 1e-4));
  EXPECT_TRUE(stopping_check(g, 1e-3));
  g[3] = g[2] * 0.5;
  EXPECT_FALSE(stopping_check(g, 1e-3));
  EXPECT_TRUE(stopping_check(std::vector<double>(6, 2.0), 1e-3));
  EXPECT_FALSE(stopping_check(std::vector<double>{1.0}, 1e-3));
}

TEST(SolveFwt, ZeroDataReturnsZeroImmediately) {
  const auto mask = ObservationMask::full(4, 5);
  const CpcpProblem p(mask, std::vector<double>(20, 0.0), Penalized{1.0, 1.0});
  const auto res = solve_fwt(p, config_for(p, 100));
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 0u);
  EXPECT_EQ(res.low_rank.rank(), 0);
  EXPECT_EQ(res.sparse.nnz(), 0u);
  EXPECT_EQ(res.objective, 0.0);
}

TEST(SolveFwt, LargeWeightsMakeZeroAFixedPoint) {
  std::mt19937_64 rng(4);
  const auto mask = testutil::random_mask(8, 6, 30, rng);
  const auto obs = testutil::randn_values(mask.size(), rng);
  const double smax = testutil::singular_values(scatter_to_dense(mask, obs))(0);
  double gmax = 0.0;
  for (double x : obs) gmax = std::max(gmax, std::abs(x));
  // Zero is optimal once both weights exceed the dual norms of P_Omega M.
  const CpcpProblem p(mask, obs, Penalized{smax * 1.1, gmax * 1.1});
  for (bool fwt : {true, false}) {
    const auto res = fwt ? solve_fwt(p, config_for(p, 20)) : solve_fw_penalized(p, config_for(p, 20));
    EXPECT_EQ(res.low_rank.rank(), 0);
    EXPECT_EQ(res.sparse.nnz(), 0u);
    EXPECT_NEAR(res.objective, 0.5 * p.observed_squared_norm(), 1e-12);
  }
}

TEST(SolveFwt, DescentBoundsAndFeasibility) {
  const auto p = penalized_instance(5);
  const auto c = config_for(p, 300);
  auto cfg = c;
  cfg.stop_on_stall = false;
  const auto res = solve_fwt(p, cfg);
  const double g0 = 0.5 * p.observed_squared_norm();
  ASSERT_EQ(res.iterations, 300u);
  ASSERT_EQ(res.half_objectives.size(), 300u);
  for (std::size_t k = 0; k < 300; ++k) {
    const auto& now = res.trace[k];
    const auto& next = res.trace[k + 1];
    EXPECT_LE(res.half_objectives[k], now.objective + 1e-10 * g0) << k;
    EXPECT_LE(next.objective, res.half_objectives[k] + 1e-10 * g0) << k;
    EXPECT_LE(*next.U_L, *now.U_L);
    EXPECT_LE(*next.U_S, *now.U_S);
    EXPECT_NEAR(*next.U_L * c.lambda_L, next.objective, 1e-12 * g0);
    EXPECT_NEAR(*next.U_S * c.lambda_S, next.objective, 1e-12 * g0);
    EXPECT_GE(*now.step_a, 0.0);
    EXPECT_LE(*now.step_a, 1.0);
  }
  EXPECT_LE(nuclear_norm(res.low_rank), res.t_L + 1e-8 * std::max(1.0, res.t_L));
  EXPECT_NEAR(res.sparse.l1(), res.t_S, 1e-12 * std::max(1.0, res.t_S));
  EXPECT_NEAR(res.objective, eval_penalized(p, res.low_rank, res.sparse), 1e-10 * g0);
  EXPECT_LE(res.objective, res.trace.back().objective * (1 + 1e-12));
}

TEST(SolveFwt, EpigraphFeasibleAtEveryLength) {
  const auto p = penalized_instance(6);
  for (std::size_t k : {1u, 3u, 10u, 60u}) {
    auto c = config_for(p, k);
    c.stop_on_stall = false;
    const auto res = solve_fwt(p, c);
    EXPECT_LE(nuclear_norm(res.low_rank), res.t_L + 1e-8 * std::max(1.0, res.t_L));
    EXPECT_NEAR(res.sparse.l1(), res.t_S, 1e-12 * std::max(1.0, res.t_S));
  }
}

TEST(SolveFwPenalized, StaticBoundsAndFixedSteps) {
  const auto p = penalized_instance(7);
  const auto res = solve_fw_penalized(p, config_for(p, 50));
  const auto b0 = initial_bounds(p);
  ASSERT_EQ(res.iterations, 50u);
  for (std::size_t k = 0; k < 50; ++k) {
    EXPECT_EQ(*res.trace[k].U_L, b0.U_L);
    EXPECT_EQ(*res.trace[k].U_S, b0.U_S);
    EXPECT_DOUBLE_EQ(*res.trace[k].step_a, fw_step_size(k));
  }
  EXPECT_TRUE(res.converged);
  EXPECT_LE(nuclear_norm(res.low_rank), res.t_L + 1e-8 * std::max(1.0, res.t_L));
  EXPECT_LE(res.sparse.l1(), res.t_S + 1e-8 * std::max(1.0, res.t_S));
}

TEST(SolveFwt, RateGapAndBoundValidityAgainstReferenceRun) {
  const auto p = penalized_instance(8);
  const auto b0 = initial_bounds(p);
  const double u2 = b0.U_L * b0.U_L + b0.U_S * b0.U_S;
  auto long_cfg = config_for(p, 3000);
  long_cfg.stop_on_stall = false;
  const auto ref = solve_fwt(p, long_cfg);
  double g_best = ref.objective;
  for (const auto& r : ref.trace.records()) g_best = std::min(g_best, r.objective);

  const auto fw = solve_fw_penalized(p, config_for(p, 200));
  for (const auto& r : fw.trace.records()) EXPECT_LE(r.objective - g_best, 16.0 * u2 / (r.k + 2.0)) << r.k;

  auto cfg = config_for(p, 200);
  cfg.stop_on_stall = false;
  const auto fwt = solve_fwt(p, cfg);
  double min_gap = std::numeric_limits<double>::infinity();
  for (const auto& r : fwt.trace.records()) {
    if (r.k >= 1 && r.dual_gap) min_gap = std::min(min_gap, *r.dual_gap);
    if (r.dual_gap) EXPECT_GE(*r.dual_gap, -1e-9 * fwt.trace[0].objective);
  }
  EXPECT_LE(min_gap, 48.0 * u2 / (200.0 + 2.0));

  // f(x*) <= g(x^k), so the bounds always dominate the norms of a near-optimal point.
  const double l_best = nuclear_norm(ref.low_rank), s_best = ref.sparse.l1();
  for (const auto& r : fwt.trace.records()) {
    EXPECT_GE(*r.U_L, l_best);
    EXPECT_GE(*r.U_S, s_best);
  }
  // Tightened steps make faster progress than the fixed schedule.
  EXPECT_LT(fwt.trace[200].objective, fw.trace[200].objective);
}

TEST(SolveFwt, StopsOnlyAfterAFullQuietWindow) {
  const auto p = penalized_instance(9);
  auto c = config_for(p, 5000);
  c.epsilon = 1e-3;
  const auto res = solve_fwt(p, c);
  ASSERT_TRUE(res.converged);
  ASSERT_LT(res.iterations, 5000u);
  std::vector<double> g;
  for (const auto& r : res.trace.records()) g.push_back(r.objective);
  auto quiet = [&](std::size_t k) { return (g[k - 1] - g[k]) / g[k - 1] <= 1e-3; };
  const std::size_t K = g.size() - 1;
  for (std::size_t k = K - 4; k <= K; ++k) EXPECT_TRUE(quiet(k)) << k;
  for (std::size_t end = 5; end < K; ++end) {
    bool all = true;
    for (std::size_t k = end - 4; k <= end; ++k) all = all && quiet(k);
    EXPECT_FALSE(all) << "window ending at " << end << " should already have stopped the run";
  }
}

TEST(SolveFwt, RejectsBadConfig) {
  const auto p = penalized_instance(10);
  auto c = config_for(p, 10);
  c.epsilon = 0.0;
  EXPECT_THROW(solve_fwt(p, c), std::invalid_argument);
  c = config_for(p, 10);
  c.stall_window = 0;
  EXPECT_THROW(solve_fwt(p, c), std::invalid_argument);
  const auto constrained = p.with(Constrained{1.0, 1.0});
  EXPECT_THROW(solve_fwt(constrained, config_for(p, 10)), std::invalid_argument);
}
