#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lanesim/decision.hpp"

using namespace lanesim;

namespace {

IncentiveContext base_ctx() {
  IncentiveContext ctx;
  ctx.ego_speed_mps = 10.0;
  ctx.ego_desired_speed_mps = 14.0;
  ctx.ego_model = carfollow_preset("idm");
  ctx.ego_model.idm.v0 = 14.0;
  ctx.remaining_m = 400.0;
  ctx.current.time_headway_s = 2.0;
  ctx.current.window_m = 200.0;
  ctx.target.time_headway_s = 2.0;
  ctx.target.window_m = 200.0;
  ctx.route_keep_s = 120.0;
  ctx.route_change_s = 120.0;
  ctx.kind = ChangeKind::RoutePreserving;
  return ctx;
}

}  // namespace

TEST_CASE("expected gain per the table expectation") {
  CostTable t;
  t.p_back = 0.5;
  // Gain-like row (speed): C = p*cl + (1-p)*cr - keep.
  t.speed = {12.0, 10.0, 20.0};
  IncentiveValues c = expected_gain(t);
  CHECK(c.speed == Catch::Approx(3.0));
  t.p_back = 1.0;
  CHECK(expected_gain(t).speed == Catch::Approx(10.0 - 12.0));
  t.p_back = 0.0;
  CHECK(expected_gain(t).speed == Catch::Approx(20.0 - 12.0));
}

TEST_CASE("earning yield") {
  CHECK(earning_yield(0.0, 12.0) == 0.0);
  CHECK(earning_yield(3.0, 12.0) == Catch::Approx(0.25));
  CHECK(earning_yield(5.0, 0.0) == Catch::Approx(10.0));   // degenerate baseline
  CHECK(earning_yield(-5.0, 0.0) == Catch::Approx(-10.0));
  CHECK(earning_yield(0.0, 0.0) == 0.0);
  CHECK(earning_yield(3.0, -12.0) == Catch::Approx(0.25));  // negative baseline keeps sign
}

TEST_CASE("combine is the weighted sum") {
  DrivingStyle agg = style_preset("aggressive");
  IncentiveValues y;
  y.route = 0.1;
  y.speed = 0.2;
  y.comfort = 0.0;
  y.courtesy = -0.05;
  CHECK(combine(y, agg) == Catch::Approx(0.2115).epsilon(1e-12));

  SECTION("zero yields give zero") {
    CHECK(combine(IncentiveValues{}, agg) == 0.0);
  }
  SECTION("scaling weights scales G linearly") {
    DrivingStyle s3 = agg;
    s3.mu_route *= 3.0;
    s3.mu_speed *= 3.0;
    s3.mu_comfort *= 3.0;
    s3.mu_courtesy *= 3.0;
    CHECK(combine(y, s3) == Catch::Approx(3.0 * combine(y, agg)).epsilon(1e-12));
  }
}

TEST_CASE("cost table on a symmetric target") {
  IncentiveContext ctx = base_ctx();
  DrivingStyle s = style_preset("conservative");
  CostTable t = build_cost_table(ctx, s);
  CHECK(t.p_back == 0.0);
  CHECK(t.routing.keep == t.routing.change_route);
  CHECK(t.routing.keep == t.routing.change_return);
  CHECK(t.speed.keep == Catch::Approx(t.speed.change_route));  // identical (absent) leaders
  CHECK(t.comfort.keep == 0.0);
  // Equal stats: comfort yield is -1, so G = -mu_comfort and no change occurs
  // at a non-negative threshold.
  IncentiveValues y = yields(t);
  CHECK(y.comfort == Catch::Approx(-1.0));
  CHECK(y.route == 0.0);
  CHECK(y.speed == 0.0);
  CHECK(y.courtesy == 0.0);
  CHECK(combine(y, s) == Catch::Approx(-s.mu_comfort));
}

TEST_CASE("cost table on an asymmetric vacuum target") {
  IncentiveContext ctx = base_ctx();
  ctx.kind = ChangeKind::RouteCommitting;
  ctx.target.time_headway_s = 120.0;  // vacuum
  ctx.target.vehicle_count = 0;
  ctx.route_keep_s = 100.0;
  ctx.route_change_s = 250.0;  // detour through the alternative chain
  DrivingStyle s = style_preset("aggressive");
  CostTable t = build_cost_table(ctx, s);
  CHECK(t.p_back == Catch::Approx(prob_back(s.alpha, 120.0, 400.0)));
  CHECK(t.p_back > 0.99);  // large T_h and S
  CHECK(t.routing.change_return == Catch::Approx(100.0));
  CHECK(t.routing.change_route == Catch::Approx(250.0));
  // Near-certain return makes the expected routing loss small.
  IncentiveValues c = expected_gain(t);
  CHECK(c.route == Catch::Approx(-(1.0 - t.p_back) * 150.0));

  SECTION("small S exposes the detour risk") {
    ctx.remaining_m = 5.0;
    CostTable t2 = build_cost_table(ctx, s);
    CHECK(t2.p_back < t.p_back);
    CHECK(expected_gain(t2).route < c.route);
  }
}

TEST_CASE("missing target stats is an error") {
  IncentiveContext ctx = base_ctx();
  ctx.target.window_m = 0.0;
  CHECK_THROWS_AS(build_cost_table(ctx, style_preset("aggressive")), ConfigError);
}

TEST_CASE("change-and-return pays comfort twice") {
  IncentiveContext ctx = base_ctx();
  DrivingStyle s = style_preset("conservative");
  ctx.current.time_headway_s = 4.0;
  ctx.target.time_headway_s = 2.0;
  CostTable t = build_cost_table(ctx, s);
  double jt = comfort_cost(2.0, s.beta);
  double jc = comfort_cost(4.0, s.beta);
  CHECK(t.comfort.change_return == Catch::Approx(jt + jc));
  CHECK(t.comfort.change_route == Catch::Approx(jt));
  CHECK(t.comfort_reference == Catch::Approx(jc));
}

namespace {

Candidate make_candidate(const IncentiveContext& ctx, int lane) {
  Candidate c;
  c.target_lane = lane;
  c.ctx = ctx;
  return c;
}

}  // namespace

TEST_CASE("decide") {
  DrivingStyle s = style_preset("aggressive");
  SafetyParams safety;

  SECTION("no candidates means keep") {
    DecisionOutcome o = decide(100.0, 0.0, {}, s, safety);
    CHECK(o.action == Action::Keep);
  }

  SECTION("clear speed gain changes lane") {
    IncentiveContext ctx = base_ctx();
    ctx.ego_model = s.carfollow;
    ctx.current_leader = LeaderView{10.0, 5.0};  // slow leader close
    ctx.target_leader.reset();                   // free target lane
    ctx.target.time_headway_s = 120.0;
    Candidate cand = make_candidate(ctx, 1);
    DecisionOutcome o = decide(100.0, 0.0, {cand}, s, safety);
    CHECK(o.g > s.g_threshold);
    CHECK(o.action == Action::Change);
    CHECK(o.target_lane == 1);
    CHECK_FALSE(o.safety_gated);
  }

  SECTION("safety failure keeps lane with a synchronize flag") {
    IncentiveContext ctx = base_ctx();
    ctx.ego_model = s.carfollow;
    ctx.current_leader = LeaderView{10.0, 5.0};
    ctx.target_leader.reset();
    ctx.target.time_headway_s = 120.0;
    Candidate cand = make_candidate(ctx, 1);
    cand.follower_gap_m = 4.0;
    cand.follower_closing_mps = 4.0;  // TTC 1 < 2
    DecisionOutcome o = decide(100.0, 0.0, {cand}, s, safety);
    CHECK(o.action == Action::Keep);
    CHECK(o.safety_gated);
    CHECK(o.synchronize);
  }

  SECTION("cooldown suppresses re-decisions") {
    IncentiveContext ctx = base_ctx();
    ctx.ego_model = s.carfollow;
    ctx.current_leader = LeaderView{10.0, 5.0};
    ctx.target_leader.reset();
    ctx.target.time_headway_s = 120.0;
    Candidate cand = make_candidate(ctx, 1);
    CHECK(decide(100.0, 97.0, {cand}, s, safety).action == Action::Keep);
    CHECK(decide(100.0, 90.0, {cand}, s, safety).action == Action::Change);
  }

  SECTION("deterministic for a fixed input") {
    IncentiveContext ctx = base_ctx();
    ctx.current_leader = LeaderView{12.0, 6.0};
    Candidate cand = make_candidate(ctx, 1);
    DecisionOutcome a = decide(50.0, 0.0, {cand}, s, safety);
    DecisionOutcome b = decide(50.0, 0.0, {cand}, s, safety);
    CHECK(a.action == b.action);
    CHECK(a.g == b.g);
  }
}

TEST_CASE("decision invariance under weight rescaling") {
  SafetyParams safety;
  std::mt19937_64 eng(77);
  std::uniform_real_distribution<double> gap(4.0, 60.0), spd(0.0, 14.0), thw(0.3, 60.0);
  DrivingStyle s = style_preset("aggressive");
  DrivingStyle s3 = s;
  s3.mu_route *= 3.0;
  s3.mu_speed *= 3.0;
  s3.mu_comfort *= 3.0;
  s3.mu_courtesy *= 3.0;
  s3.g_threshold *= 3.0;
  for (int i = 0; i < 200; ++i) {
    IncentiveContext ctx = base_ctx();
    ctx.ego_model = s.carfollow;
    ctx.ego_speed_mps = spd(eng);
    ctx.current_leader = LeaderView{gap(eng), spd(eng)};
    ctx.target_leader = LeaderView{gap(eng), spd(eng)};
    ctx.current.time_headway_s = thw(eng);
    ctx.target.time_headway_s = thw(eng);
    ctx.route_change_s = ctx.route_keep_s * (0.5 + 0.002 * i);
    ctx.kind = i % 3 == 0 ? ChangeKind::RouteCommitting : ChangeKind::RoutePreserving;
    Candidate cand = make_candidate(ctx, 1);
    DecisionOutcome a = decide(100.0, 0.0, {cand}, s, safety);
    DecisionOutcome b = decide(100.0, 0.0, {cand}, s3, safety);
    CHECK(a.action == b.action);
    CHECK(a.target_lane == b.target_lane);
    CHECK(b.g == Catch::Approx(3.0 * a.g).epsilon(1e-9).margin(1e-12));
  }
}

TEST_CASE("more speed weight never means fewer changes") {
  // Over a fixed set of yield vectors with non-negative speed yield, raising
  // mu_speed only adds Change outcomes.
  DrivingStyle lo = style_preset("aggressive");
  DrivingStyle hi = lo;
  hi.mu_speed *= 2.0;
  std::mt19937_64 eng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0), us(0.0, 1.5);
  int lo_count = 0, hi_count = 0;
  for (int i = 0; i < 500; ++i) {
    IncentiveValues y;
    y.route = u(eng);
    y.speed = us(eng);
    y.comfort = -std::abs(u(eng));
    y.courtesy = u(eng);
    lo_count += combine(y, lo) > lo.g_threshold;
    hi_count += combine(y, hi) > hi.g_threshold;
    CHECK((combine(y, lo) > lo.g_threshold ? combine(y, hi) > hi.g_threshold : true));
  }
  CHECK(hi_count >= lo_count);
}

TEST_CASE("style presets carry the calibrated parameters") {
  DrivingStyle agg = style_preset("aggressive");
  CHECK(agg.alpha == 0.058);
  CHECK(agg.beta == 1.1);
  CHECK(agg.mu_route == 1.26);
  CHECK(agg.mu_speed == 0.58);
  CHECK(agg.mu_comfort == 0.03);
  CHECK(agg.mu_courtesy == 0.61);
  CHECK(agg.carfollow.model == CarFollowModel::Fvdm);

  DrivingStyle con = style_preset("conservative");
  CHECK(con.alpha == 0.058);
  CHECK(con.beta == 2.3);
  CHECK(con.mu_route == 0.44);
  CHECK(con.mu_speed == 0.41);
  CHECK(con.mu_comfort == 0.09);
  CHECK(con.mu_courtesy == 1.72);
  CHECK(con.carfollow.model == CarFollowModel::Idm);

  CHECK(style_preset("inattentive").mu_comfort > con.mu_comfort);
  CHECK(style_preset("altruistic").mu_courtesy > con.mu_courtesy);
  CHECK_THROWS_AS(style_preset("reckless"), ConfigError);

  auto all = style_presets();
  CHECK(all.size() == 4);
}
