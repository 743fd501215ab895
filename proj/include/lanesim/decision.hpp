#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lanesim/incentives.hpp"

namespace lanesim {

struct DrivingStyle {
  std::string name;
  double mu_route = 1.0;     // mu1
  double mu_speed = 1.0;     // mu2
  double mu_comfort = 0.1;   // mu3
  double mu_courtesy = 1.0;  // mu4
  double beta = 1.0;         // comfort exponent
  double alpha = 0.058;      // prob-back coefficient
  double g_threshold = 0.1;
  double cooldown_s = 5.0;
  double desired_speed_mps = 13.9;
  CarFollowParams carfollow;
};

// Table of raw incentive costs for the three outcomes of a candidate change:
// keep lane, change and return, change route. Routing and courtesy rows are
// cost-like (lower is better); speed is gain-like; comfort holds J values
// (<= 0, keep entry fixed at 0).
struct CostTable {
  struct Row {
    double keep = 0.0;
    double change_return = 0.0;
    double change_route = 0.0;
  };
  Row routing;
  Row speed;
  Row courtesy;
  Row comfort;
  double p_back = 0.0;
  ChangeKind kind = ChangeKind::RoutePreserving;
  double comfort_reference = 0.0;  // J of a maneuver in the current lane, < 0
};

struct IncentiveValues {
  double route = 0.0;
  double speed = 0.0;
  double comfort = 0.0;
  double courtesy = 0.0;
};

inline CostTable build_cost_table(const IncentiveContext& ctx, const DrivingStyle& style) {
  if (ctx.target.window_m <= 0.0)
    throw ConfigError("build_cost_table: incomplete context (no target-lane stats)");
  CostTable t;
  t.kind = ctx.kind;
  // The return probability prices route risk; it only exists for changes that
  // leave the route.
  t.p_back = ctx.kind == ChangeKind::RouteCommitting
                 ? prob_back(style.alpha, ctx.target.time_headway_s, ctx.remaining_m)
                 : 0.0;

  t.routing.keep = ctx.route_keep_s;
  t.routing.change_return = ctx.kind == ChangeKind::RouteCommitting ? ctx.route_keep_s
                                                                    : ctx.route_change_s;
  t.routing.change_route = ctx.route_change_s;

  SpeedPair v = expected_speed(ctx);
  t.speed.keep = v.current;
  t.speed.change_return = v.after_change;
  t.speed.change_route = v.after_change;

  CourtesySums c = courtesy_sums(ctx);
  t.courtesy.keep = c.deviation_before;
  t.courtesy.change_return = c.deviation_after;
  t.courtesy.change_route = c.deviation_after;

  double j_target = comfort_cost(ctx.target.time_headway_s, style.beta);
  double j_current = comfort_cost(ctx.current.time_headway_s, style.beta);
  t.comfort.keep = 0.0;  // staying costs no lane-change attention
  t.comfort.change_return = j_target + j_current;  // two maneuvers
  t.comfort.change_route = j_target;
  t.comfort_reference = j_current;
  return t;
}

// Expected gain per incentive: C = p*C_cl + (1-p)*C_cr - C_o with cost-like
// rows negated first, so positive always means "change is better".
inline IncentiveValues expected_gain(const CostTable& t) {
  auto expect = [&](const CostTable::Row& r) {
    return t.p_back * r.change_return + (1.0 - t.p_back) * r.change_route;
  };
  IncentiveValues c;
  c.route = t.routing.keep - expect(t.routing);
  c.speed = expect(t.speed) - t.speed.keep;
  c.courtesy = t.courtesy.keep - expect(t.courtesy);
  c.comfort = expect(t.comfort) - t.comfort.keep;
  return c;
}

// Earning yield Y = C / |C_o|. Degenerate baselines cap at +-y_cap so a
// vacuous denominator cannot dominate the combination.
inline double earning_yield(double c, double c_o, double y_cap = 10.0, double eps = 1e-6) {
  if (std::abs(c_o) < eps) {
    if (c > 0.0) return y_cap;
    if (c < 0.0) return -y_cap;
    return 0.0;
  }
  return std::max(-y_cap, std::min(y_cap, c / std::abs(c_o)));
}

// The four yields fed into the weighted combination. Comfort is normalized by
// the current lane's maneuver cost (a negative baseline): its keep entry is 0
// by construction, so the table baseline cannot serve as the scale reference.
inline IncentiveValues yields(const CostTable& t) {
  IncentiveValues c = expected_gain(t);
  IncentiveValues y;
  y.route = earning_yield(c.route, t.routing.keep);
  y.speed = earning_yield(c.speed, t.speed.keep);
  y.courtesy = earning_yield(c.courtesy, t.courtesy.keep);
  y.comfort = earning_yield(c.comfort, t.comfort_reference);
  return y;
}

inline double combine(const IncentiveValues& y, const DrivingStyle& s) {
  return s.mu_route * y.route + s.mu_speed * y.speed + s.mu_comfort * y.comfort +
         s.mu_courtesy * y.courtesy;
}

enum class Action { Keep, Change };

struct DecisionOutcome {
  Action action = Action::Keep;
  int target_lane = -1;
  double g = 0.0;
  IncentiveValues expected;
  IncentiveValues yield;
  double p_back = 0.0;
  ChangeKind kind = ChangeKind::RoutePreserving;
  bool safety_gated = false;  // G cleared the threshold but the gap did not
  bool synchronize = false;   // adapt speed to the target lane while waiting
};

// One candidate lane change as prepared by the simulator.
struct Candidate {
  int target_lane = -1;
  IncentiveContext ctx;
  double follower_gap_m = kInfiniteGap;     // to the prospective new follower
  double follower_closing_mps = 0.0;        // v_follower - v_ego
  double leader_gap_m = kInfiniteGap;       // to the prospective new leader
  double leader_speed_mps = 0.0;
};

// Evaluate all candidates, pick the best G, and gate it by threshold, safety
// and cooldown. Candidate order breaks exact G ties (first wins), which keeps
// the decision deterministic.
inline DecisionOutcome decide(double now_s, double last_change_s,
                              const std::vector<Candidate>& candidates,
                              const DrivingStyle& style, const SafetyParams& safety) {
  DecisionOutcome out;
  if (candidates.empty()) return out;
  if (now_s - last_change_s < style.cooldown_s) return out;

  bool have_best = false;
  CostTable best_table;
  const Candidate* best = nullptr;
  for (const auto& cand : candidates) {
    CostTable t = build_cost_table(cand.ctx, style);
    double g = combine(yields(t), style);
    if (!have_best || g > out.g) {
      have_best = true;
      out.g = g;
      best_table = t;
      best = &cand;
    }
  }
  out.target_lane = best->target_lane;
  out.expected = expected_gain(best_table);
  out.yield = yields(best_table);
  out.p_back = best_table.p_back;
  out.kind = best_table.kind;

  if (out.g <= style.g_threshold) return out;

  // Both sides of the insertion gap: TTC toward the new follower, and the
  // mirrored check toward the new leader.
  bool front_ok =
      best->leader_gap_m >= safety.min_gap_m &&
      (std::isinf(best->leader_gap_m) ||
       safety_ok(best->leader_gap_m, best->ctx.ego_speed_mps - best->leader_speed_mps, safety));
  bool rear_ok = best->follower_gap_m >= 0.0 &&
                 safety_ok(best->follower_gap_m, best->follower_closing_mps, safety);
  if (front_ok && rear_ok) {
    out.action = Action::Change;
  } else {
    out.safety_gated = true;
    out.synchronize = true;
  }
  return out;
}

// Calibrated style presets. Weight vectors and exponents for aggressive and
// conservative follow the calibrated sets; inattentive and altruistic are
// derived variants (boosted comfort / courtesy emphasis).
inline DrivingStyle style_preset(const std::string& name) {
  DrivingStyle s;
  s.name = name;
  if (name == "aggressive") {
    s.mu_route = 1.26;
    s.mu_speed = 0.58;
    s.mu_comfort = 0.03;
    s.mu_courtesy = 0.61;
    s.beta = 1.1;
    s.alpha = 0.058;
    s.carfollow = carfollow_preset("fvdm");
    s.desired_speed_mps = s.carfollow.ovm.V1 + s.carfollow.ovm.V2;
    s.carfollow.idm.v0 = s.desired_speed_mps;
  } else if (name == "conservative") {
    s.mu_route = 0.44;
    s.mu_speed = 0.41;
    s.mu_comfort = 0.09;
    s.mu_courtesy = 1.72;
    s.beta = 2.3;
    s.alpha = 0.058;
    s.carfollow = carfollow_preset("idm");
    s.desired_speed_mps = 12.5;
    s.carfollow.idm.v0 = s.desired_speed_mps;
  } else if (name == "inattentive") {
    s = style_preset("conservative");
    s.name = name;
    s.mu_comfort = 0.45;  // comfort-dominated: avoids busy target lanes
  } else if (name == "altruistic") {
    s = style_preset("conservative");
    s.name = name;
    s.mu_courtesy = 3.44;  // courtesy-dominated
  } else {
    throw ConfigError("unknown driving style preset '" + name + "'");
  }
  return s;
}

inline std::map<std::string, DrivingStyle> style_presets() {
  std::map<std::string, DrivingStyle> m;
  for (const char* n : {"aggressive", "conservative", "inattentive", "altruistic"})
    m.emplace(n, style_preset(n));
  return m;
}

}  // namespace lanesim
