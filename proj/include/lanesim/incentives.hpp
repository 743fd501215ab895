#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lanesim/carfollow.hpp"
#include "lanesim/road_net.hpp"

namespace lanesim {

struct HeadwayConfig {
  double speed_floor_mps = 0.1;  // below this the lane counts as a standing queue
  double cap_s = 120.0;          // headway reported for empty/standing lanes
};

struct LaneStats {
  double mean_gap_m = 0.0;
  double mean_speed_mps = 0.0;
  double time_headway_s = 0.0;
  double density_veh_km = 0.0;
  double flow_veh_h = 0.0;
  double window_m = 0.0;
  int vehicle_count = 0;
};

// T_h = mean gap / mean speed. Standing queues and empty lanes map to the cap.
inline double time_headway(double mean_gap_m, double mean_speed_mps,
                           const HeadwayConfig& cfg = {}) {
  if (mean_speed_mps < cfg.speed_floor_mps) return cfg.cap_s;
  return std::min(cfg.cap_s, mean_gap_m / mean_speed_mps);
}

// Probability that a vehicle which moved to an asymmetric lane gets back to
// its original lane before the decision point: 1 - exp(-alpha * T_h * S).
inline double prob_back(double alpha, double time_headway_s, double remaining_m) {
  return -std::expm1(-alpha * time_headway_s * remaining_m);
}

// Lane-change attention cost, <= 0. Headway floored at 0.1 s (bumper-to-bumper).
inline double comfort_cost(double time_headway_s, double beta) {
  return -std::pow(std::max(time_headway_s, 0.1), -beta);
}

struct SafetyParams {
  double ttc_threshold_s = 2.0;
  double min_gap_m = 2.0;
};

// Gap acceptance toward the prospective new follower.
// closing_speed = v_follower - v_ego; diverging pairs have infinite TTC.
inline bool safety_ok(double gap_m, double closing_speed_mps, const SafetyParams& p) {
  if (gap_m < 0.0) throw std::domain_error("safety_ok: negative gap (overlap)");
  if (gap_m < p.min_gap_m) return false;
  if (closing_speed_mps <= 0.0) return true;
  return gap_m / closing_speed_mps > p.ttc_threshold_s;
}

struct LeaderView {
  double gap_m = 0.0;
  double speed_mps = 0.0;
};

// A vehicle whose situation changes with the ego maneuver (old successor,
// new successor, merging traffic). Both sides of the comparison are projected
// with the same car-following equilibrium: gap_before is what the vehicle
// faces now, gap_after what it would face once the ego has moved. Projecting
// the baseline too (rather than reading the instantaneous speed) keeps
// transient accelerations from minting courtesy that the maneuver did not
// cause; at steady state the two coincide.
struct RelatedVehicle {
  double desired_speed_mps = 0.0;
  double gap_before_m = kInfiniteGap;
  double gap_after_m = kInfiniteGap;
  CarFollowParams model;
};

// How a candidate change interacts with the ego route.
enum class ChangeKind {
  RoutePreserving,  // target serves the route as well as the current lane
  RouteCommitting,  // current serves the route, target does not
  RouteRestoring,   // current is off-route, target restores it
  RouteSwitching,   // neither serves the route
};

// Snapshot of everything one candidate evaluation needs; built by the
// simulator against a single step's state.
struct IncentiveContext {
  double ego_speed_mps = 0.0;
  double ego_desired_speed_mps = 0.0;
  double remaining_m = 0.0;  // S, to the current lane's decision point
  CarFollowParams ego_model;

  LaneStats current;
  LaneStats target;
  std::optional<LeaderView> current_leader;
  std::optional<LeaderView> target_leader;

  std::vector<RelatedVehicle> related;

  double route_keep_s = 0.0;    // remaining time if the vehicle keeps lane
  double route_change_s = 0.0;  // remaining time committed to the target lane
  ChangeKind kind = ChangeKind::RoutePreserving;
};

struct SpeedPair {
  double current = 0.0;
  double after_change = 0.0;
};

// Expected speed behind the current vs the prospective leader: equilibrium of
// the ego car-following model at the observed gap; desired speed on free road.
inline SpeedPair expected_speed(const IncentiveContext& ctx) {
  auto predict = [&](const std::optional<LeaderView>& leader) {
    if (!leader) return free_speed(ctx.ego_model);
    return equilibrium_speed(ctx.ego_model, leader->gap_m);
  };
  return {predict(ctx.current_leader), predict(ctx.target_leader)};
}

inline double related_speed(const RelatedVehicle& r, double gap) {
  // A driver does not accelerate past their own desired speed.
  return std::min(equilibrium_speed(r.model, gap), r.desired_speed_mps);
}

// Courtesy gain: per-vehicle normalized improvement toward desired speed,
// summed over related vehicles. Vehicles already at desired speed are skipped.
inline double courtesy_gain(const IncentiveContext& ctx, double eps = 0.1) {
  double sum = 0.0;
  for (const auto& r : ctx.related) {
    double before = std::abs(related_speed(r, r.gap_before_m) - r.desired_speed_mps);
    if (before < eps) continue;
    double after = std::abs(related_speed(r, r.gap_after_m) - r.desired_speed_mps);
    sum += (before - after) / before;
  }
  return sum;
}

// Aggregate desired-speed deviations before/after the maneuver; the cost-table
// courtesy row. `counted` follows the same skip rule as courtesy_gain.
struct CourtesySums {
  double deviation_before = 0.0;
  double deviation_after = 0.0;
  int counted = 0;
};

inline CourtesySums courtesy_sums(const IncentiveContext& ctx, double eps = 0.1) {
  CourtesySums out;
  for (const auto& r : ctx.related) {
    double before = std::abs(related_speed(r, r.gap_before_m) - r.desired_speed_mps);
    if (before < eps) continue;
    out.deviation_before += before;
    out.deviation_after += std::abs(related_speed(r, r.gap_after_m) - r.desired_speed_mps);
    ++out.counted;
  }
  return out;
}

}  // namespace lanesim
