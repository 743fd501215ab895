#pragma once

#include <optional>

#include "lanesim/carfollow.hpp"
#include "lanesim/incentives.hpp"

namespace lanesim {

struct MobilParams {
  double politeness = 0.3;   // p in [0, 1]
  double a_threshold = 0.1;  // m/s^2
  double b_safe = 4.0;       // m/s^2, safety veto on the new follower
  double right_bias = 0.0;   // m/s^2, keep-right incentive
};

// One affected vehicle: its IDM acceleration before and after the ego change.
struct MobilActor {
  double speed_mps = 0.0;
  IdmParams params;
  std::optional<LeaderView> leader_before;
  std::optional<LeaderView> leader_after;
};

struct MobilContext {
  MobilActor ego;                          // before: current leader; after: target leader
  std::optional<MobilActor> old_follower;  // before: ego as leader; after: ego's old leader
  std::optional<MobilActor> new_follower;  // before: target leader; after: ego
  bool to_right = false;
  bool route_blocked = false;  // the target lane would break the route
};

struct MobilOutcome {
  bool change = false;
  double gain = 0.0;
  double new_follower_accel_after = 0.0;
};

namespace detail {
inline double mobil_accel(const MobilActor& a, const std::optional<LeaderView>& leader) {
  if (!leader) return idm_accel(a.params, a.speed_mps, kInfiniteGap, 0.0);
  if (leader->gap_m <= 0.0) return kMaxDecel;  // infeasible insertion
  return idm_accel(a.params, a.speed_mps, leader->gap_m, a.speed_mps - leader->speed_mps);
}
}  // namespace detail

// Classic acceleration-gain rule: change when the ego gain plus the
// politeness-weighted follower gains clears the threshold and the new
// follower is not forced below -b_safe. Route-infeasible targets are never
// taken.
inline MobilOutcome mobil_decide(const MobilContext& ctx, const MobilParams& p) {
  MobilOutcome out;
  if (ctx.route_blocked) return out;
  if (ctx.ego.leader_after && ctx.ego.leader_after->gap_m <= 0.0) return out;

  double ego_gain = detail::mobil_accel(ctx.ego, ctx.ego.leader_after) -
                    detail::mobil_accel(ctx.ego, ctx.ego.leader_before);
  double follower_terms = 0.0;
  if (ctx.old_follower)
    follower_terms += detail::mobil_accel(*ctx.old_follower, ctx.old_follower->leader_after) -
                      detail::mobil_accel(*ctx.old_follower, ctx.old_follower->leader_before);
  double a_new_after = 0.0;
  if (ctx.new_follower) {
    a_new_after = detail::mobil_accel(*ctx.new_follower, ctx.new_follower->leader_after);
    follower_terms += a_new_after -
                      detail::mobil_accel(*ctx.new_follower, ctx.new_follower->leader_before);
  }
  out.new_follower_accel_after = a_new_after;
  out.gain = ego_gain + p.politeness * follower_terms +
             (ctx.to_right ? p.right_bias : -p.right_bias);

  if (ctx.new_follower && a_new_after < -p.b_safe) return out;  // safety veto is absolute
  out.change = out.gain > p.a_threshold;
  return out;
}

}  // namespace lanesim
