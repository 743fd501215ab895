#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lanesim/decision.hpp"
#include "lanesim/mobil.hpp"
#include "lanesim/road_net.hpp"

namespace lanesim {

enum class LaneChangeModel { Mcdm, Mobil };

struct ScenarioConfig {
  std::string network_path;
  LaneChangeModel model = LaneChangeModel::Mcdm;
  std::map<std::string, double> demand_veh_h;  // per entrance section id
  std::vector<double> demand_sweep;            // optional series of demand levels
  double duration_s = 600.0;
  double dt_s = 0.1;
  std::uint64_t seed = 1;
  std::vector<std::pair<std::string, double>> style_mix;  // name -> fraction
  std::map<std::string, DrivingStyle> styles;
  std::optional<std::string> destination;
  std::map<std::string, std::vector<std::string>> entry_lanes;  // per entrance
  MobilParams mobil;
  SafetyParams safety;
  HeadwayConfig headway;
  double vehicle_length_m = 5.0;
  double measure_window_s = 300.0;
  double rate_bin_veh_km = 2.0;
  std::vector<std::string> measure_sections;  // empty = whole network
  double nav_interval_s = 10.0;
  double trajectory_interval_s = 0.0;  // 0 = off
  double sync_gain = 0.3;              // 1/s, speed adaptation while waiting
  double stats_window_m = 200.0;
  double merge_lookahead_m = 100.0;
  double change_margin_m = 15.0;       // no lane changes closer to the lane end
  struct Scripted {
    double time_s = 0.0;
    std::string lane;
    double position_m = 0.0;
    double speed_mps = 0.0;
    std::string style;
    std::string destination;
  };
  std::vector<Scripted> scripted;

  static ScenarioConfig from_file(const std::string& path);
  static ScenarioConfig from_json(const nlohmann::json& j, const std::string& base_dir,
                                  const std::string& ctx = "scenario");
};

struct VehicleState {
  std::uint64_t id = 0;
  int lane = -1;
  double position_m = 0.0;  // front bumper
  double speed_mps = 0.0;
  double accel_mps2 = 0.0;
  double length_m = 5.0;
  int style = 0;
  std::vector<int> route;  // section indices
  int route_pos = 0;
  double spawn_time_s = 0.0;
  double last_change_s = -1e18;
  bool synchronize = false;
  double sync_speed_mps = 0.0;
  long pending_event = -1;  // index into the event log
  int prev_lane = -1;       // feeder lane while straddling a section boundary
};

enum class ChangeClass { Pending, ReturnedToOriginal, RouteChanged };

inline const char* to_string(ChangeClass c) {
  switch (c) {
    case ChangeClass::ReturnedToOriginal: return "ReturnedToOriginal";
    case ChangeClass::RouteChanged: return "RouteChanged";
    default: return "Pending";
  }
}

struct LaneChangeEvent {
  double time_s = 0.0;
  std::uint64_t vehicle = 0;
  int from_lane = -1;
  int to_lane = -1;
  double g = 0.0;
  double p_back = 0.0;
  bool committing = false;  // change onto a lane that leaves the route
  ChangeClass cls = ChangeClass::Pending;
};

// One space-time measurement cell (whole region x one time window).
struct MeasureCell {
  double density_veh_km = 0.0;  // per lane
  int events = 0;
  double dx_km = 0.0;
  double dt_h = 0.0;
};

struct RateBin {
  double density_veh_km = 0.0;
  int events = 0;
  double dx_km = 0.0;
  double dt_h = 0.0;
  double rate_per_km_h = 0.0;
};

// Bin cells by density and report r = n / (dx * dt) per bin.
// Cells with no coverage are dropped, not zero-filled.
inline std::vector<RateBin> lane_change_rate(const std::vector<MeasureCell>& cells,
                                             double bin_width_veh_km) {
  std::map<long, RateBin> bins;
  std::map<long, double> dens_weight;
  for (const auto& c : cells) {
    if (c.dt_h <= 0.0 || c.dx_km <= 0.0) continue;
    long key = static_cast<long>(std::floor(c.density_veh_km / bin_width_veh_km));
    auto& b = bins[key];
    b.events += c.events;
    b.dt_h += c.dt_h;
    b.dx_km = c.dx_km;
    dens_weight[key] += c.density_veh_km * c.dt_h;
  }
  std::vector<RateBin> out;
  for (auto& [key, b] : bins) {
    b.density_veh_km = dens_weight[key] / b.dt_h;
    b.rate_per_km_h = static_cast<double>(b.events) / (b.dx_km * b.dt_h);
    out.push_back(b);
  }
  return out;
}

struct TrajectoryRow {
  double time_s;
  std::uint64_t vehicle;
  int lane;
  double position_m;
  double speed_mps;
  double accel_mps2;
};

struct RunResult {
  std::vector<MeasureCell> cells;
  std::vector<RateBin> bins;
  std::vector<LaneChangeEvent> events;
  std::vector<TrajectoryRow> trajectories;
  std::uint64_t spawned = 0;
  std::uint64_t exited = 0;
  std::uint64_t active_at_end = 0;
  std::uint64_t blocked_arrivals_at_end = 0;
};

// Discrete-time world. Step phases run in a fixed order; decisions are
// computed against the step-start snapshot and applied in ascending vehicle
// id with a safety re-check, which resolves simultaneous claims on one gap.
class World {
 public:
  World(RoadNetwork net, ScenarioConfig cfg)
      : net_(std::move(net)),
        cfg_(std::move(cfg)),
        style_stream_(cfg_.seed, "style"),
        dest_stream_(cfg_.seed, "destination") {
    if (!(cfg_.dt_s > 0.0) || cfg_.dt_s > 0.5)
      throw ConfigError("scenario: dt_s must be in (0, 0.5]");
    if (!(cfg_.duration_s >= 0.0)) throw ConfigError("scenario: duration_s must be >= 0");
    double mix = 0.0;
    for (auto& [name, f] : cfg_.style_mix) {
      if (!cfg_.styles.count(name))
        throw ConfigError("scenario: style_mix names unknown style '" + name + "'");
      mix += f;
    }
    if (!cfg_.style_mix.empty() && std::abs(mix - 1.0) > 1e-9)
      throw ConfigError("scenario: style_mix fractions must sum to 1");
    for (auto& [name, s] : cfg_.styles) style_order_.push_back(name);

    dest_section_ = resolve_destination();
    setup_entrances();
    lane_order_.resize(static_cast<std::size_t>(net_.lane_count()));
    setup_measurement();
    feeders_.resize(static_cast<std::size_t>(net_.lane_count()));
    for (int li = 0; li < net_.lane_count(); ++li) {
      const Lane& l = net_.lane(li);
      for (int succ : l.successors) {
        int cont = continuation_lane(li, succ);
        if (cont >= 0) feeders_[static_cast<std::size_t>(cont)].push_back(li);
      }
    }
    refresh_navigation();
    for (const auto& s : cfg_.scripted) scripted_queue_.push_back(s);
    std::stable_sort(scripted_queue_.begin(), scripted_queue_.end(),
                     [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
  }

  const RoadNetwork& network() const { return net_; }
  const ScenarioConfig& config() const { return cfg_; }
  double time() const { return time_s_; }
  const std::map<std::uint64_t, VehicleState>& vehicles() const { return vehicles_; }
  const std::vector<LaneChangeEvent>& events() const { return events_; }
  std::uint64_t spawned() const { return spawned_; }
  std::uint64_t exited() const { return exited_; }

  void step() {
    rebuild_lane_order();          // 1. snapshot + invariant check
    auto decisions = decide_all(); // 2. decisions against the snapshot
    apply_changes(decisions);      // 3. ascending id, re-checked
    compute_accels();              // 4. car-following + synchronization
    integrate();                   // 5. semi-implicit Euler
    transitions();                 // 6. lane end, re-routing, exits
    spawn();                       // 7. arrivals
    collect_metrics();             // 8. metrics, logs, navigation refresh
    time_s_ += cfg_.dt_s;
    ++step_count_;
    if (spawned_ != vehicles_.size() + exited_)
      throw InvariantError("vehicle conservation violated at t=" + std::to_string(time_s_));
  }

  RunResult run() {
    long steps = static_cast<long>(std::llround(cfg_.duration_s / cfg_.dt_s));
    for (long i = 0; i < steps; ++i) step();
    RunResult r;
    r.cells = finish_cells();
    r.bins = lane_change_rate(r.cells, cfg_.rate_bin_veh_km);
    r.events = events_;
    r.trajectories = trajectories_;
    r.spawned = spawned_;
    r.exited = exited_;
    r.active_at_end = vehicles_.size();
    for (auto& e : entrances_) r.blocked_arrivals_at_end += e.backlog.size();
    return r;
  }

  // Test access: place a vehicle directly (bypasses arrival process).
  std::uint64_t add_vehicle(int lane, double position, double speed, const std::string& style,
                            std::optional<int> dest = std::nullopt) {
    VehicleState v;
    v.id = next_id_++;
    v.lane = lane;
    v.position_m = position;
    v.speed_mps = speed;
    v.length_m = cfg_.vehicle_length_m;
    v.style = style_index(style);
    v.spawn_time_s = time_s_;
    int from = net_.lane(lane).section;
    int dst = dest.value_or(dest_section_);
    v.route = net_.shortest_route(from, dst);
    if (v.route.empty()) throw ConfigError("add_vehicle: no route to destination");
    ++spawned_;
    vehicles_.emplace(v.id, std::move(v));
    return next_id_ - 1;
  }

  const DrivingStyle& style_of(const VehicleState& v) const {
    return cfg_.styles.at(style_order_[static_cast<std::size_t>(v.style)]);
  }

 private:
  struct EntranceState {
    int section = -1;
    std::vector<int> lanes;
    double demand_veh_h = 0.0;
    double next_arrival_s = 0.0;
    std::deque<std::string> backlog;  // styles drawn at arrival time
    RngStream arrivals;
    RngStream lane_pick;
  };

  struct PendingDecision {
    std::uint64_t id = 0;
    DecisionOutcome outcome;
  };

  int style_index(const std::string& name) const {
    for (std::size_t i = 0; i < style_order_.size(); ++i)
      if (style_order_[i] == name) return static_cast<int>(i);
    throw ConfigError("unknown style '" + name + "'");
  }

  int resolve_destination() const {
    if (cfg_.destination)
      return net_.section_index(*cfg_.destination, "scenario destination");
    if (net_.exits().size() != 1)
      throw ConfigError("scenario: network has " + std::to_string(net_.exits().size()) +
                        " exits; set 'destination'");
    return net_.exits().front();
  }

  void setup_entrances() {
    for (int sec : net_.entrances()) {
      const Section& s = net_.section(sec);
      double demand = 0.0;
      if (auto it = cfg_.demand_veh_h.find(s.id); it != cfg_.demand_veh_h.end())
        demand = it->second;
      else if (auto all = cfg_.demand_veh_h.find("*"); all != cfg_.demand_veh_h.end())
        demand = all->second;
      EntranceState e{sec,
                      {},
                      demand,
                      0.0,
                      {},
                      RngStream(cfg_.seed, "spawn:" + s.id),
                      RngStream(cfg_.seed, "spawn-lane:" + s.id)};
      if (auto it = cfg_.entry_lanes.find(s.id); it != cfg_.entry_lanes.end()) {
        for (const auto& lid : it->second)
          e.lanes.push_back(net_.lane_index(lid, "scenario entry_lanes"));
      } else {
        e.lanes = s.lanes;
      }
      if (demand > 0.0) e.next_arrival_s = e.arrivals.exponential(3600.0 / demand);
      entrances_.push_back(std::move(e));
    }
  }

  void setup_measurement() {
    std::vector<int> secs;
    if (cfg_.measure_sections.empty()) {
      for (int i = 0; i < net_.section_count(); ++i) secs.push_back(i);
    } else {
      for (const auto& sid : cfg_.measure_sections)
        secs.push_back(net_.section_index(sid, "scenario measurement"));
    }
    measure_lane_.assign(static_cast<std::size_t>(net_.lane_count()), false);
    measure_dx_km_ = 0.0;
    measure_lane_km_ = 0.0;
    for (int sec : secs) {
      const Section& s = net_.section(sec);
      double mean_len = 0.0;
      for (int li : s.lanes) {
        measure_lane_[static_cast<std::size_t>(li)] = true;
        mean_len += net_.lane(li).length_m;
        measure_lane_km_ += net_.lane(li).length_m / 1000.0;
      }
      measure_dx_km_ += mean_len / static_cast<double>(s.lanes.size()) / 1000.0;
    }
  }

  // ---- lane bookkeeping -------------------------------------------------

  void rebuild_lane_order() {
    for (auto& v : lane_order_) v.clear();
    for (const auto& [id, v] : vehicles_)
      lane_order_[static_cast<std::size_t>(v.lane)].push_back(id);
    for (auto& order : lane_order_) {
      std::sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) {
        const auto& va = vehicles_.at(a);
        const auto& vb = vehicles_.at(b);
        return va.position_m != vb.position_m ? va.position_m < vb.position_m : a < b;
      });
    }
    check_gaps();
  }

  void check_gaps() const {
    for (int li = 0; li < net_.lane_count(); ++li) {
      const auto& order = lane_order_[static_cast<std::size_t>(li)];
      for (std::size_t i = 1; i < order.size(); ++i) {
        const auto& rear = vehicles_.at(order[i - 1]);
        const auto& front = vehicles_.at(order[i]);
        if (front.position_m - front.length_m - rear.position_m < -1e-9)
          throw InvariantError("negative gap on lane " + net_.lane(li).id + " between #" +
                               std::to_string(rear.id) + " and #" + std::to_string(front.id) +
                               " at t=" + std::to_string(time_s_));
      }
      // Entrant straddling the section boundary vs the tail of the lane it
      // came from (other feeders are separate approach roads).
      if (!order.empty()) {
        const auto& first = vehicles_.at(order.front());
        double overhang = first.position_m - first.length_m;  // < 0: sticks back
        if (overhang < 0.0 && first.prev_lane >= 0) {
          const auto& fo = lane_order_[static_cast<std::size_t>(first.prev_lane)];
          if (!fo.empty()) {
            const auto& tail = vehicles_.at(fo.back());
            if (tail.position_m - (net_.lane(first.prev_lane).length_m + overhang) > 1e-9)
              throw InvariantError("cross-boundary overlap entering lane " + net_.lane(li).id +
                                   " at t=" + std::to_string(time_s_));
          }
        }
      }
    }
  }

  // Index of the first vehicle on `lane` strictly ahead of `pos` (front bumper
  // beyond pos); -1 if none. `behind`: last vehicle with front bumper <= pos.
  std::pair<long, long> neighbors_at(int lane, double pos, std::uint64_t skip_id) const {
    const auto& order = lane_order_[static_cast<std::size_t>(lane)];
    long ahead = -1, behind = -1;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (order[i] == skip_id) continue;
      if (vehicles_.at(order[i]).position_m > pos)
        { ahead = static_cast<long>(order[i]); break; }
      behind = static_cast<long>(order[i]);
    }
    return {ahead, behind};
  }

  std::optional<LeaderView> leader_in_lane(const VehicleState& v, int lane) const {
    auto [ahead, behind] = neighbors_at(lane, v.position_m, v.id);
    if (ahead < 0) return std::nullopt;
    const auto& lead = vehicles_.at(static_cast<std::uint64_t>(ahead));
    return LeaderView{lead.position_m - lead.length_m - v.position_m, lead.speed_mps};
  }

  LaneStats stats_for(int lane, double center) const {
    const Lane& l = net_.lane(lane);
    double half = cfg_.stats_window_m / 2.0;
    double lo = std::max(0.0, center - half);
    double hi = std::min(l.length_m, center + half);
    LaneStats s;
    s.window_m = std::max(1.0, hi - lo);
    const auto& order = lane_order_[static_cast<std::size_t>(lane)];
    double speed_sum = 0.0, gap_sum = 0.0;
    int gaps = 0;
    const VehicleState* prev = nullptr;
    for (std::uint64_t id : order) {
      const auto& v = vehicles_.at(id);
      if (v.position_m < lo || v.position_m > hi) continue;
      ++s.vehicle_count;
      speed_sum += v.speed_mps;
      if (prev) {
        gap_sum += v.position_m - v.length_m - prev->position_m;
        ++gaps;
      }
      prev = &v;
    }
    if (s.vehicle_count == 0) {
      s.mean_gap_m = s.window_m;
      s.mean_speed_mps = net_.lane(lane).speed_limit_mps;
      s.time_headway_s = cfg_.headway.cap_s;
    } else {
      s.mean_speed_mps = speed_sum / s.vehicle_count;
      s.mean_gap_m = gaps > 0 ? gap_sum / gaps : s.window_m;
      s.time_headway_s = time_headway(s.mean_gap_m, s.mean_speed_mps, cfg_.headway);
    }
    s.density_veh_km = s.vehicle_count / (s.window_m / 1000.0);
    s.flow_veh_h = s.density_veh_km * s.mean_speed_mps * 3.6;
    return s;
  }

  // ---- routing ----------------------------------------------------------

  std::optional<int> route_next(const VehicleState& v) const {
    if (v.route_pos + 1 >= static_cast<int>(v.route.size())) return std::nullopt;
    return v.route[static_cast<std::size_t>(v.route_pos) + 1];
  }

  void refresh_navigation() {
    section_time_.assign(static_cast<std::size_t>(net_.section_count()), 0.0);
    std::vector<int> count(static_cast<std::size_t>(net_.section_count()), 0);
    std::vector<double> speed(static_cast<std::size_t>(net_.section_count()), 0.0);
    for (const auto& [id, v] : vehicles_) {
      int sec = net_.lane(v.lane).section;
      ++count[static_cast<std::size_t>(sec)];
      speed[static_cast<std::size_t>(sec)] += v.speed_mps;
    }
    for (int i = 0; i < net_.section_count(); ++i) {
      const Section& s = net_.section(i);
      double len_km = 0.0;
      for (int li : s.lanes) len_km += net_.lane(li).length_m;
      len_km /= static_cast<double>(s.lanes.size()) * 1000.0;
      RouteSegment seg;
      seg.t0_s = s.t0_s;
      seg.capacity_veh_h = s.capacity_veh_h;
      seg.k1 = s.k1;
      seg.k2 = s.k2;
      int n = count[static_cast<std::size_t>(i)];
      double mean_v = n > 0 ? speed[static_cast<std::size_t>(i)] / n : 0.0;
      // Flow = density * speed, with a queue-discharge floor on the speed:
      // a standing queue represents demand at capacity, not an empty road.
      double limit = net_.lane(s.lanes.front()).speed_limit_mps;
      double v_eff = std::max(mean_v, 0.5 * limit);
      seg.flow_veh_h = n > 0 ? (n / len_km) * v_eff * 3.6 : 0.0;
      section_time_[static_cast<std::size_t>(i)] = route_travel_time(seg);
    }
    committed_cache_.clear();
    nav_refresh_time_ = time_s_;
  }

  // Best live travel time from the start of `from` to the end of the
  // destination; kUnreachableTime when no path exists.
  double committed_time(int from) {
    auto it = committed_cache_.find(from);
    if (it != committed_cache_.end()) return it->second;
    auto chain = net_.shortest_route(from, dest_section_, &section_time_);
    double t = 0.0;
    if (chain.empty()) {
      t = kUnreachableTime;
    } else {
      for (int s : chain) t += section_time_[static_cast<std::size_t>(s)];
    }
    committed_cache_.emplace(from, t);
    return t;
  }

  double rest_of_route(const VehicleState& v) const {
    double t = 0.0;
    for (std::size_t i = static_cast<std::size_t>(v.route_pos) + 1; i < v.route.size(); ++i)
      t += section_time_[static_cast<std::size_t>(v.route[i])];
    return t;
  }

  // ---- decision phase ---------------------------------------------------

  std::vector<PendingDecision> decide_all() {
    std::vector<PendingDecision> out;
    for (auto& [id, v] : vehicles_) {
      DecisionOutcome o = cfg_.model == LaneChangeModel::Mcdm ? decide_mcdm(v) : decide_mobil(v);
      v.synchronize = o.synchronize;
      if (o.synchronize) v.sync_speed_mps = o.target_lane >= 0 ? sync_speed_for(v, o.target_lane) : v.speed_mps;
      if (o.action == Action::Change) out.push_back({id, o});
    }
    return out;
  }

  double sync_speed_for(const VehicleState& v, int target) const {
    LaneStats s = stats_for(target, v.position_m);
    return s.vehicle_count > 0 ? s.mean_speed_mps : v.speed_mps;
  }

  // The maneuver itself needs room: no changes within the margin of the lane
  // end, where entrants from this lane may still straddle the boundary.
  bool change_window_open(const VehicleState& v) const {
    return net_.lane(v.lane).length_m - v.position_m >= cfg_.change_margin_m;
  }

  DecisionOutcome decide_mcdm(VehicleState& v) {
    const DrivingStyle& style = style_of(v);
    std::vector<Candidate> candidates;
    const Lane& l = net_.lane(v.lane);
    if (change_window_open(v)) {
      for (int target : {l.left, l.right}) {
        if (target < 0) continue;
        candidates.push_back(make_candidate(v, target));
      }
    }
    return decide(time_s_, v.last_change_s, candidates, style, cfg_.safety);
  }

  Candidate make_candidate(const VehicleState& v, int target) {
    const DrivingStyle& style = style_of(v);
    Candidate cand;
    cand.target_lane = target;

    IncentiveContext& ctx = cand.ctx;
    ctx.ego_speed_mps = v.speed_mps;
    ctx.ego_desired_speed_mps = style.desired_speed_mps;
    ctx.ego_model = style.carfollow;
    ctx.remaining_m = net_.remaining_distance(v.lane, v.position_m);
    ctx.current = stats_for(v.lane, v.position_m);
    ctx.target = stats_for(target, v.position_m);
    ctx.current_leader = leader_in_lane(v, v.lane);
    ctx.target_leader = leader_in_lane(v, target);

    auto nxt = route_next(v);
    bool cur_ok = !nxt || net_.lane_serves(v.lane, *nxt);
    bool tgt_ok = !nxt || net_.lane_serves(target, *nxt);
    ctx.kind = cur_ok ? (tgt_ok ? ChangeKind::RoutePreserving : ChangeKind::RouteCommitting)
                      : (tgt_ok ? ChangeKind::RouteRestoring : ChangeKind::RouteSwitching);
    ctx.route_keep_s = committed_via_lane_cached(v, v.lane);
    ctx.route_change_s = committed_via_lane_cached(v, target);

    // Prospective follower in the target lane.
    auto [ahead, behind] = neighbors_at(target, v.position_m, v.id);
    if (behind >= 0) {
      const auto& f = vehicles_.at(static_cast<std::uint64_t>(behind));
      cand.follower_gap_m = v.position_m - v.length_m - f.position_m;
      cand.follower_closing_mps = f.speed_mps - v.speed_mps;
    }
    if (ctx.target_leader) {
      cand.leader_gap_m = ctx.target_leader->gap_m;
      cand.leader_speed_mps = ctx.target_leader->speed_mps;
    }

    build_related(v, target, behind, ctx);
    (void)ahead;
    return cand;
  }

  double committed_via_lane_cached(const VehicleState& v, int lane) {
    auto nxt = route_next(v);
    const Lane& cur = net_.lane(v.lane);
    double frac = std::max(0.0, 1.0 - v.position_m / cur.length_m);
    double here = frac * section_time_[static_cast<std::size_t>(cur.section)];
    if (!nxt) return here;
    if (net_.lane_serves(lane, *nxt)) return here + rest_of_route(v);
    double best = kUnreachableTime;
    for (int succ : net_.lane(lane).successors) best = std::min(best, committed_time(succ));
    return here + std::min(best, kUnreachableTime);
  }

  void build_related(const VehicleState& v, int target, long target_behind,
                     IncentiveContext& ctx) {
    // Old successor: follows the ego now, would follow the ego's leader.
    auto [cur_ahead, cur_behind] = neighbors_at(v.lane, v.position_m, v.id);
    if (cur_behind >= 0) {
      const auto& f = vehicles_.at(static_cast<std::uint64_t>(cur_behind));
      RelatedVehicle r;
      r.desired_speed_mps = style_of(f).desired_speed_mps;
      r.model = style_of(f).carfollow;
      r.gap_before_m = v.position_m - v.length_m - f.position_m;
      if (cur_ahead >= 0) {
        const auto& lead = vehicles_.at(static_cast<std::uint64_t>(cur_ahead));
        r.gap_after_m = lead.position_m - lead.length_m - f.position_m;
      }
      ctx.related.push_back(r);
    }
    // New successor: would follow the ego instead of its current leader.
    if (target_behind >= 0) {
      const auto& f = vehicles_.at(static_cast<std::uint64_t>(target_behind));
      RelatedVehicle r;
      r.desired_speed_mps = style_of(f).desired_speed_mps;
      r.model = style_of(f).carfollow;
      auto [t_ahead, t_behind] = neighbors_at(target, f.position_m, f.id);
      (void)t_behind;
      if (t_ahead >= 0) {
        const auto& lead = vehicles_.at(static_cast<std::uint64_t>(t_ahead));
        r.gap_before_m = lead.position_m - lead.length_m - f.position_m;
      }
      r.gap_after_m = v.position_m - v.length_m - f.position_m;
      ctx.related.push_back(r);
    }
    // Merging traffic: vehicles alongside whose route needs the ego lane and
    // whom the ego currently blocks; the ego leaving frees their insertion gap.
    const Lane& l = net_.lane(v.lane);
    for (int nb : {l.left, l.right}) {
      if (nb < 0) continue;
      for (std::uint64_t mid : lane_order_[static_cast<std::size_t>(nb)]) {
        const auto& m = vehicles_.at(mid);
        if (m.position_m > v.position_m || v.position_m - m.position_m > cfg_.merge_lookahead_m)
          continue;
        auto mnext = route_next(m);
        if (!mnext) continue;
        if (net_.lane_serves(m.lane, *mnext) || !net_.lane_serves(v.lane, *mnext)) continue;
        // Only count mergers the ego actually blocks: no other vehicle in the
        // ego lane between the merger and the ego.
        auto [ma, mb] = neighbors_at(v.lane, m.position_m, v.id);
        (void)mb;
        bool ego_blocks = ma < 0 || vehicles_.at(static_cast<std::uint64_t>(ma)).position_m >
                                        v.position_m;
        if (!ego_blocks) continue;
        RelatedVehicle r;
        r.desired_speed_mps = style_of(m).desired_speed_mps;
        r.model = style_of(m).carfollow;
        r.gap_before_m = v.position_m - v.length_m - m.position_m;
        if (ma >= 0) {
          const auto& lead = vehicles_.at(static_cast<std::uint64_t>(ma));
          r.gap_after_m = lead.position_m - lead.length_m - m.position_m;
        }
        ctx.related.push_back(r);
        break;  // nearest merger per side
      }
    }
  }

  DecisionOutcome decide_mobil(const VehicleState& v) {
    const DrivingStyle& style = style_of(v);
    const Lane& l = net_.lane(v.lane);
    DecisionOutcome best;
    if (!change_window_open(v)) return best;
    for (int target : {l.left, l.right}) {
      if (target < 0) continue;
      MobilContext mc;
      auto nxt = route_next(v);
      bool cur_ok = !nxt || net_.lane_serves(v.lane, *nxt);
      bool tgt_ok = !nxt || net_.lane_serves(target, *nxt);
      mc.route_blocked = cur_ok && !tgt_ok;
      mc.to_right = target == l.right;
      mc.ego.speed_mps = v.speed_mps;
      mc.ego.params = style.carfollow.idm;
      mc.ego.leader_before = leader_in_lane(v, v.lane);
      mc.ego.leader_after = leader_in_lane(v, target);

      auto [cur_ahead, cur_behind] = neighbors_at(v.lane, v.position_m, v.id);
      if (cur_behind >= 0) {
        const auto& f = vehicles_.at(static_cast<std::uint64_t>(cur_behind));
        MobilActor a;
        a.speed_mps = f.speed_mps;
        a.params = style_of(f).carfollow.idm;
        a.leader_before = LeaderView{v.position_m - v.length_m - f.position_m, v.speed_mps};
        if (cur_ahead >= 0) {
          const auto& lead = vehicles_.at(static_cast<std::uint64_t>(cur_ahead));
          a.leader_after = LeaderView{lead.position_m - lead.length_m - f.position_m, lead.speed_mps};
        }
        mc.old_follower = a;
      }
      auto [tgt_ahead, tgt_behind] = neighbors_at(target, v.position_m, v.id);
      if (tgt_behind >= 0) {
        const auto& f = vehicles_.at(static_cast<std::uint64_t>(tgt_behind));
        MobilActor a;
        a.speed_mps = f.speed_mps;
        a.params = style_of(f).carfollow.idm;
        if (tgt_ahead >= 0) {
          const auto& lead = vehicles_.at(static_cast<std::uint64_t>(tgt_ahead));
          a.leader_before = LeaderView{lead.position_m - lead.length_m - f.position_m, lead.speed_mps};
        }
        a.leader_after = LeaderView{v.position_m - v.length_m - f.position_m, v.speed_mps};
        mc.new_follower = a;
      }
      MobilOutcome mo = mobil_decide(mc, cfg_.mobil);
      if (mo.change && mo.gain > best.g) {
        best.action = Action::Change;
        best.g = mo.gain;
        best.target_lane = target;
        best.kind = cur_ok ? (tgt_ok ? ChangeKind::RoutePreserving : ChangeKind::RouteCommitting)
                           : (tgt_ok ? ChangeKind::RouteRestoring : ChangeKind::RouteSwitching);
        best.p_back = best.kind == ChangeKind::RouteCommitting
                          ? prob_back(style.alpha, stats_for(target, v.position_m).time_headway_s,
                                      net_.remaining_distance(v.lane, v.position_m))
                          : 0.0;
      }
    }
    return best;
  }

  // ---- apply phase ------------------------------------------------------

  void apply_changes(const std::vector<PendingDecision>& decisions) {
    for (const auto& d : decisions) {
      auto& v = vehicles_.at(d.id);
      int target = d.outcome.target_lane;
      // Re-check against already-applied changes.
      auto [ahead, behind] = neighbors_at(target, v.position_m, v.id);
      bool ok = true;
      if (ahead >= 0) {
        const auto& lead = vehicles_.at(static_cast<std::uint64_t>(ahead));
        double gap = lead.position_m - lead.length_m - v.position_m;
        ok = gap >= cfg_.safety.min_gap_m &&
             safety_ok(gap, v.speed_mps - lead.speed_mps, cfg_.safety);
      }
      if (ok && behind >= 0) {
        const auto& f = vehicles_.at(static_cast<std::uint64_t>(behind));
        double gap = v.position_m - v.length_m - f.position_m;
        ok = gap >= 0.0 && safety_ok(gap, f.speed_mps - v.speed_mps, cfg_.safety);
      }
      if (!ok) {
        v.synchronize = true;
        v.sync_speed_mps = sync_speed_for(v, target);
        continue;
      }

      int from = v.lane;
      move_lane(v, target);
      v.last_change_s = time_s_;
      v.synchronize = false;

      // Resolve an open excursion: reaching any lane that serves the route
      // again counts as having gotten back.
      auto nxt = route_next(v);
      if (v.pending_event >= 0 && nxt && net_.lane_serves(target, *nxt)) {
        events_[static_cast<std::size_t>(v.pending_event)].cls = ChangeClass::ReturnedToOriginal;
        v.pending_event = -1;
      }

      LaneChangeEvent ev;
      ev.time_s = time_s_ + cfg_.dt_s;  // effective at the end of the step
      ev.vehicle = v.id;
      ev.from_lane = from;
      ev.to_lane = target;
      ev.g = d.outcome.g;
      ev.p_back = d.outcome.p_back;
      ev.committing = d.outcome.kind == ChangeKind::RouteCommitting;
      events_.push_back(ev);
      if (ev.committing && v.pending_event < 0)
        v.pending_event = static_cast<long>(events_.size()) - 1;
      if (measure_lane_[static_cast<std::size_t>(target)]) ++window_events_;
    }
  }

  void move_lane(VehicleState& v, int target) {
    auto& from_order = lane_order_[static_cast<std::size_t>(v.lane)];
    from_order.erase(std::find(from_order.begin(), from_order.end(), v.id));
    v.lane = target;
    auto& to_order = lane_order_[static_cast<std::size_t>(target)];
    auto it = std::upper_bound(to_order.begin(), to_order.end(), v.id,
                               [&](std::uint64_t a, std::uint64_t b) {
                                 const auto& va = vehicles_.at(a);
                                 const auto& vb = vehicles_.at(b);
                                 return va.position_m != vb.position_m
                                            ? va.position_m < vb.position_m
                                            : a < b;
                               });
    to_order.insert(it, v.id);
  }

  // ---- motion -----------------------------------------------------------

  void compute_accels() {
    for (auto& [id, v] : vehicles_) {
      const DrivingStyle& style = style_of(v);
      CarFollowParams motion = style.carfollow;
      // The MOBIL baseline is IDM-based end to end.
      if (cfg_.model == LaneChangeModel::Mobil) motion.model = CarFollowModel::Idm;
      std::optional<LeaderView> leader = leader_in_lane(v, v.lane);
      if (!leader) leader = boundary_leader(v);
      double a;
      if (leader) {
        double gap = std::max(0.01, leader->gap_m);
        a = accel(motion, v.speed_mps, gap, v.speed_mps - leader->speed_mps);
      } else {
        a = accel(motion, v.speed_mps, kInfiniteGap, 0.0);
      }
      if (v.synchronize) {
        double a_sync = cfg_.sync_gain * (v.sync_speed_mps - v.speed_mps);
        a = std::min(a, a_sync);
      }
      v.accel_mps2 = std::clamp(a, kMaxDecel, kMaxAccel);
    }
  }

  // The next vehicle past the lane end, seen across the section boundary.
  std::optional<LeaderView> boundary_leader(const VehicleState& v) const {
    const Lane& l = net_.lane(v.lane);
    if (l.successors.empty()) return std::nullopt;
    int next_sec = -1;
    if (auto nxt = route_next(v); nxt && net_.lane_serves(v.lane, *nxt)) {
      next_sec = *nxt;
    } else {
      next_sec = l.successors.front();
    }
    int cont = continuation_lane(v.lane, next_sec);
    if (cont < 0) return std::nullopt;
    const auto& order = lane_order_[static_cast<std::size_t>(cont)];
    if (order.empty()) return std::nullopt;
    const auto& lead = vehicles_.at(order.front());
    double gap = (l.length_m - v.position_m) + lead.position_m - lead.length_m;
    return LeaderView{gap, lead.speed_mps};
  }

  void integrate() {
    for (auto& [id, v] : vehicles_) {
      double vnew = std::max(0.0, v.speed_mps + v.accel_mps2 * cfg_.dt_s);
      v.speed_mps = vnew;
      v.position_m += vnew * cfg_.dt_s;
    }
  }

  // ---- transitions ------------------------------------------------------

  // Lane in `next_sec` that continues `lane`: feasible lanes of the old
  // section spread over the next section's lanes left to right.
  int continuation_lane(int lane, int next_sec) const {
    const Lane& l = net_.lane(lane);
    const Section& cur = net_.section(l.section);
    const Section& nxt = net_.section(next_sec);
    std::vector<int> feeding;
    for (int li : cur.lanes)
      if (net_.lane_serves(li, next_sec)) feeding.push_back(li);
    auto pos = std::find(feeding.begin(), feeding.end(), lane);
    if (pos == feeding.end()) return -1;
    std::size_t j = static_cast<std::size_t>(pos - feeding.begin());
    std::size_t m = nxt.lanes.size();
    return nxt.lanes[j * m / feeding.size()];
  }

  void transitions() {
    std::vector<std::uint64_t> exiting;
    for (auto& [id, v] : vehicles_) {
      const Lane& l = net_.lane(v.lane);
      if (v.position_m < l.length_m) continue;
      if (l.section == v.route.back() || l.successors.empty()) {
        exiting.push_back(id);
        continue;
      }
      auto nxt = route_next(v);
      int next_sec;
      bool rerouted = false;
      if (nxt && net_.lane_serves(v.lane, *nxt)) {
        next_sec = *nxt;
      } else {
        // Missed the planned transition: commit to the best reachable path.
        next_sec = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int succ : l.successors) {
          double t = committed_time(succ);
          if (t < best) {
            best = t;
            next_sec = succ;
          }
        }
        rerouted = true;
      }
      int entry = continuation_lane(v.lane, next_sec);
      if (entry < 0) entry = net_.section(next_sec).lanes.front();
      double overshoot = v.position_m - l.length_m;

      // Entry must not overlap traffic already there; otherwise hold at the
      // boundary and retry next step.
      auto [ahead, behind] = neighbors_at(entry, overshoot, v.id);
      bool blocked = false;
      if (ahead >= 0) {
        const auto& lead = vehicles_.at(static_cast<std::uint64_t>(ahead));
        if (lead.position_m - lead.length_m - overshoot < 0.1) blocked = true;
      }
      if (!blocked && behind >= 0) {
        const auto& f = vehicles_.at(static_cast<std::uint64_t>(behind));
        if (overshoot - v.length_m - f.position_m < 0.1) blocked = true;
      }
      if (blocked) {
        v.position_m = l.length_m;
        v.speed_mps = 0.0;
        continue;
      }

      if (rerouted) {
        if (v.pending_event >= 0) {
          events_[static_cast<std::size_t>(v.pending_event)].cls = ChangeClass::RouteChanged;
          v.pending_event = -1;
        }
        auto chain = net_.shortest_route(next_sec, dest_section_, &section_time_);
        if (chain.empty())
          throw InvariantError("vehicle #" + std::to_string(v.id) +
                               " lost the destination after missing its exit");
        std::vector<int> new_route(v.route.begin(),
                                   v.route.begin() + v.route_pos + 1);
        new_route.insert(new_route.end(), chain.begin(), chain.end());
        v.route = std::move(new_route);
        v.route_pos += 1;
      } else {
        v.route_pos += 1;
        if (v.pending_event >= 0 && !route_next(v)) {
          // Entering the last planned section while still marked off-route
          // cannot happen: committing changes require a next section.
          v.pending_event = -1;
        }
      }
      move_lane_transition(v, entry, overshoot);
    }
    for (std::uint64_t id : exiting) {
      auto& v = vehicles_.at(id);
      auto& order = lane_order_[static_cast<std::size_t>(v.lane)];
      order.erase(std::find(order.begin(), order.end(), id));
      vehicles_.erase(id);
      ++exited_;
    }
  }

  void move_lane_transition(VehicleState& v, int entry, double overshoot) {
    auto& from_order = lane_order_[static_cast<std::size_t>(v.lane)];
    from_order.erase(std::find(from_order.begin(), from_order.end(), v.id));
    v.prev_lane = v.lane;
    v.lane = entry;
    v.position_m = overshoot;
    auto& to_order = lane_order_[static_cast<std::size_t>(entry)];
    auto it = std::upper_bound(to_order.begin(), to_order.end(), v.id,
                               [&](std::uint64_t a, std::uint64_t b) {
                                 const auto& va = vehicles_.at(a);
                                 const auto& vb = vehicles_.at(b);
                                 return va.position_m != vb.position_m
                                            ? va.position_m < vb.position_m
                                            : a < b;
                               });
    to_order.insert(it, v.id);
  }

  // ---- spawning ---------------------------------------------------------

  void spawn() {
    while (!scripted_queue_.empty() && scripted_queue_.front().time_s <= time_s_) {
      const auto& s = scripted_queue_.front();
      int lane = net_.lane_index(s.lane, "scripted vehicle");
      std::optional<int> dest;
      if (!s.destination.empty()) dest = net_.section_index(s.destination, "scripted vehicle");
      std::uint64_t id = add_vehicle(lane, s.position_m, s.speed_mps,
                                     s.style.empty() ? style_order_.front() : s.style, dest);
      auto& order = lane_order_[static_cast<std::size_t>(lane)];
      auto& v = vehicles_.at(id);
      auto it = std::upper_bound(order.begin(), order.end(), id,
                                 [&](std::uint64_t a, std::uint64_t b) {
                                   return vehicles_.at(a).position_m < vehicles_.at(b).position_m;
                                 });
      order.insert(it, id);
      (void)v;
      scripted_queue_.pop_front();
    }
    for (auto& e : entrances_) {
      if (e.demand_veh_h <= 0.0) continue;
      while (e.next_arrival_s <= time_s_) {
        e.backlog.push_back(pick_style());
        e.next_arrival_s += e.arrivals.exponential(3600.0 / e.demand_veh_h);
      }
      while (!e.backlog.empty()) {
        if (!try_place(e, e.backlog.front())) break;
        e.backlog.pop_front();
      }
    }
  }

  bool try_place(EntranceState& e, const std::string& style) {
    const DrivingStyle& st = cfg_.styles.at(style);
    // Feasible lanes: enough clear road at the entry point.
    std::vector<int> open;
    std::vector<double> entry_speed;
    for (int li : e.lanes) {
      const Lane& l = net_.lane(li);
      double v_in = std::min(st.desired_speed_mps, l.speed_limit_mps);
      const auto& order = lane_order_[static_cast<std::size_t>(li)];
      double clear = l.length_m;
      double lead_speed = -1.0;
      if (!order.empty()) {
        const auto& first = vehicles_.at(order.front());
        clear = first.position_m - first.length_m;
        lead_speed = first.speed_mps;
      }
      double need = cfg_.vehicle_length_m + st.carfollow.idm.s0 + v_in * st.carfollow.idm.T;
      if (clear >= need) {
        open.push_back(li);
        entry_speed.push_back(lead_speed >= 0.0 ? std::min(v_in, std::max(lead_speed, 0.5 * v_in))
                                                : v_in);
      }
    }
    if (open.empty()) return false;
    std::size_t pick = open.size() == 1 ? 0 : e.lane_pick.index(open.size());
    std::uint64_t id = add_vehicle(open[pick], cfg_.vehicle_length_m, entry_speed[pick], style);
    auto& order = lane_order_[static_cast<std::size_t>(open[pick])];
    order.insert(order.begin(), id);
    return true;
  }

  std::string pick_style() {
    if (cfg_.style_mix.empty()) return style_order_.front();
    double u = style_stream_.uniform(0.0, 1.0);
    double acc = 0.0;
    for (const auto& [name, f] : cfg_.style_mix) {
      acc += f;
      if (u < acc) return name;
    }
    return cfg_.style_mix.back().first;
  }

  // ---- metrics ----------------------------------------------------------

  void collect_metrics() {
    int in_region = 0;
    for (const auto& [id, v] : vehicles_)
      if (measure_lane_[static_cast<std::size_t>(v.lane)]) ++in_region;
    window_density_sum_ += in_region * cfg_.dt_s;
    window_covered_s_ += cfg_.dt_s;
    if (window_covered_s_ >= cfg_.measure_window_s - 1e-9) flush_window();

    if (cfg_.trajectory_interval_s > 0.0) {
      double t_end = time_s_ + cfg_.dt_s;
      double k = t_end / cfg_.trajectory_interval_s;
      if (std::abs(k - std::round(k)) < 1e-6) {
        for (const auto& [id, v] : vehicles_)
          trajectories_.push_back({t_end, id, v.lane, v.position_m, v.speed_mps, v.accel_mps2});
      }
    }
    if (time_s_ - nav_refresh_time_ >= cfg_.nav_interval_s - 1e-9) refresh_navigation();
  }

  void flush_window() {
    MeasureCell c;
    double mean_count = window_density_sum_ / window_covered_s_;
    c.density_veh_km = measure_lane_km_ > 0.0 ? mean_count / measure_lane_km_ : 0.0;
    c.events = window_events_;
    c.dx_km = measure_dx_km_;
    c.dt_h = window_covered_s_ / 3600.0;
    cells_.push_back(c);
    window_density_sum_ = 0.0;
    window_covered_s_ = 0.0;
    window_events_ = 0;
  }

  std::vector<MeasureCell> finish_cells() {
    if (window_covered_s_ > 1e-9) flush_window();
    return cells_;
  }

  RoadNetwork net_;
  ScenarioConfig cfg_;
  std::vector<std::string> style_order_;
  std::map<std::uint64_t, VehicleState> vehicles_;
  std::vector<std::vector<std::uint64_t>> lane_order_;
  std::vector<std::vector<int>> feeders_;
  std::vector<LaneChangeEvent> events_;
  std::vector<TrajectoryRow> trajectories_;
  std::vector<EntranceState> entrances_;
  std::deque<ScenarioConfig::Scripted> scripted_queue_;
  RngStream style_stream_;
  RngStream dest_stream_;
  int dest_section_ = -1;

  std::vector<double> section_time_;
  std::map<int, double> committed_cache_;
  double nav_refresh_time_ = 0.0;

  std::vector<bool> measure_lane_;
  double measure_dx_km_ = 0.0;
  double measure_lane_km_ = 0.0;
  std::vector<MeasureCell> cells_;
  double window_density_sum_ = 0.0;
  double window_covered_s_ = 0.0;
  int window_events_ = 0;

  double time_s_ = 0.0;
  long step_count_ = 0;
  std::uint64_t next_id_ = 1;
  std::uint64_t spawned_ = 0;
  std::uint64_t exited_ = 0;
};

// Run a scenario. A demand_sweep runs one world per level with a derived
// seed and pools measurement cells; event vehicle ids are offset per level
// so the pooled log stays unambiguous.
inline RunResult run_scenario(const ScenarioConfig& cfg) {
  RoadNetwork net = RoadNetwork::load_file(cfg.network_path);
  if (cfg.demand_sweep.empty()) {
    World w(net, cfg);
    return w.run();
  }
  RunResult pooled;
  for (std::size_t i = 0; i < cfg.demand_sweep.size(); ++i) {
    ScenarioConfig c = cfg;
    c.demand_sweep.clear();
    c.demand_veh_h.clear();
    c.demand_veh_h["*"] = cfg.demand_sweep[i];
    c.seed = cfg.seed ^ fnv1a("sweep:" + std::to_string(i));
    World w(net, c);
    RunResult r = w.run();
    std::uint64_t off = static_cast<std::uint64_t>(i) * 10000000ull;
    for (auto e : r.events) {
      e.vehicle += off;
      pooled.events.push_back(e);
    }
    for (auto t : r.trajectories) {
      t.vehicle += off;
      pooled.trajectories.push_back(t);
    }
    pooled.cells.insert(pooled.cells.end(), r.cells.begin(), r.cells.end());
    pooled.spawned += r.spawned;
    pooled.exited += r.exited;
    pooled.active_at_end += r.active_at_end;
    pooled.blocked_arrivals_at_end += r.blocked_arrivals_at_end;
  }
  pooled.bins = lane_change_rate(pooled.cells, cfg.rate_bin_veh_km);
  return pooled;
}

// ---- scenario parsing ----------------------------------------------------

inline std::string dirname_of(const std::string& path) {
  auto pos = path.find_last_of('/');
  return pos == std::string::npos ? std::string{"."} : path.substr(0, pos);
}

inline ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j,
                                                const std::string& base_dir,
                                                const std::string& ctx) {
  ScenarioConfig c;
  if (!j.contains("network")) throw ConfigError(ctx + ": missing 'network'");
  std::string np = j.at("network").get<std::string>();
  c.network_path = np.empty() || np.front() == '/' ? np : base_dir + "/" + np;

  std::string model = j.value("model", "mcdm");
  if (model == "mcdm") c.model = LaneChangeModel::Mcdm;
  else if (model == "mobil") c.model = LaneChangeModel::Mobil;
  else throw ConfigError(ctx + ": unknown model '" + model + "' (use mcdm|mobil)");

  if (j.contains("demand_veh_h")) {
    const auto& d = j.at("demand_veh_h");
    if (d.is_number()) {
      c.demand_veh_h["*"] = d.get<double>();
    } else if (d.is_object()) {
      for (auto it = d.begin(); it != d.end(); ++it)
        c.demand_veh_h[it.key()] = it.value().get<double>();
    } else {
      throw ConfigError(ctx + ": demand_veh_h must be a number or object");
    }
  }
  if (j.contains("demand_sweep"))
    c.demand_sweep = j.at("demand_sweep").get<std::vector<double>>();
  c.duration_s = j.value("duration_s", 600.0);
  c.dt_s = j.value("dt_s", 0.1);
  c.seed = j.value("seed", std::uint64_t{1});
  if (j.contains("destination")) c.destination = j.at("destination").get<std::string>();
  if (j.contains("entry_lanes"))
    for (auto it = j.at("entry_lanes").begin(); it != j.at("entry_lanes").end(); ++it)
      c.entry_lanes[it.key()] = it.value().get<std::vector<std::string>>();

  c.styles = style_presets();
  if (j.contains("styles")) {
    for (auto it = j.at("styles").begin(); it != j.at("styles").end(); ++it) {
      DrivingStyle s = c.styles.count(it.key()) ? c.styles.at(it.key()) : DrivingStyle{};
      s.name = it.key();
      const auto& o = it.value();
      s.mu_route = o.value("mu_route", s.mu_route);
      s.mu_speed = o.value("mu_speed", s.mu_speed);
      s.mu_comfort = o.value("mu_comfort", s.mu_comfort);
      s.mu_courtesy = o.value("mu_courtesy", s.mu_courtesy);
      s.beta = o.value("beta", s.beta);
      s.alpha = o.value("alpha", s.alpha);
      s.g_threshold = o.value("g_threshold", s.g_threshold);
      s.cooldown_s = o.value("cooldown_s", s.cooldown_s);
      s.desired_speed_mps = o.value("desired_speed_mps", s.desired_speed_mps);
      if (o.contains("carfollow")) {
        auto keep_idm = s.carfollow.idm;
        auto keep_ovm = s.carfollow.ovm;
        s.carfollow = carfollow_preset(o.at("carfollow").get<std::string>());
        s.carfollow.idm = keep_idm;
        s.carfollow.ovm = keep_ovm;
      }
      if (o.contains("idm")) {
        const auto& p = o.at("idm");
        auto& ip = s.carfollow.idm;
        ip.a = p.value("a", ip.a);
        ip.b = p.value("b", ip.b);
        ip.v0 = p.value("v0", ip.v0);
        ip.T = p.value("T", ip.T);
        ip.s0 = p.value("s0", ip.s0);
        ip.delta = p.value("delta", ip.delta);
      }
      if (o.contains("ovm")) {
        const auto& p = o.at("ovm");
        auto& op = s.carfollow.ovm;
        op.V1 = p.value("V1", op.V1);
        op.V2 = p.value("V2", op.V2);
        op.C1 = p.value("C1", op.C1);
        op.C2 = p.value("C2", op.C2);
        op.l_c = p.value("l_c", op.l_c);
        op.kappa = p.value("kappa", op.kappa);
        op.lambda = p.value("lambda", op.lambda);
      }
      // Keep the IDM desired speed in step with the style unless explicitly
      // pinned; MOBIL runs drive IDM for every style.
      if (!o.contains("idm") || !o.at("idm").contains("v0"))
        s.carfollow.idm.v0 = s.desired_speed_mps;
      c.styles[it.key()] = s;
    }
  }

  if (j.contains("style_mix")) {
    for (auto it = j.at("style_mix").begin(); it != j.at("style_mix").end(); ++it)
      c.style_mix.emplace_back(it.key(), it.value().get<double>());
    std::sort(c.style_mix.begin(), c.style_mix.end());
  } else {
    // Calibrated aggressive:conservative ratio of 1:7.4.
    c.style_mix = {{"aggressive", 1.0 / 8.4}, {"conservative", 7.4 / 8.4}};
  }

  if (j.contains("mobil")) {
    const auto& m = j.at("mobil");
    c.mobil.politeness = m.value("politeness", c.mobil.politeness);
    c.mobil.a_threshold = m.value("a_threshold", c.mobil.a_threshold);
    c.mobil.b_safe = m.value("b_safe", c.mobil.b_safe);
    c.mobil.right_bias = m.value("right_bias", c.mobil.right_bias);
    if (c.mobil.politeness < 0.0 || c.mobil.politeness > 1.0)
      throw ConfigError(ctx + ": mobil.politeness must be in [0, 1]");
  }
  if (j.contains("safety")) {
    const auto& s = j.at("safety");
    c.safety.ttc_threshold_s = s.value("ttc_threshold_s", c.safety.ttc_threshold_s);
    c.safety.min_gap_m = s.value("min_gap_m", c.safety.min_gap_m);
    if (!(c.safety.ttc_threshold_s > 0.0)) throw ConfigError(ctx + ": safety.ttc_threshold_s must be > 0");
  }
  if (j.contains("headway")) {
    const auto& h = j.at("headway");
    c.headway.cap_s = h.value("cap_s", c.headway.cap_s);
    c.headway.speed_floor_mps = h.value("speed_floor_mps", c.headway.speed_floor_mps);
  }
  c.vehicle_length_m = j.value("vehicle_length_m", c.vehicle_length_m);
  if (j.contains("measurement")) {
    const auto& m = j.at("measurement");
    c.measure_window_s = m.value("window_s", c.measure_window_s);
    c.rate_bin_veh_km = m.value("bin_veh_km", c.rate_bin_veh_km);
    if (m.contains("sections"))
      c.measure_sections = m.at("sections").get<std::vector<std::string>>();
  }
  c.nav_interval_s = j.value("nav_interval_s", c.nav_interval_s);
  c.trajectory_interval_s = j.value("trajectory_interval_s", c.trajectory_interval_s);
  c.sync_gain = j.value("sync_gain", c.sync_gain);
  c.stats_window_m = j.value("stats_window_m", c.stats_window_m);
  c.merge_lookahead_m = j.value("merge_lookahead_m", c.merge_lookahead_m);

  if (j.contains("scripted")) {
    for (const auto& s : j.at("scripted")) {
      Scripted sv;
      sv.time_s = s.value("time_s", 0.0);
      sv.lane = s.at("lane").get<std::string>();
      sv.position_m = s.value("position_m", 0.0);
      sv.speed_mps = s.value("speed_mps", 0.0);
      sv.style = s.value("style", std::string{});
      sv.destination = s.value("destination", std::string{});
      c.scripted.push_back(sv);
    }
  }
  return c;
}

inline ScenarioConfig ScenarioConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario file not found: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("scenario " + path + ": " + e.what());
  }
  return from_json(j, dirname_of(path), "scenario " + path);
}

}  // namespace lanesim
