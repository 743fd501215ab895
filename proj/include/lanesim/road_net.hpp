#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lanesim/common.hpp"

namespace lanesim {

inline constexpr double kUnreachableTime = 1e7;  // seconds; "no path" sentinel

struct Lane {
  std::string id;
  double length_m = 0.0;
  double speed_limit_mps = 0.0;
  double decision_point_m = 0.0;  // defaults to length_m
  int section = -1;
  int left = -1;   // lane index, -1 = none
  int right = -1;
  std::vector<int> successors;  // section indices, sorted
};

struct Section {
  std::string id;
  std::vector<int> lanes;  // ordered left to right
  double t0_s = 0.0;       // free-flow traversal time
  double capacity_veh_h = 0.0;
  double k1 = 0.15;
  double k2 = 4.0;
  std::vector<int> successors;  // union of lane successors, sorted
  bool is_entrance = false;     // no predecessors
};

// One leg of a route as seen by the travel-time model.
struct RouteSegment {
  double t0_s = 0.0;
  double flow_veh_h = 0.0;
  double capacity_veh_h = 1.0;
  double k1 = 0.15;
  double k2 = 4.0;
};

enum class LaneRelation { Symmetric, Asymmetric, NotAdjacent };

inline const char* to_string(LaneRelation r) {
  switch (r) {
    case LaneRelation::Symmetric: return "Symmetric";
    case LaneRelation::Asymmetric: return "Asymmetric";
    default: return "NotAdjacent";
  }
}

// Lane graph of a road stretch. Immutable after load; safe to share
// read-only across threads.
class RoadNetwork {
 public:
  static RoadNetwork load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("network file not found: " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("network " + path + ": " + e.what());
    }
    return load_json(j, path);
  }

  static RoadNetwork load_json(const nlohmann::json& j, const std::string& ctx = "network") {
    RoadNetwork net;
    if (!j.contains("sections") || !j.contains("lanes"))
      throw ConfigError(ctx + ": missing 'sections' or 'lanes' array");

    for (const auto& js : j.at("sections")) {
      Section s;
      s.id = need_str(js, "id", ctx + ": section");
      if (net.section_ids_.count(s.id))
        throw ConfigError(ctx + ": duplicate section id '" + s.id + "'");
      s.t0_s = js.value("t0_s", 0.0);
      s.capacity_veh_h = js.value("capacity_veh_h", 0.0);
      s.k1 = js.value("k1", 0.15);
      s.k2 = js.value("k2", 4.0);
      if (s.k1 < 0.0) throw ConfigError(ctx + ": section '" + s.id + "': k1 must be >= 0");
      if (s.k2 < 1.0) throw ConfigError(ctx + ": section '" + s.id + "': k2 must be >= 1");
      net.section_ids_[s.id] = static_cast<int>(net.sections_.size());
      net.sections_.push_back(std::move(s));
    }

    // First pass: create lanes; neighbor/successor ids resolved after.
    std::vector<std::pair<std::string, std::string>> neighbor_refs;  // (left, right) per lane
    std::vector<std::vector<std::string>> successor_refs;
    for (const auto& jl : j.at("lanes")) {
      Lane l;
      l.id = need_str(jl, "id", ctx + ": lane");
      if (net.lane_ids_.count(l.id))
        throw ConfigError(ctx + ": duplicate lane id '" + l.id + "'");
      l.length_m = need_num(jl, "length_m", ctx + ": lane '" + l.id + "'");
      if (!(l.length_m > 0.0))
        throw ConfigError(ctx + ": lane '" + l.id + "': length_m must be > 0");
      l.speed_limit_mps = need_num(jl, "speed_limit_mps", ctx + ": lane '" + l.id + "'");
      l.decision_point_m = jl.value("decision_point_m", l.length_m);
      neighbor_refs.emplace_back(jl.value("left", std::string{}), jl.value("right", std::string{}));
      std::vector<std::string> succ;
      for (const auto& s : jl.value("successors", nlohmann::json::array()))
        succ.push_back(s.get<std::string>());
      successor_refs.push_back(std::move(succ));
      net.lane_ids_[l.id] = static_cast<int>(net.lanes_.size());
      net.lanes_.push_back(std::move(l));
    }

    // Assign lanes to sections in file order (left to right).
    for (const auto& js : j.at("sections")) {
      int si = net.section_ids_.at(js.at("id").get<std::string>());
      for (const auto& lid : js.value("lanes", nlohmann::json::array())) {
        auto it = net.lane_ids_.find(lid.get<std::string>());
        if (it == net.lane_ids_.end())
          throw ConfigError(ctx + ": section '" + net.sections_[si].id +
                            "': unknown lane '" + lid.get<std::string>() + "'");
        net.lanes_[it->second].section = si;
        net.sections_[si].lanes.push_back(it->second);
      }
    }

    for (std::size_t i = 0; i < net.lanes_.size(); ++i) {
      Lane& l = net.lanes_[i];
      if (l.section < 0)
        throw ConfigError(ctx + ": lane '" + l.id + "' belongs to no section");
      const auto& [left, right] = neighbor_refs[i];
      l.left = left.empty() ? -1 : net.lane_index(left, ctx + ": lane '" + l.id + "' left");
      l.right = right.empty() ? -1 : net.lane_index(right, ctx + ": lane '" + l.id + "' right");
      for (const auto& sid : successor_refs[i]) {
        auto it = net.section_ids_.find(sid);
        if (it == net.section_ids_.end())
          throw ConfigError(ctx + ": lane '" + l.id + "': unknown successor section '" + sid + "'");
        l.successors.push_back(it->second);
      }
      std::sort(l.successors.begin(), l.successors.end());
      l.successors.erase(std::unique(l.successors.begin(), l.successors.end()), l.successors.end());
    }

    net.finalize(ctx);
    return net;
  }

  const Lane& lane(int i) const { return lanes_.at(static_cast<std::size_t>(i)); }
  const Section& section(int i) const { return sections_.at(static_cast<std::size_t>(i)); }
  int lane_count() const { return static_cast<int>(lanes_.size()); }
  int section_count() const { return static_cast<int>(sections_.size()); }

  int lane_index(const std::string& id, const std::string& ctx = "lane lookup") const {
    auto it = lane_ids_.find(id);
    if (it == lane_ids_.end()) throw ConfigError(ctx + ": unknown lane id '" + id + "'");
    return it->second;
  }
  int section_index(const std::string& id, const std::string& ctx = "section lookup") const {
    auto it = section_ids_.find(id);
    if (it == section_ids_.end()) throw ConfigError(ctx + ": unknown section id '" + id + "'");
    return it->second;
  }

  const std::vector<int>& entrances() const { return entrances_; }
  const std::vector<int>& exits() const { return exits_; }

  // Lateral position of a lane within its section (0 = leftmost).
  int lane_slot(int lane_idx) const {
    const auto& lanes = sections_[static_cast<std::size_t>(lane(lane_idx).section)].lanes;
    return static_cast<int>(std::find(lanes.begin(), lanes.end(), lane_idx) - lanes.begin());
  }

  bool lane_serves(int lane_idx, int section_idx) const {
    const auto& s = lane(lane_idx).successors;
    return std::binary_search(s.begin(), s.end(), section_idx);
  }

  // Relation of lane b as a change target, judged from a's point of view.
  // route_next: the section a's route requires next, if any. Without a route
  // the rule is conservative: b must keep every option a has.
  LaneRelation lane_relation(int a, int b, std::optional<int> route_next = std::nullopt) const {
    const Lane& la = lane(a);
    const Lane& lb = lane(b);
    if (la.left != b && la.right != b) return LaneRelation::NotAdjacent;
    if (la.successors == lb.successors) return LaneRelation::Symmetric;
    if (route_next) {
      bool a_serves = lane_serves(a, *route_next);
      bool b_serves = lane_serves(b, *route_next);
      return a_serves && b_serves ? LaneRelation::Symmetric : LaneRelation::Asymmetric;
    }
    bool b_covers_a = std::includes(lb.successors.begin(), lb.successors.end(),
                                    la.successors.begin(), la.successors.end());
    return b_covers_a ? LaneRelation::Symmetric : LaneRelation::Asymmetric;
  }

  // Distance from the vehicle position to the lane's decision point, >= 0.
  double remaining_distance(int lane_idx, double position_m) const {
    return std::max(0.0, lane(lane_idx).decision_point_m - position_m);
  }

  // Shortest section chain from -> dest (inclusive) under the given
  // per-section times (defaults to free-flow t0). Empty if unreachable.
  std::vector<int> shortest_route(int from, int dest,
                                  const std::vector<double>* section_time = nullptr) const {
    auto time_of = [&](int s) {
      return section_time ? (*section_time)[static_cast<std::size_t>(s)]
                          : sections_[static_cast<std::size_t>(s)].t0_s;
    };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(sections_.size(), inf);
    std::vector<int> prev(sections_.size(), -1);
    using QE = std::pair<double, int>;
    std::priority_queue<QE, std::vector<QE>, std::greater<>> q;
    dist[static_cast<std::size_t>(from)] = time_of(from);
    q.emplace(dist[static_cast<std::size_t>(from)], from);
    while (!q.empty()) {
      auto [d, s] = q.top();
      q.pop();
      if (d > dist[static_cast<std::size_t>(s)]) continue;
      if (s == dest) break;
      for (int nxt : sections_[static_cast<std::size_t>(s)].successors) {
        double nd = d + time_of(nxt);
        if (nd < dist[static_cast<std::size_t>(nxt)]) {
          dist[static_cast<std::size_t>(nxt)] = nd;
          prev[static_cast<std::size_t>(nxt)] = s;
          q.emplace(nd, nxt);
        }
      }
    }
    if (dist[static_cast<std::size_t>(dest)] == inf) return {};
    std::vector<int> chain;
    for (int s = dest; s != -1; s = prev[static_cast<std::size_t>(s)]) chain.push_back(s);
    std::reverse(chain.begin(), chain.end());
    return chain;
  }

 private:
  static std::string need_str(const nlohmann::json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) throw ConfigError(ctx + ": missing key '" + key + "'");
    return j.at(key).get<std::string>();
  }
  static double need_num(const nlohmann::json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key) || !j.at(key).is_number())
      throw ConfigError(ctx + ": missing numeric key '" + key + "'");
    return j.at(key).get<double>();
  }

  void finalize(const std::string& ctx) {
    // Neighbor mutuality and in-section adjacency.
    for (std::size_t i = 0; i < lanes_.size(); ++i) {
      const Lane& l = lanes_[i];
      if (l.left >= 0) {
        const Lane& nb = lanes_[static_cast<std::size_t>(l.left)];
        if (nb.right != static_cast<int>(i))
          throw ConfigError(ctx + ": neighbor relation not mutual between '" + l.id +
                            "' and '" + nb.id + "'");
        if (nb.section != l.section)
          throw ConfigError(ctx + ": neighbors '" + l.id + "' and '" + nb.id +
                            "' are in different sections");
      }
      if (l.right >= 0) {
        const Lane& nb = lanes_[static_cast<std::size_t>(l.right)];
        if (nb.left != static_cast<int>(i))
          throw ConfigError(ctx + ": neighbor relation not mutual between '" + l.id +
                            "' and '" + nb.id + "'");
      }
    }
    // Section successor union, entrances/exits, default t0.
    std::vector<bool> has_pred(sections_.size(), false);
    for (auto& s : sections_) {
      if (s.lanes.empty())
        throw ConfigError(ctx + ": section '" + s.id + "' has no lanes");
      for (int li : s.lanes)
        for (int succ : lanes_[static_cast<std::size_t>(li)].successors)
          s.successors.push_back(succ);
      std::sort(s.successors.begin(), s.successors.end());
      s.successors.erase(std::unique(s.successors.begin(), s.successors.end()),
                         s.successors.end());
      for (int succ : s.successors) has_pred[static_cast<std::size_t>(succ)] = true;
      if (s.t0_s <= 0.0) {
        double len = 0.0, v = 0.0;
        for (int li : s.lanes) {
          len += lanes_[static_cast<std::size_t>(li)].length_m;
          v += std::max(1.0, lanes_[static_cast<std::size_t>(li)].speed_limit_mps);
        }
        s.t0_s = (len / static_cast<double>(s.lanes.size())) / (v / static_cast<double>(s.lanes.size()));
      }
      if (s.capacity_veh_h <= 0.0)
        s.capacity_veh_h = 1800.0 * static_cast<double>(s.lanes.size());
    }
    // A lane in a continuing section must itself continue somewhere.
    for (const auto& s : sections_) {
      if (s.successors.empty()) continue;
      for (int li : s.lanes)
        if (lanes_[static_cast<std::size_t>(li)].successors.empty())
          throw ConfigError(ctx + ": lane '" + lanes_[static_cast<std::size_t>(li)].id +
                            "' has no successors but its section continues");
    }
    for (std::size_t i = 0; i < sections_.size(); ++i) {
      sections_[i].is_entrance = !has_pred[i];
      if (sections_[i].is_entrance) entrances_.push_back(static_cast<int>(i));
      if (sections_[i].successors.empty()) exits_.push_back(static_cast<int>(i));
    }
    if (entrances_.empty())
      throw ConfigError(ctx + ": no entrance section (cyclic network?)");
  }

  std::vector<Lane> lanes_;
  std::vector<Section> sections_;
  std::map<std::string, int> lane_ids_;
  std::map<std::string, int> section_ids_;
  std::vector<int> entrances_;
  std::vector<int> exits_;
};

// Travel time of one segment under the volume-delay form
// t0 * (1 + k1 * (q/qmax)^k2).
inline double route_travel_time(const RouteSegment& seg) {
  if (!(seg.capacity_veh_h > 0.0))
    throw ConfigError("route_travel_time: capacity must be > 0");
  double x = std::max(0.0, seg.flow_veh_h) / seg.capacity_veh_h;
  return seg.t0_s * (1.0 + seg.k1 * std::pow(x, seg.k2));
}

}  // namespace lanesim
