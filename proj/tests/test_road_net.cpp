#include <catch2/catch_amalgamated.hpp>

#include "lanesim/road_net.hpp"

using namespace lanesim;
using nlohmann::json;

namespace {

// Fig-style three-lane fixture: lane a turns left only, lane b goes left or
// straight, lane c goes straight only.
json three_lane_fixture() {
  return json::parse(R"({
    "sections": [
      {"id": "main", "lanes": ["a", "b", "c"]},
      {"id": "left", "lanes": ["l0"]},
      {"id": "straight", "lanes": ["s0"]}
    ],
    "lanes": [
      {"id": "a", "length_m": 500, "right": "b", "successors": ["left"], "speed_limit_mps": 13.9},
      {"id": "b", "length_m": 500, "left": "a", "right": "c", "successors": ["left", "straight"], "speed_limit_mps": 13.9},
      {"id": "c", "length_m": 500, "left": "b", "successors": ["straight"], "speed_limit_mps": 13.9},
      {"id": "l0", "length_m": 200, "successors": [], "speed_limit_mps": 13.9},
      {"id": "s0", "length_m": 200, "successors": [], "speed_limit_mps": 13.9}
    ]
  })");
}

}  // namespace

TEST_CASE("lane relation on the three-lane fixture") {
  RoadNetwork net = RoadNetwork::load_json(three_lane_fixture());
  int a = net.lane_index("a"), b = net.lane_index("b"), c = net.lane_index("c");
  int straight = net.section_index("straight");
  int left = net.section_index("left");

  // b keeps every option a or c has.
  CHECK(net.lane_relation(a, b) == LaneRelation::Symmetric);
  CHECK(net.lane_relation(c, b) == LaneRelation::Symmetric);
  // From b, both neighbors lose an option.
  CHECK(net.lane_relation(b, a) == LaneRelation::Asymmetric);
  CHECK(net.lane_relation(b, c) == LaneRelation::Asymmetric);
  // a and c are not adjacent.
  CHECK(net.lane_relation(a, c) == LaneRelation::NotAdjacent);
  CHECK(net.lane_relation(c, a) == LaneRelation::NotAdjacent);

  // Route-aware view: from b with a straight route, a is asymmetric but c is
  // symmetric.
  CHECK(net.lane_relation(b, a, straight) == LaneRelation::Asymmetric);
  CHECK(net.lane_relation(b, c, straight) == LaneRelation::Symmetric);
  CHECK(net.lane_relation(b, a, left) == LaneRelation::Symmetric);

  SECTION("deterministic and total over adjacent pairs") {
    for (int x : {a, b, c})
      for (int y : {a, b, c}) {
        if (x == y) continue;
        CHECK(net.lane_relation(x, y) == net.lane_relation(x, y));
      }
  }
}

TEST_CASE("remaining distance clamps at the decision point") {
  RoadNetwork net = RoadNetwork::load_json(three_lane_fixture());
  int a = net.lane_index("a");
  CHECK(net.remaining_distance(a, 500.0) == 0.0);
  CHECK(net.remaining_distance(a, 300.0) == Catch::Approx(200.0));
  CHECK(net.remaining_distance(a, 500.01) == 0.0);
}

TEST_CASE("neighbor mutuality is validated") {
  json j = three_lane_fixture();
  j["lanes"][0]["right"] = "c";  // a->c but c->b
  CHECK_THROWS_AS(RoadNetwork::load_json(j), ConfigError);
}

TEST_CASE("unknown ids are load errors") {
  json j = three_lane_fixture();
  j["lanes"][0]["successors"] = {"nowhere"};
  CHECK_THROWS_AS(RoadNetwork::load_json(j), ConfigError);

  RoadNetwork net = RoadNetwork::load_json(three_lane_fixture());
  CHECK_THROWS_AS(net.lane_index("zz"), ConfigError);
}

TEST_CASE("non-terminal lane without successors is rejected") {
  json j = three_lane_fixture();
  j["lanes"][1]["successors"] = json::array();
  CHECK_THROWS_AS(RoadNetwork::load_json(j), ConfigError);
}

TEST_CASE("positive length required") {
  json j = three_lane_fixture();
  j["lanes"][0]["length_m"] = 0.0;
  CHECK_THROWS_AS(RoadNetwork::load_json(j), ConfigError);
}

TEST_CASE("entrances and exits derived from topology") {
  RoadNetwork net = RoadNetwork::load_json(three_lane_fixture());
  REQUIRE(net.entrances().size() == 1);
  CHECK(net.section(net.entrances()[0]).id == "main");
  CHECK(net.exits().size() == 2);
}

TEST_CASE("shortest route over section graph") {
  json j = json::parse(R"({
    "sections": [
      {"id": "in", "lanes": ["i0"], "t0_s": 10},
      {"id": "fast", "lanes": ["f0"], "t0_s": 5},
      {"id": "slow", "lanes": ["w0"], "t0_s": 50},
      {"id": "out", "lanes": ["o0"], "t0_s": 10}
    ],
    "lanes": [
      {"id": "i0", "length_m": 100, "successors": ["fast", "slow"], "speed_limit_mps": 10},
      {"id": "f0", "length_m": 100, "successors": ["out"], "speed_limit_mps": 10},
      {"id": "w0", "length_m": 100, "successors": ["out"], "speed_limit_mps": 10},
      {"id": "o0", "length_m": 100, "successors": [], "speed_limit_mps": 10}
    ]
  })");
  RoadNetwork net = RoadNetwork::load_json(j);
  auto chain = net.shortest_route(net.section_index("in"), net.section_index("out"));
  REQUIRE(chain.size() == 3);
  CHECK(net.section(chain[1]).id == "fast");
  // Live times can flip the choice.
  std::vector<double> t(4);
  t[static_cast<std::size_t>(net.section_index("in"))] = 10;
  t[static_cast<std::size_t>(net.section_index("fast"))] = 100;
  t[static_cast<std::size_t>(net.section_index("slow"))] = 50;
  t[static_cast<std::size_t>(net.section_index("out"))] = 10;
  auto live = net.shortest_route(net.section_index("in"), net.section_index("out"), &t);
  REQUIRE(live.size() == 3);
  CHECK(net.section(live[1]).id == "slow");
  // Unreachable: no path from out back to in.
  CHECK(net.shortest_route(net.section_index("out"), net.section_index("in")).empty());
}

TEST_CASE("route travel time") {
  RouteSegment seg;
  seg.t0_s = 100.0;
  seg.k1 = 0.15;
  seg.k2 = 4.0;
  seg.capacity_veh_h = 1000.0;
  seg.flow_veh_h = 0.0;
  CHECK(route_travel_time(seg) == Catch::Approx(100.0));
  seg.flow_veh_h = 1000.0;
  CHECK(route_travel_time(seg) == Catch::Approx(115.0));
  seg.flow_veh_h = 500.0;
  CHECK(route_travel_time(seg) == Catch::Approx(100.9375));
  SECTION("at least free flow, increasing in load") {
    double prev = 0.0;
    for (double q = 0.0; q <= 2000.0; q += 100.0) {
      seg.flow_veh_h = q;
      double t = route_travel_time(seg);
      CHECK(t >= 100.0);
      CHECK(t >= prev);
      prev = t;
    }
  }
  SECTION("zero capacity is a config error") {
    seg.capacity_veh_h = 0.0;
    CHECK_THROWS_AS(route_travel_time(seg), ConfigError);
  }
}
