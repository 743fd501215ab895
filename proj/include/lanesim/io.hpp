#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lanesim/calib.hpp"
#include "lanesim/sim.hpp"

namespace lanesim {
namespace io {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

inline std::string metrics_csv(const std::vector<RateBin>& bins) {
  std::string s = "bin_density_veh_km,events,dx_km,dt_h,rate_per_km_h\n";
  for (const auto& b : bins) {
    s += format_double(b.density_veh_km) + "," + std::to_string(b.events) + "," +
         format_double(b.dx_km) + "," + format_double(b.dt_h) + "," +
         format_double(b.rate_per_km_h) + "\n";
  }
  return s;
}

inline std::string events_csv(const std::vector<LaneChangeEvent>& events,
                              const RoadNetwork& net) {
  std::string s = "time_s,vehicle_id,from_lane,to_lane,G,classification\n";
  for (const auto& e : events) {
    s += format_double(e.time_s) + "," + std::to_string(e.vehicle) + "," +
         net.lane(e.from_lane).id + "," + net.lane(e.to_lane).id + "," + format_double(e.g) +
         "," + to_string(e.cls) + "\n";
  }
  return s;
}

inline std::string trajectories_csv(const std::vector<TrajectoryRow>& rows,
                                    const RoadNetwork& net) {
  std::string s = "time_s,vehicle_id,lane_id,position_m,speed_mps,accel_mps2\n";
  for (const auto& r : rows) {
    s += format_double(r.time_s) + "," + std::to_string(r.vehicle) + "," +
         net.lane(r.lane).id + "," + format_double(r.position_m) + "," +
         format_double(r.speed_mps) + "," + format_double(r.accel_mps2) + "\n";
  }
  return s;
}

inline std::string samples_csv(const std::vector<calib::DecisionSample>& samples) {
  std::string s = "style,label,a_route,b_speed,th_target_s,th_current_s,p_back,d_courtesy\n";
  for (const auto& x : samples) {
    s += x.style + "," + std::to_string(x.label) + "," + format_double(x.a_route) + "," +
         format_double(x.b_speed) + "," + format_double(x.th_target_s) + "," +
         format_double(x.th_current_s) + "," + format_double(x.p_back) + "," +
         format_double(x.d_courtesy) + "\n";
  }
  return s;
}

inline std::string back_labels_csv(const std::vector<calib::BackLabel>& labels) {
  std::string s = "th_s,s_m,back\n";
  for (const auto& l : labels)
    s += format_double(l.th_s) + "," + format_double(l.s_m) + "," + (l.back ? "1" : "0") + "\n";
  return s;
}

inline std::vector<calib::DecisionSample> read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("samples file not found: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "style,label,a_route,b_speed,th_target_s,th_current_s,p_back,d_courtesy")
    throw ConfigError("samples " + path + ": unexpected header");
  std::vector<calib::DecisionSample> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    calib::DecisionSample s;
    std::string f;
    try {
      std::getline(ss, s.style, ',');
      std::getline(ss, f, ',');
      s.label = std::stoi(f);
      std::getline(ss, f, ',');
      s.a_route = std::stod(f);
      std::getline(ss, f, ',');
      s.b_speed = std::stod(f);
      std::getline(ss, f, ',');
      s.th_target_s = std::stod(f);
      std::getline(ss, f, ',');
      s.th_current_s = std::stod(f);
      std::getline(ss, f, ',');
      s.p_back = std::stod(f);
      std::getline(ss, f, ',');
      s.d_courtesy = std::stod(f);
    } catch (const std::exception&) {
      throw ConfigError("samples " + path + ": bad row at line " + std::to_string(lineno));
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<calib::BackLabel> read_back_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("back-labels file not found: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "th_s,s_m,back")
    throw ConfigError("back-labels " + path + ": unexpected header");
  std::vector<calib::BackLabel> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    calib::BackLabel l;
    std::string f;
    std::getline(ss, f, ',');
    l.th_s = std::stod(f);
    std::getline(ss, f, ',');
    l.s_m = std::stod(f);
    std::getline(ss, f, ',');
    l.back = f == "1";
    out.push_back(l);
  }
  return out;
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot hash missing file " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a(data);
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

}  // namespace io
}  // namespace lanesim
