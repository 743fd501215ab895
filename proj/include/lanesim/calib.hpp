#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lanesim/decision.hpp"
#include "lanesim/sim.hpp"

namespace lanesim {
namespace calib {

// ---- primitives ------------------------------------------------------------

inline double sigmoid(double w) {
  if (w >= 0.0) {
    double e = std::exp(-w);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(w);
  return e / (1.0 + e);
}

// Cross-entropy of one prediction. h is clamped away from {0,1}.
inline double logistic_loss(double h, int y) {
  h = std::clamp(h, 1e-12, 1.0 - 1e-12);
  return y ? -std::log(h) : -std::log(1.0 - h);
}

// ---- samples ---------------------------------------------------------------

struct TrajectoryRecord {
  double time_s = 0.0;
  std::uint64_t vehicle = 0;
  std::string lane;
  double position_m = 0.0;
  double speed_mps = 0.0;
  double accel_mps2 = 0.0;
};

// One labeled decision instant. The comfort feature stays a function of beta:
// it is recomputed from the stored headways and return probability.
struct DecisionSample {
  double a_route = 0.0;     // route yield
  double b_speed = 0.0;     // speed yield
  double d_courtesy = 0.0;  // courtesy yield
  double th_target_s = 0.0;
  double th_current_s = 0.0;
  double p_back = 0.0;
  int label = 0;
  std::string style;
};

// C(beta): expected comfort yield, normalized by the current lane's maneuver
// cost. Ratio form keeps it scale-free: -(Tt/Tc)^-beta - p.
inline double comfort_feature(const DecisionSample& s, double beta) {
  double r = std::max(s.th_target_s, 0.1) / std::max(s.th_current_s, 0.1);
  return -std::pow(r, -beta) - s.p_back;
}

inline double comfort_feature_dbeta(const DecisionSample& s, double beta) {
  double r = std::max(s.th_target_s, 0.1) / std::max(s.th_current_s, 0.1);
  return std::pow(r, -beta) * std::log(r);
}

struct FitParams {
  double intercept = 0.0;
  double mu_route = 0.5;
  double mu_speed = 0.5;
  double mu_comfort = 0.5;
  double mu_courtesy = 0.5;
  double beta = 1.0;
};

inline double interest(const FitParams& p, const DecisionSample& s) {
  return p.intercept + p.mu_route * s.a_route + p.mu_speed * s.b_speed +
         p.mu_comfort * comfort_feature(s, p.beta) + p.mu_courtesy * s.d_courtesy;
}

// Mean cross-entropy over a sample set. Accumulated in a fixed order with
// long double so gradients check out against finite differences.
inline double loss_j(const std::vector<DecisionSample>& samples, const FitParams& p) {
  long double acc = 0.0L;
  for (const auto& s : samples) acc += logistic_loss(sigmoid(interest(p, s)), s.label);
  return static_cast<double>(acc / static_cast<long double>(samples.size()));
}

// Analytic gradient of loss_j. The beta component goes through the chain rule
// of the comfort feature.
inline FitParams grad_j(const std::vector<DecisionSample>& samples, const FitParams& p) {
  long double gi = 0.0L, g1 = 0.0L, g2 = 0.0L, g3 = 0.0L, g4 = 0.0L, gb = 0.0L;
  for (const auto& s : samples) {
    double r = sigmoid(interest(p, s)) - s.label;
    gi += r;
    g1 += r * s.a_route;
    g2 += r * s.b_speed;
    g3 += r * comfort_feature(s, p.beta);
    g4 += r * s.d_courtesy;
    gb += r * p.mu_comfort * comfort_feature_dbeta(s, p.beta);
  }
  auto n = static_cast<long double>(samples.size());
  FitParams g;
  g.intercept = static_cast<double>(gi / n);
  g.mu_route = static_cast<double>(g1 / n);
  g.mu_speed = static_cast<double>(g2 / n);
  g.mu_comfort = static_cast<double>(g3 / n);
  g.mu_courtesy = static_cast<double>(g4 / n);
  g.beta = static_cast<double>(gb / n);
  return g;
}

struct FitHyper {
  double lr0 = 0.1;
  double lr_cap = 2.0;
  double tol = 1e-11;
  int max_iter = 100000;
  std::vector<double> beta_restarts{1.0, 2.0, 3.0};
  double beta_lo = 0.05;
  double beta_hi = 6.0;
};

struct FitTrace {
  int iterations = 0;
  double final_loss = 0.0;
  bool converged = false;
};

// Full-batch gradient descent with backtracking halving. J never increases
// across accepted iterations. freeze_beta runs the convex sub-problem used to
// warm-start each beta restart.
inline FitParams fit_gd(const std::vector<DecisionSample>& samples, FitParams p,
                        const FitHyper& hy, FitTrace* trace = nullptr,
                        bool freeze_beta = false) {
  auto apply = [&](const FitParams& a, const FitParams& g, double lr) {
    FitParams n = a;
    n.intercept -= lr * g.intercept;
    n.mu_route -= lr * g.mu_route;
    n.mu_speed -= lr * g.mu_speed;
    n.mu_comfort -= lr * g.mu_comfort;
    n.mu_courtesy -= lr * g.mu_courtesy;
    if (!freeze_beta) n.beta = std::clamp(a.beta - lr * g.beta, hy.beta_lo, hy.beta_hi);
    return n;
  };
  double j = loss_j(samples, p);
  double lr = hy.lr0;
  int it = 0;
  bool converged = false;
  for (; it < hy.max_iter; ++it) {
    FitParams g = grad_j(samples, p);
    if (freeze_beta) g.beta = 0.0;
    FitParams cand = apply(p, g, lr);
    double jn = loss_j(samples, cand);
    while (jn > j && lr > 1e-14) {
      lr *= 0.5;
      cand = apply(p, g, lr);
      jn = loss_j(samples, cand);
    }
    double drop = j - jn;
    p = cand;
    j = jn;
    lr = std::min(lr * 1.5, hy.lr_cap);
    if (drop < hy.tol && it > 10) {
      converged = true;
      break;
    }
  }
  if (trace) {
    trace->iterations = it;
    trace->final_loss = j;
    trace->converged = converged;
  }
  return p;
}

// ---- alpha -----------------------------------------------------------------

struct BackLabel {
  double th_s = 0.0;
  double s_m = 0.0;
  bool back = false;
};

struct AlphaFit {
  double alpha = 0.0;
  bool at_boundary = false;
  double log_likelihood = 0.0;
};

// Bernoulli maximum likelihood for P = 1 - exp(-alpha * T_h * S) by
// golden-section search; the likelihood is concave in alpha.
inline AlphaFit fit_alpha(const std::vector<BackLabel>& labels, double lo = 1e-6,
                          double hi = 10.0) {
  if (labels.size() < 30)
    throw ConfigError("fit_alpha: need at least 30 asymmetric-change cases, got " +
                      std::to_string(labels.size()));
  auto nll = [&](double a) {
    long double acc = 0.0L;
    for (const auto& l : labels) {
      double p = std::clamp(prob_back(a, l.th_s, l.s_m), 1e-12, 1.0 - 1e-12);
      acc -= l.back ? std::log(p) : std::log(1.0 - p);
    }
    return static_cast<double>(acc);
  };
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = nll(c), fd = nll(d);
  while (b - a > 1e-6) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = nll(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = nll(d);
    }
  }
  AlphaFit out;
  out.alpha = 0.5 * (a + b);
  out.log_likelihood = -nll(out.alpha);
  bool all_back = std::all_of(labels.begin(), labels.end(), [](auto& l) { return l.back; });
  bool none_back = std::all_of(labels.begin(), labels.end(), [](auto& l) { return !l.back; });
  out.at_boundary = all_back || none_back || out.alpha < lo * 2.0 || out.alpha > hi * 0.999;
  return out;
}

// ---- calibrate / validate ---------------------------------------------------

struct CalibrationResult {
  FitParams params;
  double train_loss = 0.0;
  double holdout_loss = 0.0;
  double holdout_accuracy = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<bool> negative_weights;  // flags per mu, no clamping applied
};

struct Validation {
  double loss = 0.0;
  double accuracy = 0.0;
  // Decile calibration curve: (mean predicted, observed change rate).
  std::vector<std::pair<double, double>> curve;
};

inline Validation validate(const FitParams& p, const std::vector<DecisionSample>& holdout) {
  if (holdout.empty()) throw ConfigError("validate: empty holdout set");
  Validation v;
  long double loss = 0.0L;
  std::size_t correct = 0;
  std::vector<std::pair<double, int>> hs;
  hs.reserve(holdout.size());
  for (const auto& s : holdout) {
    double h = sigmoid(interest(p, s));
    loss += logistic_loss(h, s.label);
    correct += (h > 0.5) == (s.label == 1);
    hs.emplace_back(h, s.label);
  }
  v.loss = static_cast<double>(loss / static_cast<long double>(holdout.size()));
  v.accuracy = static_cast<double>(correct) / static_cast<double>(holdout.size());
  std::sort(hs.begin(), hs.end());
  std::size_t deciles = 10;
  for (std::size_t d = 0; d < deciles; ++d) {
    std::size_t a = d * hs.size() / deciles;
    std::size_t b = (d + 1) * hs.size() / deciles;
    if (b <= a) continue;
    double hp = 0.0, hy = 0.0;
    for (std::size_t i = a; i < b; ++i) {
      hp += hs[i].first;
      hy += hs[i].second;
    }
    v.curve.emplace_back(hp / static_cast<double>(b - a), hy / static_cast<double>(b - a));
  }
  return v;
}

// Deterministic 2/3 split (seeded shuffle), beta restarts, best train loss
// wins. Samples must carry both labels in the training part.
inline CalibrationResult calibrate(const std::vector<DecisionSample>& samples,
                                   const FitHyper& hy = {}, double split = 2.0 / 3.0,
                                   std::uint64_t seed = 20240601) {
  if (samples.size() < 10) throw ConfigError("calibrate: too few samples");
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 eng(seed);
  std::shuffle(idx.begin(), idx.end(), eng);
  std::size_t n_train = static_cast<std::size_t>(std::llround(split * samples.size()));
  n_train = std::clamp(n_train, std::size_t{1}, samples.size() - 1);
  std::vector<DecisionSample> train, test;
  train.reserve(n_train);
  test.reserve(samples.size() - n_train);
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < n_train ? train : test).push_back(samples[idx[i]]);

  std::size_t pos = 0;
  for (const auto& s : train) pos += static_cast<std::size_t>(s.label);
  if (pos == 0 || pos == train.size())
    throw ConfigError("calibrate: training data contains a single class (" +
                      std::to_string(pos) + "/" + std::to_string(train.size()) +
                      " positive); cannot fit");

  CalibrationResult best;
  bool have = false;
  for (double b0 : hy.beta_restarts) {
    FitParams p;
    p.beta = b0;
    FitTrace warm, trace;
    p = fit_gd(train, p, hy, &warm, /*freeze_beta=*/true);
    p = fit_gd(train, p, hy, &trace, /*freeze_beta=*/false);
    double j = loss_j(train, p);
    if (!have || j < best.train_loss) {
      have = true;
      best.params = p;
      best.train_loss = j;
      best.iterations = warm.iterations + trace.iterations;
      best.converged = trace.converged;
    }
  }
  Validation v = validate(best.params, test);
  best.holdout_loss = v.loss;
  best.holdout_accuracy = v.accuracy;
  best.n_train = train.size();
  best.n_test = test.size();
  best.negative_weights = {best.params.mu_route < 0.0, best.params.mu_speed < 0.0,
                           best.params.mu_comfort < 0.0, best.params.mu_courtesy < 0.0};
  return best;
}

// ---- synthetic data ----------------------------------------------------------

struct SyntheticConfig {
  std::size_t n = 5000;
  double noise = 0.05;  // trembling hand: label replaced by a fair coin
  std::uint64_t seed = 7;
};

struct SyntheticData {
  std::vector<DecisionSample> samples;
  std::vector<BackLabel> back_labels;
};

// Draw decision contexts, label them through the model's own probabilistic
// rule h(w), then apply the noise. Context strata cover route-committing,
// route-restoring and symmetric changes so every weight is identifiable.
// Streams do not depend on the style, so different presets label the same
// context sequence and their label rates are directly comparable.
inline SyntheticData gen_synthetic(const DrivingStyle& style, const SyntheticConfig& cfg) {
  SyntheticData out;
  RngStream rs(cfg.seed, "synthetic");
  RngStream noise(cfg.seed, "synthetic-noise");
  out.samples.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    DecisionSample s;
    s.style = style.name;
    double kind = rs.uniform(0.0, 1.0);
    s.th_current_s = rs.log_uniform(0.3, 40.0);
    s.th_target_s = std::clamp(s.th_current_s * rs.log_uniform(0.05, 20.0), 0.1, 120.0);
    double S = rs.bernoulli(0.5) ? rs.uniform(2.0, 30.0) : rs.uniform(30.0, 800.0);
    if (kind < 0.40) {  // committing
      s.p_back = prob_back(style.alpha, s.th_target_s, S);
      double detour = rs.uniform(1.05, 3.0);
      s.a_route = (1.0 - s.p_back) * (1.0 - detour);
    } else if (kind < 0.65) {  // restoring
      double detour = rs.uniform(1.1, 3.0);
      s.a_route = 1.0 - 1.0 / detour;
    }
    s.b_speed = rs.uniform(0.5, 2.0) - 1.0 + (kind >= 0.65 ? rs.uniform(-0.3, 1.6) : 0.0);
    if (rs.bernoulli(0.8)) s.d_courtesy = rs.uniform(-2.0, 1.0);

    double w = style.mu_route * s.a_route + style.mu_speed * s.b_speed +
               style.mu_comfort * comfort_feature(s, style.beta) +
               style.mu_courtesy * s.d_courtesy;
    s.label = noise.bernoulli(sigmoid(w)) ? 1 : 0;
    if (noise.bernoulli(cfg.noise)) s.label = noise.bernoulli(0.5) ? 1 : 0;
    out.samples.push_back(std::move(s));
  }
  // Separate channel for the return-probability fit: informative T_h * S
  // products away from saturation.
  out.back_labels.reserve(cfg.n);
  RngStream rb(cfg.seed, "synthetic-back");
  for (std::size_t i = 0; i < cfg.n; ++i) {
    BackLabel l;
    l.th_s = rb.uniform(0.3, 4.0);
    l.s_m = rb.uniform(3.0, 40.0);
    l.back = rb.bernoulli(prob_back(style.alpha, l.th_s, l.s_m));
    out.back_labels.push_back(l);
  }
  return out;
}

// ---- trajectory ingestion -----------------------------------------------------

inline std::vector<TrajectoryRecord> read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("trajectory file not found: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("trajectory " + path + ": empty file");
  if (line != "time_s,vehicle_id,lane_id,position_m,speed_mps,accel_mps2")
    throw ConfigError("trajectory " + path + ": unexpected header '" + line + "'");
  std::vector<TrajectoryRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    TrajectoryRecord r;
    try {
      std::getline(ss, field, ',');
      r.time_s = std::stod(field);
      std::getline(ss, field, ',');
      r.vehicle = std::stoull(field);
      std::getline(ss, r.lane, ',');
      std::getline(ss, field, ',');
      r.position_m = std::stod(field);
      std::getline(ss, field, ',');
      r.speed_mps = std::stod(field);
      std::getline(ss, field, ',');
      r.accel_mps2 = std::stod(field);
    } catch (const std::exception&) {
      throw ConfigError("trajectory " + path + ": bad row at line " + std::to_string(lineno));
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct ExtractOptions {
  double sample_interval_s = 1.0;
  HeadwayConfig headway;
  double stats_window_m = 200.0;
  // Style partition: top share of mean speed advantage over lane traffic.
  double aggressive_share = 1.0 / 8.4;
};

struct ExtractResult {
  std::vector<DecisionSample> samples;
  std::vector<BackLabel> back_labels;
  std::size_t change_events = 0;
  std::size_t skipped_records = 0;
};

namespace detail {

struct Snapshot {
  // lane -> vehicles sorted by position
  std::map<int, std::vector<const TrajectoryRecord*>> lanes;
};

struct VehicleTrack {
  std::vector<const TrajectoryRecord*> recs;  // time-sorted
  int dest_section = -1;
  double speed_advantage = 0.0;
};

inline LaneStats snapshot_stats(const Snapshot& snap, int lane, double center,
                                const ExtractOptions& opt, const RoadNetwork& net) {
  LaneStats s;
  double half = opt.stats_window_m / 2.0;
  const Lane& l = net.lane(lane);
  double lo = std::max(0.0, center - half);
  double hi = std::min(l.length_m, center + half);
  s.window_m = std::max(1.0, hi - lo);
  auto it = snap.lanes.find(lane);
  double speed = 0.0, gap = 0.0;
  int gaps = 0;
  const TrajectoryRecord* prev = nullptr;
  if (it != snap.lanes.end()) {
    for (const auto* r : it->second) {
      if (r->position_m < lo || r->position_m > hi) continue;
      ++s.vehicle_count;
      speed += r->speed_mps;
      if (prev) {
        gap += r->position_m - 5.0 - prev->position_m;  // nominal length
        ++gaps;
      }
      prev = r;
    }
  }
  if (s.vehicle_count == 0) {
    s.mean_gap_m = s.window_m;
    s.mean_speed_mps = l.speed_limit_mps;
    s.time_headway_s = opt.headway.cap_s;
  } else {
    s.mean_speed_mps = speed / s.vehicle_count;
    s.mean_gap_m = gaps > 0 ? gap / gaps : s.window_m;
    s.time_headway_s = time_headway(s.mean_gap_m, s.mean_speed_mps, opt.headway);
  }
  return s;
}

}  // namespace detail

// Rebuild decision instants from trajectories: one sample per adjacent
// candidate per sampled second, labeled 1 when the transition to that lane
// begins at the next record. Every asymmetric change also produces a
// back-label resolved from the later lane sequence.
inline ExtractResult extract_events(const std::vector<TrajectoryRecord>& records,
                                    const RoadNetwork& net, const ExtractOptions& opt = {}) {
  ExtractResult out;
  if (records.empty()) return out;

  std::map<std::uint64_t, detail::VehicleTrack> tracks;
  std::map<long, detail::Snapshot> snapshots;  // keyed by rounded sample tick
  auto tick_of = [&](double t) {
    double k = t / opt.sample_interval_s;
    long tick = static_cast<long>(std::llround(k));
    return std::abs(k - static_cast<double>(tick)) < 1e-3 ? tick : -1;
  };

  std::map<std::uint64_t, std::vector<TrajectoryRecord>> parsed;
  for (const auto& r : records) {
    try {
      net.lane_index(r.lane);
    } catch (const ConfigError&) {
      ++out.skipped_records;
      continue;
    }
    parsed[r.vehicle].push_back(r);
  }
  for (auto& [vid, recs] : parsed) {
    std::sort(recs.begin(), recs.end(),
              [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
    if (recs.size() >= 3) {
      double dt0 = recs[1].time_s - recs[0].time_s;
      for (std::size_t i = 2; i < recs.size(); ++i) {
        if (std::abs(recs[i].time_s - recs[i - 1].time_s - dt0) > 1e-3)
          throw ConfigError("trajectory: vehicle " + std::to_string(vid) +
                            " has a non-constant sampling interval");
      }
    }
    auto& tr = tracks[vid];
    for (auto& r : recs) tr.recs.push_back(&r);
    tr.dest_section = net.lane(net.lane_index(recs.back().lane)).section;
    for (const auto& r : recs) {
      long tick = tick_of(r.time_s);
      if (tick >= 0)
        snapshots[tick].lanes[net.lane_index(r.lane)].push_back(&r);
    }
  }
  for (auto& [tick, snap] : snapshots)
    for (auto& [lane, vec] : snap.lanes)
      std::sort(vec.begin(), vec.end(),
                [](const auto* a, const auto* b) { return a->position_m < b->position_m; });

  // Style proxy: mean speed advantage over the traffic around the vehicle.
  std::vector<std::pair<double, std::uint64_t>> advantage;
  for (auto& [vid, tr] : tracks) {
    double adv = 0.0;
    int n = 0;
    for (const auto* r : tr.recs) {
      long tick = tick_of(r->time_s);
      if (tick < 0) continue;
      int lane = net.lane_index(r->lane);
      LaneStats s = detail::snapshot_stats(snapshots.at(tick), lane, r->position_m, opt, net);
      if (s.vehicle_count > 1) {
        adv += r->speed_mps - s.mean_speed_mps;
        ++n;
      }
    }
    tr.speed_advantage = n > 0 ? adv / n : 0.0;
    advantage.emplace_back(tr.speed_advantage, vid);
  }
  std::sort(advantage.begin(), advantage.end());
  std::size_t n_aggr = static_cast<std::size_t>(
      std::llround(opt.aggressive_share * static_cast<double>(advantage.size())));
  std::map<std::uint64_t, std::string> style_tag;
  for (std::size_t i = 0; i < advantage.size(); ++i)
    style_tag[advantage[i].second] =
        i + n_aggr >= advantage.size() ? "aggressive" : "conservative";

  for (auto& [vid, tr] : tracks) {
    const auto& recs = tr.recs;
    for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
      long tick = tick_of(recs[i]->time_s);
      if (tick < 0) continue;
      int lane = net.lane_index(recs[i]->lane);
      int lane_next = net.lane_index(recs[i + 1]->lane);
      const Lane& l = net.lane(lane);
      bool changed = lane_next != lane &&
                     net.lane(lane_next).section == l.section;
      const auto& snap = snapshots.at(tick);

      // Route context: shortest path from here to the observed destination.
      auto chain = net.shortest_route(l.section, tr.dest_section);
      std::optional<int> route_next;
      if (chain.size() >= 2) route_next = chain[1];

      for (int target : {l.left, l.right}) {
        if (target < 0) continue;
        DecisionSample s;
        s.style = style_tag[vid];
        s.label = changed && target == lane_next ? 1 : 0;

        LaneStats cur = detail::snapshot_stats(snap, lane, recs[i]->position_m, opt, net);
        LaneStats tgt = detail::snapshot_stats(snap, target, recs[i]->position_m, opt, net);
        s.th_current_s = cur.time_headway_s;
        s.th_target_s = tgt.time_headway_s;

        bool cur_ok = !route_next || net.lane_serves(lane, *route_next);
        bool tgt_ok = !route_next || net.lane_serves(target, *route_next);
        double S = net.remaining_distance(lane, recs[i]->position_m);
        double keep_t = 0.0, change_t = 0.0;
        if (route_next) {
          auto time_via = [&](bool serves, int from_lane) {
            if (serves) {
              double t = 0.0;
              for (std::size_t k = 1; k < chain.size(); ++k)
                t += net.section(chain[k]).t0_s;
              return t;
            }
            double best = kUnreachableTime;
            for (int succ : net.lane(from_lane).successors) {
              auto alt = net.shortest_route(succ, tr.dest_section);
              if (alt.empty()) continue;
              double t = 0.0;
              for (int sec : alt) t += net.section(sec).t0_s;
              best = std::min(best, t);
            }
            return best;
          };
          keep_t = time_via(cur_ok, lane);
          change_t = time_via(tgt_ok, target);
          if (cur_ok && !tgt_ok) {
            s.p_back = prob_back(0.058, s.th_target_s, S);
            s.a_route = keep_t > 0.0
                            ? (1.0 - s.p_back) * (keep_t - change_t) / keep_t
                            : 0.0;
          } else if (keep_t > 0.0) {
            s.a_route = (keep_t - change_t) / keep_t;
          }
        }

        // Speed yield from equilibrium at observed gaps (conservative IDM as
        // the shared predictor; style-specific models need unknown params).
        CarFollowParams model = carfollow_preset("idm");
        model.idm.v0 = std::max(1.0, l.speed_limit_mps);
        auto gap_ahead = [&](int in_lane) -> std::optional<double> {
          auto it = snap.lanes.find(in_lane);
          if (it == snap.lanes.end()) return std::nullopt;
          for (const auto* r : it->second)
            if (r->position_m > recs[i]->position_m)
              return r->position_m - 5.0 - recs[i]->position_m;
          return std::nullopt;
        };
        auto v_of = [&](std::optional<double> gap) {
          if (!gap) return free_speed(model);
          return equilibrium_speed(model, std::max(0.1, *gap));
        };
        double v_cur = v_of(gap_ahead(lane));
        double v_tgt = v_of(gap_ahead(target));
        s.b_speed = earning_yield(v_tgt - v_cur, v_cur);

        // Courtesy from the would-be followers.
        IncentiveContext ctx;
        auto add_follower = [&](int in_lane, bool is_target) {
          auto it = snap.lanes.find(in_lane);
          if (it == snap.lanes.end()) return;
          const TrajectoryRecord* behind = nullptr;
          const TrajectoryRecord* ahead = nullptr;
          for (const auto* r : it->second) {
            if (r->vehicle == vid) continue;
            if (r->position_m <= recs[i]->position_m) behind = r;
            else if (!ahead) ahead = r;
          }
          if (!behind) return;
          RelatedVehicle rv;
          rv.desired_speed_mps = std::max(1.0, net.lane(in_lane).speed_limit_mps);
          rv.model = model;
          if (is_target) {
            if (ahead) rv.gap_before_m = ahead->position_m - 5.0 - behind->position_m;
            rv.gap_after_m = recs[i]->position_m - 5.0 - behind->position_m;
          } else {
            rv.gap_before_m = recs[i]->position_m - 5.0 - behind->position_m;
            if (ahead) rv.gap_after_m = ahead->position_m - 5.0 - behind->position_m;
          }
          ctx.related.push_back(rv);
        };
        add_follower(lane, false);
        add_follower(target, true);
        CourtesySums cs = courtesy_sums(ctx);
        s.d_courtesy = earning_yield(cs.deviation_before - cs.deviation_after,
                                     cs.deviation_before);
        out.samples.push_back(std::move(s));
      }
      if (changed) {
        ++out.change_events;
        bool committing = route_next && net.lane_serves(lane, *route_next) &&
                          !net.lane_serves(lane_next, *route_next);
        if (committing) {
          // Resolve: did the vehicle get back onto a serving lane before
          // leaving the section?
          bool back = false;
          for (std::size_t k = i + 1; k < recs.size(); ++k) {
            int lk = net.lane_index(recs[k]->lane);
            if (net.lane(lk).section != l.section) break;
            if (net.lane_serves(lk, *route_next)) {
              back = true;
              break;
            }
          }
          LaneStats tgt = detail::snapshot_stats(snap, lane_next, recs[i]->position_m, opt, net);
          out.back_labels.push_back(
              {tgt.time_headway_s, net.remaining_distance(lane, recs[i]->position_m), back});
        }
      }
    }
  }
  return out;
}

}  // namespace calib
}  // namespace lanesim
