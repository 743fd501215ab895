// lanesim command line: scenario runs, model comparison, synthetic data,
// calibration and validation. All outputs are plain CSV/JSON next to a
// manifest that records the config hash and seed for reproduction.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lanesim/calib.hpp"
#include "lanesim/io.hpp"
#include "lanesim/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

int verbosity() {
  const char* v = std::getenv("LANESIM_LOG");
  if (!v) return 0;
  try {
    return std::stoi(v);
  } catch (...) {
    return std::string(v) == "debug" ? 2 : 1;
  }
}

void log_info(const std::string& msg) {
  if (verbosity() > 0) std::cerr << "[lanesim] " << msg << "\n";
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw lanesim::ConfigError("cannot create output directory " + dir);
}

void refuse_overwrite(const std::vector<std::string>& paths, bool force) {
  if (force) return;
  for (const auto& p : paths)
    if (fs::exists(p))
      throw lanesim::ConfigError("refusing to overwrite " + p + " (use --force)");
}

void write_manifest(const std::string& path, const std::string& command,
                    const std::string& config_path, std::uint64_t seed,
                    const std::map<std::string, std::string>& outputs) {
  json m;
  m["tool"] = "lanesim";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["config"] = config_path;
  m["config_hash"] = lanesim::io::hex64(lanesim::io::hash_file(config_path));
  m["seed"] = seed;
  json files = json::object();
  for (const auto& [name, p] : outputs)
    files[name] = {{"path", p}, {"hash", lanesim::io::hex64(lanesim::io::hash_file(p))}};
  m["outputs"] = files;
  lanesim::io::write_text(path, m.dump(2) + "\n");
}

int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed,
            const std::string& out_dir, bool force, bool trajectories) {
  auto cfg = lanesim::ScenarioConfig::from_file(scenario_path);
  if (seed) cfg.seed = *seed;
  if (trajectories && cfg.trajectory_interval_s <= 0.0) cfg.trajectory_interval_s = 1.0;
  ensure_out_dir(out_dir);
  std::string metrics = out_dir + "/metrics.csv";
  std::string events = out_dir + "/events.csv";
  std::string manifest = out_dir + "/run-manifest.json";
  std::string traj = out_dir + "/trajectories.csv";
  std::vector<std::string> outs{metrics, events, manifest};
  if (cfg.trajectory_interval_s > 0.0) outs.push_back(traj);
  refuse_overwrite(outs, force);

  lanesim::RoadNetwork net = lanesim::RoadNetwork::load_file(cfg.network_path);
  lanesim::RunResult r = lanesim::run_scenario(cfg);
  log_info("run finished: spawned=" + std::to_string(r.spawned) +
           " exited=" + std::to_string(r.exited) +
           " events=" + std::to_string(r.events.size()));

  lanesim::io::write_text(metrics, lanesim::io::metrics_csv(r.bins));
  lanesim::io::write_text(events, lanesim::io::events_csv(r.events, net));
  std::map<std::string, std::string> outputs{{"metrics", metrics}, {"events", events}};
  if (cfg.trajectory_interval_s > 0.0) {
    lanesim::io::write_text(traj, lanesim::io::trajectories_csv(r.trajectories, net));
    outputs["trajectories"] = traj;
  }
  write_manifest(manifest, "run", scenario_path, cfg.seed, outputs);
  return 0;
}

int cmd_compare(const std::string& scenario_path, std::vector<std::string> models,
                std::optional<std::uint64_t> seed, const std::string& out_dir, bool force) {
  if (models.size() < 2) throw lanesim::ConfigError("compare: need at least two models");
  ensure_out_dir(out_dir);
  std::string out = out_dir + "/compare.csv";
  std::string manifest = out_dir + "/compare-manifest.json";
  refuse_overwrite({out, manifest}, force);

  auto base = lanesim::ScenarioConfig::from_file(scenario_path);
  if (seed) base.seed = *seed;

  // Bins per model, keyed by bin index for alignment.
  std::map<std::string, std::map<long, lanesim::RateBin>> series;
  for (const auto& m : models) {
    auto cfg = base;
    if (m == "mcdm") cfg.model = lanesim::LaneChangeModel::Mcdm;
    else if (m == "mobil") cfg.model = lanesim::LaneChangeModel::Mobil;
    else throw lanesim::ConfigError("compare: unknown model '" + m + "' (use mcdm|mobil)");
    lanesim::RunResult r = lanesim::run_scenario(cfg);
    for (const auto& b : r.bins) {
      long key = static_cast<long>(std::floor(b.density_veh_km / cfg.rate_bin_veh_km));
      series[m][key] = b;
    }
    log_info("compare: model " + m + " -> " + std::to_string(r.bins.size()) + " bins");
  }

  std::string header = "bin_density_veh_km";
  for (const auto& m : models) header += ",rate_" + m;
  for (std::size_t i = 1; i < models.size(); ++i)
    header += ",rel_diff_" + models[i] + "_vs_" + models[0];
  std::string body;
  // Shared bins only, ascending.
  for (const auto& [key, bin0] : series[models[0]]) {
    bool shared = true;
    for (const auto& m : models)
      if (!series[m].count(key)) shared = false;
    if (!shared) continue;
    double dens = 0.0;
    for (const auto& m : models) dens += series[m][key].density_veh_km;
    dens /= static_cast<double>(models.size());
    body += lanesim::io::format_double(dens);
    for (const auto& m : models)
      body += "," + lanesim::io::format_double(series[m][key].rate_per_km_h);
    double r0 = series[models[0]][key].rate_per_km_h;
    for (std::size_t i = 1; i < models.size(); ++i) {
      double ri = series[models[i]][key].rate_per_km_h;
      double mean = 0.5 * (r0 + ri);
      body += "," + lanesim::io::format_double(mean > 0.0 ? (ri - r0) / mean : 0.0);
    }
    body += "\n";
  }
  lanesim::io::write_text(out, header + "\n" + body);
  write_manifest(manifest, "compare", scenario_path, base.seed, {{"compare", out}});
  return 0;
}

int cmd_gen_synthetic(const std::string& style_name, std::size_t n, std::uint64_t seed,
                      double noise, const std::string& out_dir, bool force) {
  ensure_out_dir(out_dir);
  std::string samples = out_dir + "/samples.csv";
  std::string backs = out_dir + "/back-labels.csv";
  refuse_overwrite({samples, backs}, force);
  lanesim::DrivingStyle style = lanesim::style_preset(style_name);
  lanesim::calib::SyntheticConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.noise = noise;
  auto data = lanesim::calib::gen_synthetic(style, cfg);
  lanesim::io::write_text(samples, lanesim::io::samples_csv(data.samples));
  lanesim::io::write_text(backs, lanesim::io::back_labels_csv(data.back_labels));
  log_info("gen-synthetic: " + std::to_string(data.samples.size()) + " samples");
  return 0;
}

json result_to_json(const lanesim::calib::CalibrationResult& r) {
  json j;
  j["intercept"] = r.params.intercept;
  j["mu_route"] = r.params.mu_route;
  j["mu_speed"] = r.params.mu_speed;
  j["mu_comfort"] = r.params.mu_comfort;
  j["mu_courtesy"] = r.params.mu_courtesy;
  j["beta"] = r.params.beta;
  j["train_loss"] = r.train_loss;
  j["holdout_loss"] = r.holdout_loss;
  j["holdout_accuracy"] = r.holdout_accuracy;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["negative_weights"] = r.negative_weights;
  return j;
}

int cmd_calibrate(const std::string& samples_path, const std::string& backs_path,
                  double split, std::uint64_t seed, const std::string& out_dir, bool force,
                  const std::string& invocation) {
  ensure_out_dir(out_dir);
  std::string report = out_dir + "/calibration.json";
  refuse_overwrite({report}, force);
  auto samples = lanesim::io::read_samples_csv(samples_path);

  std::map<std::string, std::vector<lanesim::calib::DecisionSample>> by_style;
  for (auto& s : samples) by_style[s.style].push_back(s);

  json out;
  out["invocation"] = invocation;
  out["samples"] = samples_path;
  out["split"] = split;
  out["seed"] = seed;
  json styles = json::object();
  for (auto& [name, set] : by_style) {
    auto r = lanesim::calib::calibrate(set, {}, split, seed);
    styles[name] = result_to_json(r);
    log_info("calibrate " + name + ": train J=" + std::to_string(r.train_loss) +
             " holdout J=" + std::to_string(r.holdout_loss));
  }
  if (!backs_path.empty()) {
    auto backs = lanesim::io::read_back_labels_csv(backs_path);
    auto a = lanesim::calib::fit_alpha(backs);
    out["alpha"] = a.alpha;
    out["alpha_at_boundary"] = a.at_boundary;
    out["alpha_n"] = backs.size();
    if (a.at_boundary)
      std::cerr << "[lanesim] warning: alpha fit hit a boundary (degenerate labels)\n";
  }
  out["styles"] = styles;
  lanesim::io::write_text(report, out.dump(2) + "\n");
  return 0;
}

int cmd_validate(const std::string& samples_path, const std::string& report_path,
                 const std::string& out_dir, bool force) {
  ensure_out_dir(out_dir);
  std::string out_path = out_dir + "/validation.json";
  refuse_overwrite({out_path}, force);
  auto samples = lanesim::io::read_samples_csv(samples_path);
  std::ifstream in(report_path);
  if (!in) throw lanesim::ConfigError("calibration report not found: " + report_path);
  json report = json::parse(in);

  std::map<std::string, std::vector<lanesim::calib::DecisionSample>> by_style;
  for (auto& s : samples) by_style[s.style].push_back(s);

  json out;
  out["report"] = report_path;
  json styles = json::object();
  for (auto& [name, set] : by_style) {
    if (!report.at("styles").contains(name))
      throw lanesim::ConfigError("validate: report has no style '" + name + "'");
    const auto& fitted = report.at("styles").at(name);
    lanesim::calib::FitParams p;
    p.intercept = fitted.at("intercept").get<double>();
    p.mu_route = fitted.at("mu_route").get<double>();
    p.mu_speed = fitted.at("mu_speed").get<double>();
    p.mu_comfort = fitted.at("mu_comfort").get<double>();
    p.mu_courtesy = fitted.at("mu_courtesy").get<double>();
    p.beta = fitted.at("beta").get<double>();
    auto v = lanesim::calib::validate(p, set);
    json jv;
    jv["loss"] = v.loss;
    jv["accuracy"] = v.accuracy;
    json curve = json::array();
    for (auto& [hp, hy] : v.curve) curve.push_back({{"predicted", hp}, {"observed", hy}});
    jv["calibration_curve"] = curve;
    styles[name] = jv;
  }
  out["styles"] = styles;
  lanesim::io::write_text(out_path, out.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lanesim: incentive-based lane-change microsimulation"};
  app.require_subcommand(1);

  std::string scenario, out_dir = "out";
  std::optional<std::uint64_t> seed;
  bool force = false;

  auto* run = app.add_subcommand("run", "run a scenario, write metrics/events");
  run->add_option("--scenario", scenario, "scenario JSON")->required();
  run->add_option("--seed", seed, "seed override");
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("--force", force, "overwrite existing outputs");
  bool trajectories = false;
  run->add_flag("--trajectories", trajectories, "also write 1 Hz trajectories");

  auto* cmp = app.add_subcommand("compare", "run several models on one scenario");
  std::vector<std::string> models;
  cmp->add_option("--scenario", scenario, "scenario JSON")->required();
  cmp->add_option("--models", models, "models to compare (mcdm mobil)")->required();
  cmp->add_option("--seed", seed, "seed override");
  cmp->add_option("--out", out_dir, "output directory");
  cmp->add_flag("--force", force, "overwrite existing outputs");

  auto* gen = app.add_subcommand("gen-synthetic", "generate labeled decision samples");
  std::string style = "aggressive";
  std::size_t n = 5000;
  std::uint64_t gen_seed = 7;
  double noise = 0.05;
  gen->add_option("--style", style, "style preset");
  gen->add_option("--n", n, "sample count");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--noise", noise, "label noise rate");
  gen->add_option("--out", out_dir, "output directory");
  gen->add_flag("--force", force, "overwrite existing outputs");

  auto* cal = app.add_subcommand("calibrate", "fit style parameters from samples");
  std::string samples_path, backs_path;
  double split = 0.667;
  std::uint64_t cal_seed = 20240601;
  cal->add_option("--samples", samples_path, "samples CSV")->required();
  cal->add_option("--back-labels", backs_path, "back-labels CSV (fits alpha)");
  cal->add_option("--split", split, "train fraction");
  cal->add_option("--seed", cal_seed, "split shuffle seed");
  cal->add_option("--out", out_dir, "output directory");
  cal->add_flag("--force", force, "overwrite existing outputs");

  auto* val = app.add_subcommand("validate", "evaluate a calibration on holdout samples");
  std::string report_path;
  val->add_option("--samples", samples_path, "holdout samples CSV")->required();
  val->add_option("--report", report_path, "calibration.json from calibrate")->required();
  val->add_option("--out", out_dir, "output directory");
  val->add_flag("--force", force, "overwrite existing outputs");

  CLI11_PARSE(app, argc, argv);

  std::string invocation;
  for (int i = 0; i < argc; ++i) invocation += std::string(i ? " " : "") + argv[i];

  try {
    if (run->parsed()) return cmd_run(scenario, seed, out_dir, force, trajectories);
    if (cmp->parsed()) return cmd_compare(scenario, models, seed, out_dir, force);
    if (gen->parsed()) return cmd_gen_synthetic(style, n, gen_seed, noise, out_dir, force);
    if (cal->parsed())
      return cmd_calibrate(samples_path, backs_path, split, cal_seed, out_dir, force, invocation);
    if (val->parsed()) return cmd_validate(samples_path, report_path, out_dir, force);
  } catch (const lanesim::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lanesim::InvariantError& e) {
    std::cerr << "invariant breach: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
