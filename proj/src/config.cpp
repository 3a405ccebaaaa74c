// Copyright 2026 The gmfbo Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gmfbo/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "gmfbo/errors.hpp"
#include "json.hpp"

namespace gmfbo {
namespace {

using json = nlohmann::json;

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

template <class T>
T convert(const json& v, const std::string& key);

template <>
double convert<double>(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  return v.get<double>();
}

template <>
int convert<int>(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw ConfigError(key, "integer out of range");
  return static_cast<int>(x);
}

template <>
std::uint64_t convert<std::uint64_t>(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(key, "expected a non-negative integer");
}

template <>
bool convert<bool>(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
  return v.get<bool>();
}

template <>
std::string convert<std::string>(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  return v.get<std::string>();
}

template <>
Eigen::Vector4d convert<Eigen::Vector4d>(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 4) throw ConfigError(key, "expected an array of 4 numbers");
  Eigen::Vector4d out;
  for (int i = 0; i < 4; ++i) out(i) = convert<double>(v[static_cast<std::size_t>(i)], key);
  return out;
}

// One JSON object; tracks which keys were read so leftovers can be reported.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ConfigError(path_, "expected an object");
  }

  bool present() const { return j_ != nullptr; }
  std::string key(std::string_view k) const { return join(path_, k); }

  const json* find(const char* k) {
    seen_.insert(k);
    if (!j_) return nullptr;
    const auto it = j_->find(k);
    return it == j_->end() ? nullptr : &*it;
  }

  template <class T>
  void get(const char* k, T& out) {
    if (const json* v = find(k)) out = convert<T>(*v, key(k));
  }

  /// null means "no limit".
  void get_limit(const char* k, double& out) {
    if (const json* v = find(k)) out = v->is_null() ? std::numeric_limits<double>::infinity() : convert<double>(*v, key(k));
  }

  Section child(const char* k) { return Section(find(k), key(k)); }

  void finish() const {
    if (!j_) return;
    for (const auto& item : j_->items())
      if (!seen_.contains(item.key())) throw ConfigError(key(item.key()), "unknown key");
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

json vec4(const Eigen::Vector4d& v) { return json::array({v(0), v(1), v(2), v(3)}); }

void read_plant(Section s, PlantConfig& p) {
  s.get("inertia", p.inertia);
  s.get("damping", p.damping);
  s.get("torque_constant", p.torque_constant);
  s.get("back_emf", p.back_emf);
  s.get("resistance", p.resistance);
  s.get("coulomb_friction", p.coulomb_friction);
  s.get_limit("voltage_limit", p.voltage_limit);
  s.get("dead_zone", p.dead_zone);
  s.get("dt", p.dt);
  s.get("step_time", p.step_time);
  s.get("horizon", p.horizon);
  s.get("reference", p.reference);
  s.get("safety_cap", p.safety_cap);
  s.get("settling_band", p.settling_band);
  s.get("transient_band", p.transient_band);
  s.get("rise_low", p.rise_low);
  s.get("rise_high", p.rise_high);
  s.get("overshoot_cap", p.overshoot_cap);
  s.finish();
  validate(p);
}

json write_plant(const PlantConfig& p) {
  return {{"inertia", p.inertia},
          {"damping", p.damping},
          {"torque_constant", p.torque_constant},
          {"back_emf", p.back_emf},
          {"resistance", p.resistance},
          {"coulomb_friction", p.coulomb_friction},
          {"voltage_limit", std::isinf(p.voltage_limit) ? json(nullptr) : json(p.voltage_limit)},
          {"dead_zone", p.dead_zone},
          {"dt", p.dt},
          {"step_time", p.step_time},
          {"horizon", p.horizon},
          {"reference", p.reference},
          {"safety_cap", p.safety_cap},
          {"settling_band", p.settling_band},
          {"transient_band", p.transient_band},
          {"rise_low", p.rise_low},
          {"rise_high", p.rise_high},
          {"overshoot_cap", p.overshoot_cap}};
}

void read_twin(Section s, TwinMismatchConfig& t) {
  s.get("inertia_scale", t.inertia_scale);
  s.get("damping_scale", t.damping_scale);
  s.get("torque_constant_scale", t.torque_constant_scale);
  s.get("back_emf_scale", t.back_emf_scale);
  s.get("resistance_scale", t.resistance_scale);
  s.get("friction_scale", t.friction_scale);
  s.get("nonlinearity_amplitude", t.nonlinearity_amplitude);
  s.get("table_nodes", t.table_nodes);
  s.get("seed", t.seed);
  s.finish();
  for (auto [name, value] : {std::pair{"inertia_scale", t.inertia_scale}, {"damping_scale", t.damping_scale},
                             {"torque_constant_scale", t.torque_constant_scale},
                             {"back_emf_scale", t.back_emf_scale}, {"resistance_scale", t.resistance_scale}})
    if (!(value > 0.0)) throw ConfigError(s.key(name), "must be positive");
  if (!(t.friction_scale >= 0.0)) throw ConfigError(s.key("friction_scale"), "must be non-negative");
  if (!(t.nonlinearity_amplitude >= 0.0)) throw ConfigError(s.key("nonlinearity_amplitude"), "must be non-negative");
  if (t.table_nodes < 2) throw ConfigError(s.key("table_nodes"), "must be at least 2");
}

json write_twin(const TwinMismatchConfig& t) {
  return {{"inertia_scale", t.inertia_scale},
          {"damping_scale", t.damping_scale},
          {"torque_constant_scale", t.torque_constant_scale},
          {"back_emf_scale", t.back_emf_scale},
          {"resistance_scale", t.resistance_scale},
          {"friction_scale", t.friction_scale},
          {"nonlinearity_amplitude", t.nonlinearity_amplitude},
          {"table_nodes", t.table_nodes},
          {"seed", t.seed}};
}

void read_box(Section s, GainBox& b) {
  s.get("kp_min", b.kp_min);
  s.get("kp_max", b.kp_max);
  s.get("kd_min", b.kd_min);
  s.get("kd_max", b.kd_max);
  s.finish();
  if (!(b.kp_min < b.kp_max)) throw ConfigError(s.key("kp_max"), "must exceed kp_min");
  if (!(b.kd_min < b.kd_max)) throw ConfigError(s.key("kd_max"), "must exceed kd_min");
}

void read_objective(Section s, ObjectiveSpec& o, bool& calibrated) {
  if (const json* profile = s.find("profile")) {
    const std::string name = convert<std::string>(*profile, s.key("profile"));
    if (name == "hardware")
      o.weights = ObjectiveSpec::hardware_weights();
    else if (name != "default")
      throw ConfigError(s.key("profile"), "expected \"default\" or \"hardware\"");
  }
  s.get("weights", o.weights);
  s.get("noise_std", o.noise_std);
  const bool has_means = s.find("means") != nullptr;
  const bool has_stds = s.find("stds") != nullptr;
  s.get("means", o.means);
  s.get("stds", o.stds);
  s.finish();
  if (has_means != has_stds) throw ConfigError(s.key(has_means ? "stds" : "means"), "means and stds go together");
  if (has_stds && !(o.stds.array() > 0.0).all()) throw ConfigError(s.key("stds"), "must be positive");
  if (!(o.noise_std >= 0.0)) throw ConfigError(s.key("noise_std"), "must be non-negative");
  calibrated = has_means;
}

void read_gmfbo(Section s, RunConfig& r) {
  s.get("iterations", r.iterations);
  s.get("n0_is1", r.n0_is1);
  s.get("n0_is2", r.n0_is2);
  s.get("n_c", r.n_c);
  s.get("s_prime", r.s_prime);
  s.get("alpha", r.alpha);
  s.get("beta", r.beta);
  s.get("rho", r.rho);
  s.get("e_init", r.e_init);
  s.get("fixed_l_gamma0", r.fixed_l_gamma0);
  s.get("fixed_cost", r.fixed_cost);
  s.get("attempts_per_slot", r.attempts_per_slot);
  s.get("draw_std_fraction", r.draw_std_fraction);
  s.get("accumulate_dc", r.accumulate_dc);
  s.get("correction_budget", r.correction_budget);
  s.get("is3_on_init", r.is3_on_init);
  s.finish();
}

json write_gmfbo(const RunConfig& r) {
  return {{"iterations", r.iterations},
          {"n0_is1", r.n0_is1},
          {"n0_is2", r.n0_is2},
          {"n_c", r.n_c},
          {"s_prime", r.s_prime},
          {"alpha", r.alpha},
          {"beta", r.beta},
          {"rho", r.rho},
          {"e_init", r.e_init},
          {"fixed_l_gamma0", r.fixed_l_gamma0},
          {"fixed_cost", r.fixed_cost},
          {"attempts_per_slot", r.attempts_per_slot},
          {"draw_std_fraction", r.draw_std_fraction},
          {"accumulate_dc", r.accumulate_dc},
          {"correction_budget", r.correction_budget},
          {"is3_on_init", r.is3_on_init}};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what, std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  const json root_json = parse_json(text, "config");
  ExperimentConfig cfg;
  Section root(&root_json, "");

  root.get("seed", cfg.run.seed);
  std::string output = cfg.output.string();
  root.get("output", output);
  cfg.output = output;

  if (const json* methods = root.find("methods")) {
    if (!methods->is_array() || methods->empty()) throw ConfigError("methods", "expected a non-empty array");
    cfg.methods.clear();
    for (const auto& m : *methods) cfg.methods.push_back(parse_method(convert<std::string>(m, "methods")));
    cfg.run.method = cfg.methods.front();
  }

  Section plant = root.child("plant");
  if (!plant.present()) throw ConfigError("plant", "missing required section");
  read_plant(std::move(plant), cfg.run.plant);
  read_twin(root.child("twin"), cfg.run.twin);
  read_box(root.child("box"), cfg.run.box);
  read_objective(root.child("objective"), cfg.run.objective, cfg.calibrated);

  Section cal = root.child("calibration");
  cal.get("probe_count", cfg.calibration.probe_count);
  cal.get("seed", cfg.calibration.seed);
  std::string file;
  cal.get("file", file);
  cal.finish();
  if (cfg.calibration.probe_count < 2) throw ConfigError("calibration.probe_count", "must be at least 2");
  if (!file.empty()) {
    std::filesystem::path p(file);
    cfg.calibration.file = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }

  read_gmfbo(root.child("gmfbo"), cfg.run);

  Section bench = root.child("bench");
  bench.get("n_exper", cfg.bench.n_exper);
  bench.get("margin", cfg.bench.margin);
  bench.get("grid_resolution", cfg.bench.grid_resolution);
  bench.finish();
  if (cfg.bench.n_exper < 2) throw ConfigError("bench.n_exper", "must be at least 2");
  if (!(cfg.bench.margin >= 0.0)) throw ConfigError("bench.margin", "must be non-negative");
  if (cfg.bench.grid_resolution < 2) throw ConfigError("bench.grid_resolution", "must be at least 2");

  Section ablation = root.child("ablation");
  if (const json* cells = ablation.find("cells")) {
    if (!cells->is_array() || cells->empty()) throw ConfigError("ablation.cells", "expected a non-empty array");
    cfg.ablation.cells.clear();
    for (const auto& c : *cells) {
      if (!c.is_array() || c.size() != 2) throw ConfigError("ablation.cells", "each cell is [n0_is1, n0_is2]");
      const int a = convert<int>(c[0], "ablation.cells");
      const int b = convert<int>(c[1], "ablation.cells");
      if (a < 1 || b < 1) throw ConfigError("ablation.cells", "sizes must be at least 1");
      cfg.ablation.cells.emplace_back(a, b);
    }
  }
  ablation.finish();

  Section event = root.child("event");
  event.get("friction_factor", cfg.event.friction_factor);
  event.get("trigger_is1", cfg.event.trigger_is1);
  event.finish();
  if (!(cfg.event.friction_factor > 0.0)) throw ConfigError("event.friction_factor", "must be positive");
  if (cfg.event.trigger_is1 < 0) throw ConfigError("event.trigger_is1", "must be non-negative");

  Section truegrid = root.child("truegrid");
  truegrid.get("resolution", cfg.truegrid_resolution);
  truegrid.finish();
  if (cfg.truegrid_resolution < 2) throw ConfigError("truegrid.resolution", "must be at least 2");

  root.find("provenance");
  root.finish();

  validate(cfg.run);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

std::string to_json(const ExperimentConfig& cfg, std::string_view provenance) {
  json root;
  root["seed"] = cfg.run.seed;
  root["output"] = cfg.output.generic_string();
  json methods = json::array();
  for (Method m : cfg.methods) methods.push_back(std::string(to_string(m)));
  root["methods"] = methods;
  root["plant"] = write_plant(cfg.run.plant);
  root["twin"] = write_twin(cfg.run.twin);
  root["box"] = {{"kp_min", cfg.run.box.kp_min},
                 {"kp_max", cfg.run.box.kp_max},
                 {"kd_min", cfg.run.box.kd_min},
                 {"kd_max", cfg.run.box.kd_max}};
  json objective = {{"weights", vec4(cfg.run.objective.weights)}, {"noise_std", cfg.run.objective.noise_std}};
  if (cfg.calibrated) {
    objective["means"] = vec4(cfg.run.objective.means);
    objective["stds"] = vec4(cfg.run.objective.stds);
  }
  root["objective"] = objective;
  json cal = {{"probe_count", cfg.calibration.probe_count}, {"seed", cfg.calibration.seed}};
  if (!cfg.calibration.file.empty()) cal["file"] = cfg.calibration.file.generic_string();
  root["calibration"] = cal;
  root["gmfbo"] = write_gmfbo(cfg.run);
  root["bench"] = {{"n_exper", cfg.bench.n_exper},
                   {"margin", cfg.bench.margin},
                   {"grid_resolution", cfg.bench.grid_resolution}};
  json cells = json::array();
  for (const auto& [a, b] : cfg.ablation.cells) cells.push_back({a, b});
  root["ablation"] = {{"cells", cells}};
  root["event"] = {{"friction_factor", cfg.event.friction_factor}, {"trigger_is1", cfg.event.trigger_is1}};
  root["truegrid"] = {{"resolution", cfg.truegrid_resolution}};
  if (!provenance.empty()) root["provenance"] = parse_json(provenance, "provenance");
  return root.dump(2) + "\n";
}

void ensure_calibrated(ExperimentConfig& cfg) {
  if (cfg.calibrated) return;
  CalibrationResult cal;
  if (!cfg.calibration.file.empty()) {
    cal = load_calibration(cfg.calibration.file);
    cal.weights = cfg.run.objective.weights;
  } else {
    cal = calibrate_weights(cfg.run.plant, cfg.run.box, cfg.calibration.probe_count, cfg.calibration.seed,
                            cfg.run.objective.weights);
  }
  cfg.run.objective = cal.apply(cfg.run.objective);
  cfg.calibrated = true;
}

void save_calibration(const std::filesystem::path& path, const CalibrationResult& result) {
  const json j = {{"probe_count", result.probe_count},
                  {"seed", result.seed},
                  {"means", vec4(result.means)},
                  {"stds", vec4(result.stds)},
                  {"weights", vec4(result.weights)}};
  write_file(path, j.dump(2) + "\n");
}

CalibrationResult load_calibration(const std::filesystem::path& path) {
  const json j = parse_json(read_file(path), "calibration.file");
  Section s(&j, "calibration.file");
  CalibrationResult out;
  s.get("probe_count", out.probe_count);
  s.get("seed", out.seed);
  for (const char* k : {"means", "stds", "weights"})
    if (!s.find(k)) throw ConfigError(s.key(k), "missing in " + path.string());
  s.get("means", out.means);
  s.get("stds", out.stds);
  s.get("weights", out.weights);
  s.finish();
  if (!(out.stds.array() > 0.0).all()) throw ConfigError(s.key("stds"), "must be positive");
  return out;
}

}  // namespace gmfbo
