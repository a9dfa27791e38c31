#include "prosim/config_io.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace prosim {

using nlohmann::json;
namespace fs = std::filesystem;

static json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("parse error in '" + path + "': " + e.what());
  }
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw ConfigError("'" + path + "' is missing schema_version");
  return j;
}

static Vec2 to_vec2(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("expected [x, z] pair");
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

static Vec to_vec(const json& j) {
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[int(i)] = j[i].get<double>();
  return v;
}

static std::array<bool, 3> to_rows(const json& j) {
  std::array<bool, 3> rows = {false, false, false};
  for (const auto& r : j) {
    const std::string s = r.get<std::string>();
    if (s == "x") rows[0] = true;
    else if (s == "z") rows[1] = true;
    else if (s == "pitch") rows[2] = true;
    else throw ConfigError("constraint row must be x, z, or pitch");
  }
  return rows;
}

std::shared_ptr<RobotModel> load_model(const std::string& path) {
  const json j = load_json(path);
  auto model = std::make_shared<RobotModel>();
  model->name = j.value("name", "model");
  model->gravity = j.value("gravity", 9.81);

  std::map<std::string, int> ids;
  for (const auto& lj : j.at("links")) {
    Link link;
    link.name = lj.at("name").get<std::string>();
    if (ids.count(link.name)) throw ConfigError("duplicate link " + link.name);
    if (lj.contains("parent") && !lj["parent"].is_null()) {
      const std::string pname = lj["parent"].get<std::string>();
      if (!ids.count(pname))
        throw ConfigError("link '" + link.name + "': unknown parent " + pname);
      link.parent = ids[pname];
      link.joint = JointType::Revolute;
      link.joint_origin = to_vec2(lj.at("joint_origin"));
    } else {
      link.parent = -1;
      link.joint = JointType::Floating;
    }
    link.params.mass = lj.at("mass").get<double>();
    link.params.length = lj.at("length").get<double>();
    link.params.com_offset = lj.at("com_offset").get<double>();
    link.params.inertia_com = lj.at("inertia_com").get<double>();
    ids[link.name] = int(model->links.size());
    model->links.push_back(link);
  }

  // Coordinate numbering mirrors finalize(): 3 per root, 1 per revolute.
  std::vector<int> first_coord;
  int nq = 0;
  for (const auto& l : model->links) {
    first_coord.push_back(nq);
    nq += (l.joint == JointType::Floating) ? 3 : 1;
  }
  auto joint_coord_of = [&](const std::string& name) {
    if (!ids.count(name)) throw ConfigError("unknown link '" + name + "'");
    return first_coord[ids[name]];
  };

  for (const auto& name : j.at("actuated"))
    model->actuated.push_back(joint_coord_of(name.get<std::string>()));
  if (j.contains("torque_limits")) model->torque_limit = to_vec(j["torque_limits"]);

  if (j.contains("fixed_joint")) {
    FixedJoint fj;
    const auto& fjj = j["fixed_joint"];
    fj.parent_body = ids.at(fjj.at("parent").get<std::string>());
    fj.parent_point = to_vec2(fjj.at("parent_point"));
    fj.child_root = ids.at(fjj.at("child").get<std::string>());
    model->fixed_joint = fj;
  }

  if (j.contains("partition")) {
    const auto& pj = j["partition"];
    for (const auto& v : pj.at("q_l")) model->part_l.push_back(v.get<int>());
    for (const auto& v : pj.at("q_f")) model->part_f.push_back(v.get<int>());
    for (const auto& v : pj.at("q_s")) model->part_s.push_back(v.get<int>());
  }

  if (j.contains("constraint_sets")) {
    for (const auto& [set_name, cj] : j["constraint_sets"].items()) {
      HolonomicSet set;
      set.include_fixed_joint = model->fixed_joint.has_value();
      const json& list = cj.is_object() ? cj.at("contacts") : cj;
      if (cj.is_object()) {
        set.baumgarte = cj.value("baumgarte", false);
        set.bg_omega = cj.value("bg_omega", 10.0);
        set.bg_zeta = cj.value("bg_zeta", 1.0);
      }
      for (const auto& c : list) {
        ConstraintSpec spec;
        spec.name = c.value("name", set_name);
        spec.body = ids.at(c.at("body").get<std::string>());
        spec.point = to_vec2(c.at("point"));
        spec.rows = to_rows(c.at("rows"));
        set.contacts.push_back(spec);
      }
      model->constraint_sets[set_name] = set;
    }
  }

  model->finalize();
  return model;
}

std::map<std::string, GaitParams> load_gait(const std::string& path) {
  const json j = load_json(path);
  std::vector<std::string> names;
  for (const auto& n : j.at("output_names")) names.push_back(n.get<std::string>());

  std::map<std::string, GaitParams> out;
  for (const auto& [dom, dj] : j.at("domains").items()) {
    GaitParams g;
    g.domain = dom;
    g.output_names = names;
    g.theta_plus = dj.at("theta_plus").get<double>();
    g.theta_minus = dj.at("theta_minus").get<double>();
    g.taudot_nominal = dj.value("taudot_nominal", 1.0);
    g.human_theta_plus = dj.value("human_theta_plus", g.theta_plus);
    g.human_theta_minus = dj.value("human_theta_minus", g.theta_minus);
    g.human_taudot_nominal = dj.value("human_taudot_nominal", g.taudot_nominal);
    const auto& rows = dj.at("alpha");
    if (rows.size() != names.size())
      throw ConfigError("gait '" + dom + "': alpha rows != output_names");
    const int cols = int(rows[0].size());
    g.alpha.resize(int(rows.size()), cols);
    for (size_t r = 0; r < rows.size(); ++r) {
      if (int(rows[r].size()) != cols)
        throw ConfigError("gait '" + dom + "': ragged alpha rows");
      for (int c = 0; c < cols; ++c) g.alpha(int(r), c) = rows[r][c].get<double>();
    }
    if (g.theta_plus == g.theta_minus)
      throw ConfigError("gait '" + dom + "': calibration endpoints coincide");
    out[dom] = g;
  }
  if (!out.count("ps") || !out.count("pns"))
    throw ConfigError("gait file must define ps and pns domains");
  return out;
}

void save_gait(const std::string& path,
               const std::map<std::string, GaitParams>& gaits) {
  json j;
  j["schema_version"] = 1;
  j["output_names"] = gaits.begin()->second.output_names;
  for (const auto& [dom, g] : gaits) {
    json dj;
    dj["theta_plus"] = g.theta_plus;
    dj["theta_minus"] = g.theta_minus;
    dj["taudot_nominal"] = g.taudot_nominal;
    dj["human_theta_plus"] = g.human_theta_plus;
    dj["human_theta_minus"] = g.human_theta_minus;
    dj["human_taudot_nominal"] = g.human_taudot_nominal;
    json rows = json::array();
    for (int r = 0; r < g.alpha.rows(); ++r) {
      json row = json::array();
      for (int c = 0; c < g.alpha.cols(); ++c) row.push_back(g.alpha(r, c));
      rows.push_back(row);
    }
    dj["alpha"] = rows;
    j["domains"][dom] = dj;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

static void load_common_controller(const json& j, ControllerConfig& c) {
  c.kp = j.value("kp", c.kp);
  c.kd = j.value("kd", c.kd);
  c.sigma = j.value("sigma", c.sigma);
  c.rho = j.value("rho", c.rho);
  c.eps = j.value("eps", c.eps);
  c.n_avg = j.value("n_avg", c.n_avg);
  c.joint_kp = j.value("joint_kp", c.joint_kp);
  c.joint_kd = j.value("joint_kd", c.joint_kd);
  c.reset_estimator_on_impact =
      j.value("reset_estimator_on_impact", c.reset_estimator_on_impact);
  c.noise_std = j.value("noise_std", c.noise_std);
  if (j.contains("u_max")) c.u_max = to_vec(j["u_max"]);
}

ControllerFile load_controller(const std::string& path) {
  const json j = load_json(path);
  ControllerFile f;
  f.prosthesis.variant =
      variant_from_string(j.value("variant", std::string("IDCLFQP_Fest")));
  load_common_controller(j, f.prosthesis);
  for (const auto& n : j.at("tracked"))
    f.prosthesis.tracked_links.push_back(n.get<std::string>());
  if (j.contains("setpoints"))
    for (const auto& n : j["setpoints"])
      f.prosthesis.setpoint_links.push_back(n.get<std::string>());

  f.human = f.prosthesis;
  f.human.tracked_links.clear();
  f.human.setpoint_links.clear();
  if (j.contains("human")) {
    load_common_controller(j["human"], f.human);
    for (const auto& n : j["human"].at("tracked"))
      f.human_tracked.push_back(n.get<std::string>());
  }
  if (f.human_tracked.empty())
    throw ConfigError("controller file needs human.tracked links");
  return f;
}

ScenarioFile load_scenario(const std::string& path) {
  const json j = load_json(path);
  ScenarioFile sc;
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  sc.model_path = resolve(j.at("model").get<std::string>());
  sc.gait_path = resolve(j.at("gait").get<std::string>());
  sc.controller_path = resolve(j.at("controller").get<std::string>());

  Scenario& s = sc.scenario;
  s.dt = j.value("dt", s.dt);
  s.ctrl_rate = j.value("ctrl_rate", s.ctrl_rate);
  s.n_steps = j.value("n_steps", s.n_steps);
  s.seed = j.value("seed", std::uint64_t(0));
  s.start_domain = j.value("start_domain", s.start_domain);
  s.fall_fraction = j.value("fall_fraction", s.fall_fraction);
  s.guard_arm_height = j.value("guard_arm_height", s.guard_arm_height);
  s.drift_tol = j.value("drift_tol", s.drift_tol);
  s.max_step_time = j.value("max_step_time", s.max_step_time);
  if (j.contains("init")) {
    const auto& ij = j["init"];
    s.init_mode = ij.value("mode", std::string("nominal"));
    if (s.init_mode == "explicit") {
      s.q0 = to_vec(ij.at("q"));
      s.qd0 = to_vec(ij.at("qdot"));
    }
  }
  s.validate();
  return sc;
}

void save_scenario(const std::string& path, const ScenarioFile& sc) {
  json j;
  j["schema_version"] = 1;
  j["model"] = sc.model_path;
  j["gait"] = sc.gait_path;
  j["controller"] = sc.controller_path;
  const Scenario& s = sc.scenario;
  j["dt"] = s.dt;
  j["ctrl_rate"] = s.ctrl_rate;
  j["n_steps"] = s.n_steps;
  j["seed"] = s.seed;
  j["start_domain"] = s.start_domain;
  j["fall_fraction"] = s.fall_fraction;
  j["guard_arm_height"] = s.guard_arm_height;
  j["drift_tol"] = s.drift_tol;
  j["max_step_time"] = s.max_step_time;
  json ij;
  ij["mode"] = s.init_mode;
  if (s.init_mode == "explicit") {
    ij["q"] = std::vector<double>(s.q0.data(), s.q0.data() + s.q0.size());
    ij["qdot"] = std::vector<double>(s.qd0.data(), s.qd0.data() + s.qd0.size());
  }
  j["init"] = ij;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

WalkSetup load_walk_setup(const ScenarioFile& sc) {
  WalkSetup setup;
  setup.model = load_model(sc.model_path);
  setup.gaits = load_gait(sc.gait_path);
  const ControllerFile cf = load_controller(sc.controller_path);
  setup.prosthesis = cf.prosthesis;
  setup.human = cf.human;
  setup.human_tracked = cf.human_tracked;
  return setup;
}

}  // namespace prosim
