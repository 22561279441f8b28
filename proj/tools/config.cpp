#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace uavisac::cli {

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
    const YAML::Mark m = node.Mark();
    std::ostringstream os;
    os << source_;
    if (!m.is_null()) os << ':' << m.line + 1 << ':' << m.column + 1;
    os << ": " << msg;
    throw Error(ErrorKind::Config, os.str());
  }

  void expect_map(const YAML::Node& node, const std::string& where, const std::set<std::string>& keys) const {
    if (!node.IsMap()) fail(node, "'" + where + "' must be a mapping");
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!keys.count(key)) fail(kv.first, "unknown key '" + key + "' in '" + where + "'");
    }
  }

  template <class T>
  void scalar(const YAML::Node& parent, const char* key, T& out) const {
    const YAML::Node n = parent[key];
    if (!n) return;
    if (!n.IsScalar()) fail(n, std::string("'") + key + "' must be a scalar");
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, std::string("bad value for '") + key + "'");
    }
  }

  template <class Vec>
  void vector(const YAML::Node& parent, const char* key, Vec& out) const {
    const YAML::Node n = parent[key];
    if (!n) return;
    if (!n.IsSequence() || static_cast<Eigen::Index>(n.size()) != out.size()) {
      fail(n, std::string("'") + key + "' must be a list of " + std::to_string(out.size()) + " numbers");
    }
    for (std::size_t i = 0; i < n.size(); ++i) {
      try {
        out(static_cast<Eigen::Index>(i)) = n[i].as<double>();
      } catch (const YAML::Exception&) {
        fail(n[i], std::string("bad number in '") + key + "'");
      }
    }
  }

  void rotation(const YAML::Node& parent, const char* key, Pose& pose) const {
    const YAML::Node n = parent[key];
    if (!n) return;
    if (!n.IsSequence() || n.size() != 3) fail(n, std::string("'") + key + "' must be three rows of three numbers");
    Matrix3 R;
    for (std::size_t r = 0; r < 3; ++r) {
      const YAML::Node row = n[r];
      if (!row.IsSequence() || row.size() != 3) fail(row, std::string("row of '") + key + "' must have three numbers");
      for (std::size_t c = 0; c < 3; ++c) {
        try {
          R(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].as<double>();
        } catch (const YAML::Exception&) {
          fail(row[c], std::string("bad number in '") + key + "'");
        }
      }
    }
    if (!Pose(R, Vector3::Zero()).is_valid()) fail(n, std::string("'") + key + "' is not a rotation matrix");
    pose = Pose(R, pose.r());
  }

  void position(const YAML::Node& parent, const char* key, Pose& pose) const {
    Vector3 r = pose.r();
    vector(parent, key, r);
    pose = Pose(pose.R(), r);
  }

 private:
  std::string source_;
};

template <class Vec>
YAML::Node seq(const Vec& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (Eigen::Index i = 0; i < v.size(); ++i) n.push_back(v(i));
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

YAML::Node rows(const Matrix3& R) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (int r = 0; r < 3; ++r) n.push_back(seq(Vector3(R.row(r).transpose())));
  return n;
}

}  // namespace

RunSettings parse_settings(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << source << ':' << e.mark.line + 1 << ':' << e.mark.column + 1 << ": " << e.msg;
    throw Error(ErrorKind::Config, os.str());
  }

  RunSettings s;
  if (root.IsNull()) return s;
  const Reader rd(source);
  ScenarioConfig& c = s.scenario;
  rd.expect_map(root, "top level", {"array", "waveform", "motion", "noise", "initial", "filter", "policies", "run"});

  if (const YAML::Node n = root["array"]) {
    rd.expect_map(n, "array", {"transmit", "receive"});
    Eigen::Vector2d t(c.upa.nt_x, c.upa.nt_y), r(c.upa.nr_x, c.upa.nr_y);
    rd.vector(n, "transmit", t);
    rd.vector(n, "receive", r);
    c.upa = UpaConfig{static_cast<int>(t(0)), static_cast<int>(t(1)), static_cast<int>(r(0)), static_cast<int>(r(1))};
  }
  if (const YAML::Node n = root["waveform"]) {
    rd.expect_map(n, "waveform", {"subcarriers", "symbols", "resource_elements", "subcarrier_spacing",
                                  "guard_fraction", "carrier_frequency", "rcs", "pilot_power"});
    rd.scalar(n, "subcarriers", c.subcarriers);
    rd.scalar(n, "symbols", c.symbols);
    rd.scalar(n, "resource_elements", c.n_re);
    rd.scalar(n, "subcarrier_spacing", c.f0);
    rd.scalar(n, "guard_fraction", c.guard_fraction);
    rd.scalar(n, "carrier_frequency", c.fc);
    rd.scalar(n, "rcs", c.sigma_rcs);
    rd.scalar(n, "pilot_power", c.pilot_power);
  }
  if (const YAML::Node n = root["motion"]) {
    rd.expect_map(n, "motion", {"dt", "epochs", "max_speed", "max_yaw_rate", "max_speed_change",
                                "max_yaw_rate_change", "max_array_velocity_change"});
    rd.scalar(n, "dt", c.dt);
    rd.scalar(n, "epochs", c.n_epochs);
    rd.scalar(n, "max_speed", c.V_l);
    rd.scalar(n, "max_yaw_rate", c.V_a);
    rd.scalar(n, "max_speed_change", c.A_l);
    rd.scalar(n, "max_yaw_rate_change", c.A_a);
    rd.scalar(n, "max_array_velocity_change", c.V);
  }
  if (const YAML::Node n = root["noise"]) {
    rd.expect_map(n, "noise", {"snr_db", "twist_std", "pose_var", "enabled"});
    rd.scalar(n, "snr_db", c.snr_db);
    rd.vector(n, "twist_std", c.xi_w_std);
    rd.vector(n, "pose_var", c.c_w_var);
    rd.scalar(n, "enabled", c.sample_noise);
  }
  if (const YAML::Node n = root["initial"]) {
    rd.expect_map(n, "initial", {"gu_position", "gu_rotation", "uav_position", "uav_rotation", "gu_twist",
                                 "uav_twist", "array_offset"});
    rd.position(n, "gu_position", c.T_wp0);
    rd.rotation(n, "gu_rotation", c.T_wp0);
    rd.position(n, "uav_position", c.T_ws0);
    rd.rotation(n, "uav_rotation", c.T_ws0);
    rd.vector(n, "gu_twist", c.xi_p);
    rd.vector(n, "uav_twist", c.xi_s0);
    rd.vector(n, "array_offset", c.upa_offset);
  }
  if (const YAML::Node n = root["filter"]) {
    rd.expect_map(n, "filter", {"gu_position_guess", "initial_std", "orthonormalize_every"});
    rd.vector(n, "gu_position_guess", c.r_wp_hat0);
    rd.vector(n, "initial_std", c.p0_std);
    rd.scalar(n, "orthonormalize_every", c.orthonormalize_every);
  }
  if (const YAML::Node n = root["policies"]) {
    rd.expect_map(n, "policies", {"parallel_twist", "diagonal_twist", "randomization_samples"});
    rd.vector(n, "parallel_twist", c.parallel_twist);
    rd.vector(n, "diagonal_twist", c.diagonal_twist);
    rd.scalar(n, "randomization_samples", c.randomization_samples);
  }
  if (const YAML::Node n = root["run"]) {
    rd.expect_map(n, "run", {"policy", "seed", "mc_runs"});
    rd.scalar(n, "policy", s.policy);
    rd.scalar(n, "seed", c.seed);
    rd.scalar(n, "mc_runs", c.mc_runs);
    if (n["policy"]) {
      try {
        (void)selected_policies(s.policy);
      } catch (const Error& e) {
        rd.fail(n["policy"], e.what());
      }
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, source + ": " + e.what());
  }
  return s;
}

RunSettings load_settings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_settings(buf.str(), path);
}

YAML::Node to_yaml(const RunSettings& s) {
  const ScenarioConfig& c = s.scenario;
  YAML::Node root;
  root["array"]["transmit"] = seq(Eigen::Vector2d(c.upa.nt_x, c.upa.nt_y));
  root["array"]["receive"] = seq(Eigen::Vector2d(c.upa.nr_x, c.upa.nr_y));
  YAML::Node w = root["waveform"];
  w["subcarriers"] = c.subcarriers;
  w["symbols"] = c.symbols;
  w["resource_elements"] = c.n_re;
  w["subcarrier_spacing"] = c.f0;
  w["guard_fraction"] = c.guard_fraction;
  w["carrier_frequency"] = c.fc;
  w["rcs"] = c.sigma_rcs;
  w["pilot_power"] = c.pilot_power;
  YAML::Node m = root["motion"];
  m["dt"] = c.dt;
  m["epochs"] = c.n_epochs;
  m["max_speed"] = c.V_l;
  m["max_yaw_rate"] = c.V_a;
  m["max_speed_change"] = c.A_l;
  m["max_yaw_rate_change"] = c.A_a;
  m["max_array_velocity_change"] = c.V;
  YAML::Node nz = root["noise"];
  nz["snr_db"] = c.snr_db;
  nz["twist_std"] = seq(c.xi_w_std);
  nz["pose_var"] = seq(c.c_w_var);
  nz["enabled"] = c.sample_noise;
  YAML::Node i = root["initial"];
  i["gu_position"] = seq(c.T_wp0.r());
  i["gu_rotation"] = rows(c.T_wp0.R());
  i["uav_position"] = seq(c.T_ws0.r());
  i["uav_rotation"] = rows(c.T_ws0.R());
  i["gu_twist"] = seq(c.xi_p);
  i["uav_twist"] = seq(c.xi_s0);
  i["array_offset"] = seq(c.upa_offset);
  YAML::Node f = root["filter"];
  f["gu_position_guess"] = seq(c.r_wp_hat0);
  f["initial_std"] = seq(c.p0_std);
  f["orthonormalize_every"] = c.orthonormalize_every;
  YAML::Node p = root["policies"];
  p["parallel_twist"] = seq(c.parallel_twist);
  p["diagonal_twist"] = seq(c.diagonal_twist);
  p["randomization_samples"] = c.randomization_samples;
  YAML::Node r = root["run"];
  r["policy"] = s.policy;
  r["seed"] = c.seed;
  r["mc_runs"] = c.mc_runs;
  return root;
}

std::string to_yaml_string(const RunSettings& s) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << to_yaml(s);
  return std::string(out.c_str()) + "\n";
}

std::vector<Policy> selected_policies(const std::string& policy) {
  if (policy == "all") return {Policy::Optimized, Policy::Parallel, Policy::Diagonal};
  return {parse_policy(policy)};
}

}  // namespace uavisac::cli
