#include "airsplat/serial.hpp"

#include <fstream>

namespace airsplat {

namespace {

double get_num(const Json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("config: ") + key + " must be a number");
  return j.at(key).get<double>();
}

int get_int(const Json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer())
    throw ConfigError(std::string("config: ") + key + " must be an integer");
  return j.at(key).get<int>();
}

uint64_t get_seed(const Json& j, const char* key, uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<uint64_t>();
}

Vec3 vec3_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(std::string("config: ") + what + " must be a 3-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Json vec3_to_json(const Vec3& v) { return Json::array({v.x, v.y, v.z}); }

}  // namespace

Json pose_to_json(const RigidPose& pose) {
  Json a = Json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(pose.rotation(r, c));
    a.push_back(pose.translation[r]);
  }
  a.push_back(0.0);
  a.push_back(0.0);
  a.push_back(0.0);
  a.push_back(1.0);
  return a;
}

RigidPose pose_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 16)
    throw ConfigError("pose: expected 16 numbers (4x4 row-major)");
  RigidPose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = j[4 * r + c].get<double>();
    p.translation[r] = j[4 * r + 3].get<double>();
  }
  if (!p.is_valid(1e-9)) throw ConfigError("pose: rotation block not orthonormal");
  return p;
}

Json camera_to_json(const Camera& cam) {
  Json j;
  j["intrinsics"] = Json::array({cam.fx, cam.fy, cam.cx, cam.cy});
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["pose"] = pose_to_json(cam.pose);
  return j;
}

Camera camera_from_json(const Json& j) {
  Camera cam;
  const auto& k = j.at("intrinsics");
  if (!k.is_array() || k.size() != 4) throw ConfigError("camera: intrinsics must be a 4-array");
  cam.fx = k[0].get<double>();
  cam.fy = k[1].get<double>();
  cam.cx = k[2].get<double>();
  cam.cy = k[3].get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.pose = pose_from_json(j.at("pose"));
  cam.validate();
  return cam;
}

Json scene_config_to_json(const SceneConfig& cfg) {
  Json j;
  j["width"] = cfg.width;
  j["height"] = cfg.height;
  j["context_views"] = cfg.context_views;
  j["target_views"] = cfg.target_views;
  j["orbit_radius"] = cfg.orbit_radius;
  j["fov_deg"] = cfg.fov_deg;
  j["box_half"] = cfg.box_half;
  j["sky_half"] = cfg.sky_half;
  j["camera_height"] = cfg.camera_height;
  j["floater_fraction"] = cfg.floater_fraction;
  j["floater_offset"] = cfg.floater_offset;
  j["alpha_min"] = cfg.alpha_min;
  j["alpha_max"] = cfg.alpha_max;
  j["init_color_noise"] = cfg.init_color_noise;
  j["init_mean_noise"] = cfg.init_mean_noise;
  j["sigma_tangent"] = cfg.sigma_tangent;
  j["sigma_normal"] = cfg.sigma_normal;
  j["texture_cells"] = cfg.texture_cells;
  j["strict_floaters"] = cfg.strict_floaters;
  return j;
}

SceneConfig scene_config_from_json(const Json& j) {
  SceneConfig cfg;
  cfg.width = get_int(j, "width", cfg.width);
  cfg.height = get_int(j, "height", cfg.height);
  cfg.context_views = get_int(j, "context_views", cfg.context_views);
  cfg.target_views = get_int(j, "target_views", cfg.target_views);
  cfg.orbit_radius = get_num(j, "orbit_radius", cfg.orbit_radius);
  cfg.fov_deg = get_num(j, "fov_deg", cfg.fov_deg);
  cfg.box_half = get_num(j, "box_half", cfg.box_half);
  cfg.sky_half = get_num(j, "sky_half", cfg.sky_half);
  cfg.camera_height = get_num(j, "camera_height", cfg.camera_height);
  cfg.floater_fraction = get_num(j, "floater_fraction", cfg.floater_fraction);
  cfg.floater_offset = get_num(j, "floater_offset", cfg.floater_offset);
  cfg.alpha_min = get_num(j, "alpha_min", cfg.alpha_min);
  cfg.alpha_max = get_num(j, "alpha_max", cfg.alpha_max);
  cfg.init_color_noise = get_num(j, "init_color_noise", cfg.init_color_noise);
  cfg.init_mean_noise = get_num(j, "init_mean_noise", cfg.init_mean_noise);
  cfg.sigma_tangent = get_num(j, "sigma_tangent", cfg.sigma_tangent);
  cfg.sigma_normal = get_num(j, "sigma_normal", cfg.sigma_normal);
  cfg.texture_cells = get_int(j, "texture_cells", cfg.texture_cells);
  if (j.contains("strict_floaters")) cfg.strict_floaters = j.at("strict_floaters").get<bool>();
  cfg.validate();
  return cfg;
}

Json drift_to_json(const DriftModel& d) {
  Json j;
  j["omega"] = vec3_to_json(d.systematic.omega);
  j["v"] = vec3_to_json(d.systematic.v);
  j["noise_sigma_rot"] = d.noise_sigma_rot;
  j["noise_sigma_trans"] = d.noise_sigma_trans;
  j["seed"] = d.seed;
  return j;
}

DriftModel drift_from_json(const Json& j) {
  DriftModel d;
  if (j.contains("omega")) d.systematic.omega = vec3_from_json(j.at("omega"), "drift.omega");
  if (j.contains("v")) d.systematic.v = vec3_from_json(j.at("v"), "drift.v");
  d.noise_sigma_rot = get_num(j, "noise_sigma_rot", 0.0);
  d.noise_sigma_trans = get_num(j, "noise_sigma_trans", 0.0);
  d.seed = get_seed(j, "seed", d.seed);
  d.validate();
  return d;
}

Json teacher_to_json(const TeacherNoise& t) {
  Json j;
  j["sigma_mean"] = t.sigma_mean;
  j["seed"] = t.seed;
  return j;
}

TeacherNoise teacher_from_json(const Json& j) {
  TeacherNoise t;
  t.sigma_mean = get_num(j, "sigma_mean", 0.0);
  t.seed = get_seed(j, "seed", t.seed);
  t.validate();
  return t;
}

Json train_config_to_json(const TrainConfig& cfg) {
  Json j;
  j["mode"] = mode_name(cfg.mode);
  j["steps"] = cfg.steps;
  j["learning_rate"] = cfg.learning_rate;
  j["lr_mean_scale"] = cfg.lr_mean_scale;
  j["lr_color_scale"] = cfg.lr_color_scale;
  j["adam_beta1"] = cfg.adam_beta1;
  j["adam_beta2"] = cfg.adam_beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["lambda_geo"] = cfg.lambda_geo;
  j["lambda_opa"] = cfg.lambda_opa;
  j["lambda_s"] = cfg.lambda_s;
  j["lambda_decay"] = cfg.lambda_decay;
  j["tau"] = cfg.tau;
  j["eta"] = cfg.eta;
  j["seed"] = cfg.seed;
  j["eval_interval"] = cfg.eval_interval;
  j["background"] = vec3_to_json(cfg.background);
  j["z_near"] = cfg.z_near;
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig cfg;
  if (j.contains("mode")) {
    const auto m = parse_mode(j.at("mode").get<std::string>());
    if (!m)
      throw ConfigError("train.mode: expected one of baseline, context_only, "
                        "context_target, scpa_only, rom_only, full");
    cfg.mode = *m;
  }
  cfg.steps = get_int(j, "steps", cfg.steps);
  cfg.learning_rate = get_num(j, "learning_rate", cfg.learning_rate);
  cfg.lr_mean_scale = get_num(j, "lr_mean_scale", cfg.lr_mean_scale);
  cfg.lr_color_scale = get_num(j, "lr_color_scale", cfg.lr_color_scale);
  cfg.adam_beta1 = get_num(j, "adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = get_num(j, "adam_beta2", cfg.adam_beta2);
  cfg.adam_eps = get_num(j, "adam_eps", cfg.adam_eps);
  cfg.lambda_geo = get_num(j, "lambda_geo", cfg.lambda_geo);
  cfg.lambda_opa = get_num(j, "lambda_opa", cfg.lambda_opa);
  cfg.lambda_s = get_num(j, "lambda_s", cfg.lambda_s);
  cfg.lambda_decay = get_num(j, "lambda_decay", cfg.lambda_decay);
  cfg.tau = get_num(j, "tau", cfg.tau);
  cfg.eta = get_num(j, "eta", cfg.eta);
  cfg.seed = get_seed(j, "seed", cfg.seed);
  cfg.eval_interval = get_int(j, "eval_interval", cfg.eval_interval);
  if (j.contains("background")) cfg.background = vec3_from_json(j.at("background"), "train.background");
  cfg.z_near = get_num(j, "z_near", cfg.z_near);
  return cfg;
}

Json experiment_to_json(const ExperimentConfig& cfg) {
  Json j;
  j["scene"] = scene_config_to_json(cfg.scene);
  j["scene_seed"] = cfg.scene_seed;
  j["drift"] = drift_to_json(cfg.drift);
  j["teacher"] = teacher_to_json(cfg.teacher);
  j["train"] = train_config_to_json(cfg.train);
  j["output_dir"] = cfg.output_dir;
  return j;
}

ExperimentConfig experiment_from_json(const Json& j) {
  ExperimentConfig cfg;
  const uint64_t master = get_seed(j, "seed", 0);
  cfg.scene_seed = master;
  cfg.drift.seed = hash_combine(master, 1);
  cfg.teacher.seed = hash_combine(master, 2);
  cfg.train.seed = master;
  if (j.contains("scene")) cfg.scene = scene_config_from_json(j.at("scene"));
  if (j.contains("scene_seed")) cfg.scene_seed = j.at("scene_seed").get<uint64_t>();
  if (j.contains("drift")) {
    const uint64_t fallback = cfg.drift.seed;
    cfg.drift = drift_from_json(j.at("drift"));
    if (!j.at("drift").contains("seed")) cfg.drift.seed = fallback;
  }
  if (j.contains("teacher")) {
    const uint64_t fallback = cfg.teacher.seed;
    cfg.teacher = teacher_from_json(j.at("teacher"));
    if (!j.at("teacher").contains("seed")) cfg.teacher.seed = fallback;
  }
  if (j.contains("train")) {
    const uint64_t fallback = cfg.train.seed;
    cfg.train = train_config_from_json(j.at("train"));
    if (!j.at("train").contains("seed")) cfg.train.seed = fallback;
  }
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  return cfg;
}

namespace {

Json image_to_json(const Image& img) {
  return Json(img.data);
}

Image image_from_json(const Json& j, int h, int w) {
  Image img(h, w);
  if (!j.is_array() || j.size() != img.data.size())
    throw ConfigError("scene: image array has wrong length");
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = j[i].get<double>();
  return img;
}

}  // namespace

Json scene_to_json(const Scene& scene, const SceneConfig& cfg, uint64_t seed) {
  Json j;
  j["format"] = "airsplat-scene-v1";
  j["config"] = scene_config_to_json(cfg);
  j["seed"] = seed;
  j["context_cameras"] = Json::array();
  for (const Camera& c : scene.context_cameras) j["context_cameras"].push_back(camera_to_json(c));
  j["target_cameras"] = Json::array();
  for (const Camera& c : scene.target_cameras) j["target_cameras"].push_back(camera_to_json(c));

  j["maps"] = Json::array();
  for (const GaussianMap& m : scene.maps) {
    Json jm;
    jm["view_index"] = m.view_index;
    jm["height"] = m.height;
    jm["width"] = m.width;
    std::vector<double> mean, quat, scale, opacity, color;
    std::vector<int> floater;
    Json clean_idx = Json::array(), clean_val = Json::array();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const GaussianPrimitive& p = m.prims[i];
      mean.insert(mean.end(), {p.mean.x, p.mean.y, p.mean.z});
      quat.insert(quat.end(), {p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z});
      scale.insert(scale.end(), {p.scale.x, p.scale.y, p.scale.z});
      opacity.push_back(p.opacity);
      color.insert(color.end(), {p.color.x, p.color.y, p.color.z});
      floater.push_back(m.floater[i]);
      if (m.floater[i]) {
        clean_idx.push_back(i);
        clean_val.push_back(m.clean_mean[i].x);
        clean_val.push_back(m.clean_mean[i].y);
        clean_val.push_back(m.clean_mean[i].z);
      }
    }
    jm["mean"] = mean;
    jm["quat"] = quat;
    jm["scale"] = scale;
    jm["opacity"] = opacity;
    jm["color"] = color;
    jm["floater"] = floater;
    jm["clean_mean_floaters"] = {{"index", clean_idx}, {"value", clean_val}};
    j["maps"].push_back(std::move(jm));
  }

  j["context_images"] = Json::array();
  for (const Image& img : scene.context_images) j["context_images"].push_back(image_to_json(img));
  j["target_images"] = Json::array();
  for (const Image& img : scene.target_images) j["target_images"].push_back(image_to_json(img));
  return j;
}

Scene scene_from_json(const Json& j) {
  if (!j.contains("format") || j.at("format") != "airsplat-scene-v1")
    throw ConfigError("scene file: unknown format");
  Scene scene;
  for (const Json& c : j.at("context_cameras")) scene.context_cameras.push_back(camera_from_json(c));
  for (const Json& c : j.at("target_cameras")) scene.target_cameras.push_back(camera_from_json(c));

  for (const Json& jm : j.at("maps")) {
    GaussianMap m;
    m.view_index = jm.at("view_index").get<int>();
    m.height = jm.at("height").get<int>();
    m.width = jm.at("width").get<int>();
    const std::size_t n = static_cast<std::size_t>(m.height) * m.width;
    const auto& mean = jm.at("mean");
    const auto& quat = jm.at("quat");
    const auto& scale = jm.at("scale");
    const auto& opacity = jm.at("opacity");
    const auto& color = jm.at("color");
    const auto& floater = jm.at("floater");
    if (mean.size() != 3 * n || quat.size() != 4 * n || scale.size() != 3 * n ||
        opacity.size() != n || color.size() != 3 * n || floater.size() != n)
      throw ConfigError("scene file: map array lengths inconsistent");
    m.prims.resize(n);
    m.floater.resize(n);
    m.clean_mean.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      GaussianPrimitive& p = m.prims[i];
      p.mean = {mean[3 * i].get<double>(), mean[3 * i + 1].get<double>(),
                mean[3 * i + 2].get<double>()};
      p.rotation = {quat[4 * i].get<double>(), quat[4 * i + 1].get<double>(),
                    quat[4 * i + 2].get<double>(), quat[4 * i + 3].get<double>()};
      p.scale = {scale[3 * i].get<double>(), scale[3 * i + 1].get<double>(),
                 scale[3 * i + 2].get<double>()};
      p.opacity = opacity[i].get<double>();
      p.color = {color[3 * i].get<double>(), color[3 * i + 1].get<double>(),
                 color[3 * i + 2].get<double>()};
      p.validate();
      m.floater[i] = static_cast<uint8_t>(floater[i].get<int>());
      m.clean_mean[i] = p.mean;
    }
    const auto& cm = jm.at("clean_mean_floaters");
    const auto& idx = cm.at("index");
    const auto& val = cm.at("value");
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t i = idx[k].get<std::size_t>();
      m.clean_mean[i] = {val[3 * k].get<double>(), val[3 * k + 1].get<double>(),
                         val[3 * k + 2].get<double>()};
    }
    scene.maps.push_back(std::move(m));
  }

  const auto& ctx_imgs = j.at("context_images");
  for (std::size_t v = 0; v < ctx_imgs.size(); ++v) {
    const Camera& cam = scene.context_cameras.at(v);
    scene.context_images.push_back(image_from_json(ctx_imgs[v], cam.height, cam.width));
  }
  const auto& tgt_imgs = j.at("target_images");
  for (std::size_t t = 0; t < tgt_imgs.size(); ++t) {
    const Camera& cam = scene.target_cameras.at(t);
    scene.target_images.push_back(image_from_json(tgt_imgs[t], cam.height, cam.width));
  }
  scene.validate();
  return scene;
}

Json render_target_debug_json(const RenderTarget& rt) {
  Json j;
  j["width"] = rt.camera.width;
  j["height"] = rt.camera.height;
  j["color"] = rt.color.data;
  j["depth"] = rt.depth;
  j["transmittance"] = rt.transmittance;
  std::vector<int> per_pixel;
  per_pixel.reserve(rt.offsets.size() - 1);
  for (std::size_t p = 0; p + 1 < rt.offsets.size(); ++p)
    per_pixel.push_back(rt.offsets[p + 1] - rt.offsets[p]);
  j["contributors_per_pixel"] = per_pixel;
  j["degenerate_skipped"] = rt.degenerate_skipped;
  j["behind_skipped"] = rt.behind_skipped;
  return j;
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

void save_json(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << j.dump(1) << '\n';
}

}  // namespace airsplat
