#include "hrf/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace hrf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDegree = std::numbers::pi / 180.0;

std::string frame_dir(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d", frame);
  return buf;
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw DatasetError("manifest: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json camera_json(const RigCamera& rc, int id) {
  const Camera& c = rc.camera;
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) rot.push_back(c.rotation()(r, k));
  return {{"id", id},
          {"role", rc.role == CameraRole::Train ? "train" : "holdout"},
          {"width", c.width()},
          {"height", c.height()},
          {"fx", c.intrinsics().fx},
          {"fy", c.intrinsics().fy},
          {"cx", c.intrinsics().cx},
          {"cy", c.intrinsics().cy},
          {"rotation", rot},
          {"translation", vec_json(c.translation())}};
}

RigCamera json_camera(const json& j) {
  Intrinsics in{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                j.at("cy").get<double>()};
  const auto& rot = j.at("rotation");
  if (rot.size() != 9) throw DatasetError("manifest: camera rotation must have 9 entries");
  Eigen::Matrix3d r;
  for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = rot[i].get<double>();
  RigCamera rc;
  rc.camera = Camera(in, r, json_vec(j.at("translation")), j.at("width").get<int>(), j.at("height").get<int>());
  const std::string role = j.value("role", "train");
  if (role != "train" && role != "holdout") throw DatasetError("manifest: unknown camera role '" + role + "'");
  rc.role = role == "train" ? CameraRole::Train : CameraRole::Holdout;
  return rc;
}

json pose_json(const SkeletonPose& pose) {
  json rots = json::array();
  for (const auto& q : pose.rotations) rots.push_back({q.w(), q.x(), q.y(), q.z()});
  return {{"root_translation", vec_json(pose.root_translation)}, {"rotations", rots}};
}

SkeletonPose json_pose(const json& j) {
  SkeletonPose pose;
  pose.root_translation = json_vec(j.at("root_translation"));
  for (const auto& q : j.at("rotations")) {
    if (q.size() != 4) throw DatasetError("manifest: rotation quaternions need 4 entries");
    pose.rotations.emplace_back(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
  }
  return pose;
}

}  // namespace

std::string view_file_stem(int frame, int view) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "frame_%04d/view_%02d", frame, view);
  return buf;
}

std::vector<RigCamera> make_ring_rig(const RigConfig& config) {
  if (config.views < 2) throw DatasetError("camera rig needs at least 2 views");
  if (config.holdout < 0 || config.holdout > config.views)
    throw DatasetError("holdout camera count must be between 0 and the view count");
  const double f = 0.5 * config.width / std::tan(0.5 * config.field_of_view * kDegree);
  const Intrinsics in{f, f, 0.5 * (config.width - 1), 0.5 * (config.height_px - 1)};
  const Eigen::Vector3d target(0, config.centre_height, 0);
  auto place = [&](double azimuth_deg, double height) {
    const double a = azimuth_deg * kDegree;
    const Eigen::Vector3d eye(config.radius * std::sin(a), config.centre_height + height, config.radius * std::cos(a));
    return Camera::look_at(eye, target, Eigen::Vector3d::UnitY(), in, config.width, config.height_px);
  };
  std::vector<RigCamera> rig;
  const double step = 360.0 / config.views;
  for (int k = 0; k < config.views; ++k)
    rig.push_back({place(config.azimuth_offset + k * step, config.height), CameraRole::Train});
  for (int k = 0; k < config.holdout; ++k)
    rig.push_back({place(config.azimuth_offset + (k + 0.5) * step, config.height + 0.25), CameraRole::Holdout});
  return rig;
}

double optical_axis_azimuth(const Camera& camera) {
  const Eigen::Vector3d f = camera.forward();
  return std::atan2(f.x(), f.z());
}

std::vector<int> Dataset::train_views() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(cameras.size()); ++i)
    if (cameras[i].role == CameraRole::Train) out.push_back(i);
  return out;
}

std::vector<int> Dataset::holdout_views() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(cameras.size()); ++i)
    if (cameras[i].role == CameraRole::Holdout) out.push_back(i);
  return out;
}

bool Dataset::has_depth() const {
  for (const auto& f : frames)
    for (const auto& v : f.views)
      if (v.depth.empty()) return false;
  return !frames.empty();
}

std::vector<SourceView> Dataset::source_views(int frame, const std::vector<int>& views) const {
  std::vector<SourceView> out;
  const DatasetFrame& fr = frames.at(frame);
  for (int v : views) out.push_back(SourceView{cameras.at(v).camera, fr.views.at(v).rgb, fr.views.at(v).mask, frame});
  return out;
}

Image quantize_depth(const Image& depth) {
  Image out = depth;
  for (float& d : out.data()) d = static_cast<float>(std::round(static_cast<double>(d) * 1000.0) / 1000.0);
  return out;
}

Dataset generate_dataset(const DatagenConfig& config) {
  if (config.frames < 1) throw DatasetError("datagen: frame count must be positive");
  const MotionPreset preset = parse_motion(config.motion);
  const ActorModel actor = build_actor(config.seed);
  Dataset ds;
  ds.cameras = make_ring_rig(config.rig);
  ds.skeleton = actor.skeleton;
  ds.motion = motion_name(preset);
  ds.period = config.period;
  ds.actor_seed = config.seed;
  for (int t = 0; t < config.frames; ++t) {
    DatasetFrame frame;
    frame.index = config.first_frame + t;
    frame.pose = animate(actor, frame.index, preset, config.period);
    const PosedSkeleton posed = pose_transforms(actor.skeleton, frame.pose);
    for (const auto& rc : ds.cameras) {
      GroundTruth gt = render_ground_truth(actor, posed, rc.camera);
      frame.views.push_back(ViewImages{quantize8(gt.rgb), gt.mask, quantize_depth(gt.depth)});
    }
    ds.frames.push_back(std::move(frame));
  }
  return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DatasetError("cannot create dataset directory " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["format"] = "hrf-dataset";
  manifest["schema_version"] = kDatasetSchemaVersion;
  json cams = json::array();
  for (std::size_t i = 0; i < ds.cameras.size(); ++i) cams.push_back(camera_json(ds.cameras[i], static_cast<int>(i)));
  manifest["cameras"] = cams;
  json joints = json::array(), tails = json::array();
  for (int j = 0; j < ds.skeleton.size(); ++j) {
    joints.push_back(vec_json(ds.skeleton.joints()[j]));
    tails.push_back(vec_json(ds.skeleton.tails()[j]));
  }
  manifest["skeleton"] = {{"parents", ds.skeleton.parents()}, {"joints", joints}, {"tails", tails}};
  manifest["motion"] = ds.motion;
  manifest["period"] = ds.period;
  if (ds.actor_seed) manifest["actor_seed"] = *ds.actor_seed;
  manifest["has_depth"] = ds.has_depth();
  json frames = json::array();
  for (const auto& f : ds.frames) {
    if (f.views.size() != ds.cameras.size())
      throw DatasetError("frame " + std::to_string(f.index) + " has " + std::to_string(f.views.size()) +
                         " views for " + std::to_string(ds.cameras.size()) + " cameras");
    frames.push_back({{"index", f.index}, {"dir", frame_dir(f.index)}, {"pose", pose_json(f.pose)}});
    fs::create_directories(dir / frame_dir(f.index), ec);
    if (ec) throw DatasetError("cannot create " + (dir / frame_dir(f.index)).string() + ": " + ec.message());
    for (std::size_t v = 0; v < f.views.size(); ++v) {
      const std::string stem = view_file_stem(f.index, static_cast<int>(v));
      save_png8(dir / (stem + ".rgb.png"), f.views[v].rgb);
      save_png8(dir / (stem + ".mask.png"), f.views[v].mask);
      if (!f.views[v].depth.empty()) save_depth_png(dir / (stem + ".depth.png"), f.views[v].depth);
    }
  }
  manifest["frames"] = frames;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DatasetError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  if (!out) throw DatasetError("failed writing " + (dir / "manifest.json").string());
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw DatasetError("missing manifest: " + path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DatasetError("malformed manifest " + path.string() + ": " + e.what());
  }
  const int version = manifest.value("schema_version", -1);
  if (version != kDatasetSchemaVersion)
    throw DatasetError("dataset schema version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kDatasetSchemaVersion) + ")");
  Dataset ds;
  try {
    for (const auto& c : manifest.at("cameras")) ds.cameras.push_back(json_camera(c));
    const auto& sk = manifest.at("skeleton");
    Vec3List joints, tails;
    for (const auto& j : sk.at("joints")) joints.push_back(json_vec(j));
    for (const auto& t : sk.at("tails")) tails.push_back(json_vec(t));
    ds.skeleton = Skeleton(sk.at("parents").get<std::vector<int>>(), joints, tails);
    ds.motion = manifest.value("motion", "");
    ds.period = manifest.value("period", 30);
    if (manifest.contains("actor_seed")) ds.actor_seed = manifest["actor_seed"].get<std::uint64_t>();
    const bool has_depth = manifest.value("has_depth", false);
    for (const auto& fj : manifest.at("frames")) {
      DatasetFrame frame;
      frame.index = fj.at("index").get<int>();
      frame.pose = json_pose(fj.at("pose"));
      if (static_cast<int>(frame.pose.rotations.size()) != ds.skeleton.size())
        throw DatasetError("frame " + std::to_string(frame.index) + ": pose joint count does not match skeleton");
      for (std::size_t v = 0; v < ds.cameras.size(); ++v) {
        const std::string stem = view_file_stem(frame.index, static_cast<int>(v));
        ViewImages views;
        for (const char* kind : {".rgb.png", ".mask.png"})
          if (!fs::exists(dir / (stem + kind)))
            throw DatasetError("frame " + std::to_string(frame.index) + " is missing view " + std::to_string(v) +
                               ": " + (dir / (stem + kind)).string());
        views.rgb = load_png8(dir / (stem + ".rgb.png"));
        views.mask = load_png8(dir / (stem + ".mask.png"));
        if (has_depth) {
          if (!fs::exists(dir / (stem + ".depth.png")))
            throw DatasetError("frame " + std::to_string(frame.index) + " is missing depth for view " +
                               std::to_string(v));
          views.depth = load_depth_png(dir / (stem + ".depth.png"));
        }
        const Camera& cam = ds.cameras[v].camera;
        if (views.rgb.width() != cam.width() || views.rgb.height() != cam.height() || views.rgb.channels() != 3 ||
            views.mask.channels() != 1 || !(views.mask.width() == cam.width() && views.mask.height() == cam.height()))
          throw DatasetError("view " + stem + " does not match its camera's image size");
        frame.views.push_back(std::move(views));
      }
      ds.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw DatasetError("malformed manifest " + path.string() + ": " + e.what());
  } catch (const SkeletonError& e) {
    throw DatasetError(std::string("manifest skeleton: ") + e.what());
  } catch (const CameraError& e) {
    throw DatasetError(std::string("manifest camera: ") + e.what());
  } catch (const ImageError& e) {
    throw DatasetError(std::string("dataset image: ") + e.what());
  }
  return ds;
}

}  // namespace hrf
