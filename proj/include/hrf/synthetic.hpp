#pragma once

#include "hrf/camera.hpp"
#include "hrf/image.hpp"
#include "hrf/skeleton.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace hrf {

/// Smooth procedural albedo on one capsule: base and accent colours mixed by
/// a sinusoid along the bone, optionally modulated around it.
struct AlbedoPattern {
  Eigen::Vector3d base = Eigen::Vector3d::Constant(0.5);
  Eigen::Vector3d accent = Eigen::Vector3d::Constant(0.5);
  double stripes = 1.0;  // periods along the bone
  double phase = 0.0;
  int around = 0;  // periods around the bone (0 = plain stripes)

  Eigen::Vector3d at(double along, double angle) const;
  bool operator==(const AlbedoPattern&) const = default;
};

/// Rigged capsule body: one capsule per bone (joint -> tail).
struct ActorModel {
  std::uint64_t seed = 0;
  double scale = 1.0;
  Skeleton skeleton;
  std::vector<double> radii;
  std::vector<AlbedoPattern> albedo;

  bool operator==(const ActorModel&) const = default;
};

/// 24-joint humanoid; proportions, radii and albedo depend on the seed.
ActorModel build_actor(std::uint64_t seed);

/// Single zero-length capsule: a sphere of `radius` at `centre`.
ActorModel sphere_actor(double radius, const Eigen::Vector3d& centre);

enum class MotionPreset { IdleSway, ArmWave, WalkCycle, Twist };

MotionPreset parse_motion(const std::string& name);  // throws std::invalid_argument
std::string motion_name(MotionPreset preset);

/// Periodic pose at frame t. IdleSway at t = 0 is the canonical pose.
SkeletonPose animate(const ActorModel& actor, int frame, MotionPreset preset, int period = 30);

struct SurfaceHit {
  double distance = 0.0;  // along the unit ray
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  Eigen::Vector3d albedo = Eigen::Vector3d::Zero();
  int bone = -1;
};

/// Nearest intersection of the ray with the posed capsules (t > 1e-6).
std::optional<SurfaceHit> intersect_actor(const ActorModel& actor, const PosedSkeleton& posed, const Ray& ray);

/// Whether `point` (on the body surface) is seen unoccluded by `camera`.
bool visible_from(const ActorModel& actor, const PosedSkeleton& posed, const Camera& camera,
                  const Eigen::Vector3d& point, double tolerance = 1e-3);

struct GroundTruth {
  Image rgb;    // 3 channels, black background
  Image mask;   // 1 channel, {0, 1}
  Image depth;  // 1 channel, distance along the pixel ray in meters, 0 = background
};

/// Fixed directional light used by the ground-truth shader.
Eigen::Vector3d light_direction();

GroundTruth render_ground_truth(const ActorModel& actor, const PosedSkeleton& posed, const Camera& camera);

}  // namespace hrf
