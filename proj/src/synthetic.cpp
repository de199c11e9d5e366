#include "hrf/synthetic.hpp"

#include "hrf/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hrf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Eigen::Vector3d hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Body-part groups sharing a hue family.
int part_of(int joint) {
  static const int parts[24] = {0, 1, 1, 0, 2, 2, 0, 3, 3, 0, 3, 3, 4, 5, 5, 4, 5, 5, 6, 6, 7, 7, 7, 7};
  return parts[joint];
}

double default_radius(int joint) {
  static const double r[24] = {0.13, 0.075, 0.075, 0.13, 0.055, 0.055, 0.14, 0.045, 0.045, 0.14, 0.04, 0.04,
                               0.05, 0.06,  0.06,  0.10, 0.05,  0.05,  0.042, 0.042, 0.038, 0.038, 0.035, 0.035};
  return r[joint];
}

struct CapsuleHit {
  double t;
  Eigen::Vector3d normal;  // canonical frame
  double along;            // 0..1 along the bone
};

std::optional<CapsuleHit> intersect_capsule(const Eigen::Vector3d& ro, const Eigen::Vector3d& rd,
                                            const Eigen::Vector3d& a, const Eigen::Vector3d& b, double r) {
  std::optional<CapsuleHit> best;
  auto consider = [&](double t, const Eigen::Vector3d& n, double along) {
    if (t > 1e-6 && (!best || t < best->t)) best = CapsuleHit{t, n, along};
  };
  auto sphere = [&](const Eigen::Vector3d& c, double along) {
    const Eigen::Vector3d oc = ro - c;
    const double bq = oc.dot(rd), cq = oc.squaredNorm() - r * r;
    const double h = bq * bq - cq;
    if (h < 0) return;
    const double t = -bq - std::sqrt(h);
    consider(t, (ro + t * rd - c) / r, along);
  };
  const Eigen::Vector3d ba = b - a;
  const double baba = ba.squaredNorm();
  if (baba > 1e-18) {
    const Eigen::Vector3d oa = ro - a;
    const double bard = ba.dot(rd), baoa = ba.dot(oa), rdoa = rd.dot(oa), oaoa = oa.squaredNorm();
    const double qa = baba - bard * bard;
    if (qa > 1e-14) {
      const double qb = baba * rdoa - baoa * bard;
      const double qc = baba * oaoa - baoa * baoa - r * r * baba;
      const double h = qb * qb - qa * qc;
      if (h >= 0) {
        const double t = (-qb - std::sqrt(h)) / qa;
        const double y = baoa + t * bard;
        if (y > 0 && y < baba) {
          const Eigen::Vector3d p = ro + t * rd;
          consider(t, (p - (a + ba * (y / baba))) / r, y / baba);
        }
      }
    }
    sphere(b, 1.0);
  }
  sphere(a, 0.0);
  return best;
}

}  // namespace

Eigen::Vector3d AlbedoPattern::at(double along, double angle) const {
  double m = 0.5 + 0.5 * std::sin(kTwoPi * (stripes * along + phase));
  if (around > 0) m = 0.5 + 0.5 * std::sin(kTwoPi * (stripes * along + phase)) * std::cos(around * angle);
  return (1.0 - m) * base + m * accent;
}

ActorModel build_actor(std::uint64_t seed) {
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 12345);
  ActorModel actor;
  actor.seed = seed;
  actor.scale = 0.92 + 0.16 * uniform01(rng);
  actor.skeleton = Skeleton::humanoid(actor.scale);
  const double girth = 0.9 + 0.2 * uniform01(rng);
  std::vector<double> part_hue(8);
  for (double& h : part_hue) h = uniform01(rng);
  for (int j = 0; j < 24; ++j) {
    actor.radii.push_back(default_radius(j) * actor.scale * girth);
    AlbedoPattern pat;
    const double hue = part_hue[part_of(j)];
    pat.base = hsv(hue, 0.45 + 0.35 * uniform01(rng), 0.7 + 0.3 * uniform01(rng));
    pat.accent = hsv(hue + 0.35 + 0.3 * uniform01(rng), 0.4 + 0.4 * uniform01(rng), 0.45 + 0.45 * uniform01(rng));
    pat.stripes = 1.0 + std::floor(2.0 * uniform01(rng));
    pat.phase = uniform01(rng);
    pat.around = uniform01(rng) < 0.3 ? 1 + static_cast<int>(2.0 * uniform01(rng)) : 0;
    actor.albedo.push_back(pat);
  }
  return actor;
}

ActorModel sphere_actor(double radius, const Eigen::Vector3d& centre) {
  ActorModel actor;
  actor.skeleton = Skeleton({-1}, {centre}, {centre});
  actor.radii = {radius};
  AlbedoPattern pat;
  pat.base = pat.accent = Eigen::Vector3d(0.8, 0.6, 0.4);
  actor.albedo = {pat};
  return actor;
}

MotionPreset parse_motion(const std::string& name) {
  if (name == "idle-sway") return MotionPreset::IdleSway;
  if (name == "arm-wave") return MotionPreset::ArmWave;
  if (name == "walk-cycle") return MotionPreset::WalkCycle;
  if (name == "twist") return MotionPreset::Twist;
  throw std::invalid_argument("unknown motion preset '" + name + "' (expected idle-sway, arm-wave, walk-cycle, twist)");
}

std::string motion_name(MotionPreset preset) {
  switch (preset) {
    case MotionPreset::IdleSway: return "idle-sway";
    case MotionPreset::ArmWave: return "arm-wave";
    case MotionPreset::WalkCycle: return "walk-cycle";
    case MotionPreset::Twist: return "twist";
  }
  return "idle-sway";
}

SkeletonPose animate(const ActorModel& actor, int frame, MotionPreset preset, int period) {
  if (period <= 0) throw std::invalid_argument("animate: period must be positive");
  const int joints = actor.skeleton.size();
  SkeletonPose pose = SkeletonPose::rest(joints);
  if (joints != 24) return pose;
  const double phase = kTwoPi * static_cast<double>(frame % period) / period;
  const double s = std::sin(phase);
  auto rot = [&](int j, const Eigen::Vector3d& axis, double angle) {
    pose.rotations[j] = Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis)) * pose.rotations[j];
  };
  const Eigen::Vector3d x = Eigen::Vector3d::UnitX(), y = Eigen::Vector3d::UnitY(), z = Eigen::Vector3d::UnitZ();
  switch (preset) {
    case MotionPreset::IdleSway:
      rot(3, z, 0.08 * s);
      rot(9, z, -0.05 * s);
      rot(16, z, 0.15 * s);
      rot(17, z, 0.15 * s);
      rot(15, y, 0.2 * s);
      break;
    case MotionPreset::ArmWave: {
      const double c = 0.5 - 0.5 * std::cos(phase);
      rot(16, z, 0.9 * s);
      rot(18, z, 0.6 * c);
      rot(17, z, 0.9 * s);
      rot(19, z, -0.6 * c);
      rot(15, x, 0.1 * s);
      break;
    }
    case MotionPreset::WalkCycle:
      rot(1, x, -0.5 * s);
      rot(2, x, 0.5 * s);
      rot(4, x, 0.7 * std::max(0.0, s));
      rot(5, x, 0.7 * std::max(0.0, -s));
      rot(16, x, 0.4 * s);
      rot(17, x, -0.4 * s);
      pose.root_translation = Eigen::Vector3d(0, 0.02 * s * s, 0);
      break;
    case MotionPreset::Twist:
      rot(0, y, 0.3 * s);
      rot(3, y, 0.4 * s);
      rot(9, y, 0.3 * s);
      rot(12, y, -0.3 * s);
      break;
  }
  return pose;
}

std::optional<SurfaceHit> intersect_actor(const ActorModel& actor, const PosedSkeleton& posed, const Ray& ray) {
  std::optional<SurfaceHit> best;
  const auto& skel = actor.skeleton;
  for (int j = 0; j < skel.size(); ++j) {
    // Each capsule is rigid with its bone: intersect in canonical space.
    const Eigen::Isometry3d inv = posed.bone_transforms[j].inverse();
    const Eigen::Vector3d ro = inv * ray.origin;
    const Eigen::Vector3d rd = inv.linear() * ray.direction;
    const auto hit = intersect_capsule(ro, rd, skel.joints()[j], skel.tails()[j], actor.radii[j]);
    if (!hit || (best && hit->t >= best->distance)) continue;
    SurfaceHit h;
    h.distance = hit->t;
    h.bone = j;
    h.normal = (posed.bone_transforms[j].linear() * hit->normal).normalized();
    // Angle around the bone axis in canonical space.
    const Eigen::Vector3d axis = skel.tails()[j] - skel.joints()[j];
    Eigen::Vector3d ref = axis.norm() > 1e-9 ? axis.normalized().cross(Eigen::Vector3d::UnitZ()) : Eigen::Vector3d::UnitX();
    if (ref.norm() < 1e-6) ref = Eigen::Vector3d::UnitX();
    ref.normalize();
    const Eigen::Vector3d ref2 = axis.norm() > 1e-9 ? axis.normalized().cross(ref) : Eigen::Vector3d::UnitY();
    const double angle = std::atan2(hit->normal.dot(ref2), hit->normal.dot(ref));
    h.albedo = actor.albedo[j].at(hit->along, angle);
    best = h;
  }
  return best;
}

bool visible_from(const ActorModel& actor, const PosedSkeleton& posed, const Camera& camera,
                  const Eigen::Vector3d& point, double tolerance) {
  Ray ray;
  ray.origin = camera.center();
  const Eigen::Vector3d d = point - ray.origin;
  const double dist = d.norm();
  ray.direction = d / dist;
  if (!camera.project(point).in_front) return false;
  const auto hit = intersect_actor(actor, posed, ray);
  return !hit || hit->distance >= dist - tolerance;
}

Eigen::Vector3d light_direction() { return Eigen::Vector3d(0.3, 0.8, 0.5).normalized(); }

GroundTruth render_ground_truth(const ActorModel& actor, const PosedSkeleton& posed, const Camera& camera) {
  const int w = camera.width(), h = camera.height();
  GroundTruth gt{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1)};
  const Eigen::Vector3d light = light_direction();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Ray ray = camera.generate_ray(Eigen::Vector2d(x, y));
      const auto hit = intersect_actor(actor, posed, ray);
      if (!hit) continue;
      const double shade = 0.35 + 0.65 * std::max(0.0, hit->normal.dot(light));
      for (int c = 0; c < 3; ++c) gt.rgb.at(x, y, c) = static_cast<float>(std::clamp(hit->albedo[c] * shade, 0.0, 1.0));
      gt.mask.at(x, y, 0) = 1.0f;
      gt.depth.at(x, y, 0) = static_cast<float>(hit->distance);
    }
  }
  return gt;
}

}  // namespace hrf
