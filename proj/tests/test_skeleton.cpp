#include "hrf/skeleton.hpp"
#include "hrf/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hrf;

namespace {

Eigen::Quaterniond axis_angle(double angle, const Eigen::Vector3d& axis) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized()));
}

SkeletonPose random_pose(int joints, std::mt19937_64& rng, double amplitude) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SkeletonPose pose = SkeletonPose::rest(joints);
  for (auto& q : pose.rotations) q = axis_angle(amplitude * u(rng), {u(rng), u(rng), u(rng) + 1e-3});
  pose.root_translation = {0.1 * u(rng), 0.05 * u(rng), 0.1 * u(rng)};
  return pose;
}

}  // namespace

TEST_CASE("humanoid skeleton has 24 joints in topological order") {
  const Skeleton s = Skeleton::humanoid();
  CHECK(s.size() == 24);
  CHECK(s.parents()[0] == -1);
  for (int j = 1; j < 24; ++j) CHECK(s.parents()[j] < j);
}

TEST_CASE("malformed skeletons are rejected") {
  using V = Eigen::Vector3d;
  CHECK_THROWS_AS(Skeleton({-1, 2, 1}, {V::Zero(), V::Zero(), V::Zero()}, {V::Zero(), V::Zero(), V::Zero()}),
                  SkeletonError);
  CHECK_THROWS_AS(Skeleton({0}, {V::Zero()}, {V::Zero()}), SkeletonError);
  CHECK_THROWS_AS(Skeleton({-1, 0}, {V::Zero()}, {V::Zero(), V::Zero()}), SkeletonError);
}

TEST_CASE("identity pose keeps canonical joints") {
  const Skeleton s = Skeleton::humanoid();
  const PosedSkeleton posed = pose_transforms(s, SkeletonPose::rest(24));
  for (int j = 0; j < 24; ++j) {
    CHECK((posed.joints[j] - s.joints()[j]).norm() < 1e-12);
    CHECK(posed.bone_transforms[j].matrix().isIdentity(1e-12));
  }
}

TEST_CASE("root rotation rotates every joint") {
  const Skeleton s = Skeleton::humanoid();
  SkeletonPose pose = SkeletonPose::rest(24);
  const Eigen::Quaterniond r = axis_angle(0.7, {0.2, 1.0, -0.3});
  pose.rotations[0] = r;
  const PosedSkeleton posed = pose_transforms(s, pose);
  const Eigen::Vector3d root = s.joints()[0];
  for (int j = 0; j < 24; ++j) {
    const Eigen::Vector3d expected = root + r * (s.joints()[j] - root);
    CHECK((posed.joints[j] - expected).norm() < 1e-12);
  }
}

TEST_CASE("two-bone chain with a right-angle elbow") {
  using V = Eigen::Vector3d;
  // Upper arm along +x from the origin, forearm continues along +x.
  const Skeleton s({-1, 0, 1}, {V(0, 0, 0), V(1, 0, 0), V(2, 0, 0)}, {V(1, 0, 0), V(2, 0, 0), V(2.5, 0, 0)});
  SkeletonPose pose = SkeletonPose::rest(3);
  pose.rotations[1] = axis_angle(M_PI / 2, V::UnitZ());
  const PosedSkeleton posed = pose_transforms(s, pose);
  // Elbow stays at (1,0,0); the wrist swings to (1,1,0); the hand tail to (1,1.5,0).
  CHECK((posed.joints[1] - V(1, 0, 0)).norm() < 1e-12);
  CHECK((posed.joints[2] - V(1, 1, 0)).norm() < 1e-12);
  CHECK((posed.tails[2] - V(1, 1.5, 0)).norm() < 1e-12);
}

TEST_CASE("skinning weights") {
  using V = Eigen::Vector3d;
  const Skeleton s({-1, 0, 0}, {V(0, 5, 0), V(1, 0, 0), V(-1, 0, 0)}, {V(0, 6, 0), V(2, 0, 0), V(-2, 0, 0)});
  const PosedSkeleton posed = pose_transforms(s, SkeletonPose::rest(3));
  SkinningConfig cfg;

  SUBCASE("on a bone, far from the others") {
    const Eigen::VectorXd w = skinning_weights(V(1.5, 0.01, 0), posed, cfg);
    CHECK(w[1] > 0.99);
  }
  SUBCASE("equidistant between two bones") {
    const Eigen::VectorXd w = skinning_weights(V(0, 0.02, 0.03), posed, cfg);
    CHECK(w[1] == doctest::Approx(0.5));
    CHECK(w[2] == doctest::Approx(0.5));
  }
  SUBCASE("probability vector and continuity") {
    const Skeleton h = Skeleton::humanoid();
    std::mt19937_64 rng(5);
    const PosedSkeleton hp = pose_transforms(h, random_pose(24, rng, 0.4));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
      const V p(0.5 * u(rng), 0.9 + 0.8 * u(rng), 0.3 * u(rng));
      const Eigen::VectorXd w = skinning_weights(p, hp, cfg);
      CHECK((w.array() >= 0.0).all());
      CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK((w.array() > 0.0).count() <= cfg.nearest);
    }
    // Continuity along a segment: smaller steps give smaller changes.
    const V a(0.05, 1.0, 0.02), dir = V(1, 0.3, 0.2).normalized();
    double previous = std::numeric_limits<double>::infinity();
    for (double delta : {1e-2, 1e-3, 1e-4, 1e-5}) {
      double worst = 0.0;
      for (int k = 0; k < 200; ++k) {
        const V p = a + (k * 2e-3) * dir;
        worst = std::max(worst, (skinning_weights(p + delta * dir, hp, cfg) - skinning_weights(p, hp, cfg)).cwiseAbs().maxCoeff());
      }
      CHECK(worst <= previous);
      previous = worst;
    }
    CHECK(previous < 1e-2);
  }
}

TEST_CASE("inverse skinning") {
  const Skeleton s = Skeleton::humanoid();
  SkinningConfig cfg;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  SUBCASE("identity pose is the identity map") {
    const PosedSkeleton posed = pose_transforms(s, SkeletonPose::rest(24));
    for (int i = 0; i < 20; ++i) {
      const Eigen::Vector3d p(0.4 * u(rng), 1.0 + 0.6 * u(rng), 0.2 * u(rng));
      CHECK((inverse_skin(p, posed, skinning_weights(p, posed, cfg)) - p).norm() < 1e-12);
    }
  }
  SUBCASE("shared weights round trip exactly") {
    const PosedSkeleton posed = pose_transforms(s, random_pose(24, rng, 0.6));
    const PosedSkeleton rest = pose_transforms(s, SkeletonPose::rest(24));
    for (int i = 0; i < 200; ++i) {
      const int bone = static_cast<int>((u(rng) + 1.0) * 12.0) % 24;
      const double t = 0.5 * (u(rng) + 1.0);
      const Eigen::Vector3d c = s.joints()[bone] + t * (s.tails()[bone] - s.joints()[bone]) +
                                0.03 * Eigen::Vector3d(u(rng), u(rng), u(rng));
      const Eigen::VectorXd w = skinning_weights(c, rest, cfg);
      const Eigen::Vector3d p = forward_skin(c, posed, w);
      CHECK((inverse_skin(p, posed, w) - c).norm() < 1e-5);
    }
  }
  SUBCASE("re-estimated weights stay close near bones") {
    const ActorModel actor = build_actor(7);
    const Skeleton& body = actor.skeleton;
    const PosedSkeleton rest = pose_transforms(body, SkeletonPose::rest(24));
    double worst = 0.0;
    int skipped = 0, checked = 0;
    for (auto preset : {MotionPreset::IdleSway, MotionPreset::ArmWave, MotionPreset::WalkCycle, MotionPreset::Twist})
      for (int f = 0; f < 30; f += 5) {
        const PosedSkeleton posed = pose_transforms(body, animate(actor, f, preset));
        for (int i = 0; i < 50; ++i) {
          const int bone = static_cast<int>((u(rng) + 1.0) * 12.0) % 24;
          const Eigen::Vector3d axis = body.tails()[bone] - body.joints()[bone];
          const Eigen::Vector3d c = body.joints()[bone] + 0.5 * (u(rng) + 1.0) * axis +
                                    cfg.tau * u(rng) * Eigen::Vector3d(u(rng), u(rng), u(rng) + 1e-3).normalized();
          const Eigen::Vector3d p = forward_skin(c, posed, skinning_weights(c, rest, cfg));
          // Skip self-contact, where posing brought a far bone within 3 tau.
          bool contact = false;
          for (int j = 0; j < 24; ++j)
            contact = contact || (point_segment_distance(p, posed.joints[j], posed.tails[j]) < 3.0 * cfg.tau &&
                                  point_segment_distance(c, rest.joints[j], rest.tails[j]) >= 3.0 * cfg.tau);
          if (contact) {
            ++skipped;
            continue;
          }
          ++checked;
          worst = std::max(worst, (inverse_skin(p, posed, skinning_weights(p, posed, cfg)) - c).norm());
        }
      }
    CHECK(worst < 1e-2);
    CHECK(skipped * 10 < checked);
  }
}

TEST_CASE("pose descriptor") {
  const Skeleton s = Skeleton::humanoid();
  const PosedSkeleton posed = pose_transforms(s, SkeletonPose::rest(24));
  const PoseDescriptor at5 = pose_descriptor(posed.joints[5], posed);
  CHECK(at5.distances.size() == 24);
  CHECK(at5.directions.size() == 72);
  CHECK(at5.distances[5] == 0.0);
  CHECK(at5.directions.segment<3>(15).isZero());

  const PoseDescriptor unit = pose_descriptor(posed.joints[0] + Eigen::Vector3d::UnitX(), posed);
  CHECK(unit.distances[0] == doctest::Approx(1.0));
  CHECK((unit.directions.segment<3>(0) - Eigen::Vector3d::UnitX()).norm() < 1e-12);

  // A rigid motion of both the point and the pose leaves distances unchanged.
  std::mt19937_64 rng(9);
  SkeletonPose pose = random_pose(24, rng, 0.5);
  const PosedSkeleton a = pose_transforms(s, pose);
  const Eigen::Vector3d p(0.1, 1.1, 0.05);
  const Eigen::Quaterniond r = axis_angle(1.1, {0.3, 1.0, 0.2});
  const Eigen::Vector3d shift(0.4, -0.2, 0.7);
  SkeletonPose moved = pose;
  moved.rotations[0] = r * pose.rotations[0];
  // Root joint sits at rest[0] + root_translation; rotate that about the origin too.
  moved.root_translation = r * (s.joints()[0] + pose.root_translation) + shift - s.joints()[0];
  const PosedSkeleton b = pose_transforms(s, moved);
  const Eigen::Vector3d q = r * p + shift;
  CHECK((pose_descriptor(p, a).distances - pose_descriptor(q, b).distances).norm() < 1e-12);
}
