#pragma once

#include "hrf/camera.hpp"

#include <Eigen/Geometry>

#include <stdexcept>
#include <vector>

namespace hrf {

class SkeletonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec3List = std::vector<Eigen::Vector3d>;

/// Joint tree in its canonical (rest) pose. Bone j runs from joint j to
/// tail j and moves rigidly with joint j.
class Skeleton {
 public:
  static constexpr int kDefaultJoints = 24;

  Skeleton() = default;
  /// Throws SkeletonError unless parents form a tree rooted at joint 0 with
  /// every parent index smaller than its child.
  Skeleton(std::vector<int> parents, Vec3List joints, Vec3List tails);

  /// 24-joint humanoid in a star pose (legs apart, arms 45 degrees down),
  /// y up, facing +z, left side at +x. `scale` stretches bone lengths.
  static Skeleton humanoid(double scale = 1.0);

  int size() const { return static_cast<int>(parents_.size()); }
  const std::vector<int>& parents() const { return parents_; }
  const Vec3List& joints() const { return joints_; }
  const Vec3List& tails() const { return tails_; }

  bool operator==(const Skeleton& other) const = default;

 private:
  std::vector<int> parents_;
  Vec3List joints_;
  Vec3List tails_;
};

/// Local joint rotations (unit quaternions) plus root translation.
struct SkeletonPose {
  std::vector<Eigen::Quaterniond> rotations;
  Eigen::Vector3d root_translation = Eigen::Vector3d::Zero();

  static SkeletonPose rest(int joints);
  bool operator==(const SkeletonPose& other) const;
};

struct PosedSkeleton {
  std::vector<Eigen::Isometry3d> joint_transforms;  // world transform of each joint frame
  std::vector<Eigen::Isometry3d> bone_transforms;   // canonical space -> posed space, per bone
  Vec3List joints;
  Vec3List tails;

  int size() const { return static_cast<int>(joints.size()); }
  /// Box around all posed joints and tails.
  Aabb bounds() const;
};

/// Forward kinematics: G_j = G_parent(j) * local_j, the root carrying the
/// root translation.
PosedSkeleton pose_transforms(const Skeleton& skeleton, const SkeletonPose& pose);

struct SkinningConfig {
  double tau = 0.05;  // Gaussian falloff, meters
  int nearest = 4;
};

double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// J-vector, nonnegative, summing to one; nonzero on the `nearest` bones.
Eigen::VectorXd skinning_weights(const Eigen::Vector3d& p, const PosedSkeleton& posed,
                                 const SkinningConfig& config = {});

Eigen::Matrix<double, 3, 4> blended_transform(const PosedSkeleton& posed, const Eigen::VectorXd& weights);

Eigen::Vector3d forward_skin(const Eigen::Vector3d& canonical, const PosedSkeleton& posed,
                             const Eigen::VectorXd& weights);

/// Maps a posed-space point into canonical space by inverting the blended
/// forward transform. Throws SkeletonError if the blend is singular.
Eigen::Vector3d inverse_skin(const Eigen::Vector3d& posed_point, const PosedSkeleton& posed,
                             const Eigen::VectorXd& weights);

struct PoseDescriptor {
  Eigen::VectorXd distances;   // J
  Eigen::VectorXd directions;  // 3J, unit per joint (zero when coincident)
};

PoseDescriptor pose_descriptor(const Eigen::Vector3d& p, const PosedSkeleton& posed);

}  // namespace hrf
