#include "hrf/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hrf {

Skeleton::Skeleton(std::vector<int> parents, Vec3List joints, Vec3List tails)
    : parents_(std::move(parents)), joints_(std::move(joints)), tails_(std::move(tails)) {
  const int n = static_cast<int>(parents_.size());
  if (n == 0) throw SkeletonError("skeleton: no joints");
  if (static_cast<int>(joints_.size()) != n || static_cast<int>(tails_.size()) != n)
    throw SkeletonError("skeleton: joints/tails count must match parents");
  if (parents_[0] != -1) throw SkeletonError("skeleton: joint 0 must be the root");
  for (int j = 1; j < n; ++j) {
    // Topological order rules out cycles and forests.
    if (parents_[j] < 0 || parents_[j] >= j)
      throw SkeletonError("skeleton: joint " + std::to_string(j) + " has invalid parent " + std::to_string(parents_[j]) +
                          " (cycle or non-tree)");
  }
}

Skeleton Skeleton::humanoid(double scale) {
  using V = Eigen::Vector3d;
  // SMPL joint order.
  std::vector<int> parents{-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
  const double leg = std::sin(15.0 * M_PI / 180.0), legc = std::cos(15.0 * M_PI / 180.0);
  const double arm = std::sqrt(0.5);
  Vec3List j(24);
  j[0] = V(0, 0.95, 0);
  j[3] = V(0, 1.05, 0);
  j[6] = V(0, 1.18, 0);
  j[9] = V(0, 1.32, 0);
  j[12] = V(0, 1.50, 0);
  j[15] = V(0, 1.60, 0);
  for (int side : {0, 1}) {
    const double s = side == 0 ? 1.0 : -1.0;
    const int hip = 1 + side, knee = 4 + side, ankle = 7 + side, foot = 10 + side;
    const int collar = 13 + side, shoulder = 16 + side, elbow = 18 + side, wrist = 20 + side, hand = 22 + side;
    j[hip] = V(s * 0.09, 0.88, 0);
    j[knee] = j[hip] + 0.40 * V(s * leg, -legc, 0);
    j[ankle] = j[knee] + 0.40 * V(s * leg, -legc, 0);
    j[foot] = j[ankle] + V(0, -0.05, 0.10);
    j[collar] = V(s * 0.07, 1.44, 0);
    j[shoulder] = V(s * 0.18, 1.44, 0);
    j[elbow] = j[shoulder] + 0.28 * V(s * arm, -arm, 0);
    j[wrist] = j[elbow] + 0.25 * V(s * arm, -arm, 0);
    j[hand] = j[wrist] + 0.08 * V(s * arm, -arm, 0);
  }
  // Scale about the ground point below the pelvis.
  const V ground(0, 0, 0);
  for (auto& p : j) p = ground + scale * (p - ground);

  Vec3List tails(24);
  std::vector<bool> has_child(24, false);
  for (int c = 23; c >= 1; --c) {
    tails[parents[c]] = j[c];  // lowest-index child wins
    has_child[parents[c]] = true;
  }
  for (int k = 0; k < 24; ++k) {
    if (has_child[k]) continue;
    const V dir = (j[k] - j[parents[k]]).normalized();
    const double len = k == 15 ? 0.16 : (k == 10 || k == 11) ? 0.06 : 0.07;
    tails[k] = j[k] + scale * len * (k == 15 ? V(0, 1, 0) : (k == 10 || k == 11) ? V(0, 0, 1) : dir);
  }
  return Skeleton(std::move(parents), std::move(j), std::move(tails));
}

SkeletonPose SkeletonPose::rest(int joints) {
  SkeletonPose pose;
  pose.rotations.assign(joints, Eigen::Quaterniond::Identity());
  return pose;
}

bool SkeletonPose::operator==(const SkeletonPose& other) const {
  if (rotations.size() != other.rotations.size() || root_translation != other.root_translation) return false;
  for (std::size_t i = 0; i < rotations.size(); ++i)
    if (rotations[i].coeffs() != other.rotations[i].coeffs()) return false;
  return true;
}

Aabb PosedSkeleton::bounds() const {
  Vec3List all = joints;
  all.insert(all.end(), tails.begin(), tails.end());
  return Aabb::around(all);
}

PosedSkeleton pose_transforms(const Skeleton& skeleton, const SkeletonPose& pose) {
  const int n = skeleton.size();
  if (static_cast<int>(pose.rotations.size()) != n)
    throw SkeletonError("pose: expected " + std::to_string(n) + " rotations, got " + std::to_string(pose.rotations.size()));
  PosedSkeleton out;
  out.joint_transforms.resize(n);
  out.bone_transforms.resize(n);
  out.joints.resize(n);
  out.tails.resize(n);
  const auto& rest = skeleton.joints();
  for (int j = 0; j < n; ++j) {
    Eigen::Isometry3d local = Eigen::Isometry3d::Identity();
    local.linear() = pose.rotations[j].normalized().toRotationMatrix();
    const int p = skeleton.parents()[j];
    if (p < 0) {
      local.translation() = rest[j] + pose.root_translation;
      out.joint_transforms[j] = local;
    } else {
      local.translation() = rest[j] - rest[p];
      out.joint_transforms[j] = out.joint_transforms[p] * local;
    }
    out.bone_transforms[j] = out.joint_transforms[j] * Eigen::Translation3d(-rest[j]);
    out.joints[j] = out.joint_transforms[j].translation();
    out.tails[j] = out.bone_transforms[j] * skeleton.tails()[j];
  }
  return out;
}

double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

Eigen::VectorXd skinning_weights(const Eigen::Vector3d& p, const PosedSkeleton& posed, const SkinningConfig& config) {
  const int n = posed.size();
  std::vector<double> d2(n);
  for (int j = 0; j < n; ++j) {
    const double d = point_segment_distance(p, posed.joints[j], posed.tails[j]);
    d2[j] = d * d;
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int k = std::min(config.nearest, n);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](int a, int b) { return d2[a] < d2[b] || (d2[a] == d2[b] && a < b); });
  // Relative to the nearest bone so that far-field points do not underflow.
  const double base = d2[order[0]];
  const double inv = 1.0 / (2.0 * config.tau * config.tau);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < k; ++i) w[order[i]] = std::exp(-(d2[order[i]] - base) * inv);
  return w / w.sum();
}

Eigen::Matrix<double, 3, 4> blended_transform(const PosedSkeleton& posed, const Eigen::VectorXd& weights) {
  Eigen::Matrix<double, 3, 4> m = Eigen::Matrix<double, 3, 4>::Zero();
  for (int j = 0; j < posed.size(); ++j)
    if (weights[j] != 0.0) m += weights[j] * posed.bone_transforms[j].matrix().topRows<3>();
  return m;
}

Eigen::Vector3d forward_skin(const Eigen::Vector3d& canonical, const PosedSkeleton& posed,
                             const Eigen::VectorXd& weights) {
  const auto m = blended_transform(posed, weights);
  return m.leftCols<3>() * canonical + m.col(3);
}

Eigen::Vector3d inverse_skin(const Eigen::Vector3d& posed_point, const PosedSkeleton& posed,
                             const Eigen::VectorXd& weights) {
  const auto m = blended_transform(posed, weights);
  const Eigen::Matrix3d lin = m.leftCols<3>();
  const double det = lin.determinant();
  if (!(std::abs(det) > 1e-9)) throw SkeletonError("inverse_skin: blended transform is singular");
  return lin.inverse() * (posed_point - m.col(3));
}

PoseDescriptor pose_descriptor(const Eigen::Vector3d& p, const PosedSkeleton& posed) {
  const int n = posed.size();
  PoseDescriptor out{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(3 * n)};
  for (int j = 0; j < n; ++j) {
    const Eigen::Vector3d d = p - posed.joints[j];
    const double len = d.norm();
    out.distances[j] = len;
    if (len > 1e-12) out.directions.segment<3>(3 * j) = d / len;
  }
  return out;
}

}  // namespace hrf
