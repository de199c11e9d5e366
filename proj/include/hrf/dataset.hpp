#pragma once

#include "hrf/camera.hpp"
#include "hrf/features.hpp"
#include "hrf/image.hpp"
#include "hrf/skeleton.hpp"
#include "hrf/synthetic.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hrf {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kDatasetSchemaVersion = 1;

struct RigConfig {
  int views = 6;
  int holdout = 0;        // extra cameras between the ring cameras, not used as sources
  double radius = 3.0;    // meters from the rig centre
  double height = 0.0;    // camera height relative to the centre
  double centre_height = 0.9;  // aim point above the ground
  double field_of_view = 40.0;  // degrees, horizontal
  int width = 64;
  int height_px = 64;
  double azimuth_offset = 0.0;  // degrees
};

enum class CameraRole { Train, Holdout };

struct RigCamera {
  Camera camera;
  CameraRole role = CameraRole::Train;
  bool operator==(const RigCamera&) const = default;
};

/// Ring of cameras aimed at the rig centre. Holdout cameras sit midway in
/// azimuth between consecutive ring cameras, slightly higher.
std::vector<RigCamera> make_ring_rig(const RigConfig& config);

/// Azimuth of the camera's optical axis in the horizontal (xz) plane, radians.
double optical_axis_azimuth(const Camera& camera);

struct ViewImages {
  Image rgb;    // 3 channels
  Image mask;   // 1 channel
  Image depth;  // meters, 0 = background; empty when the dataset has no depth
  bool operator==(const ViewImages&) const = default;
};

struct DatasetFrame {
  int index = 0;
  SkeletonPose pose;
  std::vector<ViewImages> views;  // one per rig camera
};

struct Dataset {
  std::vector<RigCamera> cameras;
  Skeleton skeleton;
  std::string motion;
  int period = 30;
  std::optional<std::uint64_t> actor_seed;
  std::vector<DatasetFrame> frames;

  std::vector<int> train_views() const;
  std::vector<int> holdout_views() const;
  bool has_depth() const;
  /// Source views of one frame (RGB + mask + camera).
  std::vector<SourceView> source_views(int frame, const std::vector<int>& views) const;
};

struct DatagenConfig {
  std::uint64_t seed = 7;
  int frames = 2;
  std::string motion = "idle-sway";
  int period = 30;
  int first_frame = 0;
  RigConfig rig;
};

/// Renders the actor built from `seed` through the animation with the
/// analytic renderer. Images are quantized so that a disk round trip is exact.
Dataset generate_dataset(const DatagenConfig& config);

/// Rounds depth to millimetres (the on-disk resolution).
Image quantize_depth(const Image& depth);

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

std::string view_file_stem(int frame, int view);

}  // namespace hrf
