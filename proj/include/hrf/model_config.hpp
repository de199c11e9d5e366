#pragma once

namespace hrf {

/// Widths and encodings of the five networks. Defaults follow the full-size
/// architecture; desk-scale runs shrink the widths.
struct ModelConfig {
  int joints = 24;
  int feature_channels = 32;
  int encoder_width = 32;      // first encoder stage; later stages double
  int view_blend_width = 256;  // feature blending network
  int deform_width = 256;      // deformation network
  int field_width = 256;       // radiance field trunk
  int appearance_width = 256;  // appearance blending network
  int position_frequencies = 10;
  int direction_frequencies = 4;
  int distance_frequencies = 4;
  double max_displacement = 0.05;  // meters
  bool deform_uses_features = true;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace hrf
