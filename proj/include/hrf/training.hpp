#pragma once

#include "hrf/blending.hpp"
#include "hrf/checkpoint.hpp"
#include "hrf/config.hpp"
#include "hrf/dataset.hpp"

#include <functional>
#include <optional>

namespace hrf {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr double kMaskEpsilon = 1e-6;

/// Mean over rays of the squared RGB error.
template <typename Scalar>
Var<Scalar> color_loss(const Var<Scalar>& rendered, const Matrix<Scalar>& target);

/// Mean over rays of BCE(target mask, alpha) with alpha clamped to
/// [eps, 1 - eps]; no gradient flows through the clamp.
template <typename Scalar>
Var<Scalar> mask_loss(const Var<Scalar>& alpha, const Matrix<Scalar>& mask);

struct LogRecord {
  std::string stage;
  std::int64_t step = 0;
  double color = 0.0;
  double mask = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  double lr = 0.0;
  std::optional<double> validation_psnr;
};

std::string to_json_line(const LogRecord& record);

using LogFn = std::function<void(const LogRecord&)>;

struct TrainOptions {
  std::int64_t stop_at = -1;  // stop early at this stage step (resumable)
  LogFn log;
  std::filesystem::path dump_dir;  // where a non-finite batch is written
  int validate_every = 0;          // render a validation view every n steps
};

/// Fresh model initialized from config.seed.
Checkpoint initial_checkpoint(const TrainConfig& config);

/// Throws TrainingError when the checkpoint's architecture differs from config.model.
void check_compatible(const Checkpoint& ckpt, const TrainConfig& config);

/// Jointly trains the encoder, view blending, deformation and field networks.
void train_generalizable(Checkpoint& ckpt, const std::vector<const Dataset*>& subjects, const TrainConfig& config,
                         const TrainOptions& options = {});

/// Per-subject optimization of the deformation and field networks; the
/// view blending network stays frozen, the encoder unless finetune_encoder.
void finetune(Checkpoint& ckpt, const Dataset& subject, const TrainConfig& config, const TrainOptions& options = {});

/// Optimizes only the appearance blending network on colour loss, using
/// ground-truth depth for warping. Needs a dataset with depth.
void train_blending(Checkpoint& ckpt, const Dataset& dataset, const TrainConfig& config,
                    const TrainOptions& options = {});

/// Feature sources for a target: every training camera when K covers them
/// (target included), otherwise K training cameras other than the target,
/// evenly spread. target = -1 for a camera outside the training set.
std::vector<int> select_sources(const Dataset& dataset, int source_views, int target);

FrameContext frame_context(const Dataset& dataset, int frame, const std::vector<int>& sources,
                           const TrainConfig& config);

/// Volume rendering of one dataset frame from an arbitrary camera.
RenderedView render_frame_view(const HumanModel<float>& model, const Dataset& dataset, int frame,
                               const Camera& camera, const std::vector<int>& sources, const TrainConfig& config);

/// Volume rendering refined by appearance blending. Target and source
/// depths come from the radiance field.
Image blend_frame_view(const HumanModel<float>& model, const Dataset& dataset, int frame, const Camera& camera,
                       const std::vector<int>& sources, const RenderedView& volume, const TrainConfig& config);

/// Ground-truth-depth blending inputs for every foreground pixel of one
/// training view. Sources exclude the target when leave_one_out is set.
struct BlendExample {
  RenderedView volume;
  std::vector<Eigen::Vector2i> pixels;
  BlendInputs<float> inputs;
  Matrix<float> target;  // ground-truth colour per pixel
  int first_view = -1;
  int second_view = -1;
};

BlendExample blend_example(const HumanModel<float>& model, const Dataset& dataset, int frame, int target,
                           bool leave_one_out, const TrainConfig& config);

/// Blended colours for prepared inputs.
Matrix<float> apply_blend(const HumanModel<float>& model, const BlendInputs<float>& inputs);

}  // namespace hrf
