#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "sattn/hybrid_layer.hpp"
#include "sattn/streaming.hpp"
#include "sattn/tensor.hpp"

namespace sattn {

enum class Optimizer { sgd_momentum, adam };
std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

/// Named references to the tensors a training run may update. Frozen tensors
/// (the pretrained projections, and feedforward weights outside stage 2) are
/// never members; asking for one throws.
struct TrainableSet {
  std::vector<std::pair<std::string, Tensor*>> entries;

  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name) const;
  std::size_t total_params() const;
};

/// Stage 1 trains only the state-side parameters: feature maps, fusion gate,
/// and the forget/write predictors. The projections stay frozen.
TrainableSet stage1_trainables(HybridLayer& layer);

/// Stage 2 additionally trains the feedforward weights of every hybrid
/// layer. Softmax layers stay frozen entirely.
TrainableSet stage2_trainables(ToyModel& model);

struct GradResult {
  double loss = 0.0;
  std::vector<std::pair<std::string, Tensor>> grads;
  const Tensor& grad(const std::string& name) const;
};

/// Mean squared output gap between the hybrid layer and the softmax teacher
/// reading its cache, normalized by L*d. Teacher and student must share the
/// frozen projections and sit at the same streaming position.
double alignment_loss(const HybridLayer& student, const ProjectionSet& teacher_proj,
                      const KVCache& teacher_cache, const Tensor& x_t, long frame_index);

/// Commits each history frame to a fresh cache with the given projections.
KVCache build_teacher_cache(const ProjectionSet& proj, const std::vector<Tensor>& history);

/// Rebuilds the student state and the teacher cache from the same clean
/// history, then evaluates alignment_loss at x_t (frame index = history
/// length). The student argument is not modified.
double alignment_loss_from_history(const HybridLayer& student,
                                   const std::vector<Tensor>& history, const Tensor& x_t);

/// Squared L2 gap between the two models' velocities at the same input and
/// current streaming position.
double joint_loss(ToyModel& student, ToyModel& teacher, const Tensor& x_t, double t,
                  const Tensor& c);

/// Clones both models, streams the same clean history through each, then
/// evaluates joint_loss.
double joint_loss_from_history(const ToyModel& student, const ToyModel& teacher,
                               const std::vector<Tensor>& history, const Tensor& x_t, double t,
                               const Tensor& c);

/// Exact reverse-mode gradients of alignment_loss with respect to the
/// stage-1 trainables, differentiating through the state recurrence across
/// every history token.
GradResult alignment_gradients(const HybridLayer& student, const std::vector<Tensor>& history,
                               const Tensor& x_t);

/// Exact reverse-mode gradients of joint_loss with respect to the stage-2
/// trainables, differentiating through the student's history streaming
/// (state writes and cache builds included).
GradResult joint_gradients(const ToyModel& student, const ToyModel& teacher,
                           const std::vector<Tensor>& history, const Tensor& x_t, double t,
                           const Tensor& c);

struct Stage1Config {
  std::size_t tokens = 4;
  std::size_t history_frames = 2;
  std::size_t batch_size = 1;
  std::size_t steps = 500;
  double lr = 0.1;
  double momentum = 0.9;
  Optimizer optimizer = Optimizer::sgd_momentum;
  std::uint64_t seed = 0;
};

struct JointConfig {
  std::size_t history_frames = 2;
  std::size_t batch_size = 1;
  std::size_t steps = 200;
  double lr = 0.01;
  double momentum = 0.9;
  Optimizer optimizer = Optimizer::sgd_momentum;
  std::uint64_t seed = 0;
  double timestep = 0.5;
};

struct TrainRun {
  std::size_t steps = 0;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  /// Batch loss before each update; with lr = 0 the trace is constant.
  std::vector<double> loss_trace;
  /// Batch loss after the last update.
  double final_loss = 0.0;

  /// Columns: step, loss, loss_min_so_far (monotone envelope).
  void write_csv(std::ostream& os) const;
};

/// Gradient descent on alignment_loss against the layer's own frozen
/// projections as the teacher. The sampler draws everything once from the
/// seed: a fixed conditioning vector, a fixed clean history, and a fixed
/// batch of noisy latents; each step descends the mean batch loss. Throws if
/// the loss diverges, naming the step.
TrainRun train_stage1(HybridLayer& layer, const Stage1Config& cfg);

/// Gradient descent on joint_loss over the stage-2 trainables. The teacher
/// is frozen; sampling mirrors train_stage1.
TrainRun train_joint(ToyModel& student, const ToyModel& teacher, const JointConfig& cfg);

}  // namespace sattn
