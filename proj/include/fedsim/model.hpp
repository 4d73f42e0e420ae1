#pragma once

#include <map>
#include <utility>
#include <vector>

#include "fedsim/numeric.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct DenseLayer {
  Matrix W;  // [out x in]
  Vector b;  // [out]
};

// ReLU MLP classifier: hidden layers 1..L, linear head on top.
struct MlpModel {
  int prototype_id = 0;
  std::vector<DenseLayer> hidden;
  DenseLayer head;

  int input_dim() const { return static_cast<int>(hidden.front().W.cols()); }
  int num_classes() const { return static_cast<int>(head.W.rows()); }
  int num_hidden() const { return static_cast<int>(hidden.size()); }
  // Width of hidden layer l, 1-based.
  int layer_width(int l) const { return static_cast<int>(hidden[static_cast<std::size_t>(l - 1)].W.rows()); }
};

// He-normal weights, zero biases.
MlpModel make_mlp(int prototype_id, int input_dim, const std::vector<int>& hidden_widths,
                  int classes, Rng& rng);

// Per-layer activation upper bounds over the bounded layer set. Keys are
// 1-based hidden layer indices; entries are kept >= 0 by projection.
struct BoundSet {
  std::map<int, Vector> bounds;

  bool empty() const { return bounds.empty(); }
  std::vector<int> layers() const {
    std::vector<int> out;
    out.reserve(bounds.size());
    for (const auto& [l, z] : bounds) out.push_back(l);
    return out;
  }
};

struct ForwardTrace {
  std::vector<Matrix> pre;         // pre-activations per hidden layer
  std::vector<Matrix> post_relu;   // after ReLU
  std::vector<Matrix> post_clamp;  // after min(., z_l); equals post_relu off the bounded set
  std::vector<BoolArray> clamp_mask;  // true where z_l < post_relu (strict; ties go to the activation)
  Matrix logits;
};

// Unbounded logits g_c(x).
Matrix forward(const MlpModel& model, const Eigen::Ref<const Matrix>& x);

// Bounded logits plus the trace needed for backprop through the clamps.
std::pair<Matrix, ForwardTrace> forward_bounded(const MlpModel& model, const BoundSet& bounds,
                                                const Eigen::Ref<const Matrix>& x);

struct ParamGrads {
  std::vector<DenseLayer> hidden;
  DenseLayer head;
};

// Gradient of mean cross-entropy over the batch w.r.t. all parameters.
ParamGrads backward_params(const MlpModel& model, const Eigen::Ref<const Matrix>& x,
                           const std::vector<int>& labels);

// Soft-target variant: gradient of mean CE(targets || softmax(logits)), which
// shares its gradient with KL(targets || softmax(logits)).
ParamGrads backward_params_soft(const MlpModel& model, const Eigen::Ref<const Matrix>& x,
                                const Eigen::Ref<const Matrix>& target_probs);

// Gradient of H(Z, lambda) w.r.t. each z_l, with target_logits treated as
// constants. H averages the squared logit gap over batch x classes and adds
// lambda * sum_l ||z_l||_2.
std::map<int, Vector> backward_bounds(const MlpModel& model, const BoundSet& bounds,
                                      const Eigen::Ref<const Matrix>& x,
                                      const Eigen::Ref<const Matrix>& target_logits, double lambda);

void sgd_step(MlpModel& model, const ParamGrads& grads, double lr);
// Bound update followed by projection onto z >= 0.
void sgd_step(BoundSet& bounds, const std::map<int, Vector>& grads, double lr);

// Order-stable bijective serialization of all parameters.
Vector flatten_params(const MlpModel& model);
MlpModel unflatten_params(const Vector& flat, const MlpModel& reference);
Eigen::Index param_count(const MlpModel& model);

}  // namespace fedsim
