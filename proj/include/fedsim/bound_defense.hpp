#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

// Adaptive multiplier for the bound Lagrangian. lambda is represented as
// lambda0 * alpha^exponent so the ledger identity holds exactly: exponent is
// the running ups - downs count.
struct LambdaController {
  double lambda0 = 1.0;
  double alpha = 1.1;
  double delta_pi = 0.10;
  double reference_acc = 0.0;  // unbounded synthetic accuracy, refreshed per round
  int ups = 0;
  int downs = 0;

  double lambda() const { return lambda0 * std::pow(alpha, ups - downs); }
};

struct BoundOptReport {
  int iterations = 0;
  std::vector<double> h_values;          // H at the start of each iteration
  std::vector<double> bounded_acc;       // synthetic accuracy after each step
  double reference_acc = 0.0;
  double final_lambda = 0.0;
  int ups = 0;    // cumulative across the run
  int downs = 0;
  std::map<int, double> bound_norms;     // final ||z_l||_2 per layer
};

// H(Z, lambda) = mean over (x, c) of [g_bar_c(x;Z) - g_c(x)]^2
//             + lambda * sum_l ||z_l||_2,
// with the unbounded logits passed in as fixed targets.
double lagrangian(const MlpModel& model, const BoundSet& bounds, const LabeledDataset& d_syn,
                  double lambda, const Eigen::Ref<const Matrix>& target_logits);

// Fraction of d_syn classified to its (possibly poisoned) label; bounded when
// bounds is non-null. Empty datasets are a configuration error.
double synthetic_accuracy(const MlpModel& model, const BoundSet* bounds,
                          const LabeledDataset& d_syn);

// One defense pass: iters gradient steps on Z with projection to z >= 0,
// each followed by the multiplier update (drop <= delta_pi ? tighten :
// relax). Model parameters are never touched; bounds and the controller are
// warm-started across rounds by the caller.
BoundOptReport optimize_bounds(const MlpModel& model, BoundSet& bounds,
                               const LabeledDataset& d_syn, LambdaController& controller,
                               int iters, double lr);

enum class BoundInit { Constant, ActivationMax };

// Constant: every entry = value. ActivationMax: per-neuron max post-ReLU
// activation over d_syn times margin. Both leave every clamp inactive on
// d_syn. bounded_layers lists the 1-based hidden layers to constrain.
BoundSet init_bounds(const MlpModel& model, const std::vector<int>& bounded_layers,
                     BoundInit strategy, double value_or_margin, const LabeledDataset* d_syn);

}  // namespace fedsim
