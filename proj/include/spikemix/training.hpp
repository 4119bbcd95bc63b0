#pragma once

#include <string>
#include <vector>

#include "spikemix/checkpoint.hpp"
#include "spikemix/data.hpp"
#include "spikemix/network.hpp"
#include "spikemix/rng.hpp"
#include "spikemix/runconfig.hpp"

namespace spikemix {

// Softmax cross-entropy over [B,K] logits, mean over the batch.
Var softmax_cross_entropy(Tape& t, Var logits, const std::vector<int>& targets);

// Per-step logits [T*B,K] are averaged over the T step blocks first, then fed
// to softmax cross-entropy.
Var time_averaged_ce(Tape& t, Var step_logits, int t_steps, const std::vector<int>& targets);

// lr(step) = lr0/2 * (1 + cos(pi * step/total))
double cosine_lr(int64_t step, int64_t total, double lr0);

struct SgdState {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::vector<Tensor> velocity;  // parallel to the parameter list
  int64_t step = 0;
  int64_t total_steps = 0;
  int epoch = 0;

  void init(const std::vector<std::pair<std::string, Parameter*>>& params);
};

// v <- mu*v + g ; w <- w - lr*v. Aborts with the parameter's name on a
// non-finite gradient.
void sgd_step(std::vector<std::pair<std::string, Parameter*>>& params, SgdState& state, double lr);

// image augmentation primitives ([C,H,W])
Tensor hflip_image(const Tensor& img);
Tensor pad_crop_image(const Tensor& img, int pad, int dy, int dx);
// random pad-and-crop plus probability-0.5 horizontal flip
Tensor augment_image(const Tensor& img, int pad, Rng& rng);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double eval_acc = 0.0;
  double spike_rate = 0.0;
};

std::string format_metrics_line(const EpochRecord& r);

struct TrainResult {
  std::vector<EpochRecord> history;
  OptimizerSnapshot optimizer;
};

// Epoch loop: zero grads -> forward T steps -> time-averaged CE -> backward
// -> SGD with per-step cosine schedule. Deterministic under a fixed seed.
// Appends one metrics line per epoch to metrics_path when non-empty.
TrainResult train_network(Network& net, const Dataset& train, const Dataset& eval, const RunConfig& cfg,
                          const std::string& metrics_path = "");

// top-1 accuracy from time-averaged logits, eval-mode BN
double evaluate(Network& net, const Dataset& data, int batch_size = 32);

}  // namespace spikemix
