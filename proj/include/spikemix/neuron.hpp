#pragma once

#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "spikemix/tape.hpp"

namespace spikemix {

// Leaky integrate-and-fire dynamics: decay input, hard threshold, hard reset.
//   u_pre = u + (z - u)/tau
//   y     = 1 if u_pre >= v_th else 0
//   u'    = (1 - y) * u_pre
// Backward substitutes the sigmoid surrogate k*s*(1-s), s = sigmoid(k*(u_pre
// - v_th)), for the firing function's derivative. `relaxed` switches the
// forward itself to y = sigmoid(k*(u_pre - v_th)); that twin is smooth
// end-to-end, which is what the finite-difference oracles differentiate.
struct LifParams {
  double tau = 2.0;
  double v_th = 1.0;
  double surrogate_slope = 4.0;
  bool detach_reset = true;  // treat the y inside (1-y)*u_pre as constant
  bool relaxed = false;

  void validate() const;
};

// Per-site spike accounting across a run: rate = spikes / elements, where
// elements already includes the simulation-step factor.
struct SpikeCounter {
  double spikes = 0.0;
  double elements = 0.0;
  double rate() const { return elements > 0 ? spikes / elements : 0.0; }
};

struct LifStepResult {
  Tensor y;       // binary spikes
  Tensor u_next;  // potential after reset
  Tensor u_pre;   // potential before threshold test
};

// Single hard-threshold step on plain tensors (no tape).
LifStepResult lif_step(const Tensor& u, const Tensor& z, const LifParams& p);

double sigmoid(double x);
// k * s * (1 - s) with s = sigmoid(k * (u_pre - v_th)), elementwise.
Tensor surrogate_factor(const Tensor& u_pre, const LifParams& p);
// upstream ⊙ surrogate_factor(u_pre): the gradient substituted for dy/du_pre.
Tensor lif_backward_rule(const Tensor& u_pre, const Tensor& upstream, const LifParams& p);

// Tape op: z is time-stacked [T*B, ...]; the site carries membrane state
// across the T blocks, starting from u = 0, and BPTT runs inside the node's
// backward rule. Spike counts are reported through `counter` when given.
Var lif_unrolled(Tape& t, Var z, int t_steps, const LifParams& p, SpikeCounter* counter = nullptr);

// Named spike-rate sink shared by a whole forward pass. Deque so that
// counter pointers stay valid while new sites register.
class RateRecorder {
 public:
  SpikeCounter* site(const std::string& name);
  double mean_rate() const;  // size-weighted: sum(spikes) / sum(elements)
  const std::deque<std::pair<std::string, SpikeCounter>>& sites() const { return sites_; }
  void reset();

 private:
  std::deque<std::pair<std::string, SpikeCounter>> sites_;
};

}  // namespace spikemix
