#pragma once

#include <optional>

#include "spikemix/layers.hpp"
#include "spikemix/neuron.hpp"

namespace spikemix {

// Long-range residual sources. PT/PC add the stage anchor (the patch or SPE
// BN state) into every token/channel block; TC adds the token output into its
// channel block; CT adds the previous mixer's carrier into the next token
// block. The main feedforward path always flows regardless of flags.
struct SkipFlags {
  bool pt = true;
  bool pc = true;
  bool tc = true;
  bool ct = false;
};

struct ForwardOpts {
  BnMode bn = BnMode::train;
  bool relaxed = false;        // smooth twin for finite-difference oracles
  bool detach_reset = true;
  bool binary_checks = true;   // verify weighted-op inputs are exact {0,1}
  RateRecorder* rates = nullptr;
};

// Throws if any element is not exactly 0 or 1. Active only when the pass has
// binary checks on (they are meaningless for the relaxed twin).
void require_binary(const Tensor& t, const std::string& where);

// Blocks exchange real-valued pre-activation carriers (BN-sum states); each
// block applies its own entry activation, so no tensor is thresholded twice
// and every weighted operation consumes spikes.
class TokenBlock {
 public:
  TokenBlock() = default;
  TokenBlock(int64_t channels, int64_t height, int64_t width, const std::string& prefix);

  // x: carrier [N,C,H,W]; anchor: stage anchor. Output same shape.
  Var forward(Tape& t, Var x, Var anchor, const SkipFlags& skips, const LifParams& lif, int t_steps,
              const ForwardOpts& opts);

  LinearLayer w_h, w_w, w_f;
  BatchNorm bn_h, bn_w, bn_f;
  std::string site_entry, site_h, site_w;
};

class ChannelBlock {
 public:
  ChannelBlock() = default;
  ChannelBlock(int64_t channels, int alpha, const std::string& prefix);

  Var forward(Tape& t, Var x, Var anchor, const SkipFlags& skips, const LifParams& lif, int t_steps,
              const ForwardOpts& opts);

  LinearLayer w_c1, w_c2;
  BatchNorm bn_c1, bn_c2;
  std::string site_entry, site_hidden;
};

// Three-node DAG downsampling cell. Nodes share the incoming spikes through
// stride-2 convs; edges (1,2) and (2,3) are stride-1 convs on node spikes;
// edge (1,3) is an identity that carries node 1's BN state, so every addition
// happens on BN states and every multiply consumes spikes.
class SpeCell {
 public:
  SpeCell() = default;
  SpeCell(int64_t c_in, int64_t c_out, const std::string& prefix);

  struct Out {
    Var anchor;               // concat of the three BN-state nodes
    Var spikes;               // concat of the three node spike maps
  };
  // spikes_in must be binary [N,Cin,H,W]; emit_spikes controls whether the
  // node-spike concat is materialized (the assembled network lets the next
  // consumer's entry activation reproduce it instead).
  Out forward(Tape& t, Var spikes_in, const LifParams& lif, int t_steps, const ForwardOpts& opts,
              bool emit_spikes = false);

  Conv2dLayer in1, in2, in3, edge12, edge23;
  BatchNorm bn_in1, bn_in2, bn_in3, bn_e12, bn_e23;
  std::string site_node1, site_node2, site_node3;
};

// Stage-1 patch partition: non-overlapping p x p patches via conv with
// kernel = stride = p, then BN. The only layer fed real-valued inputs.
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(int64_t c_out, int patch, const std::string& prefix);

  struct Out {
    Var anchor;
    Var spikes;  // only materialized on request
  };
  Out forward(Tape& t, Var image, const LifParams& lif, int t_steps, const ForwardOpts& opts,
              bool emit_spikes = false);

  Conv2dLayer conv;
  BatchNorm bn;
};

// Spiking classification head: spatial FC over the flattened spatial
// dimension with BN and LIF, global average pool over spatial, then a
// bias-free linear classifier.
class Head {
 public:
  Head() = default;
  Head(int64_t channels, int64_t spatial, int64_t num_classes, const std::string& prefix);

  // x: final carrier [N,C,H,W]; returns logits [N,K].
  Var forward(Tape& t, Var x, const LifParams& lif, int t_steps, const ForwardOpts& opts);

  LinearLayer w_hw;
  BatchNorm bn;
  LinearLayer classifier;
  std::string site_entry, site_hidden;
};

}  // namespace spikemix
