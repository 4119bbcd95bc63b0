#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spikemix/network.hpp"
#include "spikemix/runconfig.hpp"

namespace spikemix::infer {

// 32-bit inference tensor (row-major, like the training engine).
struct TensorF {
  Shape shape;
  std::vector<float> data;

  TensorF() = default;
  explicit TensorF(Shape s);
  static TensorF from(const Tensor& t);
  Tensor wide() const;

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }
};

// Exact per-layer operation counters from an instrumented run. A scalar
// product participates when its data operand is nonzero; it is classified
// real*binary when either operand is exactly 0.0 or 1.0 and real*real
// otherwise. Accumulating a zero product counts no addition, and real*real
// products are MACs (their fused add is not double-counted).
struct OpTrace {
  struct Layer {
    std::string name;
    uint64_t adds = 0;
    uint64_t mul_real_real = 0;
    uint64_t mul_real_binary = 0;
  };
  std::vector<Layer> layers;

  Layer& layer(const std::string& name);
  const Layer* find(const std::string& name) const;
  uint64_t total_adds() const;
  uint64_t total_mul_real_real() const;
  uint64_t total_mul_real_binary() const;
  void merge(const OpTrace& other);  // field-wise summation
};

// Per-site spike counts across a run; rate = spikes / elements where the
// element count already includes batch and simulation steps.
struct RunStats {
  struct Site {
    std::string name;
    uint64_t spikes = 0;
    uint64_t elements = 0;
    double rate() const { return elements ? static_cast<double>(spikes) / static_cast<double>(elements) : 0.0; }
  };
  std::vector<Site> sites;

  Site& site(const std::string& name);
  const Site* find(const std::string& name) const;
  double mean_rate() const;  // size-weighted
  void merge(const RunStats& other);
};

// Eval-mode batch norm as a per-channel affine; present only on unfolded
// models (folding absorbs it into the weights).
struct EvalBn {
  std::vector<float> scale, shift;
};

struct LinF {
  std::string name;
  int axis = 1;
  int64_t out_w = 0, in_w = 0;
  // Axial weights (height/width/spatial FCs) carry channel-wise BN, so their
  // fold expands to one weight block per channel; channel-axis FCs fold per
  // output row.
  bool per_channel = false;
  int64_t channels = 1;
  std::vector<float> w;     // [channels? x out x in]
  std::vector<float> bias;  // per channel (axial) or per output row
  std::optional<EvalBn> bn;
};

struct ConvF {
  std::string name;
  int64_t c_out = 0, c_in = 0;
  int k = 0, stride = 1, pad = 0;
  std::vector<float> w;  // [c_out x c_in x k x k]
  std::vector<float> bias;
  std::optional<EvalBn> bn;
};

struct MixerF {
  LinF wh, ww, wf, wc1, wc2;
};

struct SpeF {
  ConvF in1, in2, in3, e12, e23;
};

struct StageF {
  std::optional<SpeF> spe;
  std::vector<MixerF> mixers;
};

struct ModelF {
  bool folded = false;
  RunConfig run;
  ConvF patch;
  std::vector<StageF> stages;
  LinF head_fc;
  LinF classifier;

  const NetworkConfig& cfg() const { return run.net; }
};

// Casts a trained network down to the float model, folding BN when asked.
ModelF lower(Network& net, const RunConfig& run, bool folded);

void save_model(const ModelF& model, const std::string& path);
ModelF load_model(const std::string& path);

struct RunOptions {
  OpTrace* trace = nullptr;
  RunStats* stats = nullptr;
  // Replaces head pooling->classifier by classifier-per-position->pooling
  // (identical logits for a linear map); every classifier multiply then
  // consumes a spike.
  bool classifier_audit_mode = false;
  int t_steps = 0;  // 0: use the model's configured T
  // When set, every LIF site's spike tensor is appended (site name, spikes);
  // lets tests recount rates independently of the counters.
  std::vector<std::pair<std::string, TensorF>>* spike_dump = nullptr;
};

struct RunOutput {
  TensorF step_logits;  // [T*B, K]
  TensorF avg_logits;   // [B, K]
};

// images: [B,3,H,W]. The patch layer runs once per sample (its input is
// static across steps); everything downstream runs on time-stacked tensors.
RunOutput run(const ModelF& model, const TensorF& images, const RunOptions& opts = {});

// Dense per-sample-per-step accumulation slot counts (in-bounds only) plus
// the rate sites feeding each weighted layer; the s*T*A additions formula and
// the MAC accounting are built from this table.
struct DenseLayerInfo {
  std::string name;
  std::vector<std::string> input_sites;  // empty for real-valued inputs
  uint64_t accums = 0;
  bool real_input = false;
  bool once_per_sample = false;  // patch conv: static input, computed once
};
std::vector<DenseLayerInfo> dense_layer_info(const ModelF& model);

uint64_t conv_inbounds_accums(int64_t h, int64_t w, int k, int stride, int pad, int64_t c_in, int64_t c_out);

}  // namespace spikemix::infer
