#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "spikemix/blocks.hpp"

namespace spikemix {

struct NetworkConfig {
  int c1 = 12;
  std::vector<int> stage_layers = {1, 1};  // mixers per stage
  int alpha = 3;
  int patch_size = 4;
  int img_h = 32;
  int img_w = 32;
  int num_classes = 2;
  int t_steps = 4;
  double tau = 2.0;
  double v_th = 1.0;
  double surrogate_slope = 4.0;
  SkipFlags skips;
  uint64_t seed = 1;

  int stages() const { return static_cast<int>(stage_layers.size()); }
  int stage_channels(int s) const { return c1 << s; }
  LifParams lif() const { return LifParams{tau, v_th, surrogate_slope, true, false}; }
  // architecture equality, simulation length excluded (checkpoints reload
  // under a different T)
  bool same_architecture(const NetworkConfig& o) const;
};

void validate(const NetworkConfig& cfg);

// Closed-form parameter count; Network::parameter_count() is the independent
// enumeration path.
int64_t count_params(const NetworkConfig& cfg);

struct Mixer {
  TokenBlock token;
  ChannelBlock channel;
};

struct Stage {
  std::optional<SpeCell> spe;  // absent for stage 1
  std::vector<Mixer> mixers;
  int channels = 0;
  int height = 0, width = 0;
};

class Network {
 public:
  explicit Network(NetworkConfig cfg);  // builds and initializes from cfg.seed

  // images: [B, 3, H, W]; runs T sequential passes with shared weights using
  // the time-stacked carrier layout; returns per-step logits [T*B, K].
  Var forward(Tape& t, const Tensor& images, int t_steps, const ForwardOpts& opts);
  Var forward(Tape& t, const Tensor& images, const ForwardOpts& opts) {
    return forward(t, images, cfg_.t_steps, opts);
  }

  const NetworkConfig& config() const { return cfg_; }
  void set_t_steps(int t) { cfg_.t_steps = t; }

  std::vector<std::pair<std::string, Parameter*>>& parameters() { return params_; }
  // BN running statistics, ordered
  std::vector<std::pair<std::string, Tensor*>>& buffers() { return buffers_; }
  Parameter* find_parameter(const std::string& name);
  int64_t parameter_count() const;
  void zero_grad();

  PatchEmbed& patch() { return patch_; }
  std::vector<Stage>& stages() { return stages_; }
  const std::vector<Stage>& stages() const { return stages_; }
  Head& head() { return head_; }

 private:
  void collect();
  void init_parameters();

  NetworkConfig cfg_;
  PatchEmbed patch_;
  std::vector<Stage> stages_;
  Head head_;
  std::vector<std::pair<std::string, Parameter*>> params_;
  std::vector<std::pair<std::string, Tensor*>> buffers_;
};

// argmax over the class axis of time-averaged logits [T*B, K] -> [B]
std::vector<int> predict_classes(const Tensor& step_logits, int t_steps);

}  // namespace spikemix
