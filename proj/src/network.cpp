#include "spikemix/network.hpp"

#include <cmath>

#include "spikemix/names.hpp"
#include "spikemix/rng.hpp"

namespace spikemix {

bool NetworkConfig::same_architecture(const NetworkConfig& o) const {
  return c1 == o.c1 && stage_layers == o.stage_layers && alpha == o.alpha && patch_size == o.patch_size &&
         img_h == o.img_h && img_w == o.img_w && num_classes == o.num_classes;
}

void validate(const NetworkConfig& cfg) {
  if (cfg.stage_layers.empty()) throw ConfigError("config: stage_layers must name at least one stage");
  for (int l : cfg.stage_layers)
    if (l < 1) throw ConfigError("config: stage_layers entries must be >= 1");
  if (cfg.c1 < 1) throw ConfigError("config: c1 must be positive");
  if (cfg.stages() > 1 && cfg.c1 % 3 != 0)
    throw ConfigError("config: c1 must be divisible by 3 when SPE stages exist (c1=" + std::to_string(cfg.c1) + ")");
  if (cfg.patch_size < 1) throw ConfigError("config: patch_size must be positive");
  const int div = cfg.patch_size << (cfg.stages() - 1);
  if (cfg.img_h % div != 0 || cfg.img_w % div != 0)
    throw ConfigError("config: img_size " + std::to_string(cfg.img_h) + "x" + std::to_string(cfg.img_w) +
                      " must be divisible by patch_size*2^(stages-1) = " + std::to_string(div));
  if (cfg.alpha < 1) throw ConfigError("config: alpha must be >= 1");
  if (cfg.num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
  if (cfg.t_steps < 1) throw ConfigError("config: t_steps must be >= 1");
  cfg.lif().validate();
}

int64_t count_params(const NetworkConfig& cfg) {
  validate(cfg);
  int64_t total = 0;
  total += static_cast<int64_t>(cfg.c1) * 3 * cfg.patch_size * cfg.patch_size + 2 * cfg.c1;
  int64_t h = cfg.img_h / cfg.patch_size;
  int64_t w = cfg.img_w / cfg.patch_size;
  for (int s = 0; s < cfg.stages(); ++s) {
    int64_t c = cfg.stage_channels(s);
    if (s > 0) {
      h /= 2;
      w /= 2;
      const int64_t node = c / 3;
      const int64_t c_in = c / 2;
      total += 3 * (node * c_in * 9 + 2 * node);  // input convs + bns
      total += 2 * (node * node * 9 + 2 * node);  // edge convs + bns
    }
    const int64_t token = h * h + w * w + 2 * c + 2 * c        // axial weights + their bns
                          + 3 * c * c + 2 * c;                 // fusion + bn
    const int64_t chan = static_cast<int64_t>(cfg.alpha) * c * c + 2 * cfg.alpha * c  // expand + bn
                         + static_cast<int64_t>(cfg.alpha) * c * c + 2 * c;           // restore + bn
    total += cfg.stage_layers[static_cast<size_t>(s)] * (token + chan);
  }
  const int64_t c_last = cfg.stage_channels(cfg.stages() - 1);
  const int64_t hw = h * w;
  total += hw * hw + 2 * c_last;                              // head fc + bn
  total += static_cast<int64_t>(cfg.num_classes) * c_last;    // classifier
  return total;
}

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  patch_ = PatchEmbed(cfg_.c1, cfg_.patch_size, "patch");
  int64_t h = cfg_.img_h / cfg_.patch_size;
  int64_t w = cfg_.img_w / cfg_.patch_size;
  for (int s = 0; s < cfg_.stages(); ++s) {
    Stage st;
    st.channels = cfg_.stage_channels(s);
    if (s > 0) {
      h /= 2;
      w /= 2;
      st.spe.emplace(st.channels / 2, st.channels, names::spe(s));
    }
    st.height = static_cast<int>(h);
    st.width = static_cast<int>(w);
    for (int m = 0; m < cfg_.stage_layers[static_cast<size_t>(s)]; ++m) {
      Mixer mx;
      mx.token = TokenBlock(st.channels, h, w, names::token(s, m));
      mx.channel = ChannelBlock(st.channels, cfg_.alpha, names::channel(s, m));
      st.mixers.push_back(std::move(mx));
    }
    stages_.push_back(std::move(st));
  }
  const int64_t c_last = cfg_.stage_channels(cfg_.stages() - 1);
  head_ = Head(c_last, h * w, cfg_.num_classes, "head");
  collect();
  init_parameters();
}

void Network::collect() {
  params_.clear();
  buffers_.clear();
  auto add_p = [&](Parameter& p) { params_.emplace_back(p.name, &p); };
  auto add_bn = [&](BatchNorm& bn, const std::string& name) {
    params_.emplace_back(bn.gamma.name, &bn.gamma);
    params_.emplace_back(bn.beta.name, &bn.beta);
    buffers_.emplace_back(name + ".running_mean", &bn.running_mean);
    buffers_.emplace_back(name + ".running_var", &bn.running_var);
  };
  add_p(patch_.conv.kernel);
  add_bn(patch_.bn, names::patch_bn());
  for (int s = 0; s < cfg_.stages(); ++s) {
    Stage& st = stages_[static_cast<size_t>(s)];
    if (st.spe) {
      SpeCell& c = *st.spe;
      add_p(c.in1.kernel);
      add_bn(c.bn_in1, names::spe(s) + ".bn_in1");
      add_p(c.in2.kernel);
      add_bn(c.bn_in2, names::spe(s) + ".bn_in2");
      add_p(c.in3.kernel);
      add_bn(c.bn_in3, names::spe(s) + ".bn_in3");
      add_p(c.edge12.kernel);
      add_bn(c.bn_e12, names::spe(s) + ".bn_e12");
      add_p(c.edge23.kernel);
      add_bn(c.bn_e23, names::spe(s) + ".bn_e23");
    }
    for (size_t m = 0; m < st.mixers.size(); ++m) {
      Mixer& mx = st.mixers[m];
      add_p(mx.token.w_h.weight);
      add_bn(mx.token.bn_h, names::token(s, static_cast<int>(m)) + ".bn_h");
      add_p(mx.token.w_w.weight);
      add_bn(mx.token.bn_w, names::token(s, static_cast<int>(m)) + ".bn_w");
      add_p(mx.token.w_f.weight);
      add_bn(mx.token.bn_f, names::token(s, static_cast<int>(m)) + ".bn_f");
      add_p(mx.channel.w_c1.weight);
      add_bn(mx.channel.bn_c1, names::channel(s, static_cast<int>(m)) + ".bn_c1");
      add_p(mx.channel.w_c2.weight);
      add_bn(mx.channel.bn_c2, names::channel(s, static_cast<int>(m)) + ".bn_c2");
    }
  }
  add_p(head_.w_hw.weight);
  add_bn(head_.bn, "head.bn");
  add_p(head_.classifier.weight);
}

void Network::init_parameters() {
  Rng rng(cfg_.seed);
  for (auto& [name, p] : params_) {
    Tensor& v = p->value;
    const Shape& s = v.shape();
    if (s.size() == 1) continue;  // BN affine keeps gamma=1, beta=0
    int64_t fan_in = 1;
    for (size_t i = 1; i < s.size(); ++i) fan_in *= s[i];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int64_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
  }
}

Parameter* Network::find_parameter(const std::string& name) {
  for (auto& [n, p] : params_)
    if (n == name) return p;
  return nullptr;
}

int64_t Network::parameter_count() const {
  int64_t total = 0;
  for (const auto& [n, p] : params_) total += p->value.size();
  return total;
}

void Network::zero_grad() {
  for (auto& [n, p] : params_) p->zero_grad();
}

Var Network::forward(Tape& t, const Tensor& images, int t_steps, const ForwardOpts& opts) {
  if (t_steps < 1) throw ConfigError("forward: t_steps must be >= 1");
  if (images.rank() != 4 || images.dim(1) != 3)
    throw ShapeError("forward: expected images [B,3,H,W], got " + shape_str(images.shape()));
  if (images.dim(2) != cfg_.img_h || images.dim(3) != cfg_.img_w)
    throw ShapeError("forward: image size " + std::to_string(images.dim(2)) + "x" + std::to_string(images.dim(3)) +
                     " does not match configured " + std::to_string(cfg_.img_h) + "x" + std::to_string(cfg_.img_w));
  const LifParams lif = cfg_.lif();
  Var img = t.input(tile_rows(images, t_steps));
  Var x = patch_.forward(t, img, lif, t_steps, opts).anchor;
  for (int s = 0; s < cfg_.stages(); ++s) {
    Stage& st = stages_[static_cast<size_t>(s)];
    if (st.spe) {
      // stage exit: threshold the carrier into spikes for the SPE convs
      SpikeCounter* c = opts.rates ? opts.rates->site(names::spe_entry(s)) : nullptr;
      LifParams p = lif;
      p.relaxed = opts.relaxed;
      p.detach_reset = opts.detach_reset;
      Var spikes = lif_unrolled(t, x, t_steps, p, c);
      x = st.spe->forward(t, spikes, lif, t_steps, opts).anchor;
    }
    Var anchor = x;
    for (Mixer& mx : st.mixers) {
      Var token_out = mx.token.forward(t, x, anchor, cfg_.skips, lif, t_steps, opts);
      x = mx.channel.forward(t, token_out, anchor, cfg_.skips, lif, t_steps, opts);
    }
  }
  return head_.forward(t, x, lif, t_steps, opts);
}

std::vector<int> predict_classes(const Tensor& step_logits, int t_steps) {
  if (step_logits.rank() != 2 || step_logits.dim(0) % t_steps != 0)
    throw ShapeError("predict: logits must be [T*B, K]");
  const int64_t rows = step_logits.dim(0);
  const int64_t B = rows / t_steps;
  const int64_t K = step_logits.dim(1);
  std::vector<int> out(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    int best = 0;
    double best_v = -1e300;
    for (int64_t k = 0; k < K; ++k) {
      double v = 0.0;
      for (int tstep = 0; tstep < t_steps; ++tstep) v += step_logits[(tstep * B + b) * K + k];
      if (v > best_v) {
        best_v = v;
        best = static_cast<int>(k);
      }
    }
    out[static_cast<size_t>(b)] = best;
  }
  return out;
}

}  // namespace spikemix
