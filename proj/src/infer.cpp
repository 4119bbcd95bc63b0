#include "spikemix/infer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "spikemix/binio.hpp"
#include "spikemix/layers.hpp"
#include "spikemix/names.hpp"

namespace spikemix::infer {

TensorF::TensorF(Shape s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_size(shape)), 0.0f);
}

TensorF TensorF::from(const Tensor& t) {
  TensorF out;
  out.shape = t.shape();
  out.data.resize(static_cast<size_t>(t.size()));
  for (int64_t i = 0; i < t.size(); ++i) out.data[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  return out;
}

Tensor TensorF::wide() const {
  Tensor out(shape);
  for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<double>(data[static_cast<size_t>(i)]);
  return out;
}

OpTrace::Layer& OpTrace::layer(const std::string& name) {
  for (auto& l : layers)
    if (l.name == name) return l;
  layers.push_back(Layer{name, 0, 0, 0});
  return layers.back();
}

const OpTrace::Layer* OpTrace::find(const std::string& name) const {
  for (const auto& l : layers)
    if (l.name == name) return &l;
  return nullptr;
}

uint64_t OpTrace::total_adds() const {
  uint64_t n = 0;
  for (const auto& l : layers) n += l.adds;
  return n;
}
uint64_t OpTrace::total_mul_real_real() const {
  uint64_t n = 0;
  for (const auto& l : layers) n += l.mul_real_real;
  return n;
}
uint64_t OpTrace::total_mul_real_binary() const {
  uint64_t n = 0;
  for (const auto& l : layers) n += l.mul_real_binary;
  return n;
}

void OpTrace::merge(const OpTrace& other) {
  for (const auto& l : other.layers) {
    Layer& mine = layer(l.name);
    mine.adds += l.adds;
    mine.mul_real_real += l.mul_real_real;
    mine.mul_real_binary += l.mul_real_binary;
  }
}

RunStats::Site& RunStats::site(const std::string& name) {
  for (auto& s : sites)
    if (s.name == name) return s;
  sites.push_back(Site{name, 0, 0});
  return sites.back();
}

const RunStats::Site* RunStats::find(const std::string& name) const {
  for (const auto& s : sites)
    if (s.name == name) return &s;
  return nullptr;
}

double RunStats::mean_rate() const {
  uint64_t sp = 0, el = 0;
  for (const auto& s : sites) {
    sp += s.spikes;
    el += s.elements;
  }
  return el ? static_cast<double>(sp) / static_cast<double>(el) : 0.0;
}

void RunStats::merge(const RunStats& other) {
  for (const auto& s : other.sites) {
    Site& mine = site(s.name);
    mine.spikes += s.spikes;
    mine.elements += s.elements;
  }
}

// ---------------------------------------------------------------------------
// lowering

namespace {

std::vector<float> narrow(const Tensor& t) {
  std::vector<float> out(static_cast<size_t>(t.size()));
  for (int64_t i = 0; i < t.size(); ++i) out[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  return out;
}

void bn_factors(const BatchNorm& bn, std::vector<double>& scale, std::vector<double>& shift) {
  const int64_t C = bn.channels();
  scale.resize(static_cast<size_t>(C));
  shift.resize(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    const double s = bn.gamma.value[c] / std::sqrt(bn.running_var[c] + bn.eps);
    scale[static_cast<size_t>(c)] = s;
    shift[static_cast<size_t>(c)] = bn.beta.value[c] - s * bn.running_mean[c];
  }
}

EvalBn eval_bn_of(const BatchNorm& bn) {
  std::vector<double> scale, shift;
  bn_factors(bn, scale, shift);
  EvalBn out;
  out.scale.assign(scale.begin(), scale.end());
  out.shift.assign(shift.begin(), shift.end());
  return out;
}

// channel-axis FC: BN channel == output row
LinF lower_channel_lin(const LinearLayer& lin, const BatchNorm& bn, const std::string& name, bool folded) {
  LinF out;
  out.name = name;
  out.axis = 1;
  out.out_w = lin.out_width();
  out.in_w = lin.in_width();
  if (folded) {
    std::vector<double> scale, shift;
    bn_factors(bn, scale, shift);
    out.w.resize(static_cast<size_t>(out.out_w * out.in_w));
    for (int64_t e = 0; e < out.out_w; ++e)
      for (int64_t d = 0; d < out.in_w; ++d)
        out.w[static_cast<size_t>(e * out.in_w + d)] =
            static_cast<float>(scale[static_cast<size_t>(e)] * lin.weight.value[e * out.in_w + d]);
    out.bias.assign(shift.begin(), shift.end());
  } else {
    out.w = narrow(lin.weight.value);
    out.bn = eval_bn_of(bn);
  }
  return out;
}

// axial FC (height/width/spatial): BN is channel-wise while the weight acts on
// a spatial axis, so the fold expands to one scaled copy of the weight per
// channel. Keeps every runtime product real*binary.
LinF lower_axial_lin(const LinearLayer& lin, const BatchNorm& bn, const std::string& name, int axis,
                     int64_t channels, bool folded) {
  LinF out;
  out.name = name;
  out.axis = axis;
  out.out_w = lin.out_width();
  out.in_w = lin.in_width();
  out.channels = channels;
  if (folded) {
    std::vector<double> scale, shift;
    bn_factors(bn, scale, shift);
    out.per_channel = true;
    out.w.resize(static_cast<size_t>(channels * out.out_w * out.in_w));
    const int64_t block = out.out_w * out.in_w;
    for (int64_t c = 0; c < channels; ++c)
      for (int64_t i = 0; i < block; ++i)
        out.w[static_cast<size_t>(c * block + i)] =
            static_cast<float>(scale[static_cast<size_t>(c)] * lin.weight.value[i]);
    out.bias.assign(shift.begin(), shift.end());
  } else {
    out.w = narrow(lin.weight.value);
    out.bn = eval_bn_of(bn);
  }
  return out;
}

ConvF lower_conv(const Conv2dLayer& conv, const BatchNorm& bn, const std::string& name, bool folded) {
  ConvF out;
  out.name = name;
  out.c_out = conv.c_out();
  out.c_in = conv.c_in();
  out.k = conv.k();
  out.stride = conv.stride;
  out.pad = conv.padding;
  if (folded) {
    std::vector<double> scale, shift;
    bn_factors(bn, scale, shift);
    out.w.resize(static_cast<size_t>(conv.kernel.value.size()));
    const int64_t per = conv.kernel.value.size() / out.c_out;
    for (int64_t co = 0; co < out.c_out; ++co)
      for (int64_t i = 0; i < per; ++i)
        out.w[static_cast<size_t>(co * per + i)] =
            static_cast<float>(scale[static_cast<size_t>(co)] * conv.kernel.value[co * per + i]);
    out.bias.assign(shift.begin(), shift.end());
  } else {
    out.w = narrow(conv.kernel.value);
    out.bn = eval_bn_of(bn);
  }
  return out;
}

}  // namespace

ModelF lower(Network& net, const RunConfig& run, bool folded) {
  const NetworkConfig& cfg = net.config();
  ModelF m;
  m.folded = folded;
  m.run = run;
  m.run.net = cfg;
  m.patch = lower_conv(net.patch().conv, net.patch().bn, names::patch_conv(), folded);
  int64_t h = cfg.img_h / cfg.patch_size;
  int64_t w = cfg.img_w / cfg.patch_size;
  for (int s = 0; s < cfg.stages(); ++s) {
    Stage& st = net.stages()[static_cast<size_t>(s)];
    StageF sf;
    if (st.spe) {
      h /= 2;
      w /= 2;
      SpeF sp;
      sp.in1 = lower_conv(st.spe->in1, st.spe->bn_in1, names::spe_in(s, 1), folded);
      sp.in2 = lower_conv(st.spe->in2, st.spe->bn_in2, names::spe_in(s, 2), folded);
      sp.in3 = lower_conv(st.spe->in3, st.spe->bn_in3, names::spe_in(s, 3), folded);
      sp.e12 = lower_conv(st.spe->edge12, st.spe->bn_e12, names::spe_edge12(s), folded);
      sp.e23 = lower_conv(st.spe->edge23, st.spe->bn_e23, names::spe_edge23(s), folded);
      sf.spe = std::move(sp);
    }
    const int64_t c = cfg.stage_channels(s);
    for (size_t mi = 0; mi < st.mixers.size(); ++mi) {
      Mixer& mx = st.mixers[mi];
      const int im = static_cast<int>(mi);
      MixerF mf;
      mf.wh = lower_axial_lin(mx.token.w_h, mx.token.bn_h, names::token_wh(s, im), 2, c, folded);
      mf.ww = lower_axial_lin(mx.token.w_w, mx.token.bn_w, names::token_ww(s, im), 3, c, folded);
      mf.wf = lower_channel_lin(mx.token.w_f, mx.token.bn_f, names::token_wf(s, im), folded);
      mf.wc1 = lower_channel_lin(mx.channel.w_c1, mx.channel.bn_c1, names::channel_w1(s, im), folded);
      mf.wc2 = lower_channel_lin(mx.channel.w_c2, mx.channel.bn_c2, names::channel_w2(s, im), folded);
      sf.mixers.push_back(std::move(mf));
    }
    m.stages.push_back(std::move(sf));
  }
  const int64_t c_last = cfg.stage_channels(cfg.stages() - 1);
  m.head_fc = lower_axial_lin(net.head().w_hw, net.head().bn, names::head_whw(), 2, c_last, folded);
  m.classifier.name = names::head_classifier();
  m.classifier.axis = 1;
  m.classifier.out_w = cfg.num_classes;
  m.classifier.in_w = c_last;
  m.classifier.w = narrow(net.head().classifier.weight.value);
  return m;
}

// ---------------------------------------------------------------------------
// execution

namespace {

struct Counters {
  OpTrace::Layer* lay = nullptr;
};

inline void count_product(OpTrace::Layer* lay, float wv, float xv) {
  // xv != 0 when called
  const bool binary = (xv == 1.0f) || (wv == 0.0f) || (wv == 1.0f);
  if (binary) {
    ++lay->mul_real_binary;
    if (wv * xv != 0.0f) ++lay->adds;
  } else {
    ++lay->mul_real_real;  // a MAC; its fused add is not counted again
  }
}

// outer decomposition of x at `axis`; returns how many consecutive outer rows
// share one channel (1 means the channel advances every row)
void axis_geometry(const Shape& s, int axis, int64_t& outer, int64_t& inner, int64_t& rows_per_channel) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
  rows_per_channel = 1;
  for (int i = 2; i < axis; ++i) rows_per_channel *= s[static_cast<size_t>(i)];
}

TensorF apply_lin(const LinF& L, const TensorF& x, OpTrace* trace) {
  const int axis = L.axis;
  if (axis >= x.rank() || x.dim(axis) != L.in_w)
    throw ShapeError("interpreter: " + L.name + " expects width " + std::to_string(L.in_w) + " at axis " +
                     std::to_string(axis) + ", got " + shape_str(x.shape));
  int64_t outer, inner, rows_per_channel;
  axis_geometry(x.shape, axis, outer, inner, rows_per_channel);
  const int64_t E = L.out_w, D = L.in_w;
  const int64_t C = L.channels;
  Shape os = x.shape;
  os[static_cast<size_t>(axis)] = E;
  TensorF y(os);
  OpTrace::Layer* lay = trace ? &trace->layer(L.name) : nullptr;
  std::vector<double> acc(static_cast<size_t>(inner));

  for (int64_t o = 0; o < outer; ++o) {
    // channel of this outer row (axis>1: x is [N,C,...]; axis==1: channel is e)
    const int64_t c = axis > 1 ? (o / rows_per_channel) % C : 0;
    const float* xbase = x.data.data() + o * D * inner;
    float* ybase = y.data.data() + o * E * inner;
    for (int64_t e = 0; e < E; ++e) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const float* wrow = L.w.data() + (L.per_channel ? (c * E + e) * D : e * D);
      for (int64_t d = 0; d < D; ++d) {
        const float wv = wrow[d];
        const float* xrow = xbase + d * inner;
        for (int64_t i = 0; i < inner; ++i) {
          const float xv = xrow[i];
          if (xv == 0.0f) continue;
          if (lay) count_product(lay, wv, xv);
          acc[static_cast<size_t>(i)] += static_cast<double>(wv) * static_cast<double>(xv);
        }
      }
      float* yrow = ybase + e * inner;
      const int64_t ch = axis == 1 ? e : c;
      if (L.bn) {
        const float sc = L.bn->scale[static_cast<size_t>(ch)];
        const float sh = L.bn->shift[static_cast<size_t>(ch)];
        for (int64_t i = 0; i < inner; ++i)
          yrow[i] = sc * static_cast<float>(acc[static_cast<size_t>(i)]) + sh;
      } else {
        const float b = L.bias.empty() ? 0.0f : L.bias[static_cast<size_t>(ch)];
        for (int64_t i = 0; i < inner; ++i) yrow[i] = static_cast<float>(acc[static_cast<size_t>(i)]) + b;
      }
    }
  }
  return y;
}

TensorF apply_conv(const ConvF& L, const TensorF& x, OpTrace* trace) {
  if (x.rank() != 4 || x.dim(1) != L.c_in)
    throw ShapeError("interpreter: " + L.name + " expects " + std::to_string(L.c_in) + " channels, got " +
                     shape_str(x.shape));
  const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int64_t Ho = conv_out_size(H, L.k, L.stride, L.pad);
  const int64_t Wo = conv_out_size(W, L.k, L.stride, L.pad);
  TensorF y({N, L.c_out, Ho, Wo});
  OpTrace::Layer* lay = trace ? &trace->layer(L.name) : nullptr;

  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < L.c_out; ++co) {
      const float* wbase = L.w.data() + co * L.c_in * L.k * L.k;
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox) {
          double acc = 0.0;
          for (int64_t ci = 0; ci < L.c_in; ++ci)
            for (int ky = 0; ky < L.k; ++ky) {
              const int64_t iy = oy * L.stride - L.pad + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < L.k; ++kx) {
                const int64_t ix = ox * L.stride - L.pad + kx;
                if (ix < 0 || ix >= W) continue;
                const float xv = x.data[static_cast<size_t>(((n * L.c_in + ci) * H + iy) * W + ix)];
                if (xv == 0.0f) continue;
                const float wv = wbase[(ci * L.k + ky) * L.k + kx];
                if (lay) count_product(lay, wv, xv);
                acc += static_cast<double>(wv) * static_cast<double>(xv);
              }
            }
          float v;
          if (L.bn) {
            v = L.bn->scale[static_cast<size_t>(co)] * static_cast<float>(acc) + L.bn->shift[static_cast<size_t>(co)];
          } else {
            v = static_cast<float>(acc) + (L.bias.empty() ? 0.0f : L.bias[static_cast<size_t>(co)]);
          }
          y.data[static_cast<size_t>(((n * L.c_out + co) * Ho + oy) * Wo + ox)] = v;
        }
    }
  return y;
}

TensorF lif(const TensorF& z, int t_steps, float tau, float v_th, RunStats* stats, const std::string& site) {
  const int64_t chunk = z.size() / t_steps;
  TensorF y(z.shape);
  std::vector<float> u(static_cast<size_t>(chunk), 0.0f);
  const float inv_tau = 1.0f / tau;
  uint64_t spikes = 0;
  for (int step = 0; step < t_steps; ++step) {
    const float* zb = z.data.data() + step * chunk;
    float* yb = y.data.data() + step * chunk;
    for (int64_t i = 0; i < chunk; ++i) {
      const float up = u[static_cast<size_t>(i)] + (zb[i] - u[static_cast<size_t>(i)]) * inv_tau;
      if (up >= v_th) {
        yb[i] = 1.0f;
        u[static_cast<size_t>(i)] = 0.0f;
        ++spikes;
      } else {
        yb[i] = 0.0f;
        u[static_cast<size_t>(i)] = up;
      }
    }
  }
  if (stats) {
    RunStats::Site& s = stats->site(site);
    s.spikes += spikes;
    s.elements += static_cast<uint64_t>(z.size());
  }
  return y;
}

TensorF addf(const TensorF& a, const TensorF& b) {
  TensorF out = a;
  for (int64_t i = 0; i < out.size(); ++i) out.data[static_cast<size_t>(i)] += b.data[static_cast<size_t>(i)];
  return out;
}

TensorF concatf(const std::vector<const TensorF*>& parts) {
  const TensorF& f = *parts[0];
  const int64_t outer = f.dim(0);
  int64_t inner = 1;
  for (int i = 2; i < f.rank(); ++i) inner *= f.dim(i);
  int64_t ctotal = 0;
  for (const TensorF* p : parts) ctotal += p->dim(1);
  Shape os = f.shape;
  os[1] = ctotal;
  TensorF out(os);
  const int64_t row = ctotal * inner;
  for (int64_t o = 0; o < outer; ++o) {
    int64_t off = 0;
    for (const TensorF* p : parts) {
      const int64_t width = p->dim(1) * inner;
      std::memcpy(out.data.data() + o * row + off, p->data.data() + o * width,
                  static_cast<size_t>(width) * sizeof(float));
      off += width;
    }
  }
  return out;
}

TensorF tilef(const TensorF& t, int times) {
  Shape s = t.shape;
  s[0] *= times;
  TensorF out(s);
  for (int r = 0; r < times; ++r)
    std::memcpy(out.data.data() + r * t.size(), t.data.data(), static_cast<size_t>(t.size()) * sizeof(float));
  return out;
}

TensorF mean_last_axis(const TensorF& x) {
  const int64_t inner = x.dim(x.rank() - 1);
  Shape os(x.shape.begin(), x.shape.end() - 1);
  TensorF out(os);
  const double inv = 1.0 / static_cast<double>(inner);
  for (int64_t o = 0; o < out.size(); ++o) {
    double s = 0.0;
    for (int64_t i = 0; i < inner; ++i) s += x.data[static_cast<size_t>(o * inner + i)];
    out.data[static_cast<size_t>(o)] = static_cast<float>(s * inv);
  }
  return out;
}

}  // namespace

RunOutput run(const ModelF& model, const TensorF& images, const RunOptions& opts) {
  const NetworkConfig& cfg = model.cfg();
  const int T = opts.t_steps > 0 ? opts.t_steps : cfg.t_steps;
  if (images.rank() != 4 || images.dim(1) != 3)
    throw ShapeError("interpreter: expected images [B,3,H,W], got " + shape_str(images.shape));
  const int64_t B = images.dim(0);
  const float tau = static_cast<float>(cfg.tau);
  const float v_th = static_cast<float>(cfg.v_th);
  auto site = [&](const TensorF& z, const std::string& name) {
    TensorF y = lif(z, T, tau, v_th, opts.stats, name);
    if (opts.spike_dump) opts.spike_dump->emplace_back(name, y);
    return y;
  };

  // patch layer: static input, computed once per sample and tiled across T
  TensorF anchor0 = apply_conv(model.patch, images, opts.trace);
  TensorF x = tilef(anchor0, T);

  for (int s = 0; s < cfg.stages(); ++s) {
    const StageF& st = model.stages[static_cast<size_t>(s)];
    if (st.spe) {
      TensorF spikes = site(x, names::spe_entry(s));
      TensorF a1 = apply_conv(st.spe->in1, spikes, opts.trace);
      TensorF y1 = site(a1, names::spe_node(s, 1));
      TensorF a2 = addf(apply_conv(st.spe->in2, spikes, opts.trace), apply_conv(st.spe->e12, y1, opts.trace));
      TensorF y2 = site(a2, names::spe_node(s, 2));
      TensorF a3 = addf(addf(apply_conv(st.spe->in3, spikes, opts.trace), apply_conv(st.spe->e23, y2, opts.trace)), a1);
      x = concatf({&a1, &a2, &a3});
    }
    TensorF anchor = x;
    for (size_t mi = 0; mi < st.mixers.size(); ++mi) {
      const MixerF& mx = st.mixers[mi];
      const int im = static_cast<int>(mi);
      TensorF spikes_in = site(x, names::token_entry(s, im));
      TensorF u_h = apply_lin(mx.wh, spikes_in, opts.trace);
      TensorF u_w = apply_lin(mx.ww, spikes_in, opts.trace);
      TensorF y_h = site(u_h, names::token_spike_h(s, im));
      TensorF y_w = site(u_w, names::token_spike_w(s, im));
      TensorF cat = concatf({&y_h, &y_w, &spikes_in});
      TensorF fused = apply_lin(mx.wf, cat, opts.trace);
      TensorF token_out = fused;
      if (cfg.skips.pt) token_out = addf(token_out, anchor);
      if (cfg.skips.ct) token_out = addf(token_out, x);
      TensorF spikes_c = site(token_out, names::channel_entry(s, im));
      TensorF hidden = apply_lin(mx.wc1, spikes_c, opts.trace);
      TensorF y_hidden = site(hidden, names::channel_hidden(s, im));
      TensorF v = apply_lin(mx.wc2, y_hidden, opts.trace);
      if (cfg.skips.tc) v = addf(v, token_out);
      if (cfg.skips.pc) v = addf(v, anchor);
      x = v;
    }
  }

  // head
  TensorF spikes = site(x, names::head_entry());
  const int64_t C = x.dim(1);
  const int64_t HW = x.dim(2) * x.dim(3);
  TensorF flat;
  flat.shape = {x.dim(0), C, HW};
  flat.data = spikes.data;
  TensorF mixed = apply_lin(model.head_fc, flat, opts.trace);
  TensorF m = site(mixed, names::head_hidden());

  RunOutput out;
  if (opts.classifier_audit_mode) {
    TensorF per_pos = apply_lin(model.classifier, m, opts.trace);  // [T*B, K, HW]
    out.step_logits = mean_last_axis(per_pos);
  } else {
    TensorF pooled = mean_last_axis(m);  // [T*B, C]
    out.step_logits = apply_lin(model.classifier, pooled, opts.trace);
  }

  // time-average
  const int64_t K = out.step_logits.dim(1);
  out.avg_logits = TensorF({B, K});
  const double invT = 1.0 / static_cast<double>(T);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (int step = 0; step < T; ++step)
        s += out.step_logits.data[static_cast<size_t>((step * B + b) * K + k)];
      out.avg_logits.data[static_cast<size_t>(b * K + k)] = static_cast<float>(s * invT);
    }
  return out;
}

// ---------------------------------------------------------------------------
// dense accumulation counts

uint64_t conv_inbounds_accums(int64_t h, int64_t w, int k, int stride, int pad, int64_t c_in, int64_t c_out) {
  const int64_t ho = conv_out_size(h, k, stride, pad);
  const int64_t wo = conv_out_size(w, k, stride, pad);
  uint64_t slots = 0;
  for (int64_t oy = 0; oy < ho; ++oy)
    for (int64_t ox = 0; ox < wo; ++ox)
      for (int ky = 0; ky < k; ++ky) {
        const int64_t iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int64_t ix = ox * stride - pad + kx;
          if (ix >= 0 && ix < w) ++slots;
        }
      }
  return slots * static_cast<uint64_t>(c_in) * static_cast<uint64_t>(c_out);
}

std::vector<DenseLayerInfo> dense_layer_info(const ModelF& model) {
  const NetworkConfig& cfg = model.cfg();
  std::vector<DenseLayerInfo> out;
  int64_t h = cfg.img_h / cfg.patch_size;
  int64_t w = cfg.img_w / cfg.patch_size;

  {
    DenseLayerInfo patch;
    patch.name = names::patch_conv();
    patch.accums = conv_inbounds_accums(cfg.img_h, cfg.img_w, cfg.patch_size, cfg.patch_size, 0, 3, cfg.c1);
    patch.real_input = true;
    patch.once_per_sample = true;  // static image, same result every step
    out.push_back(std::move(patch));
  }

  for (int s = 0; s < cfg.stages(); ++s) {
    const int64_t c = cfg.stage_channels(s);
    if (s > 0) {
      const int64_t c_in = c / 2;
      const int64_t node = c / 3;
      for (int i = 1; i <= 3; ++i) {
        DenseLayerInfo d;
        d.name = names::spe_in(s, i);
        d.input_sites = {names::spe_entry(s)};
        d.accums = conv_inbounds_accums(h, w, 3, 2, 1, c_in, node);
        out.push_back(std::move(d));
      }
      h /= 2;
      w /= 2;
      {
        DenseLayerInfo d;
        d.name = names::spe_edge12(s);
        d.input_sites = {names::spe_node(s, 1)};
        d.accums = conv_inbounds_accums(h, w, 3, 1, 1, node, node);
        out.push_back(std::move(d));
      }
      {
        DenseLayerInfo d;
        d.name = names::spe_edge23(s);
        d.input_sites = {names::spe_node(s, 2)};
        d.accums = conv_inbounds_accums(h, w, 3, 1, 1, node, node);
        out.push_back(std::move(d));
      }
    }
    const uint64_t elems = static_cast<uint64_t>(c * h * w);
    for (int m = 0; m < cfg.stage_layers[static_cast<size_t>(s)]; ++m) {
      DenseLayerInfo dh;
      dh.name = names::token_wh(s, m);
      dh.input_sites = {names::token_entry(s, m)};
      dh.accums = elems * static_cast<uint64_t>(h);
      out.push_back(std::move(dh));
      DenseLayerInfo dw;
      dw.name = names::token_ww(s, m);
      dw.input_sites = {names::token_entry(s, m)};
      dw.accums = elems * static_cast<uint64_t>(w);
      out.push_back(std::move(dw));
      DenseLayerInfo df;
      df.name = names::token_wf(s, m);
      // fused FC consumes the concat of both branch spikes and the entry map
      df.input_sites = {names::token_spike_h(s, m), names::token_spike_w(s, m), names::token_entry(s, m)};
      df.accums = 3 * elems * static_cast<uint64_t>(c);
      out.push_back(std::move(df));
      DenseLayerInfo d1;
      d1.name = names::channel_w1(s, m);
      d1.input_sites = {names::channel_entry(s, m)};
      d1.accums = elems * static_cast<uint64_t>(cfg.alpha * c);
      out.push_back(std::move(d1));
      DenseLayerInfo d2;
      d2.name = names::channel_w2(s, m);
      d2.input_sites = {names::channel_hidden(s, m)};
      d2.accums = static_cast<uint64_t>(cfg.alpha) * elems * static_cast<uint64_t>(c);
      out.push_back(std::move(d2));
    }
  }

  const int64_t c_last = cfg.stage_channels(cfg.stages() - 1);
  const int64_t hw = h * w;
  {
    DenseLayerInfo d;
    d.name = names::head_whw();
    d.input_sites = {names::head_entry()};
    d.accums = static_cast<uint64_t>(c_last * hw * hw);
    out.push_back(std::move(d));
  }
  {
    DenseLayerInfo d;
    d.name = names::head_classifier();
    d.accums = static_cast<uint64_t>(cfg.num_classes) * static_cast<uint64_t>(c_last);
    d.real_input = true;  // pooled spike averages
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// model file

namespace {

constexpr char kMagicF[4] = {'S', 'M', 'L', 'F'};
constexpr uint32_t kVersionF = 1;

struct Blob {
  std::string name;
  std::vector<float>* data;
  // negative expected size: unknown until read (per-channel expansion)
};

template <typename Fn>
void visit_lin(LinF& l, Fn&& fn) {
  fn(l.name + ".w", l.w);
  fn(l.name + ".b", l.bias);
  if (l.bn) {
    fn(l.name + ".bn_scale", l.bn->scale);
    fn(l.name + ".bn_shift", l.bn->shift);
  }
}

template <typename Fn>
void visit_conv(ConvF& c, Fn&& fn) {
  fn(c.name + ".w", c.w);
  fn(c.name + ".b", c.bias);
  if (c.bn) {
    fn(c.name + ".bn_scale", c.bn->scale);
    fn(c.name + ".bn_shift", c.bn->shift);
  }
}

template <typename Fn>
void visit_model(ModelF& m, Fn&& fn) {
  visit_conv(m.patch, fn);
  for (auto& st : m.stages) {
    if (st.spe) {
      visit_conv(st.spe->in1, fn);
      visit_conv(st.spe->in2, fn);
      visit_conv(st.spe->in3, fn);
      visit_conv(st.spe->e12, fn);
      visit_conv(st.spe->e23, fn);
    }
    for (auto& mx : st.mixers) {
      visit_lin(mx.wh, fn);
      visit_lin(mx.ww, fn);
      visit_lin(mx.wf, fn);
      visit_lin(mx.wc1, fn);
      visit_lin(mx.wc2, fn);
    }
  }
  visit_lin(m.head_fc, fn);
  visit_lin(m.classifier, fn);
}

// empty model with the right structure and sizes, bn slots present iff
// unfolded
ModelF skeleton(const RunConfig& run, bool folded) {
  const NetworkConfig& cfg = run.net;
  validate(cfg);
  ModelF m;
  m.folded = folded;
  m.run = run;

  auto make_conv = [&](const std::string& name, int64_t co, int64_t ci, int k, int stride, int pad) {
    ConvF c;
    c.name = name;
    c.c_out = co;
    c.c_in = ci;
    c.k = k;
    c.stride = stride;
    c.pad = pad;
    c.w.assign(static_cast<size_t>(co * ci * k * k), 0.0f);
    if (folded) c.bias.assign(static_cast<size_t>(co), 0.0f);
    else c.bn = EvalBn{std::vector<float>(static_cast<size_t>(co), 0.0f),
                       std::vector<float>(static_cast<size_t>(co), 0.0f)};
    return c;
  };
  auto make_channel_lin = [&](const std::string& name, int64_t out, int64_t in) {
    LinF l;
    l.name = name;
    l.axis = 1;
    l.out_w = out;
    l.in_w = in;
    l.w.assign(static_cast<size_t>(out * in), 0.0f);
    if (folded) l.bias.assign(static_cast<size_t>(out), 0.0f);
    else l.bn = EvalBn{std::vector<float>(static_cast<size_t>(out), 0.0f),
                       std::vector<float>(static_cast<size_t>(out), 0.0f)};
    return l;
  };
  auto make_axial_lin = [&](const std::string& name, int axis, int64_t width, int64_t channels) {
    LinF l;
    l.name = name;
    l.axis = axis;
    l.out_w = width;
    l.in_w = width;
    l.channels = channels;
    if (folded) {
      l.per_channel = true;
      l.w.assign(static_cast<size_t>(channels * width * width), 0.0f);
      l.bias.assign(static_cast<size_t>(channels), 0.0f);
    } else {
      l.w.assign(static_cast<size_t>(width * width), 0.0f);
      l.bn = EvalBn{std::vector<float>(static_cast<size_t>(channels), 0.0f),
                    std::vector<float>(static_cast<size_t>(channels), 0.0f)};
    }
    return l;
  };

  m.patch = make_conv(names::patch_conv(), cfg.c1, 3, cfg.patch_size, cfg.patch_size, 0);
  int64_t h = cfg.img_h / cfg.patch_size;
  int64_t w = cfg.img_w / cfg.patch_size;
  for (int s = 0; s < cfg.stages(); ++s) {
    StageF sf;
    const int64_t c = cfg.stage_channels(s);
    if (s > 0) {
      h /= 2;
      w /= 2;
      SpeF sp;
      sp.in1 = make_conv(names::spe_in(s, 1), c / 3, c / 2, 3, 2, 1);
      sp.in2 = make_conv(names::spe_in(s, 2), c / 3, c / 2, 3, 2, 1);
      sp.in3 = make_conv(names::spe_in(s, 3), c / 3, c / 2, 3, 2, 1);
      sp.e12 = make_conv(names::spe_edge12(s), c / 3, c / 3, 3, 1, 1);
      sp.e23 = make_conv(names::spe_edge23(s), c / 3, c / 3, 3, 1, 1);
      sf.spe = std::move(sp);
    }
    for (int mi = 0; mi < cfg.stage_layers[static_cast<size_t>(s)]; ++mi) {
      MixerF mf;
      mf.wh = make_axial_lin(names::token_wh(s, mi), 2, h, c);
      mf.ww = make_axial_lin(names::token_ww(s, mi), 3, w, c);
      mf.wf = make_channel_lin(names::token_wf(s, mi), c, 3 * c);
      mf.wc1 = make_channel_lin(names::channel_w1(s, mi), cfg.alpha * c, c);
      mf.wc2 = make_channel_lin(names::channel_w2(s, mi), c, cfg.alpha * c);
      sf.mixers.push_back(std::move(mf));
    }
    m.stages.push_back(std::move(sf));
  }
  const int64_t c_last = cfg.stage_channels(cfg.stages() - 1);
  m.head_fc = make_axial_lin(names::head_whw(), 2, h * w, c_last);
  m.classifier = make_channel_lin(names::head_classifier(), cfg.num_classes, c_last);
  m.classifier.bias.clear();
  m.classifier.bn.reset();
  return m;
}

}  // namespace

void save_model(const ModelF& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("model: cannot open " + path + " for writing");
  os.write(kMagicF, 4);
  binio::put_u32(os, kVersionF);
  binio::put_u8(os, model.folded ? 1 : 0);
  binio::put_string(os, model.run.serialize());
  uint32_t count = 0;
  visit_model(const_cast<ModelF&>(model), [&](const std::string&, std::vector<float>&) { ++count; });
  binio::put_u32(os, count);
  visit_model(const_cast<ModelF&>(model), [&](const std::string& name, std::vector<float>& blob) {
    binio::put_string(os, name);
    binio::put_u64(os, blob.size());
    for (float v : blob) binio::put_f32(os, v);
  });
  if (!os) throw IoError("model: write failed for " + path);
}

ModelF load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("model: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4) throw IoError("model: truncated file " + path);
  if (std::string(magic, 4) == "SMLX")
    throw ConfigError("model: " + path + " is a training checkpoint, not a folded model: fold first");
  if (std::string(magic, 4) != std::string(kMagicF, 4))
    throw IoError("model: bad magic in " + path + " (expected SMLF)");
  const uint32_t version = binio::get_u32(is, "version");
  if (version != kVersionF) throw IoError("model: unsupported version in " + path);
  const uint8_t folded = binio::get_u8(is, "folded flag");
  if (folded > 1) throw IoError("model: corrupted folded flag in " + path);
  RunConfig run = RunConfig::parse(binio::get_string(is, "config"));
  ModelF m = skeleton(run, folded == 1);
  const uint32_t count = binio::get_u32(is, "blob count");

  std::vector<std::pair<std::string, std::vector<float>>> blobs;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = binio::get_string(is, "blob name");
    const uint64_t n = binio::get_u64(is, name.c_str());
    if (n > (1ull << 31)) throw IoError("model: corrupted blob length for '" + name + "'");
    std::vector<float> data(static_cast<size_t>(n));
    for (uint64_t j = 0; j < n; ++j) data[static_cast<size_t>(j)] = binio::get_f32(is, name.c_str());
    blobs.emplace_back(std::move(name), std::move(data));
  }
  visit_model(m, [&](const std::string& name, std::vector<float>& dst) {
    for (auto& [bn, bd] : blobs)
      if (bn == name) {
        if (bd.size() != dst.size())
          throw IoError("model: blob '" + name + "' has " + std::to_string(bd.size()) + " values, expected " +
                        std::to_string(dst.size()));
        dst = bd;
        return;
      }
    throw IoError("model: missing blob '" + name + "'");
  });
  return m;
}

}  // namespace spikemix::infer
