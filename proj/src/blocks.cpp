#include "spikemix/blocks.hpp"

#include "spikemix/names.hpp"

namespace spikemix {

void require_binary(const Tensor& t, const std::string& where) {
  const double* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i)
    if (p[i] != 0.0 && p[i] != 1.0)
      throw NumericError("non-binary value " + std::to_string(p[i]) + " fed to weighted op at " + where);
}

namespace {
LifParams site_params(const LifParams& base, const ForwardOpts& opts) {
  LifParams p = base;
  p.relaxed = opts.relaxed;
  p.detach_reset = opts.detach_reset;
  return p;
}

Var spike(Tape& t, Var z, const LifParams& base, int t_steps, const ForwardOpts& opts, const std::string& site) {
  SpikeCounter* c = opts.rates ? opts.rates->site(site) : nullptr;
  Var y = lif_unrolled(t, z, t_steps, site_params(base, opts), c);
  if (opts.binary_checks && !opts.relaxed) require_binary(t.val(y), site);
  return y;
}
}  // namespace

TokenBlock::TokenBlock(int64_t channels, int64_t height, int64_t width, const std::string& prefix)
    : w_h(height, height, prefix + ".w_h"),
      w_w(width, width, prefix + ".w_w"),
      w_f(channels, 3 * channels, prefix + ".w_f"),
      bn_h(channels, prefix + ".bn_h"),
      bn_w(channels, prefix + ".bn_w"),
      bn_f(channels, prefix + ".bn_f"),
      site_entry(prefix + ".entry"),
      site_h(prefix + ".spike_h"),
      site_w(prefix + ".spike_w") {}

Var TokenBlock::forward(Tape& t, Var x, Var anchor, const SkipFlags& skips, const LifParams& lif, int t_steps,
                        const ForwardOpts& opts) {
  const Tensor& X = t.val(x);
  if (X.rank() != 4) throw ShapeError("token block: expected [N,C,H,W], got " + shape_str(X.shape()));
  if (X.dim(2) != w_h.in_width() || X.dim(3) != w_w.in_width())
    throw ShapeError("token block: spatial " + std::to_string(X.dim(2)) + "x" + std::to_string(X.dim(3)) +
                     " does not match weights " + std::to_string(w_h.in_width()) + "x" +
                     std::to_string(w_w.in_width()));

  Var spikes_in = spike(t, x, lif, t_steps, opts, site_entry);
  Var u_h = bn_forward(t, bn_h, linear_forward(t, w_h, spikes_in, 2), opts.bn);
  Var u_w = bn_forward(t, bn_w, linear_forward(t, w_w, spikes_in, 3), opts.bn);
  Var y_h = spike(t, u_h, lif, t_steps, opts, site_h);
  Var y_w = spike(t, u_w, lif, t_steps, opts, site_w);
  Var cat = t.concat_channels({y_h, y_w, spikes_in});
  Var fused = bn_forward(t, bn_f, linear_forward(t, w_f, cat, 1), opts.bn);
  Var out = fused;
  if (skips.pt) out = t.add(out, anchor);
  if (skips.ct) out = t.add(out, x);
  return out;
}

ChannelBlock::ChannelBlock(int64_t channels, int alpha, const std::string& prefix)
    : w_c1(alpha * channels, channels, prefix + ".w_c1"),
      w_c2(channels, alpha * channels, prefix + ".w_c2"),
      bn_c1(alpha * channels, prefix + ".bn_c1"),
      bn_c2(channels, prefix + ".bn_c2"),
      site_entry(prefix + ".entry"),
      site_hidden(prefix + ".hidden") {}

Var ChannelBlock::forward(Tape& t, Var x, Var anchor, const SkipFlags& skips, const LifParams& lif, int t_steps,
                          const ForwardOpts& opts) {
  const Tensor& X = t.val(x);
  if (X.rank() != 4 || X.dim(1) != w_c1.in_width())
    throw ShapeError("channel block: channels of " + shape_str(X.shape()) + " do not match " +
                     std::to_string(w_c1.in_width()));
  Var spikes_in = spike(t, x, lif, t_steps, opts, site_entry);
  Var hidden = bn_forward(t, bn_c1, linear_forward(t, w_c1, spikes_in, 1), opts.bn);
  Var y_hidden = spike(t, hidden, lif, t_steps, opts, site_hidden);
  Var v = bn_forward(t, bn_c2, linear_forward(t, w_c2, y_hidden, 1), opts.bn);
  if (skips.tc) v = t.add(v, x);
  if (skips.pc) v = t.add(v, anchor);
  return v;
}

SpeCell::SpeCell(int64_t c_in, int64_t c_out, const std::string& prefix)
    : in1(c_out / 3, c_in, 3, 2, 1, prefix + ".in1"),
      in2(c_out / 3, c_in, 3, 2, 1, prefix + ".in2"),
      in3(c_out / 3, c_in, 3, 2, 1, prefix + ".in3"),
      edge12(c_out / 3, c_out / 3, 3, 1, 1, prefix + ".edge12"),
      edge23(c_out / 3, c_out / 3, 3, 1, 1, prefix + ".edge23"),
      bn_in1(c_out / 3, prefix + ".bn_in1"),
      bn_in2(c_out / 3, prefix + ".bn_in2"),
      bn_in3(c_out / 3, prefix + ".bn_in3"),
      bn_e12(c_out / 3, prefix + ".bn_e12"),
      bn_e23(c_out / 3, prefix + ".bn_e23"),
      site_node1(prefix + ".node1"),
      site_node2(prefix + ".node2"),
      site_node3(prefix + ".node3") {
  if (c_out % 3 != 0)
    throw ConfigError("spe cell: output channels " + std::to_string(c_out) + " must be divisible by 3");
}

SpeCell::Out SpeCell::forward(Tape& t, Var spikes_in, const LifParams& lif, int t_steps, const ForwardOpts& opts,
                              bool emit_spikes) {
  if (opts.binary_checks && !opts.relaxed) require_binary(t.val(spikes_in), site_node1 + ".input");
  Var a1 = bn_forward(t, bn_in1, conv2d_forward(t, in1, spikes_in), opts.bn);
  Var y1 = spike(t, a1, lif, t_steps, opts, site_node1);
  Var a2 = t.add(bn_forward(t, bn_in2, conv2d_forward(t, in2, spikes_in), opts.bn),
                 bn_forward(t, bn_e12, conv2d_forward(t, edge12, y1), opts.bn));
  Var y2 = spike(t, a2, lif, t_steps, opts, site_node2);
  Var a3 = t.add(t.add(bn_forward(t, bn_in3, conv2d_forward(t, in3, spikes_in), opts.bn),
                       bn_forward(t, bn_e23, conv2d_forward(t, edge23, y2), opts.bn)),
                 a1);
  Out out;
  out.anchor = t.concat_channels({a1, a2, a3});
  if (emit_spikes) {
    Var y3 = spike(t, a3, lif, t_steps, opts, site_node3);
    out.spikes = t.concat_channels({y1, y2, y3});
  }
  return out;
}

PatchEmbed::PatchEmbed(int64_t c_out, int patch, const std::string& prefix)
    : conv(c_out, 3, patch, patch, 0, prefix + ".conv"), bn(c_out, prefix + ".bn") {}

PatchEmbed::Out PatchEmbed::forward(Tape& t, Var image, const LifParams& lif, int t_steps, const ForwardOpts& opts,
                                    bool emit_spikes) {
  const Tensor& X = t.val(image);
  if (X.rank() != 4) throw ShapeError("patch partition: expected [N,3,H,W], got " + shape_str(X.shape()));
  if (X.dim(2) % conv.stride != 0 || X.dim(3) % conv.stride != 0)
    throw ShapeError("patch partition: image size " + std::to_string(X.dim(2)) + "x" + std::to_string(X.dim(3)) +
                     " not divisible by patch size " + std::to_string(conv.stride));
  Out out;
  out.anchor = bn_forward(t, bn, conv2d_forward(t, conv, image), opts.bn);
  if (emit_spikes) out.spikes = spike(t, out.anchor, lif, t_steps, opts, "patch.spikes");
  return out;
}

Head::Head(int64_t channels, int64_t spatial, int64_t num_classes, const std::string& prefix)
    : w_hw(spatial, spatial, prefix + ".w_hw"),
      bn(channels, prefix + ".bn"),
      classifier(num_classes, channels, prefix + ".classifier"),
      site_entry(prefix + ".entry"),
      site_hidden(prefix + ".hidden") {}

Var Head::forward(Tape& t, Var x, const LifParams& lif, int t_steps, const ForwardOpts& opts) {
  const Tensor& X = t.val(x);
  if (X.rank() != 4) throw ShapeError("head: expected [N,C,H,W], got " + shape_str(X.shape()));
  const int64_t N = X.dim(0), C = X.dim(1), HW = X.dim(2) * X.dim(3);
  if (HW != w_hw.in_width())
    throw ShapeError("head: spatial size " + std::to_string(HW) + " does not match w_hw width " +
                     std::to_string(w_hw.in_width()));
  Var spikes_in = spike(t, x, lif, t_steps, opts, site_entry);
  Var flat = t.reshape(spikes_in, {N, C, HW});
  Var mixed = bn_forward(t, bn, linear_forward(t, w_hw, flat, 2), opts.bn);
  Var y = spike(t, mixed, lif, t_steps, opts, site_hidden);
  Var pooled = t.mean_axis(y, 2);  // [N, C]
  return linear_forward(t, classifier, pooled, 1);
}

}  // namespace spikemix
