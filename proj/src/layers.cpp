#include "spikemix/layers.hpp"

#include <cmath>
#include <memory>

namespace spikemix {

LinearLayer::LinearLayer(int64_t out, int64_t in, std::string name)
    : weight(Tensor({out, in}), std::move(name)) {}

Conv2dLayer::Conv2dLayer(int64_t c_out, int64_t c_in, int k, int stride_, int padding_, std::string name)
    : kernel(Tensor({c_out, c_in, k, k}), std::move(name)), stride(stride_), padding(padding_) {
  if (stride <= 0 || padding < 0 || k <= 0) throw ConfigError("conv2d: bad kernel/stride/padding");
}

BatchNorm::BatchNorm(int64_t channels, std::string name)
    : gamma(Tensor::full({channels}, 1.0), name + ".gamma"),
      beta(Tensor({channels}), name + ".beta"),
      running_mean(Tensor({channels})),
      running_var(Tensor::full({channels}, 1.0)) {}

int64_t conv_out_size(int64_t in, int k, int stride, int padding) {
  const int64_t span = in + 2 * padding - k;
  if (span < 0) throw ShapeError("conv2d: input smaller than kernel after padding");
  return span / stride + 1;
}

Var linear_forward(Tape& t, LinearLayer& layer, Var x, int axis) {
  return t.axis_apply(t.leaf(layer.weight), x, axis);
}

Var conv2d_forward(Tape& t, Conv2dLayer& layer, Var x) {
  const Tensor& X = t.val(x);
  if (X.rank() != 4) throw ShapeError("conv2d: expected [N,C,H,W], got " + shape_str(X.shape()));
  const int64_t N = X.dim(0), Cin = X.dim(1), H = X.dim(2), W = X.dim(3);
  if (Cin != layer.c_in())
    throw ShapeError("conv2d: input channels " + std::to_string(Cin) + " do not match kernel " +
                     shape_str(layer.kernel.value.shape()));
  const int k = layer.k(), s = layer.stride, p = layer.padding;
  const int64_t Cout = layer.c_out();
  const int64_t Ho = conv_out_size(H, k, s, p);
  const int64_t Wo = conv_out_size(W, k, s, p);

  Var kv = t.leaf(layer.kernel);
  const Tensor& K = t.val(kv);
  Tensor out({N, Cout, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox) {
          double acc = 0.0;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < k; ++ky) {
              const int64_t iy = oy * s - p + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int64_t ix = ox * s - p + kx;
                if (ix < 0 || ix >= W) continue;
                acc += K[((co * Cin + ci) * k + ky) * k + kx] * X[((n * Cin + ci) * H + iy) * W + ix];
              }
            }
          out[((n * Cout + co) * Ho + oy) * Wo + ox] = acc;
        }

  const int xid = x.id, kid = kv.id;
  return t.record(std::move(out), {kid, xid}, [xid, kid, N, Cin, Cout, H, W, Ho, Wo, k, s, p](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& X2 = tp.value_of(xid);
    const Tensor& K2 = tp.value_of(kid);
    Tensor& gx = tp.grad_of(xid);
    Tensor& gk = tp.grad_of(kid);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t co = 0; co < Cout; ++co)
        for (int64_t oy = 0; oy < Ho; ++oy)
          for (int64_t ox = 0; ox < Wo; ++ox) {
            const double gv = g[((n * Cout + co) * Ho + oy) * Wo + ox];
            if (gv == 0.0) continue;
            for (int64_t ci = 0; ci < Cin; ++ci)
              for (int ky = 0; ky < k; ++ky) {
                const int64_t iy = oy * s - p + ky;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int64_t ix = ox * s - p + kx;
                  if (ix < 0 || ix >= W) continue;
                  const int64_t kidx = ((co * Cin + ci) * k + ky) * k + kx;
                  const int64_t xidx = ((n * Cin + ci) * H + iy) * W + ix;
                  gk[kidx] += gv * X2[xidx];
                  gx[xidx] += gv * K2[kidx];
                }
              }
          }
  });
}

namespace {
void bn_split(const Tensor& x, int64_t& n, int64_t& c, int64_t& inner) {
  if (x.rank() < 2) throw ShapeError("batch norm: expected rank >= 2, got " + shape_str(x.shape()));
  n = x.dim(0);
  c = x.dim(1);
  inner = 1;
  for (int i = 2; i < x.rank(); ++i) inner *= x.dim(i);
}
}  // namespace

Var bn_forward(Tape& t, BatchNorm& bn, Var x, BnMode mode) {
  const Tensor& X = t.val(x);
  int64_t N, C, inner;
  bn_split(X, N, C, inner);
  if (C != bn.channels())
    throw ShapeError("batch norm: channel count " + std::to_string(C) + " does not match " +
                     std::to_string(bn.channels()));
  Var gv = t.leaf(bn.gamma);
  Var bv = t.leaf(bn.beta);
  const Tensor& G = t.val(gv);
  const Tensor& B = t.val(bv);

  if (mode == BnMode::train) {
    const int64_t count = N * inner;
    if (count < 2) throw ShapeError("batch norm: train mode needs at least 2 elements per channel");
    std::vector<double> mean(static_cast<size_t>(C), 0.0), var(static_cast<size_t>(C), 0.0);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const double* row = X.data() + (n * C + c) * inner;
        double s = 0.0;
        for (int64_t i = 0; i < inner; ++i) s += row[i];
        mean[static_cast<size_t>(c)] += s;
      }
    for (int64_t c = 0; c < C; ++c) mean[static_cast<size_t>(c)] /= static_cast<double>(count);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const double* row = X.data() + (n * C + c) * inner;
        const double m = mean[static_cast<size_t>(c)];
        double s = 0.0;
        for (int64_t i = 0; i < inner; ++i) {
          const double d = row[i] - m;
          s += d * d;
        }
        var[static_cast<size_t>(c)] += s;
      }
    for (int64_t c = 0; c < C; ++c) var[static_cast<size_t>(c)] /= static_cast<double>(count);

    auto istd = std::make_shared<std::vector<double>>(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c)
      (*istd)[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + bn.eps);

    auto xhat = std::make_shared<Tensor>(X.shape());
    Tensor out(X.shape());
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const double m = mean[static_cast<size_t>(c)];
        const double is = (*istd)[static_cast<size_t>(c)];
        const double ga = G[c], be = B[c];
        const double* row = X.data() + (n * C + c) * inner;
        double* hrow = xhat->data() + (n * C + c) * inner;
        double* orow = out.data() + (n * C + c) * inner;
        for (int64_t i = 0; i < inner; ++i) {
          const double h = (row[i] - m) * is;
          hrow[i] = h;
          orow[i] = ga * h + be;
        }
      }

    // running statistics keep the unbiased variance, normalization the biased
    const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
    for (int64_t c = 0; c < C; ++c) {
      bn.running_mean[c] = (1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * mean[static_cast<size_t>(c)];
      bn.running_var[c] =
          (1.0 - bn.momentum) * bn.running_var[c] + bn.momentum * var[static_cast<size_t>(c)] * unbias;
    }

    const int xid = x.id, gid = gv.id, bid = bv.id;
    const double invcount = 1.0 / static_cast<double>(count);
    return t.record(std::move(out), {xid, gid, bid},
                    [xid, gid, bid, N, C, inner, invcount, istd, xhat](Tape& tp, int self) {
                      const Tensor& g = tp.grad_of(self);
                      const Tensor& G2 = tp.value_of(gid);
                      Tensor& gx = tp.grad_of(xid);
                      Tensor& gg = tp.grad_of(gid);
                      Tensor& gb = tp.grad_of(bid);
                      std::vector<double> sum_g(static_cast<size_t>(C), 0.0), sum_gh(static_cast<size_t>(C), 0.0);
                      for (int64_t n = 0; n < N; ++n)
                        for (int64_t c = 0; c < C; ++c) {
                          const double* grow = g.data() + (n * C + c) * inner;
                          const double* hrow = xhat->data() + (n * C + c) * inner;
                          double a = 0.0, b = 0.0;
                          for (int64_t i = 0; i < inner; ++i) {
                            a += grow[i];
                            b += grow[i] * hrow[i];
                          }
                          sum_g[static_cast<size_t>(c)] += a;
                          sum_gh[static_cast<size_t>(c)] += b;
                        }
                      for (int64_t c = 0; c < C; ++c) {
                        gb[c] += sum_g[static_cast<size_t>(c)];
                        gg[c] += sum_gh[static_cast<size_t>(c)];
                      }
                      for (int64_t n = 0; n < N; ++n)
                        for (int64_t c = 0; c < C; ++c) {
                          const double sc = G2[c] * (*istd)[static_cast<size_t>(c)];
                          const double mg = sum_g[static_cast<size_t>(c)] * invcount;
                          const double mgh = sum_gh[static_cast<size_t>(c)] * invcount;
                          const double* grow = g.data() + (n * C + c) * inner;
                          const double* hrow = xhat->data() + (n * C + c) * inner;
                          double* xrow = gx.data() + (n * C + c) * inner;
                          for (int64_t i = 0; i < inner; ++i)
                            xrow[i] += sc * (grow[i] - mg - hrow[i] * mgh);
                        }
                    });
  }

  // eval mode: per-channel affine from running statistics
  auto rm = std::make_shared<std::vector<double>>(bn.running_mean.vec());
  auto ristd = std::make_shared<std::vector<double>>(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) (*ristd)[static_cast<size_t>(c)] = 1.0 / std::sqrt(bn.running_var[c] + bn.eps);
  Tensor out(X.shape());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const double m = (*rm)[static_cast<size_t>(c)];
      const double is = (*ristd)[static_cast<size_t>(c)];
      const double ga = G[c], be = B[c];
      const double* row = X.data() + (n * C + c) * inner;
      double* orow = out.data() + (n * C + c) * inner;
      for (int64_t i = 0; i < inner; ++i) orow[i] = ga * (row[i] - m) * is + be;
    }
  const int xid = x.id, gid = gv.id, bid = bv.id;
  return t.record(std::move(out), {xid, gid, bid}, [xid, gid, bid, N, C, inner, rm, ristd](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& X2 = tp.value_of(xid);
    const Tensor& G2 = tp.value_of(gid);
    Tensor& gx = tp.grad_of(xid);
    Tensor& gg = tp.grad_of(gid);
    Tensor& gb = tp.grad_of(bid);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const double m = (*rm)[static_cast<size_t>(c)];
        const double is = (*ristd)[static_cast<size_t>(c)];
        const double sc = G2[c] * is;
        const double* grow = g.data() + (n * C + c) * inner;
        const double* xrow = X2.data() + (n * C + c) * inner;
        double* gxrow = gx.data() + (n * C + c) * inner;
        double a = 0.0, b = 0.0;
        for (int64_t i = 0; i < inner; ++i) {
          gxrow[i] += sc * grow[i];
          a += grow[i];
          b += grow[i] * (xrow[i] - m) * is;
        }
        gb[c] += a;
        gg[c] += b;
      }
  });
}

namespace {
void fold_factors(const BatchNorm& bn, std::vector<double>& scale, std::vector<double>& shift) {
  const int64_t C = bn.channels();
  scale.resize(static_cast<size_t>(C));
  shift.resize(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    const double s = bn.gamma.value[c] / std::sqrt(bn.running_var[c] + bn.eps);
    scale[static_cast<size_t>(c)] = s;
    shift[static_cast<size_t>(c)] = bn.beta.value[c] - s * bn.running_mean[c];
  }
}
}  // namespace

LinearLayer fold_bn(const LinearLayer& layer, const BatchNorm& bn) {
  if (layer.out_width() != bn.channels())
    throw ShapeError("fold_bn: linear output width " + std::to_string(layer.out_width()) +
                     " does not match BN channels " + std::to_string(bn.channels()));
  std::vector<double> scale, shift;
  fold_factors(bn, scale, shift);
  LinearLayer folded = layer;
  const int64_t out = layer.out_width(), in = layer.in_width();
  for (int64_t o = 0; o < out; ++o)
    for (int64_t i = 0; i < in; ++i) folded.weight.value[o * in + i] *= scale[static_cast<size_t>(o)];
  folded.bias = Tensor({out}, std::vector<double>(shift.begin(), shift.end()));
  return folded;
}

Conv2dLayer fold_bn(const Conv2dLayer& layer, const BatchNorm& bn) {
  if (layer.c_out() != bn.channels())
    throw ShapeError("fold_bn: conv output channels " + std::to_string(layer.c_out()) +
                     " do not match BN channels " + std::to_string(bn.channels()));
  std::vector<double> scale, shift;
  fold_factors(bn, scale, shift);
  Conv2dLayer folded = layer;
  const int64_t per = layer.kernel.value.size() / layer.c_out();
  for (int64_t co = 0; co < layer.c_out(); ++co)
    for (int64_t i = 0; i < per; ++i) folded.kernel.value[co * per + i] *= scale[static_cast<size_t>(co)];
  folded.bias = Tensor({layer.c_out()}, std::vector<double>(shift.begin(), shift.end()));
  return folded;
}

Tensor eval_linear(const LinearLayer& layer, const Tensor& x, int axis) {
  Tape t;
  Var out = t.axis_apply(t.input(layer.weight.value), t.input(x), axis);
  Tensor y = t.val(out);
  if (layer.bias) {
    int64_t outer = 1, mid = y.dim(axis), inner = 1;
    for (int i = 0; i < axis; ++i) outer *= y.dim(i);
    for (int i = axis + 1; i < y.rank(); ++i) inner *= y.dim(i);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t c = 0; c < mid; ++c) {
        double* row = y.data() + (o * mid + c) * inner;
        const double b = (*layer.bias)[c];
        for (int64_t i = 0; i < inner; ++i) row[i] += b;
      }
  }
  return y;
}

Tensor eval_conv2d(const Conv2dLayer& layer, const Tensor& x) {
  Tape t;
  Conv2dLayer tmp = layer;
  Var out = conv2d_forward(t, tmp, t.input(x));
  Tensor y = t.val(out);
  if (layer.bias) {
    const int64_t N = y.dim(0), C = y.dim(1), inner = y.dim(2) * y.dim(3);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        double* row = y.data() + (n * C + c) * inner;
        const double b = (*layer.bias)[c];
        for (int64_t i = 0; i < inner; ++i) row[i] += b;
      }
  }
  return y;
}

Tensor eval_bn(const BatchNorm& bn, const Tensor& x) {
  int64_t N, C, inner;
  bn_split(x, N, C, inner);
  std::vector<double> scale, shift;
  fold_factors(bn, scale, shift);
  Tensor y(x.shape());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const double a = scale[static_cast<size_t>(c)], b = shift[static_cast<size_t>(c)];
      const double* row = x.data() + (n * C + c) * inner;
      double* orow = y.data() + (n * C + c) * inner;
      for (int64_t i = 0; i < inner; ++i) orow[i] = a * row[i] + b;
    }
  return y;
}

}  // namespace spikemix
