#pragma once

#include <optional>
#include <string>

#include "spikemix/tape.hpp"

namespace spikemix {

// Weight-only linear map. Training-mode layers carry no bias; the batch norm
// that follows supplies the affine terms. fold_bn() produces the biased
// inference layer.
struct LinearLayer {
  Parameter weight;  // [out x in]
  std::optional<Tensor> bias;

  LinearLayer() = default;
  LinearLayer(int64_t out, int64_t in, std::string name);
  int64_t out_width() const { return weight.value.dim(0); }
  int64_t in_width() const { return weight.value.dim(1); }
};

struct Conv2dLayer {
  Parameter kernel;  // [Cout x Cin x k x k]
  int stride = 1;
  int padding = 0;
  std::optional<Tensor> bias;

  Conv2dLayer() = default;
  Conv2dLayer(int64_t c_out, int64_t c_in, int k, int stride, int padding, std::string name);
  int64_t c_out() const { return kernel.value.dim(0); }
  int64_t c_in() const { return kernel.value.dim(1); }
  int k() const { return static_cast<int>(kernel.value.dim(2)); }
};

struct BatchNorm {
  Parameter gamma, beta;      // [C]
  Tensor running_mean;        // [C]
  Tensor running_var;         // [C]
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm() = default;
  BatchNorm(int64_t channels, std::string name);
  int64_t channels() const { return gamma.value.dim(0); }
};

enum class BnMode { train, eval };

int64_t conv_out_size(int64_t in, int k, int stride, int padding);

// y = w applied along `axis` of x; no bias in training mode.
Var linear_forward(Tape& t, LinearLayer& layer, Var x, int axis);

// Cross-correlation on [N, Cin, H, W].
Var conv2d_forward(Tape& t, Conv2dLayer& layer, Var x);

// Normalizes over every axis except the channel axis (axis 1). The forward
// pass sees time-stacked [T*B, C, ...] carriers, so batch statistics pool the
// simulation steps together with the batch; that is what makes the statistics
// step-independent and therefore foldable.
Var bn_forward(Tape& t, BatchNorm& bn, Var x, BnMode mode);

// Absorbs eval-mode BN into the preceding layer:
//   scale_c = gamma_c / sqrt(running_var_c + eps)
//   W'_c    = scale_c * W_c ,  b'_c = beta_c - scale_c * running_mean_c
// so that folded(x) == bn_eval(layer(x)).
LinearLayer fold_bn(const LinearLayer& layer, const BatchNorm& bn);
Conv2dLayer fold_bn(const Conv2dLayer& layer, const BatchNorm& bn);

// Plain (tape-free) eval-mode applications, used by the fold-equivalence
// oracle and the weight export path.
Tensor eval_linear(const LinearLayer& layer, const Tensor& x, int axis);
Tensor eval_conv2d(const Conv2dLayer& layer, const Tensor& x);
Tensor eval_bn(const BatchNorm& bn, const Tensor& x);

}  // namespace spikemix
