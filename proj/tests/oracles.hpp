#pragma once

// Test-side oracles. Everything here is independent of the library's
// backward/analysis code paths: finite differences, hand-rolled reference
// simulators, and explicit-loop reimplementations used to pin expected
// values.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "spikemix/rng.hpp"
#include "spikemix/tape.hpp"

namespace oracles {

struct GradCheckResult {
  double worst_ratio = 0.0;  // max |analytic - fd| / (atol + rtol*max(|a|,|fd|))
  double max_abs_diff = 0.0;
  std::string worst;
  bool pass(double limit = 1.0) const { return worst_ratio <= limit; }
};

// Central finite differences over every element of every listed parameter.
// `loss` must recompute the forward pass from the parameters' current values;
// `grads` must populate Parameter::grad (one zero_grad + backward).
inline GradCheckResult fd_check(const std::vector<spikemix::Parameter*>& params, const std::function<double()>& loss,
                                const std::function<void()>& grads, double rtol, double atol = 1e-7,
                                double h = 1e-5) {
  for (spikemix::Parameter* p : params) p->zero_grad();
  grads();
  GradCheckResult res;
  for (spikemix::Parameter* p : params) {
    for (int64_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double up = loss();
      p->value[i] = keep - h;
      const double dn = loss();
      p->value[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double an = p->grad.empty() ? 0.0 : p->grad[i];
      const double diff = std::abs(an - fd);
      const double ratio = diff / (atol + rtol * std::max(std::abs(an), std::abs(fd)));
      if (ratio > res.worst_ratio) {
        res.worst_ratio = ratio;
        res.max_abs_diff = diff;
        res.worst = p->name + "[" + std::to_string(i) + "] analytic=" + std::to_string(an) +
                    " fd=" + std::to_string(fd);
      }
    }
  }
  return res;
}

// Scalar LIF recurrence: decay input, hard threshold, hard reset.
struct ScalarLif {
  double tau = 2.0, v_th = 1.0;
  double u = 0.0;
  std::vector<double> u_pre_trace;
  std::vector<int> spikes;

  int step(double z) {
    const double u_pre = u + (z - u) / tau;
    u_pre_trace.push_back(u_pre);
    const int y = u_pre >= v_th ? 1 : 0;
    spikes.push_back(y);
    u = y ? 0.0 : u_pre;
    return y;
  }
};

// Independent softmax cross-entropy for a single row.
inline double softmax_ce_scalar(const std::vector<double>& logits, int target) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return m + std::log(z) - logits[static_cast<size_t>(target)];
}

// Explicit triple-loop matrix product (the loop oracle for axis_apply and
// matmul tests).
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, int64_t m,
                                        int64_t k, int64_t n) {
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t l = 0; l < k; ++l)
        acc += a[static_cast<size_t>(i * k + l)] * b[static_cast<size_t>(l * n + j)];
      out[static_cast<size_t>(i * n + j)] = acc;
    }
  return out;
}

// Naive full conv reference (in-bounds cross-correlation).
inline spikemix::Tensor naive_conv2d(const spikemix::Tensor& x, const spikemix::Tensor& k, int stride, int pad) {
  const int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  spikemix::Tensor y({N, Cout, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox) {
          double acc = 0.0;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = oy * stride - pad + ky;
                const int64_t ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += k.at({co, ci, ky, kx}) * x.at({n, ci, iy, ix});
              }
          y.at({n, co, oy, ox}) = acc;
        }
  return y;
}

inline spikemix::Tensor random_tensor(spikemix::Shape shape, spikemix::Rng& rng, double lo = -1.0, double hi = 1.0) {
  spikemix::Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace oracles
