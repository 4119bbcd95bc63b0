#include "spikemix/neuron.hpp"

#include <cmath>
#include <memory>

namespace spikemix {

void LifParams::validate() const {
  if (!(tau > 1.0)) throw ConfigError("lif: tau must be > 1");
  if (!(v_th > 0.0)) throw ConfigError("lif: v_th must be > 0");
  if (!(surrogate_slope > 0.0)) throw ConfigError("lif: surrogate_slope must be > 0");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LifStepResult lif_step(const Tensor& u, const Tensor& z, const LifParams& p) {
  p.validate();
  require_same_shape(u, z, "lif_step");
  if (!z.all_finite()) throw NumericError("lif_step: non-finite input");
  LifStepResult r{Tensor(z.shape()), Tensor(z.shape()), Tensor(z.shape())};
  const double inv_tau = 1.0 / p.tau;
  for (int64_t i = 0; i < z.size(); ++i) {
    const double up = u[i] + (z[i] - u[i]) * inv_tau;
    const double y = up >= p.v_th ? 1.0 : 0.0;
    r.u_pre[i] = up;
    r.y[i] = y;
    r.u_next[i] = (1.0 - y) * up;
  }
  return r;
}

Tensor surrogate_factor(const Tensor& u_pre, const LifParams& p) {
  Tensor out(u_pre.shape());
  const double k = p.surrogate_slope;
  for (int64_t i = 0; i < u_pre.size(); ++i) {
    const double s = sigmoid(k * (u_pre[i] - p.v_th));
    out[i] = k * s * (1.0 - s);
  }
  return out;
}

Tensor lif_backward_rule(const Tensor& u_pre, const Tensor& upstream, const LifParams& p) {
  require_same_shape(u_pre, upstream, "lif_backward_rule");
  Tensor out = surrogate_factor(u_pre, p);
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= upstream[i];
  return out;
}

Var lif_unrolled(Tape& t, Var z, int t_steps, const LifParams& p, SpikeCounter* counter) {
  p.validate();
  const Tensor& Z = t.val(z);
  if (t_steps <= 0) throw ConfigError("lif: step count must be positive");
  if (Z.rank() < 1 || Z.dim(0) % t_steps != 0)
    throw ShapeError("lif: leading dim " + std::to_string(Z.rank() ? Z.dim(0) : 0) + " is not a multiple of T=" +
                     std::to_string(t_steps));
  if (!Z.all_finite()) throw NumericError("lif: non-finite input");

  const int64_t chunk = Z.size() / t_steps;
  const double inv_tau = 1.0 / p.tau;
  auto u_pre = std::make_shared<Tensor>(Z.shape());
  Tensor y(Z.shape());
  {
    std::vector<double> u(static_cast<size_t>(chunk), 0.0);
    for (int step = 0; step < t_steps; ++step) {
      const double* zb = Z.data() + step * chunk;
      double* ub = u_pre->data() + step * chunk;
      double* yb = y.data() + step * chunk;
      for (int64_t i = 0; i < chunk; ++i) {
        const double up = u[static_cast<size_t>(i)] + (zb[i] - u[static_cast<size_t>(i)]) * inv_tau;
        ub[i] = up;
        double yv;
        if (p.relaxed) {
          yv = sigmoid(p.surrogate_slope * (up - p.v_th));
        } else {
          yv = up >= p.v_th ? 1.0 : 0.0;
        }
        yb[i] = yv;
        u[static_cast<size_t>(i)] = (1.0 - yv) * up;
      }
    }
  }
  if (counter && !p.relaxed) {
    double s = 0.0;
    for (int64_t i = 0; i < y.size(); ++i) s += y[i];
    counter->spikes += s;
    counter->elements += static_cast<double>(y.size());
  }

  const int zid = z.id;
  const LifParams params = p;
  return t.record(std::move(y), {zid}, [zid, t_steps, chunk, params, u_pre](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& gz = tp.grad_of(zid);
    const double inv_tau2 = 1.0 / params.tau;
    const double keep = 1.0 - inv_tau2;
    const double k = params.surrogate_slope;
    std::vector<double> gu(static_cast<size_t>(chunk), 0.0);  // d loss / d u[t]
    for (int step = t_steps - 1; step >= 0; --step) {
      const double* ub = u_pre->data() + step * chunk;
      const double* gb = g.data() + step * chunk;
      double* gzb = gz.data() + step * chunk;
      for (int64_t i = 0; i < chunk; ++i) {
        const double up = ub[i];
        const double s = sigmoid(k * (up - params.v_th));
        const double sg = k * s * (1.0 - s);
        const double yv = params.relaxed ? s : (up >= params.v_th ? 1.0 : 0.0);
        const double gu_t = gu[static_cast<size_t>(i)];
        double gy = gb[i];
        if (!params.detach_reset) gy += gu_t * (-up);  // u' = (1-y)*u_pre
        const double g_upre = gu_t * (1.0 - yv) + gy * sg;
        gzb[i] += g_upre * inv_tau2;
        gu[static_cast<size_t>(i)] = g_upre * keep;
      }
    }
  });
}

SpikeCounter* RateRecorder::site(const std::string& name) {
  for (auto& s : sites_)
    if (s.first == name) return &s.second;
  sites_.emplace_back(name, SpikeCounter{});
  return &sites_.back().second;
}

double RateRecorder::mean_rate() const {
  double sp = 0.0, el = 0.0;
  for (const auto& s : sites_) {
    sp += s.second.spikes;
    el += s.second.elements;
  }
  return el > 0 ? sp / el : 0.0;
}

void RateRecorder::reset() { sites_.clear(); }

}  // namespace spikemix
