#include "spikemix/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>

namespace spikemix {

Var softmax_cross_entropy(Tape& t, Var logits, const std::vector<int>& targets) {
  const Tensor& L = t.val(logits);
  if (L.rank() != 2) throw ShapeError("cross-entropy: logits must be [B,K], got " + shape_str(L.shape()));
  const int64_t B = L.dim(0), K = L.dim(1);
  if (static_cast<int64_t>(targets.size()) != B)
    throw ShapeError("cross-entropy: " + std::to_string(targets.size()) + " targets for batch " + std::to_string(B));
  for (int tv : targets)
    if (tv < 0 || tv >= K)
      throw ConfigError("cross-entropy: target " + std::to_string(tv) + " out of range [0," + std::to_string(K) + ")");

  auto probs = std::make_shared<Tensor>(Shape{B, K});
  double loss = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const double* row = L.data() + b * K;
    double m = row[0];
    for (int64_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (int64_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
    const double lse = m + std::log(z);
    for (int64_t k = 0; k < K; ++k) (*probs)[b * K + k] = std::exp(row[k] - lse);
    loss += lse - row[targets[static_cast<size_t>(b)]];
  }
  loss /= static_cast<double>(B);
  if (!std::isfinite(loss)) throw NumericError("cross-entropy: non-finite loss");

  Tensor out({1});
  out[0] = loss;
  const int lid = logits.id;
  const std::vector<int> tg = targets;
  return t.record(std::move(out), {lid}, [lid, B, K, probs, tg](Tape& tp, int self) {
    const double g = tp.grad_of(self)[0] / static_cast<double>(B);
    Tensor& gl = tp.grad_of(lid);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t k = 0; k < K; ++k) {
        double v = (*probs)[b * K + k];
        if (k == tg[static_cast<size_t>(b)]) v -= 1.0;
        gl[b * K + k] += g * v;
      }
  });
}

Var time_averaged_ce(Tape& t, Var step_logits, int t_steps, const std::vector<int>& targets) {
  const Tensor& L = t.val(step_logits);
  if (L.rank() != 2 || L.dim(0) % t_steps != 0)
    throw ShapeError("time-averaged ce: logits must be [T*B,K] with T=" + std::to_string(t_steps));
  const int64_t B = L.dim(0) / t_steps, K = L.dim(1);
  Var grouped = t.reshape(step_logits, {t_steps, B * K});
  Var avg = t.reshape(t.mean_axis(grouped, 0), {B, K});
  return softmax_cross_entropy(t, avg, targets);
}

double cosine_lr(int64_t step, int64_t total, double lr0) {
  if (total <= 0) throw ConfigError("cosine_lr: total steps must be positive");
  if (step < 0 || step > total) throw ConfigError("cosine_lr: step out of [0,total]");
  return 0.5 * lr0 * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step) / static_cast<double>(total)));
}

void SgdState::init(const std::vector<std::pair<std::string, Parameter*>>& params) {
  velocity.clear();
  velocity.reserve(params.size());
  for (const auto& [name, p] : params) velocity.emplace_back(p->value.shape());
  step = 0;
  epoch = 0;
}

void sgd_step(std::vector<std::pair<std::string, Parameter*>>& params, SgdState& state, double lr) {
  if (state.velocity.size() != params.size()) throw ConfigError("sgd: state not initialized for this parameter set");
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter* p = params[i].second;
    Tensor& v = state.velocity[i];
    Tensor& g = p->grad_ref();
    const double mu = state.momentum;
    const double wd = state.weight_decay;
    for (int64_t j = 0; j < v.size(); ++j) {
      double gj = g[j];
      if (!std::isfinite(gj)) throw NumericError("sgd: non-finite gradient in parameter '" + params[i].first + "'");
      if (wd != 0.0) gj += wd * p->value[j];
      v[j] = mu * v[j] + gj;
      p->value[j] -= lr * v[j];
    }
  }
  ++state.step;
}

Tensor hflip_image(const Tensor& img) {
  if (img.rank() != 3) throw ShapeError("hflip: expected [C,H,W]");
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor out(img.shape());
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = img[(c * H + y) * W + (W - 1 - x)];
  return out;
}

Tensor pad_crop_image(const Tensor& img, int pad, int dy, int dx) {
  if (img.rank() != 3) throw ShapeError("pad_crop: expected [C,H,W]");
  if (dy < 0 || dy > 2 * pad || dx < 0 || dx > 2 * pad) throw ConfigError("pad_crop: offset out of range");
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor out(img.shape());
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        const int64_t sy = y + dy - pad;
        const int64_t sx = x + dx - pad;
        out[(c * H + y) * W + x] =
            (sy >= 0 && sy < H && sx >= 0 && sx < W) ? img[(c * H + sy) * W + sx] : 0.0;
      }
  return out;
}

Tensor augment_image(const Tensor& img, int pad, Rng& rng) {
  Tensor out = img;
  if (pad > 0) {
    const int dy = static_cast<int>(rng.below(2 * pad + 1));
    const int dx = static_cast<int>(rng.below(2 * pad + 1));
    out = pad_crop_image(out, pad, dy, dx);
  }
  if (rng.coin()) out = hflip_image(out);
  return out;
}

std::string format_metrics_line(const EpochRecord& r) {
  std::string s = "epoch=" + std::to_string(r.epoch);
  s += " lr=" + fmt_double(r.lr);
  s += " train_loss=" + fmt_double(r.train_loss);
  s += " train_acc=" + fmt_double(r.train_acc);
  s += " eval_acc=" + fmt_double(r.eval_acc);
  s += " spike_rate=" + fmt_double(r.spike_rate);
  return s;
}

namespace {

Tensor gather_batch(const Dataset& ds, const std::vector<int64_t>& idx, size_t lo, size_t hi, bool augment, int pad,
                    Rng* rng, std::vector<int>& targets) {
  const int64_t B = static_cast<int64_t>(hi - lo);
  Tensor batch({B, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
  const int64_t per = ds.images.size() / ds.images.dim(0);
  targets.clear();
  for (size_t i = lo; i < hi; ++i) {
    const int64_t src = idx[i];
    Tensor img = ds.sample(src);
    if (augment && rng) img = augment_image(img, pad, *rng);
    std::memcpy(batch.data() + static_cast<int64_t>(i - lo) * per, img.data(),
                static_cast<size_t>(per) * sizeof(double));
    targets.push_back(ds.labels[static_cast<size_t>(src)]);
  }
  return batch;
}

}  // namespace

double evaluate(Network& net, const Dataset& data, int batch_size) {
  if (data.count() == 0) throw ConfigError("evaluate: empty dataset");
  const int T = net.config().t_steps;
  int64_t correct = 0;
  std::vector<int64_t> idx(static_cast<size_t>(data.count()));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  for (size_t lo = 0; lo < idx.size(); lo += static_cast<size_t>(batch_size)) {
    const size_t hi = std::min(idx.size(), lo + static_cast<size_t>(batch_size));
    std::vector<int> targets;
    Tensor batch = gather_batch(data, idx, lo, hi, false, 0, nullptr, targets);
    Tape tape;
    ForwardOpts opts;
    opts.bn = BnMode::eval;
    Var logits = net.forward(tape, batch, T, opts);
    std::vector<int> pred = predict_classes(tape.val(logits), T);
    for (size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == targets[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.count());
}

TrainResult train_network(Network& net, const Dataset& train, const Dataset& eval, const RunConfig& cfg,
                          const std::string& metrics_path) {
  if (train.count() == 0) throw ConfigError("train: empty dataset");
  train.validate(net.config().num_classes);
  const int T = net.config().t_steps;
  const int64_t batches_per_epoch = (train.count() + cfg.batch_size - 1) / cfg.batch_size;

  SgdState state;
  state.lr0 = cfg.lr0;
  state.momentum = cfg.momentum;
  state.weight_decay = cfg.weight_decay;
  state.init(net.parameters());
  state.total_steps = std::max<int64_t>(1, batches_per_epoch * cfg.epochs);

  Rng order_rng(net.config().seed ^ 0xD1B54A32D192ED03ULL);
  Rng augment_rng(net.config().seed ^ 0x94D049BB133111EBULL);

  std::ofstream metrics;
  if (!metrics_path.empty()) {
    std::filesystem::path p(metrics_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    metrics.open(metrics_path, std::ios::trunc);
    if (!metrics) throw IoError("train: cannot open metrics file " + metrics_path);
  }

  TrainResult result;
  std::vector<int64_t> idx(static_cast<size_t>(train.count()));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // deterministic shuffle
    for (int64_t i = static_cast<int64_t>(idx.size()) - 1; i > 0; --i)
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(order_rng.below(i + 1))]);

    const double epoch_lr = cosine_lr(state.step, state.total_steps, cfg.lr0);
    double loss_sum = 0.0;
    int64_t correct = 0;
    RateRecorder rates;

    for (size_t lo = 0; lo < idx.size(); lo += static_cast<size_t>(cfg.batch_size)) {
      const size_t hi = std::min(idx.size(), lo + static_cast<size_t>(cfg.batch_size));
      std::vector<int> targets;
      Tensor batch = gather_batch(train, idx, lo, hi, cfg.augment, cfg.augment_pad, &augment_rng, targets);

      net.zero_grad();
      Tape tape;
      ForwardOpts opts;
      opts.bn = BnMode::train;
      opts.rates = &rates;
      Var logits = net.forward(tape, batch, T, opts);
      Var loss = time_averaged_ce(tape, logits, T, targets);
      const double loss_v = tape.val(loss)[0];
      tape.backward(loss);

      const double lr = cosine_lr(state.step, state.total_steps, cfg.lr0);
      sgd_step(net.parameters(), state, lr);

      loss_sum += loss_v * static_cast<double>(hi - lo);
      std::vector<int> pred = predict_classes(tape.val(logits), T);
      for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == targets[i]) ++correct;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = epoch_lr;
    rec.train_loss = loss_sum / static_cast<double>(train.count());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.count());
    rec.eval_acc = eval.count() > 0 ? evaluate(net, eval, cfg.batch_size) : rec.train_acc;
    rec.spike_rate = rates.mean_rate();
    result.history.push_back(rec);
    if (metrics.is_open()) {
      metrics << format_metrics_line(rec) << "\n";
      metrics.flush();
    }
    state.epoch = epoch + 1;
  }

  result.optimizer.epoch = state.epoch;
  result.optimizer.step = state.step;
  result.optimizer.total_steps = state.total_steps;
  const auto& params = net.parameters();
  for (size_t i = 0; i < params.size(); ++i)
    result.optimizer.velocity.emplace_back(params[i].first, state.velocity[i]);
  return result;
}

}  // namespace spikemix
