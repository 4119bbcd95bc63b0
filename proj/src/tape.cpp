#include "spikemix/tape.hpp"

#include <cstring>

namespace spikemix {

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw ShapeError("tape: invalid node handle");
}

Var Tape::leaf(Parameter& p) {
  Node n;
  n.value = p.value;
  n.bound = &p;
  return Var{push(std::move(n))};
}

Var Tape::input(Tensor v) {
  Node n;
  n.value = std::move(v);
  return Var{push(std::move(n))};
}

const Tensor& Tape::val(Var v) const {
  check(v);
  return nodes_[static_cast<size_t>(v.id)].value;
}

const Tensor& Tape::grad(Var v) const {
  check(v);
  if (grads_.size() != nodes_.size()) throw Error("tape: gradients not computed yet");
  return grads_[static_cast<size_t>(v.id)];
}

const Tensor& Tape::value_of(int id) const { return nodes_[static_cast<size_t>(id)].value; }

Tensor& Tape::grad_of(int id) { return grads_[static_cast<size_t>(id)]; }

Var Tape::record(Tensor value, std::vector<int> inputs, BackwardFn bw) {
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backward = std::move(bw);
  return Var{push(std::move(n))};
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  const int64_t M = A.dim(0), K = A.dim(1), N = B.dim(1);
  Tensor out({M, N});
  {
    const double* pa = A.data();
    const double* pb = B.data();
    double* po = out.data();
    for (int64_t m = 0; m < M; ++m)
      for (int64_t k = 0; k < K; ++k) {
        const double av = pa[m * K + k];
        if (av == 0.0) continue;
        const double* brow = pb + k * N;
        double* orow = po + m * N;
        for (int64_t n = 0; n < N; ++n) orow[n] += av * brow[n];
      }
  }
  const int aid = a.id, bid = b.id;
  return record(std::move(out), {aid, bid}, [aid, bid, M, K, N](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& A2 = t.value_of(aid);
    const Tensor& B2 = t.value_of(bid);
    Tensor& ga = t.grad_of(aid);
    Tensor& gb = t.grad_of(bid);
    // ga += g * B^T ; gb += A^T * g
    for (int64_t m = 0; m < M; ++m)
      for (int64_t k = 0; k < K; ++k) {
        double acc = 0.0;
        for (int64_t n = 0; n < N; ++n) acc += g[m * N + n] * B2[k * N + n];
        ga[m * K + k] += acc;
      }
    for (int64_t k = 0; k < K; ++k)
      for (int64_t m = 0; m < M; ++m) {
        const double av = A2[m * K + k];
        if (av == 0.0) continue;
        for (int64_t n = 0; n < N; ++n) gb[k * N + n] += av * g[m * N + n];
      }
  });
}

namespace {
void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& mid, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  mid = s[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace

Var Tape::axis_apply(Var w, Var x, int axis) {
  check(w);
  check(x);
  const Tensor& W = val(w);
  const Tensor& X = val(x);
  if (W.rank() != 2) throw ShapeError("axis_apply: weight must be rank 2, got " + shape_str(W.shape()));
  if (axis < 0 || axis >= X.rank())
    throw ShapeError("axis_apply: axis " + std::to_string(axis) + " out of range for " + shape_str(X.shape()));
  const int64_t E = W.dim(0), D = W.dim(1);
  if (X.dim(axis) != D)
    throw ShapeError("axis_apply: weight " + shape_str(W.shape()) + " does not match axis " + std::to_string(axis) +
                     " of " + shape_str(X.shape()));
  int64_t outer, mid, inner;
  axis_split(X.shape(), axis, outer, mid, inner);
  Shape os = X.shape();
  os[static_cast<size_t>(axis)] = E;
  Tensor out(os);
  {
    const double* pw = W.data();
    const double* px = X.data();
    double* po = out.data();
    for (int64_t o = 0; o < outer; ++o) {
      const double* xb = px + o * D * inner;
      double* yb = po + o * E * inner;
      for (int64_t e = 0; e < E; ++e) {
        const double* wr = pw + e * D;
        double* yr = yb + e * inner;
        for (int64_t d = 0; d < D; ++d) {
          const double wv = wr[d];
          if (wv == 0.0) continue;
          const double* xr = xb + d * inner;
          for (int64_t i = 0; i < inner; ++i) yr[i] += wv * xr[i];
        }
      }
    }
  }
  const int wid = w.id, xid = x.id;
  return record(std::move(out), {wid, xid}, [wid, xid, E, D, outer, inner](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& W2 = t.value_of(wid);
    const Tensor& X2 = t.value_of(xid);
    Tensor& gw = t.grad_of(wid);
    Tensor& gx = t.grad_of(xid);
    for (int64_t o = 0; o < outer; ++o) {
      const double* gb = g.data() + o * E * inner;
      const double* xb = X2.data() + o * D * inner;
      double* gxb = gx.data() + o * D * inner;
      for (int64_t e = 0; e < E; ++e) {
        const double* gr = gb + e * inner;
        const double* wr = W2.data() + e * D;
        double* gwr = gw.data() + e * D;
        for (int64_t d = 0; d < D; ++d) {
          const double* xr = xb + d * inner;
          double* gxr = gxb + d * inner;
          const double wv = wr[d];
          double acc = 0.0;
          for (int64_t i = 0; i < inner; ++i) {
            acc += gr[i] * xr[i];
            gxr[i] += wv * gr[i];
          }
          gwr[d] += acc;
        }
      }
    }
  });
}

Var Tape::concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no parts");
  for (Var p : parts) check(p);
  const Tensor& first = val(parts[0]);
  if (first.rank() < 2) throw ShapeError("concat_channels: parts must have rank >= 2");
  int64_t outer = first.dim(0);
  int64_t inner = 1;
  for (int i = 2; i < first.rank(); ++i) inner *= first.dim(i);
  int64_t ctotal = 0;
  std::vector<int64_t> widths;
  for (Var p : parts) {
    const Tensor& tp = val(p);
    if (tp.rank() != first.rank() || tp.dim(0) != outer)
      throw ShapeError("concat_channels: batch mismatch " + shape_str(tp.shape()) + " vs " + shape_str(first.shape()));
    for (int i = 2; i < first.rank(); ++i)
      if (tp.dim(i) != first.dim(i))
        throw ShapeError("concat_channels: spatial mismatch " + shape_str(tp.shape()) + " vs " +
                         shape_str(first.shape()));
    widths.push_back(tp.dim(1) * inner);
    ctotal += tp.dim(1);
  }
  Shape os = first.shape();
  os[1] = ctotal;
  Tensor out(os);
  {
    double* po = out.data();
    const int64_t row = ctotal * inner;
    for (int64_t o = 0; o < outer; ++o) {
      int64_t off = 0;
      for (size_t pi = 0; pi < parts.size(); ++pi) {
        const Tensor& tp = val(parts[pi]);
        std::memcpy(po + o * row + off, tp.data() + o * widths[pi], static_cast<size_t>(widths[pi]) * sizeof(double));
        off += widths[pi];
      }
    }
  }
  std::vector<int> ids;
  for (Var p : parts) ids.push_back(p.id);
  const int64_t row = ctotal * inner;
  return record(std::move(out), ids, [ids, widths, outer, row](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    for (int64_t o = 0; o < outer; ++o) {
      int64_t off = 0;
      for (size_t pi = 0; pi < ids.size(); ++pi) {
        Tensor& gp = t.grad_of(ids[pi]);
        const double* src = g.data() + o * row + off;
        double* dst = gp.data() + o * widths[pi];
        for (int64_t i = 0; i < widths[pi]; ++i) dst[i] += src[i];
        off += widths[pi];
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require_same_shape(A, B, "add");
  Tensor out = A;
  add_inplace(out, B);
  const int aid = a.id, bid = b.id;
  return record(std::move(out), {aid, bid}, [aid, bid](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    add_inplace(t.grad_of(aid), g);
    add_inplace(t.grad_of(bid), g);
  });
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require_same_shape(A, B, "sub");
  Tensor out = A;
  add_scaled(out, B, -1.0);
  const int aid = a.id, bid = b.id;
  return record(std::move(out), {aid, bid}, [aid, bid](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    add_inplace(t.grad_of(aid), g);
    add_scaled(t.grad_of(bid), g, -1.0);
  });
}

Var Tape::scale(Var a, double k) {
  check(a);
  Tensor out = val(a);
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= k;
  const int aid = a.id;
  return record(std::move(out), {aid}, [aid, k](Tape& t, int self) {
    add_scaled(t.grad_of(aid), t.grad_of(self), k);
  });
}

Var Tape::reshape(Var a, Shape target) {
  check(a);
  const Tensor& A = val(a);
  if (shape_size(target) != A.size())
    throw ShapeError("reshape: cannot view " + shape_str(A.shape()) + " as " + shape_str(target));
  Tensor out(target, A.vec());
  const int aid = a.id;
  return record(std::move(out), {aid}, [aid](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_of(aid);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var Tape::transpose(Var a) {
  check(a);
  const Tensor& A = val(a);
  if (A.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(A.shape()));
  const int64_t M = A.dim(0), N = A.dim(1);
  Tensor out({N, M});
  for (int64_t m = 0; m < M; ++m)
    for (int64_t n = 0; n < N; ++n) out[n * M + m] = A[m * N + n];
  const int aid = a.id;
  return record(std::move(out), {aid}, [aid, M, N](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_of(aid);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t m = 0; m < M; ++m) ga[m * N + n] += g[n * M + m];
  });
}

Var Tape::mean_axis(Var a, int axis) {
  check(a);
  const Tensor& A = val(a);
  if (axis < 0 || axis >= A.rank())
    throw ShapeError("mean_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(A.shape()));
  int64_t outer, mid, inner;
  axis_split(A.shape(), axis, outer, mid, inner);
  Shape os;
  for (int i = 0; i < A.rank(); ++i)
    if (i != axis) os.push_back(A.dim(i));
  if (os.empty()) os.push_back(1);
  Tensor out(os);
  const double invm = 1.0 / static_cast<double>(mid);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t d = 0; d < mid; ++d) {
      const double* src = A.data() + (o * mid + d) * inner;
      double* dst = out.data() + o * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * invm;
    }
  const int aid = a.id;
  return record(std::move(out), {aid}, [aid, outer, mid, inner, invm](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_of(aid);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t d = 0; d < mid; ++d) {
        double* dst = ga.data() + (o * mid + d) * inner;
        const double* src = g.data() + o * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * invm;
      }
  });
}

Var Tape::sum_all(Var a) {
  check(a);
  const Tensor& A = val(a);
  double s = 0.0;
  for (int64_t i = 0; i < A.size(); ++i) s += A[i];
  Tensor out({1});
  out[0] = s;
  const int aid = a.id;
  return record(std::move(out), {aid}, [aid](Tape& t, int self) {
    const double g = t.grad_of(self)[0];
    Tensor& ga = t.grad_of(aid);
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var Tape::mean_all(Var a) {
  check(a);
  const int64_t n = val(a).size();
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

void Tape::backward(Var loss) {
  check(loss);
  if (consumed_) throw StaleTapeError("backward called twice on the same tape; re-record the forward pass first");
  const Tensor& lv = nodes_[static_cast<size_t>(loss.id)].value;
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(lv.shape()));
  grads_.clear();
  grads_.resize(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) grads_[i] = Tensor(nodes_[i].value.shape());
  grads_[static_cast<size_t>(loss.id)][0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.backward) n.backward(*this, id);
  }
  for (size_t id = 0; id < nodes_.size(); ++id) {
    Parameter* p = nodes_[id].bound;
    if (p) add_inplace(p->grad_ref(), grads_[id]);
  }
  consumed_ = true;
}

}  // namespace spikemix
