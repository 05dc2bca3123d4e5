#include "stereo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace stereo {

i64 shape_numel(const std::vector<int>& shape) {
  i64 n = 1;
  for (int e : shape) {
    if (e < 0) fail_shape("negative extent");
    n *= e;
  }
  return n;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto p = std::make_shared<TensorImpl>();
  p->v.assign(static_cast<size_t>(shape_numel(shape)), real(0));
  p->shape = std::move(shape);
  p->requires_grad = requires_grad;
  return Tensor(p);
}

Tensor Tensor::full(std::vector<int> shape, real value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<i64>(values.size()))
    fail_shape("value count " + std::to_string(values.size()) + " does not match shape " +
               shape_str(shape));
  auto p = std::make_shared<TensorImpl>();
  p->shape = std::move(shape);
  p->v = std::move(values);
  p->requires_grad = requires_grad;
  return Tensor(p);
}

Tensor Tensor::scalar(real value) { return from({1}, {value}); }

real Tensor::item() const {
  if (numel() != 1) fail_shape("item() on non-scalar tensor " + shape_str(shape()));
  return p_->v[0];
}

std::vector<real>& Tensor::grad() {
  if (!p_->requires_grad) fail_state("grad() on tensor that does not require grad");
  p_->ensure_grad();
  return p_->g;
}

const std::vector<real>& Tensor::grad() const {
  if (!p_ || p_->g.empty()) fail_state("grad() on tensor with no populated gradient");
  return p_->g;
}

Tensor make_op(std::vector<int> shape, std::vector<real> values,
               const std::vector<Tensor>& parents,
               std::function<void(TensorImpl&)> backward_fn) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  bool needs = false;
  for (const auto& p : parents)
    if (p.requires_grad()) needs = true;
  if (needs) {
    out.impl()->requires_grad = true;
    for (const auto& p : parents) out.impl()->parents.push_back(p.impl());
    out.impl()->backward_fn = std::move(backward_fn);
  }
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) fail_state("backward requires a scalar loss");
  if (!loss.requires_grad()) fail_state("loss is not connected to any graph");

  // Iterative post-order DFS over the tape. The order list holds shared
  // ownership so releasing a node's parent edges cannot free a node that is
  // still pending in the sweep.
  std::vector<std::shared_ptr<TensorImpl>> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, size_t>> stack;
  stack.push_back({loss.impl(), 0});
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      std::shared_ptr<TensorImpl> par = node->parents[idx++];
      if (par->requires_grad && !seen.count(par.get())) {
        seen.insert(par.get());
        stack.push_back({std::move(par), 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (const auto& n : order)
    if (n->consumed) fail_state("backward called twice through the same graph");

  loss.impl()->ensure_grad();
  loss.impl()->g[0] = real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* n = it->get();
    if (n->backward_fn) {
      if (!n->g.empty()) n->backward_fn(*n);
      n->consumed = true;
      n->backward_fn = nullptr;
      n->parents.clear();
    }
  }
}

namespace {

void accum(TensorImpl& t, const std::vector<real>& delta) {
  if (!t.requires_grad) return;
  t.ensure_grad();
  for (size_t i = 0; i < delta.size(); ++i) t.g[i] += delta[i];
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a, b))
    fail_shape(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same(a, b, "add");
  std::vector<real> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto ai = a.impl(), bi = b.impl();
  return make_op(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl& self) {
    accum(*ai, self.g);
    accum(*bi, self.g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same(a, b, "sub");
  std::vector<real> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto ai = a.impl(), bi = b.impl();
  return make_op(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl& self) {
    accum(*ai, self.g);
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < self.g.size(); ++i) bi->g[i] -= self.g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same(a, b, "mul");
  std::vector<real> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto ai = a.impl(), bi = b.impl();
  return make_op(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl& self) {
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < self.g.size(); ++i) ai->g[i] += self.g[i] * bi->v[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < self.g.size(); ++i) bi->g[i] += self.g[i] * ai->v[i];
    }
  });
}

Tensor abs_diff(const Tensor& a, const Tensor& b) {
  check_same(a, b, "abs_diff");
  std::vector<real> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a.values()[i] - b.values()[i]);
  auto ai = a.impl(), bi = b.impl();
  // sign subgradient, 0 at ties
  return make_op(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl& self) {
    const size_t n = self.g.size();
    if (ai->requires_grad) ai->ensure_grad();
    if (bi->requires_grad) bi->ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      const real d = ai->v[i] - bi->v[i];
      const real s = d > 0 ? real(1) : (d < 0 ? real(-1) : real(0));
      if (ai->requires_grad) ai->g[i] += self.g[i] * s;
      if (bi->requires_grad) bi->g[i] -= self.g[i] * s;
    }
  });
}

Tensor scale(const Tensor& a, real c) {
  std::vector<real> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  auto ai = a.impl();
  return make_op(a.shape(), std::move(out), {a}, [ai, c](TensorImpl& self) {
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < self.g.size(); ++i) ai->g[i] += self.g[i] * c;
    }
  });
}

Tensor add_scalar(const Tensor& a, real c) {
  std::vector<real> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
  auto ai = a.impl();
  return make_op(a.shape(), std::move(out), {a},
                 [ai](TensorImpl& self) { accum(*ai, self.g); });
}

Tensor relu(const Tensor& a) {
  std::vector<real> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0 ? a.values()[i] : real(0);
  auto ai = a.impl();
  return make_op(a.shape(), std::move(out), {a}, [ai](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < self.g.size(); ++i)
      if (ai->v[i] > 0) ai->g[i] += self.g[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<real> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = real(1) / (real(1) + std::exp(-a.values()[i]));
  auto ai = a.impl();
  return make_op(a.shape(), std::move(out), {a}, [ai](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < self.g.size(); ++i) {
      const real y = self.v[i];
      ai->g[i] += self.g[i] * y * (real(1) - y);
    }
  });
}

Tensor softmax_axis(const Tensor& a, int axis) {
  const int nd = a.ndim();
  if (axis < 0 || axis >= nd) fail_shape("softmax axis out of range");
  const i64 K = a.dim(axis);
  i64 outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < nd; ++i) inner *= a.dim(i);

  std::vector<real> out(a.values().size());
  const std::vector<real>& x = a.values();
  parallel_for(outer * inner, [&](i64 b, i64 e) {
    for (i64 t = b; t < e; ++t) {
      const i64 o = t / inner, in = t % inner;
      const i64 base = o * K * inner + in;
      real mx = x[base];
      for (i64 k = 1; k < K; ++k) mx = std::max(mx, x[base + k * inner]);
      real z = 0;
      for (i64 k = 0; k < K; ++k) {
        const real ex = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = ex;
        z += ex;
      }
      const real iz = real(1) / z;
      for (i64 k = 0; k < K; ++k) out[base + k * inner] *= iz;
    }
  });

  auto ai = a.impl();
  return make_op(a.shape(), std::move(out), {a}, [ai, K, inner, outer](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    parallel_for(outer * inner, [&](i64 b, i64 e) {
      for (i64 t = b; t < e; ++t) {
        const i64 o = t / inner, in = t % inner;
        const i64 base = o * K * inner + in;
        real dot = 0;
        for (i64 k = 0; k < K; ++k) dot += self.g[base + k * inner] * self.v[base + k * inner];
        for (i64 k = 0; k < K; ++k) {
          const i64 idx = base + k * inner;
          ai->g[idx] += self.v[idx] * (self.g[idx] - dot);
        }
      }
    });
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) fail_shape("concat of zero tensors");
  const int nd = parts[0].ndim();
  if (axis < 0 || axis >= nd) fail_shape("concat axis out of range");
  std::vector<int> shape = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != nd) fail_shape("concat rank mismatch");
    for (int i = 0; i < nd; ++i)
      if (i != axis && p.dim(i) != shape[static_cast<size_t>(i)])
        fail_shape("concat off-axis extent mismatch: " + shape_str(p.shape()) + " vs " +
                   shape_str(shape));
    total += p.dim(axis);
  }
  shape[static_cast<size_t>(axis)] = total;

  i64 outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < nd; ++i) inner *= shape[static_cast<size_t>(i)];

  std::vector<real> out(static_cast<size_t>(shape_numel(shape)));
  i64 off = 0;
  for (const auto& p : parts) {
    const i64 k = p.dim(axis);
    const std::vector<real>& src = p.values();
    for (i64 o = 0; o < outer; ++o) {
      std::copy(src.begin() + o * k * inner, src.begin() + (o + 1) * k * inner,
                out.begin() + (o * total + off) * inner);
    }
    off += k;
  }

  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_op(shape, std::move(out), parts,
                 [impls, outer, inner, total](TensorImpl& self) {
                   i64 off = 0;
                   for (auto& pi : impls) {
                     const i64 kk = static_cast<i64>(pi->v.size()) / (outer * inner);
                     if (pi->requires_grad) {
                       pi->ensure_grad();
                       for (i64 o = 0; o < outer; ++o)
                         for (i64 j = 0; j < kk * inner; ++j)
                           pi->g[o * kk * inner + j] += self.g[(o * total + off) * inner + j];
                     }
                     off += kk;
                   }
                 });
}

Tensor narrow(const Tensor& a, int axis, int start, int len) {
  const int nd = a.ndim();
  if (axis < 0 || axis >= nd) fail_shape("narrow axis out of range");
  if (start < 0 || len < 0 || start + len > a.dim(axis)) fail_shape("narrow range out of bounds");
  std::vector<int> shape = a.shape();
  const int K = shape[static_cast<size_t>(axis)];
  shape[static_cast<size_t>(axis)] = len;
  i64 outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < nd; ++i) inner *= a.dim(i);

  std::vector<real> out(static_cast<size_t>(shape_numel(shape)));
  const std::vector<real>& src = a.values();
  for (i64 o = 0; o < outer; ++o)
    std::copy(src.begin() + (o * K + start) * inner, src.begin() + (o * K + start + len) * inner,
              out.begin() + o * len * inner);

  auto ai = a.impl();
  return make_op(shape, std::move(out), {a},
                 [ai, outer, inner, K, start, len](TensorImpl& self) {
                   if (!ai->requires_grad) return;
                   ai->ensure_grad();
                   for (i64 o = 0; o < outer; ++o)
                     for (i64 j = 0; j < static_cast<i64>(len) * inner; ++j)
                       ai->g[(o * K + start) * inner + j] += self.g[o * len * inner + j];
                 });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel())
    fail_shape("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  auto ai = a.impl();
  return make_op(std::move(shape), a.values(), {a},
                 [ai](TensorImpl& self) { accum(*ai, self.g); });
}

Tensor sum(const Tensor& a) {
  const real s = pairwise_sum(a.values());
  auto ai = a.impl();
  return make_op({1}, {s}, {a}, [ai](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    const real g = self.g[0];
    for (auto& gi : ai->g) gi += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) fail_shape("mean of empty tensor");
  return scale(sum(a), real(1) / static_cast<real>(a.numel()));
}

}  // namespace stereo
