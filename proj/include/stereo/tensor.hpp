#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "stereo/common.hpp"

namespace stereo {

// Backing store plus reverse-mode tape record. Ops that need gradients attach
// a backward closure which reads this node's grad and accumulates into the
// parents' grads. A tape node is consumable once per forward pass.
struct TensorImpl {
  std::vector<int> shape;
  std::vector<real> v;
  std::vector<real> g;  // empty until a gradient is first accumulated
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  void ensure_grad() {
    if (g.empty()) g.assign(v.size(), real(0));
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> p) : p_(std::move(p)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, real value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<real> values,
                     bool requires_grad = false);
  static Tensor scalar(real value);

  bool defined() const { return p_ != nullptr; }
  const std::vector<int>& shape() const { return p_->shape; }
  int dim(int i) const { return p_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(p_->shape.size()); }
  i64 numel() const { return static_cast<i64>(p_->v.size()); }

  std::vector<real>& values() { return p_->v; }
  const std::vector<real>& values() const { return p_->v; }
  real item() const;

  bool requires_grad() const { return p_ && p_->requires_grad; }
  void set_requires_grad(bool b) { p_->requires_grad = b; }
  bool has_grad() const { return p_ && !p_->g.empty(); }
  std::vector<real>& grad();
  const std::vector<real>& grad() const;
  void zero_grad() { p_->g.clear(); }

  std::shared_ptr<TensorImpl> impl() const { return p_; }

 private:
  std::shared_ptr<TensorImpl> p_;
};

i64 shape_numel(const std::vector<int>& shape);
bool same_shape(const Tensor& a, const Tensor& b);
std::string shape_str(const std::vector<int>& shape);

// Builds an op result node. The closure must only touch the captured parents
// and the node it receives; it runs at most once.
Tensor make_op(std::vector<int> shape, std::vector<real> values,
               const std::vector<Tensor>& parents,
               std::function<void(TensorImpl&)> backward_fn);

// Reverse-mode sweep from a scalar loss. Populates grads of every reachable
// node that requires them and retires the tape.
void backward(const Tensor& loss);

// Elementwise / structural ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor abs_diff(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);
Tensor add_scalar(const Tensor& a, real c);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softmax_axis(const Tensor& a, int axis);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor narrow(const Tensor& a, int axis, int start, int len);
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

}  // namespace stereo
