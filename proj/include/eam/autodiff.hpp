#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "eam/ops.hpp"
#include "eam/tensor.hpp"

namespace eam {

/// One vertex of a reverse-mode differentiation graph. The backprop closure
/// reads this node's grad and accumulates contributions into parent grads.
template <class S>
struct Node {
  Tensor4<S> value;
  Tensor4<S> grad;
  bool is_param = false;
  std::string name;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void(Node<S>&)> backprop;
};

template <class S>
using Var = std::shared_ptr<Node<S>>;

template <class S>
Var<S> constant(Tensor4<S> value, std::string name = {}) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->name = std::move(name);
  return n;
}

template <class S>
Var<S> parameter(Tensor4<S> value, std::string name) {
  auto n = constant(std::move(value), std::move(name));
  n->is_param = true;
  return n;
}

namespace detail {

/// Leaves that are neither parameters nor derived nodes receive no gradient;
/// ops use this to skip the corresponding backward kernels.
template <class S>
bool wants_grad(const Var<S>& v) {
  return v->is_param || !v->parents.empty();
}

template <class S, class F>
Var<S> make_op(Tensor4<S> value, std::vector<Var<S>> parents, F backprop) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
  return n;
}

/// Sums g down to `target` over the axes a broadcast op expanded.
template <class S>
Tensor4<S> reduce_to_shape(const Tensor4<S>& g, const Shape4& target) {
  const Shape4& s = g.shape();
  if (s == target) return g;
  Tensor4<S> out(target, S(0));
  const Index hw = s.h * s.w;
  if (target.c == s.c && target.h == 1 && target.w == 1) {
    for (Index i = 0; i < s.n; ++i)
      for (Index ch = 0; ch < s.c; ++ch) {
        Eigen::Map<const ArrX<S>> pl(g.plane(i, ch), hw);
        out(i, ch, 0, 0) = pl.sum();
      }
    return out;
  }
  if (target.c == 1 && target.h == s.h && target.w == s.w) {
    for (Index i = 0; i < s.n; ++i) {
      Eigen::Map<ArrX<S>> acc(out.plane(i, 0), hw);
      for (Index ch = 0; ch < s.c; ++ch) acc += Eigen::Map<const ArrX<S>>(g.plane(i, ch), hw);
    }
    return out;
  }
  throw ShapeError("channel", "cannot reduce " + s.str() + " to " + target.str());
}

}  // namespace detail

/// Populates grads of every node reachable from `loss` with d(loss)/d(node).
/// Grads are zeroed first, so repeated calls are bit-identical; multiple uses
/// of a node accumulate additively.
template <class S>
void backward(const Var<S>& loss) {
  if (loss->value.size() != 1) throw ValueError("backward: loss must be scalar-valued");

  // Iterative post-order DFS; parents land before children, so the reversed
  // list runs from loss back to the leaves.
  std::vector<Node<S>*> order;
  std::unordered_map<Node<S>*, int> state;  // 1 = in progress, 2 = done
  std::vector<std::pair<Node<S>*, size_t>> stack;
  stack.push_back({loss.get(), 0});
  state[loss.get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next++].get();
      const int st = state[p];
      if (st == 1) throw ValueError("backward: cycle detected in graph");
      if (st == 0) {
        state[p] = 1;
        stack.push_back({p, 0});
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<S>* n : order) n->grad = Tensor4<S>::zeros_like(n->value);
  loss->grad.data()[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

// ---------------------------------------------------------------------------
// Differentiable operations
// ---------------------------------------------------------------------------

struct ConvGeom {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

/// Cross-correlation; w is (oc, ic, k, k), b is (oc, 1, 1, 1).
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, ConvGeom g) {
  Conv2dParams<S> p;
  p.weights = w->value;
  p.bias = Eigen::Map<const VecX<S>>(b->value.data(), b->value.size());
  p.stride = g.stride;
  p.padding = g.padding;
  p.dilation = g.dilation;
  Tensor4<S> out = conv2d(x->value, p);
  const Index k = w->value.shape().h;
  const Index oh = out.shape().h;
  const Index ow = out.shape().w;

  auto bp = [g, k, oh, ow](Node<S>& n) {
    const Var<S>& xv = n.parents[0];
    const Var<S>& wv = n.parents[1];
    const Var<S>& bv = n.parents[2];
    const Shape4& xs = xv->value.shape();
    const Index oc = wv->value.shape().n;
    const Index ickk = wv->value.shape().c * k * k;
    ConstRowMajorMap<S> wmat(wv->value.data(), oc, ickk);
    RowMajorMap<S> dwmat(wv->grad.data(), oc, ickk);
    Eigen::Map<VecX<S>> dbias(bv->grad.data(), oc);
    const bool want_dx = detail::wants_grad(xv);
    const bool want_dw = detail::wants_grad(wv);
    MatX<S> cols, dcols;
    for (Index i = 0; i < xs.n; ++i) {
      ConstRowMajorMap<S> dy(n.grad.plane(i, 0), oc, oh * ow);
      if (want_dx) {
        dcols.noalias() = wmat.transpose() * dy;
        detail::col2im_add(dcols, i, k, g.stride, g.padding, g.dilation, oh, ow, xv->grad);
      }
      if (want_dw) {
        detail::im2col(xv->value, i, k, g.stride, g.padding, g.dilation, oh, ow, cols);
        dwmat.noalias() += dy * cols.transpose();
      }
      if (detail::wants_grad(bv)) dbias += dy.rowwise().sum();
    }
  };
  return detail::make_op(std::move(out), {x, w, b}, bp);
}

template <class S>
Var<S> sigmoid(const Var<S>& x) {
  Tensor4<S> out = sigmoid(x->value);
  auto bp = [](Node<S>& n) {
    // d/dx = s(1-s) from the cached forward value.
    const auto& s = n.value.array();
    n.parents[0]->grad.array() += n.grad.array() * s * (S(1) - s);
  };
  return detail::make_op(std::move(out), {x}, bp);
}

template <class S>
Var<S> relu(const Var<S>& x) {
  Tensor4<S> out = relu(x->value);
  auto bp = [](Node<S>& n) {
    const auto& xin = n.parents[0]->value.array();
    n.parents[0]->grad.array() += n.grad.array() * (xin > S(0)).template cast<S>();
  };
  return detail::make_op(std::move(out), {x}, bp);
}

template <class S>
Var<S> channel_pool_avg(const Var<S>& x) {
  Tensor4<S> out = channel_pool_avg(x->value);
  auto bp = [](Node<S>& n) {
    const Shape4& s = n.parents[0]->value.shape();
    const S inv = S(1) / static_cast<S>(s.h * s.w);
    for (Index i = 0; i < s.n; ++i)
      for (Index ch = 0; ch < s.c; ++ch) {
        Eigen::Map<ArrX<S>> pl(n.parents[0]->grad.plane(i, ch), s.h * s.w);
        pl += n.grad(i, ch, 0, 0) * inv;
      }
  };
  return detail::make_op(std::move(out), {x}, bp);
}

template <class S>
Var<S> channel_pool_max(const Var<S>& x) {
  Tensor4<S> out = channel_pool_max(x->value);
  auto bp = [](Node<S>& n) {
    // Ties route to the first maximal element in scan order.
    const Shape4& s = n.parents[0]->value.shape();
    for (Index i = 0; i < s.n; ++i)
      for (Index ch = 0; ch < s.c; ++ch) {
        const S* src = n.parents[0]->value.plane(i, ch);
        const S m = n.value(i, ch, 0, 0);
        for (Index t = 0; t < s.h * s.w; ++t) {
          if (src[t] == m) {
            n.parents[0]->grad.plane(i, ch)[t] += n.grad(i, ch, 0, 0);
            break;
          }
        }
      }
  };
  return detail::make_op(std::move(out), {x}, bp);
}

template <class S>
Var<S> spatial_pool(const Var<S>& x) {
  Tensor4<S> out = spatial_pool(x->value);
  auto bp = [](Node<S>& n) {
    const Shape4& s = n.parents[0]->value.shape();
    const Index hw = s.h * s.w;
    const S inv = S(1) / static_cast<S>(s.c);
    Tensor4<S>& dx = n.parents[0]->grad;
    for (Index i = 0; i < s.n; ++i) {
      const S* davg = n.grad.plane(i, 0);
      const S* dmax = n.grad.plane(i, 1);
      const S* vmax = n.value.plane(i, 1);
      for (Index ch = 0; ch < s.c; ++ch) {
        Eigen::Map<ArrX<S>> pl(dx.plane(i, ch), hw);
        pl += inv * Eigen::Map<const ArrX<S>>(davg, hw);
      }
      for (Index t = 0; t < hw; ++t) {
        for (Index ch = 0; ch < s.c; ++ch) {
          if (n.parents[0]->value.plane(i, ch)[t] == vmax[t]) {
            dx.plane(i, ch)[t] += dmax[t];
            break;
          }
        }
      }
    }
  };
  return detail::make_op(std::move(out), {x}, bp);
}

/// Per-sample affine map of channel vectors: out = W v + b.
/// v is (n, in, 1, 1); w is (out, in, 1, 1) read row-major; b is (out, 1, 1, 1).
template <class S>
Var<S> linear(const Var<S>& v, const Var<S>& w, const Var<S>& b) {
  const Shape4& vs = v->value.shape();
  const Index out_w = w->value.shape().n;
  const Index in_w = w->value.shape().c;
  if (vs.c != in_w || vs.h != 1 || vs.w != 1)
    throw ShapeError("channel", "linear expects (n," + std::to_string(in_w) + ",1,1), got " +
                                    vs.str());
  Tensor4<S> out({vs.n, out_w, 1, 1});
  ConstRowMajorMap<S> wmat(w->value.data(), out_w, in_w);
  Eigen::Map<const VecX<S>> bias(b->value.data(), out_w);
  for (Index i = 0; i < vs.n; ++i) {
    Eigen::Map<const VecX<S>> vin(v->value.plane(i, 0), in_w);
    Eigen::Map<VecX<S>> vout(out.plane(i, 0), out_w);
    vout.noalias() = wmat * vin;
    vout += bias;
  }
  auto bp = [out_w, in_w](Node<S>& n) {
    const Var<S>& vv = n.parents[0];
    const Var<S>& wv = n.parents[1];
    const Var<S>& bv = n.parents[2];
    ConstRowMajorMap<S> wmat(wv->value.data(), out_w, in_w);
    RowMajorMap<S> dw(wv->grad.data(), out_w, in_w);
    Eigen::Map<VecX<S>> db(bv->grad.data(), out_w);
    const Index nb = vv->value.shape().n;
    for (Index i = 0; i < nb; ++i) {
      Eigen::Map<const VecX<S>> dout(n.grad.plane(i, 0), out_w);
      Eigen::Map<const VecX<S>> vin(vv->value.plane(i, 0), in_w);
      if (detail::wants_grad(vv)) {
        Eigen::Map<VecX<S>> dv(vv->grad.plane(i, 0), in_w);
        dv.noalias() += wmat.transpose() * dout;
      }
      if (detail::wants_grad(wv)) dw.noalias() += dout * vin.transpose();
      if (detail::wants_grad(bv)) db += dout;
    }
  };
  return detail::make_op(std::move(out), {v, w, b}, bp);
}

template <class S>
Var<S> eltwise_mul(const Var<S>& a, const Var<S>& b) {
  Tensor4<S> out = eltwise_mul(a->value, b->value);
  auto bp = [](Node<S>& n) {
    const Var<S>& av = n.parents[0];
    const Var<S>& bv = n.parents[1];
    if (detail::wants_grad(av)) {
      Tensor4<S> da = eltwise_mul(n.grad, bv->value);
      av->grad.array() += detail::reduce_to_shape(da, av->value.shape()).array();
    }
    if (detail::wants_grad(bv)) {
      Tensor4<S> db = eltwise_mul(n.grad, av->value);
      bv->grad.array() += detail::reduce_to_shape(db, bv->value.shape()).array();
    }
  };
  return detail::make_op(std::move(out), {a, b}, bp);
}

template <class S>
Var<S> eltwise_add(const Var<S>& a, const Var<S>& b) {
  Tensor4<S> out = eltwise_add(a->value, b->value);
  auto bp = [](Node<S>& n) {
    for (int side = 0; side < 2; ++side) {
      const Var<S>& v = n.parents[side];
      if (detail::wants_grad(v))
        v->grad.array() += detail::reduce_to_shape(n.grad, v->value.shape()).array();
    }
  };
  return detail::make_op(std::move(out), {a, b}, bp);
}

template <class S>
Var<S> concat_channels(const std::vector<Var<S>>& parts) {
  std::vector<const Tensor4<S>*> ptrs;
  ptrs.reserve(parts.size());
  for (const auto& p : parts) ptrs.push_back(&p->value);
  Tensor4<S> out = concat_channels(ptrs);
  auto bp = [](Node<S>& n) {
    Index ch0 = 0;
    const Index hw = n.value.shape().h * n.value.shape().w;
    for (const Var<S>& p : n.parents) {
      const Index pc = p->value.shape().c;
      if (detail::wants_grad(p)) {
        for (Index i = 0; i < n.value.shape().n; ++i) {
          Eigen::Map<ArrX<S>> dst(p->grad.plane(i, 0), pc * hw);
          dst += Eigen::Map<const ArrX<S>>(n.grad.plane(i, ch0), pc * hw);
        }
      }
      ch0 += pc;
    }
  };
  return detail::make_op(std::move(out), parts, bp);
}

/// Global average pooling as a graph op; result shape (n, c, 1, 1).
template <class S>
Var<S> global_avg_pool(const Var<S>& x) {
  return channel_pool_avg(x);
}

template <class S>
Var<S> max_pool2(const Var<S>& x) {
  Tensor4<S> out = max_pool2(x->value);
  auto bp = [](Node<S>& n) {
    const Shape4& s = n.parents[0]->value.shape();
    const Index ohw = (s.w / 2);
    for (Index i = 0; i < s.n; ++i)
      for (Index ch = 0; ch < s.c; ++ch) {
        const S* src = n.parents[0]->value.plane(i, ch);
        S* dst = n.parents[0]->grad.plane(i, ch);
        for (Index oy = 0; oy < s.h / 2; ++oy)
          for (Index ox = 0; ox < ohw; ++ox) {
            const S m = n.value(i, ch, oy, ox);
            const S g = n.grad(i, ch, oy, ox);
            const Index base = 2 * oy * s.w + 2 * ox;
            const Index win[4] = {base, base + 1, base + s.w, base + s.w + 1};
            for (Index t : win) {
              if (src[t] == m) {
                dst[t] += g;
                break;
              }
            }
          }
      }
  };
  return detail::make_op(std::move(out), {x}, bp);
}

template <class S>
Var<S> scale(const Var<S>& x, S k) {
  Tensor4<S> out = x->value;
  out.array() *= k;
  auto bp = [k](Node<S>& n) { n.parents[0]->grad.array() += n.grad.array() * k; };
  return detail::make_op(std::move(out), {x}, bp);
}

/// Sum of all elements; result shape (1,1,1,1).
template <class S>
Var<S> sum(const Var<S>& x) {
  Tensor4<S> out({1, 1, 1, 1});
  out.data()[0] = x->value.array().sum();
  auto bp = [](Node<S>& n) { n.parents[0]->grad.array() += n.grad.data()[0]; };
  return detail::make_op(std::move(out), {x}, bp);
}

/// Single element (i, ch, 0, 0) as a scalar node; used to seed Grad-CAM.
template <class S>
Var<S> pick(const Var<S>& x, Index i, Index ch) {
  const Shape4& s = x->value.shape();
  if (i >= s.n || ch >= s.c) throw ShapeError("channel", "pick out of range for " + s.str());
  Tensor4<S> out({1, 1, 1, 1});
  out.data()[0] = x->value(i, ch, 0, 0);
  auto bp = [i, ch](Node<S>& n) {
    n.parents[0]->grad(i, ch, 0, 0) += n.grad.data()[0];
  };
  return detail::make_op(std::move(out), {x}, bp);
}

/// Mean cross-entropy of row softmax against integer labels.
/// logits shape (n, K, 1, 1); result shape (1,1,1,1).
template <class S>
Var<S> cross_entropy(const Var<S>& logits, std::vector<int> labels) {
  const Shape4& s = logits->value.shape();
  if (s.h != 1 || s.w != 1 || s.c < 2)
    throw ShapeError("channel", "cross_entropy expects (n,K,1,1) with K>=2, got " + s.str());
  if (static_cast<Index>(labels.size()) != s.n)
    throw ShapeError("batch", "got " + std::to_string(labels.size()) + " labels for " +
                                  std::to_string(s.n) + " rows");
  for (int lb : labels)
    if (lb < 0 || lb >= s.c)
      throw ValueError("cross_entropy: label " + std::to_string(lb) + " outside [0," +
                       std::to_string(s.c) + ")");

  Tensor4<S> out({1, 1, 1, 1});
  S total = S(0);
  for (Index i = 0; i < s.n; ++i) {
    Eigen::Map<const ArrX<S>> row(logits->value.plane(i, 0), s.c);
    const S m = row.maxCoeff();
    const S lse = m + std::log((row - m).exp().sum());
    total += lse - row[labels[i]];
  }
  out.data()[0] = total / static_cast<S>(s.n);

  auto bp = [labels](Node<S>& n) {
    const Var<S>& lg = n.parents[0];
    const Shape4& s = lg->value.shape();
    const S g = n.grad.data()[0] / static_cast<S>(s.n);
    for (Index i = 0; i < s.n; ++i) {
      Eigen::Map<const ArrX<S>> row(lg->value.plane(i, 0), s.c);
      const S m = row.maxCoeff();
      ArrX<S> e = (row - m).exp();
      ArrX<S> p = e / e.sum();
      Eigen::Map<ArrX<S>> dst(lg->grad.plane(i, 0), s.c);
      dst += g * p;
      dst[labels[i]] -= g;
    }
  };
  return detail::make_op(std::move(out), {logits}, bp);
}

// ---------------------------------------------------------------------------
// Parameter store
// ---------------------------------------------------------------------------

/// Named learnable parameters with their gradient buffers and Adam moments.
/// Iteration follows registration order, which keeps updates deterministic.
template <class S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var<S> var;
    Tensor4<S> m;
    Tensor4<S> v;
  };

  Var<S> create(const std::string& name, Tensor4<S> init) {
    if (index_.count(name)) throw ValueError("parameter '" + name + "' already registered");
    Var<S> var = parameter(std::move(init), name);
    index_[name] = entries_.size();
    entries_.push_back({name, var, Tensor4<S>::zeros_like(var->value),
                        Tensor4<S>::zeros_like(var->value)});
    return var;
  }

  const Var<S>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValueError("unknown parameter '" + name + "'");
    return entries_[it->second].var;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  size_t size() const { return entries_.size(); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads() {
    for (auto& e : entries_) e.var->grad = Tensor4<S>::zeros_like(e.var->value);
  }

  Index coefficient_count() const {
    Index total = 0;
    for (const auto& e : entries_) total += e.var->value.size();
    return total;
  }

  /// Adam timestep, incremented once per optimizer step.
  int64_t step = 0;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
};

}  // namespace eam
