#pragma once

// Reverse-mode automatic differentiation on a flat tape.
//
// Each op appends a node holding its forward value plus a backward closure
// that scatters the node's gradient into its inputs' gradient buffers. The
// tape is rebuilt per forward pass (per graph, or per image batch); calling
// backward() replays the closures in reverse creation order, which is a
// reverse topological order by construction.
//
// Two modes:
//   recording on  — closures are created; backward() works.
//   recording off — pure inference: same forward math, no closures, no grads.
//
// The op set is exactly what the architectures in this project need: dense
// matmul/bias/concat/activations, axis reductions, structural ops for
// message passing (gather_rows, segment_sum/segment_max over contiguous row
// ranges), conv2d via explicit patch-unrolling to matmul, 2x2 max pooling,
// global average pooling, and the three losses (mse, mae, softmax cross
// entropy). No broadcasting beyond what these require.

#include "alignlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace alignlab {

template <typename S>
class Tape {
 public:
  struct Val {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool r) { recording_ = r; }

  // Enables kink/tie margin tracking (see min_kink_margin); used by the
  // gradient checker to detect sample points where finite differences are
  // unreliable. Off by default: it costs an extra scan per nonlinearity.
  void set_track_margins(bool t) { track_margins_ = t; }

  // Enables a finiteness scan after every op (numeric-instability error on
  // NaN/Inf). The trainer instead checks the scalar loss once per batch.
  void set_check_finite(bool c) { check_finite_ = c; }

  void clear() {
    nodes_.clear();
    min_margin_ = std::numeric_limits<double>::infinity();
  }

  std::size_t size() const { return nodes_.size(); }

  // Smallest distance to a relu kink or reduce-max tie seen since clear().
  // +inf if no nonlinearity was evaluated (or tracking is off).
  double min_kink_margin() const { return min_margin_; }

  const Tensor<S>& value(Val v) const { return node(v.id).value; }

  // Gradient buffer of a node (allocated zeroed on first access). Only
  // meaningful after backward().
  const Tensor<S>& grad(Val v) { return ensure_grad(v.id); }

  // ---- graph construction -------------------------------------------------

  // Differentiable input. If grad_sink is non-null, backward() accumulates
  // this leaf's gradient into it (+=), which is how parameter gradients reach
  // the optimizer's persistent accumulators across per-graph tapes.
  Val leaf(const Tensor<S>& value, Tensor<S>* grad_sink = nullptr) {
    Val v = push(value, /*needs_grad=*/true);
    node(v.id).sink = grad_sink;
    return v;
  }

  // Non-differentiable input (data, targets, structural constants).
  Val constant(Tensor<S> value) { return push(std::move(value), /*needs_grad=*/false); }

  // ---- primitive ops ------------------------------------------------------

  Val matmul(Val a, Val b) {
    const Tensor<S>&A = val(a, "matmul"), &B = val(b, "matmul");
    if (A.ndim() != 2 || B.ndim() != 2 || A.cols() != B.rows())
      fail("matmul", "incompatible shapes " + shape_str(A.shape) + " x " + shape_str(B.shape));
    Tensor<S> out({A.rows(), B.cols()});
    out.mat().noalias() = A.mat() * B.mat();
    Val o = push_op("matmul", std::move(out), {a, b});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, a, b]() {
        auto go = node(o.id).grad.mat();
        if (node(a.id).needs_grad) ensure_grad(a.id).mat().noalias() += go * node(b.id).value.mat().transpose();
        if (node(b.id).needs_grad) ensure_grad(b.id).mat().noalias() += node(a.id).value.mat().transpose() * go;
      };
    return o;
  }

  Val add(Val a, Val b) {
    const Tensor<S>&A = val(a, "add"), &B = val(b, "add");
    if (A.shape != B.shape)
      fail("add", "shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor<S> out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    Val o = push_op("add", std::move(out), {a, b});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, a, b]() {
        const auto& go = node(o.id).grad.data;
        for (Val in : {a, b})
          if (node(in.id).needs_grad) {
            auto& gi = ensure_grad(in.id).data;
            for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[i];
          }
      };
    return o;
  }

  // m [r,c] plus a bias vector b [c], added to every row.
  Val add_bias(Val m, Val bias) {
    const Tensor<S>&M = val(m, "add_bias"), &B = val(bias, "add_bias");
    if (M.ndim() != 2 || B.numel() != M.cols())
      fail("add_bias", "matrix " + shape_str(M.shape) + " vs bias " + shape_str(B.shape));
    Tensor<S> out = M;
    auto om = out.mat();
    om.rowwise() += B.mat_as(1, B.numel()).row(0);
    Val o = push_op("add_bias", std::move(out), {m, bias});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, m, bias]() {
        auto go = node(o.id).grad.mat();
        if (node(m.id).needs_grad) ensure_grad(m.id).mat() += go;
        if (node(bias.id).needs_grad) {
          auto& gb = ensure_grad(bias.id);
          gb.mat_as(1, gb.numel()).row(0) += go.colwise().sum();
        }
      };
    return o;
  }

  Val concat_last_dim(Val a, Val b) {
    const Tensor<S>&A = val(a, "concat_last_dim"), &B = val(b, "concat_last_dim");
    if (A.ndim() != 2 || B.ndim() != 2 || A.rows() != B.rows())
      fail("concat_last_dim", "row mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    const std::int64_t r = A.rows(), ca = A.cols(), cb = B.cols();
    Tensor<S> out({r, ca + cb});
    out.mat().leftCols(ca) = A.mat();
    out.mat().rightCols(cb) = B.mat();
    Val o = push_op("concat_last_dim", std::move(out), {a, b});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, a, b, ca, cb]() {
        auto go = node(o.id).grad.mat();
        if (node(a.id).needs_grad) ensure_grad(a.id).mat() += go.leftCols(ca);
        if (node(b.id).needs_grad) ensure_grad(b.id).mat() += go.rightCols(cb);
      };
    return o;
  }

  Val relu(Val x) { return rectify(x, S(0), "relu"); }
  Val leaky_relu(Val x, S slope) { return rectify(x, slope, "leaky_relu"); }

  // linear(x, W, b) = x*W + b; the composition every MLP layer uses.
  Val linear(Val x, Val w, Val b) { return add_bias(matmul(x, w), b); }

  // Axis reduction of a 2-d tensor: axis 0 -> [1,c], axis 1 -> [r,1].
  Val reduce_sum(Val x, int axis) {
    const Tensor<S>& X = val(x, "reduce_sum");
    check_axis(X, axis, "reduce_sum");
    Tensor<S> out(axis == 0 ? Shape{1, X.cols()} : Shape{X.rows(), 1});
    if (axis == 0)
      out.mat() = X.mat().colwise().sum();
    else
      out.mat() = X.mat().rowwise().sum();
    Val o = push_op("reduce_sum", std::move(out), {x});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, x, axis]() {
        auto go = node(o.id).grad.mat();
        auto gx = ensure_grad(x.id).mat();
        if (axis == 0)
          gx.rowwise() += go.row(0);
        else
          gx.colwise() += go.col(0);
      };
    return o;
  }

  // Axis max with recorded argmax (first index wins ties); gradient is routed
  // to exactly the argmax element of each reduced group.
  Val reduce_max(Val x, int axis) {
    const Tensor<S>& X = val(x, "reduce_max");
    check_axis(X, axis, "reduce_max");
    const std::int64_t r = X.rows(), c = X.cols();
    const std::int64_t groups = axis == 0 ? c : r, extent = axis == 0 ? r : c;
    Tensor<S> out(axis == 0 ? Shape{1, c} : Shape{r, 1});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(groups));
    for (std::int64_t g = 0; g < groups; ++g) {
      S best = std::numeric_limits<S>::lowest(), second = best;
      std::int64_t best_i = 0;
      for (std::int64_t i = 0; i < extent; ++i) {
        S v = axis == 0 ? X.at(i, g) : X.at(g, i);
        if (v > best) {
          second = best;
          best = v;
          best_i = i;
        } else if (v > second) {
          second = v;
        }
      }
      out.data[static_cast<std::size_t>(g)] = best;
      (*argmax)[static_cast<std::size_t>(g)] = best_i;
      if (track_margins_ && extent > 1) note_margin(double(best) - double(second));
    }
    Val o = push_op("reduce_max", std::move(out), {x});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, x, axis, argmax]() {
        const auto& go = node(o.id).grad.data;
        Tensor<S>& gx = ensure_grad(x.id);
        for (std::size_t g = 0; g < argmax->size(); ++g) {
          std::int64_t i = (*argmax)[g];
          if (axis == 0)
            gx.at(i, static_cast<std::int64_t>(g)) += go[g];
          else
            gx.at(static_cast<std::int64_t>(g), i) += go[g];
        }
      };
    return o;
  }

  // out[i,:] = x[idx[i],:]; backward scatter-adds rows. Structural op for
  // assembling per-pair inputs from per-node tensors.
  Val gather_rows(Val x, std::shared_ptr<const std::vector<std::int32_t>> idx) {
    const Tensor<S>& X = val(x, "gather_rows");
    if (X.ndim() != 2) fail("gather_rows", "needs 2-d input, have " + shape_str(X.shape));
    const std::int64_t c = X.cols(), n = static_cast<std::int64_t>(idx->size());
    Tensor<S> out({n, c});
    for (std::int64_t i = 0; i < n; ++i) {
      std::int32_t r = (*idx)[static_cast<std::size_t>(i)];
      if (r < 0 || r >= X.rows()) fail("gather_rows", "index " + std::to_string(r) + " out of range");
      out.mat().row(i) = X.mat().row(r);
    }
    Val o = push_op("gather_rows", std::move(out), {x});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, x, idx]() {
        auto go = node(o.id).grad.mat();
        auto gx = ensure_grad(x.id).mat();
        for (std::int64_t i = 0; i < go.rows(); ++i) gx.row((*idx)[static_cast<std::size_t>(i)]) += go.row(i);
      };
    return o;
  }

  // Per-segment reduction over contiguous row ranges. offsets has n+1 entries;
  // segment s covers rows [offsets[s], offsets[s+1]). Empty segments produce a
  // zero row (and route no gradient) — this is the empty-neighborhood case.
  Val segment_sum(Val x, std::shared_ptr<const std::vector<std::int32_t>> offsets) {
    return segment_reduce(x, std::move(offsets), /*take_max=*/false);
  }
  Val segment_max(Val x, std::shared_ptr<const std::vector<std::int32_t>> offsets) {
    return segment_reduce(x, std::move(offsets), /*take_max=*/true);
  }

  // 2-d convolution, stride 1, odd square kernel, zero 'same' padding.
  // x [B,H,W,C], w [k*k*C, Cout] (kernel rows unrolled kh-major, then kw, then
  // input channel), bias [Cout]. Implemented by materializing the patch matrix
  // and reusing the matmul path, which keeps conv inside the one well-tested
  // gemm code path.
  Val conv2d(Val x, Val w, Val bias, int k) {
    const Tensor<S>&X = val(x, "conv2d"), &W = val(w, "conv2d"), &B = val(bias, "conv2d");
    if (X.ndim() != 4) fail("conv2d", "input must be [B,H,W,C], have " + shape_str(X.shape));
    if (k % 2 != 1) fail("conv2d", "kernel size must be odd");
    const std::int64_t Bn = X.dim(0), H = X.dim(1), Wd = X.dim(2), C = X.dim(3);
    if (W.ndim() != 2 || W.rows() != static_cast<std::int64_t>(k) * k * C)
      fail("conv2d", "weight " + shape_str(W.shape) + " does not match kernel " + std::to_string(k) +
                         "x" + std::to_string(k) + "x" + std::to_string(C));
    const std::int64_t Cout = W.cols();
    if (B.numel() != Cout) fail("conv2d", "bias " + shape_str(B.shape) + " vs Cout " + std::to_string(Cout));

    auto patches = std::make_shared<Tensor<S>>(Shape{Bn * H * Wd, static_cast<std::int64_t>(k) * k * C});
    im2col(X, k, *patches);
    Tensor<S> out({Bn, H, Wd, Cout});
    out.mat_as(Bn * H * Wd, Cout).noalias() = patches->mat() * W.mat();
    out.mat_as(Bn * H * Wd, Cout).rowwise() += B.mat_as(1, Cout).row(0);
    Val o = push_op("conv2d", std::move(out), {x, w, bias});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, x, w, bias, k, patches]() {
        const Tensor<S>& G = node(o.id).grad;
        const std::int64_t Bn2 = G.dim(0), H2 = G.dim(1), W2 = G.dim(2), Cout2 = G.dim(3);
        auto go = G.mat_as(Bn2 * H2 * W2, Cout2);
        if (node(w.id).needs_grad) ensure_grad(w.id).mat().noalias() += patches->mat().transpose() * go;
        if (node(bias.id).needs_grad) {
          auto& gb = ensure_grad(bias.id);
          gb.mat_as(1, Cout2).row(0) += go.colwise().sum();
        }
        if (node(x.id).needs_grad) {
          Tensor<S> gpatch(patches->shape);
          gpatch.mat().noalias() = go * node(w.id).value.mat().transpose();
          col2im(gpatch, k, ensure_grad(x.id));
        }
      };
    return o;
  }

  // 2x2 max pooling with stride 2 on [B,H,W,C] (H, W even). Argmax per output
  // element is recorded for gradient routing; first index in row-major window
  // order wins ties.
  Val maxpool2d(Val x) {
    const Tensor<S>& X = val(x, "maxpool2d");
    if (X.ndim() != 4) fail("maxpool2d", "input must be [B,H,W,C], have " + shape_str(X.shape));
    const std::int64_t B = X.dim(0), H = X.dim(1), W = X.dim(2), C = X.dim(3);
    if (H % 2 || W % 2) fail("maxpool2d", "H and W must be even, have " + shape_str(X.shape));
    const std::int64_t OH = H / 2, OW = W / 2;
    Tensor<S> out({B, OH, OW, C});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.data.size());
    const S* src = X.data.data();
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow)
          for (std::int64_t c = 0; c < C; ++c) {
            S best = std::numeric_limits<S>::lowest(), second = best;
            std::int64_t best_at = -1;
            for (int dh = 0; dh < 2; ++dh)
              for (int dw = 0; dw < 2; ++dw) {
                std::int64_t at = ((b * H + 2 * oh + dh) * W + 2 * ow + dw) * C + c;
                S v = src[at];
                if (v > best) {
                  second = best;
                  best = v;
                  best_at = at;
                } else if (v > second) {
                  second = v;
                }
              }
            std::size_t oi = static_cast<std::size_t>(((b * OH + oh) * OW + ow) * C + c);
            out.data[oi] = best;
            (*argmax)[oi] = best_at;
            if (track_margins_) note_margin(double(best) - double(second));
          }
    Val o = push_op("maxpool2d", std::move(out), {x});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, x, argmax]() {
        const auto& go = node(o.id).grad.data;
        auto& gx = ensure_grad(x.id).data;
        for (std::size_t i = 0; i < go.size(); ++i) gx[static_cast<std::size_t>((*argmax)[i])] += go[i];
      };
    return o;
  }

  // [B,H,W,C] -> [B,C], mean over the spatial extent.
  Val global_avg_pool(Val x) {
    const Tensor<S>& X = val(x, "global_avg_pool");
    if (X.ndim() != 4) fail("global_avg_pool", "input must be [B,H,W,C], have " + shape_str(X.shape));
    const std::int64_t B = X.dim(0), H = X.dim(1), W = X.dim(2), C = X.dim(3);
    Tensor<S> out({B, C});
    const S inv = S(1) / static_cast<S>(H * W);
    for (std::int64_t b = 0; b < B; ++b) {
      auto img = X.mat_as(B * H * W, C).middleRows(b * H * W, H * W);
      out.mat().row(b) = img.colwise().sum() * inv;
    }
    Val o = push_op("global_avg_pool", std::move(out), {x});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, x, B, H, W, C]() {
        auto go = node(o.id).grad.mat();
        auto gx = ensure_grad(x.id).mat_as(B * H * W, C);
        const S inv = S(1) / static_cast<S>(H * W);
        for (std::int64_t b = 0; b < B; ++b) gx.middleRows(b * H * W, H * W).rowwise() += go.row(b) * inv;
      };
    return o;
  }

  // Shape reinterpretation (same element count, same order).
  Val reshape(Val x, Shape new_shape) {
    const Tensor<S>& X = val(x, "reshape");
    if (shape_numel(new_shape) != X.numel())
      fail("reshape", shape_str(X.shape) + " -> " + shape_str(new_shape) + " changes element count");
    Tensor<S> out = X;
    out.shape = std::move(new_shape);
    Val o = push_op("reshape", std::move(out), {x});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, x]() {
        const auto& go = node(o.id).grad.data;
        auto& gx = ensure_grad(x.id).data;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
      };
    return o;
  }

  // ---- losses (scalar [1,1] outputs, mean over all elements / batch) ------

  Val mse_loss(Val pred, const Tensor<S>& target) { return pointwise_loss(pred, target, /*absolute=*/false); }
  Val mae_loss(Val pred, const Tensor<S>& target) { return pointwise_loss(pred, target, /*absolute=*/true); }

  // logits [B,C]; classes in [0,C). Stable log-softmax; mean over the batch.
  Val softmax_cross_entropy(Val logits, std::shared_ptr<const std::vector<std::int32_t>> classes) {
    const Tensor<S>& L = val(logits, "softmax_cross_entropy");
    if (L.ndim() != 2) fail("softmax_cross_entropy", "logits must be 2-d, have " + shape_str(L.shape));
    const std::int64_t B = L.rows(), C = L.cols();
    if (static_cast<std::int64_t>(classes->size()) != B)
      fail("softmax_cross_entropy", std::to_string(classes->size()) + " labels vs batch " + std::to_string(B));
    if (B == 0) fail("softmax_cross_entropy", "empty batch");
    auto probs = std::make_shared<Tensor<S>>(Shape{B, C});
    double total = 0;
    for (std::int64_t i = 0; i < B; ++i) {
      std::int32_t y = (*classes)[static_cast<std::size_t>(i)];
      if (y < 0 || y >= C) fail("softmax_cross_entropy", "class " + std::to_string(y) + " out of range");
      S m = L.mat().row(i).maxCoeff();
      double sum = 0;
      for (std::int64_t j = 0; j < C; ++j) sum += std::exp(double(L.at(i, j)) - double(m));
      const double log_sum = std::log(sum);
      for (std::int64_t j = 0; j < C; ++j)
        probs->at(i, j) = static_cast<S>(std::exp(double(L.at(i, j)) - double(m) - log_sum));
      total += log_sum + double(m) - double(L.at(i, y));
    }
    Tensor<S> out({1, 1});
    out.data[0] = static_cast<S>(total / double(B));
    Val o = push_op("softmax_cross_entropy", std::move(out), {logits});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, logits, classes, probs, B]() {
        const S go = node(o.id).grad.data[0];
        auto gl = ensure_grad(logits.id).mat();
        const S inv = go / static_cast<S>(B);
        gl += probs->mat() * inv;
        for (std::int64_t i = 0; i < B; ++i) gl(i, (*classes)[static_cast<std::size_t>(i)]) -= inv;
      };
    return o;
  }

  // ---- backward -----------------------------------------------------------

  void backward(Val loss, S seed = S(1)) {
    if (!recording_) throw std::logic_error("Tape::backward called with recording off");
    const Tensor<S>& L = val(loss, "backward");
    if (L.numel() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar, have " + shape_str(L.shape));
    ensure_grad(loss.id).data[0] += seed;
    for (std::int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backprop && n.grad_ready) n.backprop();
    }
    // Leaves with sinks flush last so a parameter used several times in one
    // tape still lands as a single accumulated contribution.
    for (Node& n : nodes_)
      if (n.sink && n.grad_ready) {
        if (n.sink->shape != n.value.shape)
          throw std::logic_error("Tape: gradient sink shape " + shape_str(n.sink->shape) +
                                 " != leaf shape " + shape_str(n.value.shape));
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) n.sink->data[i] += n.grad.data[i];
      }
  }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool grad_ready = false;
    bool needs_grad = false;
    Tensor<S>* sink = nullptr;
    std::function<void()> backprop;
  };

  std::vector<Node> nodes_;
  bool recording_ = true;
  bool track_margins_ = false;
  bool check_finite_ = false;
  double min_margin_ = std::numeric_limits<double>::infinity();

  Node& node(std::int32_t id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }

  const Tensor<S>& val(Val v, const char* op) const {
    if (!v.valid() || v.id >= static_cast<std::int32_t>(nodes_.size()))
      throw std::logic_error(std::string(op) + ": value handle does not belong to this tape");
    return node(v.id).value;
  }

  [[noreturn]] static void fail(const std::string& op, const std::string& msg) {
    throw std::invalid_argument(op + ": " + msg);
  }

  static void check_axis(const Tensor<S>& x, int axis, const char* op) {
    if (x.ndim() != 2) fail(op, "needs 2-d input, have " + shape_str(x.shape));
    if (axis != 0 && axis != 1) fail(op, "axis must be 0 or 1");
  }

  Val push(Tensor<S> value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Val{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Val push_op(const char* op, Tensor<S> value, std::initializer_list<Val> inputs) {
    if (check_finite_ && !value.all_finite())
      throw std::runtime_error(std::string(op) + ": non-finite value produced (numeric instability)");
    bool needs = false;
    for (Val in : inputs) needs = needs || node(in.id).needs_grad;
    return push(std::move(value), needs && recording_);
  }

  bool wants_backprop(Val o) { return recording_ && node(o.id).needs_grad; }

  Tensor<S>& ensure_grad(std::int32_t id) {
    Node& n = node(id);
    if (!n.grad_ready) {
      n.grad = Tensor<S>::zeros(n.value.shape);
      n.grad_ready = true;
    }
    return n.grad;
  }

  void note_margin(double m) { min_margin_ = std::min(min_margin_, m); }

  Val rectify(Val x, S slope, const char* name) {
    const Tensor<S>& X = val(x, name);
    Tensor<S> out = X;
    for (S& v : out.data) {
      if (track_margins_) note_margin(std::abs(double(v)));
      if (v < S(0)) v *= slope;
    }
    Val o = push_op(name, std::move(out), {x});
    if (wants_backprop(o))
      node(o.id).backprop = [this, o, x, slope]() {
        const auto& go = node(o.id).grad.data;
        const auto& xv = node(x.id).value.data;
        auto& gx = ensure_grad(x.id).data;
        // Subgradient at exactly 0: relu takes 0, leaky takes the slope —
        // i.e. the x<0 branch in both cases. Fixed for determinism.
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += xv[i] > S(0) ? go[i] : go[i] * slope;
      };
    return o;
  }

  Val segment_reduce(Val x, std::shared_ptr<const std::vector<std::int32_t>> offsets, bool take_max) {
    const char* name = take_max ? "segment_max" : "segment_sum";
    const Tensor<S>& X = val(x, name);
    if (X.ndim() != 2) fail(name, "needs 2-d input, have " + shape_str(X.shape));
    if (offsets->empty() || offsets->front() != 0 || offsets->back() != X.rows())
      fail(name, "offsets must start at 0 and end at row count " + std::to_string(X.rows()));
    const std::int64_t n = static_cast<std::int64_t>(offsets->size()) - 1, c = X.cols();
    Tensor<S> out({n, c});
    auto argmax = take_max ? std::make_shared<std::vector<std::int32_t>>(static_cast<std::size_t>(n * c), -1)
                           : nullptr;
    std::vector<double> acc;
    for (std::int64_t s = 0; s < n; ++s) {
      const std::int32_t lo = (*offsets)[static_cast<std::size_t>(s)], hi = (*offsets)[static_cast<std::size_t>(s) + 1];
      if (hi < lo) fail(name, "offsets must be non-decreasing");
      if (lo == hi) continue;  // empty segment: zero row stays
      if (!take_max) {
        // Accumulate in double and round once so the segment sum does not
        // depend on row order: relabeling a graph's nodes permutes the rows
        // within a segment, and the pooled output must stay bitwise equal.
        acc.assign(static_cast<std::size_t>(c), 0.0);
        for (std::int32_t r = lo; r < hi; ++r)
          for (std::int64_t j = 0; j < c; ++j) acc[static_cast<std::size_t>(j)] += double(X.at(r, j));
        for (std::int64_t j = 0; j < c; ++j) out.at(s, j) = static_cast<S>(acc[static_cast<std::size_t>(j)]);
      } else {
        for (std::int64_t j = 0; j < c; ++j) {
          S best = std::numeric_limits<S>::lowest(), second = best;
          std::int32_t best_r = lo;
          for (std::int32_t r = lo; r < hi; ++r) {
            S v = X.at(r, j);
            if (v > best) {
              second = best;
              best = v;
              best_r = r;
            } else if (v > second) {
              second = v;
            }
          }
          out.at(s, j) = best;
          (*argmax)[static_cast<std::size_t>(s * c + j)] = best_r;
          if (track_margins_ && hi - lo > 1) note_margin(double(best) - double(second));
        }
      }
    }
    Val o = push_op(name, std::move(out), {x});
    if (wants_backprop(o)) {
      if (!take_max)
        node(o.id).backprop = [this, o, x, offsets]() {
          auto go = node(o.id).grad.mat();
          auto gx = ensure_grad(x.id).mat();
          for (std::int64_t s = 0; s < go.rows(); ++s) {
            const std::int32_t lo = (*offsets)[static_cast<std::size_t>(s)],
                               hi = (*offsets)[static_cast<std::size_t>(s) + 1];
            if (hi > lo) gx.middleRows(lo, hi - lo).rowwise() += go.row(s);
          }
        };
      else
        node(o.id).backprop = [this, o, x, argmax]() {
          auto go = node(o.id).grad.mat();
          Tensor<S>& gx = ensure_grad(x.id);
          const std::int64_t c = go.cols();
          for (std::int64_t s = 0; s < go.rows(); ++s)
            for (std::int64_t j = 0; j < c; ++j) {
              std::int32_t r = (*argmax)[static_cast<std::size_t>(s * c + j)];
              if (r >= 0) gx.at(r, j) += go(s, j);
            }
        };
    }
    return o;
  }

  Val pointwise_loss(Val pred, const Tensor<S>& target, bool absolute) {
    const char* name = absolute ? "mae" : "mse";
    const Tensor<S>& P = val(pred, name);
    if (P.shape != target.shape)
      fail(name, "prediction " + shape_str(P.shape) + " vs target " + shape_str(target.shape));
    if (P.numel() == 0) fail(name, "empty batch");
    const std::int64_t N = P.numel();
    double total = 0;
    for (std::int64_t i = 0; i < N; ++i) {
      double d = double(P.data[static_cast<std::size_t>(i)]) - double(target.data[static_cast<std::size_t>(i)]);
      total += absolute ? std::abs(d) : d * d;
    }
    Tensor<S> out({1, 1});
    out.data[0] = static_cast<S>(total / double(N));
    Val o = push_op(name, std::move(out), {pred});
    if (wants_backprop(o)) {
      auto tgt = std::make_shared<Tensor<S>>(target);
      node(o.id).backprop = [this, o, pred, tgt, absolute, N]() {
        const S go = node(o.id).grad.data[0];
        const auto& pv = node(pred.id).value.data;
        auto& gp = ensure_grad(pred.id).data;
        const S inv = go / static_cast<S>(N);
        for (std::size_t i = 0; i < gp.size(); ++i) {
          S d = pv[i] - tgt->data[i];
          // mae subgradient at 0 is 0, matching the relu convention.
          gp[i] += absolute ? inv * S(d > S(0) ? 1 : (d < S(0) ? -1 : 0)) : S(2) * inv * d;
        }
      };
    }
    return o;
  }

  // Patch-unrolling for conv2d: row ((b*H+oh)*W+ow) of `patches` holds the
  // kxk neighborhood of (oh,ow) unrolled kh-major, kw, then channel; out of
  // bounds reads are zeros ('same' padding).
  static void im2col(const Tensor<S>& x, int k, Tensor<S>& patches) {
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const int p = (k - 1) / 2;
    patches.set_zero();
    S* dst = patches.data.data();
    const S* src = x.data.data();
    const std::int64_t patch_cols = static_cast<std::int64_t>(k) * k * C;
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t oh = 0; oh < H; ++oh)
        for (std::int64_t ow = 0; ow < W; ++ow) {
          S* row = dst + ((b * H + oh) * W + ow) * patch_cols;
          for (int kh = 0; kh < k; ++kh) {
            const std::int64_t ih = oh + kh - p;
            if (ih < 0 || ih >= H) continue;
            for (int kw = 0; kw < k; ++kw) {
              const std::int64_t iw = ow + kw - p;
              if (iw < 0 || iw >= W) continue;
              const S* px = src + ((b * H + ih) * W + iw) * C;
              std::copy(px, px + C, row + (static_cast<std::int64_t>(kh) * k + kw) * C);
            }
          }
        }
  }

  // Adjoint of im2col: scatter-add patch gradients back onto the image grid.
  static void col2im(const Tensor<S>& gpatch, int k, Tensor<S>& gx) {
    const std::int64_t B = gx.dim(0), H = gx.dim(1), W = gx.dim(2), C = gx.dim(3);
    const int p = (k - 1) / 2;
    const S* src = gpatch.data.data();
    S* dst = gx.data.data();
    const std::int64_t patch_cols = static_cast<std::int64_t>(k) * k * C;
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t oh = 0; oh < H; ++oh)
        for (std::int64_t ow = 0; ow < W; ++ow) {
          const S* row = src + ((b * H + oh) * W + ow) * patch_cols;
          for (int kh = 0; kh < k; ++kh) {
            const std::int64_t ih = oh + kh - p;
            if (ih < 0 || ih >= H) continue;
            for (int kw = 0; kw < k; ++kw) {
              const std::int64_t iw = ow + kw - p;
              if (iw < 0 || iw >= W) continue;
              S* px = dst + ((b * H + ih) * W + iw) * C;
              const S* gr = row + (static_cast<std::int64_t>(kh) * k + kw) * C;
              for (std::int64_t c = 0; c < C; ++c) px[c] += gr[c];
            }
          }
        }
  }
};

}  // namespace alignlab
