#pragma once

// Adam with bias correction (Kingma & Ba defaults: beta1=0.9, beta2=0.999,
// eps=1e-8). Weight decay is classic L2 folded into the gradient and defaults
// to zero, which is what every experiment here uses.

#include "alignlab/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace alignlab {

template <typename S>
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  Adam() = default;
  explicit Adam(Options opt) : opt_(opt) {}

  Options& options() { return opt_; }
  std::int64_t step_count() const { return t_; }

  // Moments are keyed by position: step() must always be called with the same
  // parameter list in the same order.
  void step(const std::vector<Tensor<S>*>& params, const std::vector<const Tensor<S>*>& grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("Adam::step: " + std::to_string(params.size()) + " params vs " +
                                  std::to_string(grads.size()) + " grads");
    if (m_.empty()) {
      for (const Tensor<S>* p : params) {
        m_.push_back(Tensor<S>::zeros(p->shape));
        v_.push_back(Tensor<S>::zeros(p->shape));
      }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("Adam::step: parameter count changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, double(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor<S>& p = *params[k];
      const Tensor<S>& g = *grads[k];
      if (p.shape != g.shape)
        throw std::invalid_argument("Adam::step: param " + shape_str(p.shape) + " vs grad " + shape_str(g.shape));
      auto& m = m_[k].data;
      auto& v = v_[k].data;
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        double gi = double(g.data[i]) + opt_.weight_decay * double(p.data[i]);
        double mi = opt_.beta1 * double(m[i]) + (1.0 - opt_.beta1) * gi;
        double vi = opt_.beta2 * double(v[i]) + (1.0 - opt_.beta2) * gi * gi;
        m[i] = static_cast<S>(mi);
        v[i] = static_cast<S>(vi);
        p.data[i] -= static_cast<S>(opt_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + opt_.eps));
      }
    }
  }

 private:
  Options opt_;
  std::int64_t t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

}  // namespace alignlab
