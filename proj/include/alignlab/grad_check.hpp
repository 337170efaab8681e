#pragma once

// Finite-difference gradient checking against the tape's backward pass.
//
// The check runs entirely in float64 (the "shadow path"): the caller's build
// function assembles the computation on a double tape, so the same templated
// op code is exercised at a precision where central differences at h=1e-3
// resolve relative errors well below the 1e-3 acceptance tolerance.
//
// Kinks and ties (relu at 0, max reductions with near-equal competitors) make
// finite differences lie. The tape tracks the smallest margin seen during a
// forward pass; if a sampled point sits closer to a kink than `margin_guard`
// (or a perturbed evaluation crosses one), the case is resampled with a fresh
// seed, and after `resample_budget` tries the check reports inconclusive
// rather than failed.

#include "alignlab/rng.hpp"
#include "alignlab/tape.hpp"
#include "alignlab/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace alignlab {

struct GradCheckOptions {
  double h = 1e-3;             // central-difference step
  double tolerance = 1e-3;     // max allowed relative error
  double margin_guard = 1e-2;  // min distance to a kink/tie for a usable sample (10h)
  int resample_budget = 20;
};

struct GradCheckReport {
  bool passed = false;
  bool conclusive = false;  // false => every sampled point sat on a kink; not a failure
  double max_rel_err = 0.0;
  int resamples = 0;
  std::string worst_param;
};

// SampleFn draws a fresh set of parameter tensors for a given seed.
// BuildFn assembles the scalar loss on the given tape; it must register
// params[k] with tape.leaf(params[k], sinks[k]) so the checker can read the
// backward gradients (sinks[k] may be null on pure evaluation passes).
using GradCheckSampleFn = std::function<std::vector<Tensor<double>>(std::uint64_t seed)>;
using GradCheckBuildFn = std::function<Tape<double>::Val(
    Tape<double>&, const std::vector<Tensor<double>>&, const std::vector<Tensor<double>*>& sinks)>;

namespace detail {
// Relative error with an absolute floor so near-zero gradient pairs compare
// on absolute terms instead of blowing up the denominator.
inline double rel_err(double a, double b) {
  double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}
}  // namespace detail

inline GradCheckReport check_gradients(const GradCheckSampleFn& sample, const GradCheckBuildFn& build,
                                       std::uint64_t seed, GradCheckOptions opt = {}) {
  GradCheckReport report;
  for (int attempt = 0; attempt <= opt.resample_budget; ++attempt) {
    std::uint64_t case_seed = derive_seed({seed, static_cast<std::uint64_t>(attempt), 0x6664ULL});
    std::vector<Tensor<double>> params = sample(case_seed);
    std::vector<Tensor<double>> grads;
    std::vector<Tensor<double>*> sinks;
    grads.reserve(params.size());
    for (const auto& p : params) grads.push_back(Tensor<double>::zeros(p.shape));
    for (auto& g : grads) sinks.push_back(&g);

    // Analytic pass, with margin tracking to vet the sampled point.
    Tape<double> tape;
    tape.set_track_margins(true);
    tape.set_check_finite(true);
    auto loss = build(tape, params, sinks);
    if (tape.min_kink_margin() < opt.margin_guard) {
      ++report.resamples;
      continue;
    }
    tape.backward(loss);

    // Numeric pass: perturb every coordinate of every parameter.
    Tape<double> eval(false);
    const std::vector<Tensor<double>*> no_sinks(params.size(), nullptr);
    double max_err = 0.0;
    std::string worst;
    bool margin_hit = false;
    for (std::size_t k = 0; k < params.size() && !margin_hit; ++k) {
      for (std::size_t i = 0; i < params[k].data.size() && !margin_hit; ++i) {
        const double orig = params[k].data[i];
        auto eval_loss = [&](double x) {
          params[k].data[i] = x;
          eval.clear();
          eval.set_track_margins(true);
          auto l = build(eval, params, no_sinks);
          // Margins are nonnegative by construction (|x| or top1-top2), so a
          // crossing shows up as the margin collapsing below the step size.
          if (eval.min_kink_margin() < opt.h) margin_hit = true;
          return eval.value(l).data[0];
        };
        const double fp = eval_loss(orig + opt.h);
        const double fm = eval_loss(orig - opt.h);
        params[k].data[i] = orig;
        if (margin_hit) break;
        const double numeric = (fp - fm) / (2 * opt.h);
        const double analytic = grads[k].data[i];
        const double err = detail::rel_err(numeric, analytic);
        if (err > max_err) {
          max_err = err;
          worst = "param[" + std::to_string(k) + "][" + std::to_string(i) + "] analytic=" +
                  std::to_string(analytic) + " numeric=" + std::to_string(numeric);
        }
      }
    }
    if (margin_hit) {  // a perturbation landed on a kink: resample the whole case
      ++report.resamples;
      continue;
    }
    report.passed = max_err <= opt.tolerance;
    report.conclusive = true;
    report.max_rel_err = max_err;
    report.worst_param = worst;
    return report;
  }
  // Budget exhausted: every sampled point was too close to a kink.
  report.conclusive = false;
  report.passed = false;
  return report;
}

}  // namespace alignlab
