#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metaslot/tensor.hpp"

namespace metaslot {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
  std::string detail;
};

struct GradCheck {
  std::string name;
  std::string op;  // differentiable op this check covers
  std::function<GradCheckResult(double tolerance)> run;
};

using LossFn = std::function<Tensor()>;

/// Gradients of loss_fn() w.r.t. each input, by recording and replaying a tape.
std::vector<std::vector<double>> analytic_gradients(std::span<const Tensor> inputs,
                                                    const LossFn& loss_fn);

/// Central differences (f(x + h) - f(x - h)) / 2h, one entry at a time,
/// evaluated without recording.
std::vector<std::vector<double>> numeric_gradients(std::span<const Tensor> inputs,
                                                   const LossFn& loss_fn, double h = 1e-5);

/// max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|), 0 when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

/// relative_error over all inputs' gradients stacked into one vector, so an
/// input whose exact gradient is zero is judged against the overall scale.
double stacked_error(const std::vector<std::vector<double>>& a,
                     const std::vector<std::vector<double>>& b);

/// Compares analytic and central-difference gradients of all inputs at once.
GradCheckResult check_gradients(const std::string& name, std::span<const Tensor> inputs,
                                const LossFn& loss_fn, double tolerance = 1e-4, double h = 1e-5);

/// sum(x * R) with a fixed pseudo-random R, a generic scalar probe of x.
Tensor probe_loss(const Tensor& x, std::uint64_t seed = 17);

/// The registered finite-difference and path-zeroing checks on tiny instances.
std::vector<GradCheck> default_gradchecks();

/// Every differentiable op the engine exposes.
std::vector<std::string> differentiable_ops();

std::vector<GradCheckResult> run_gradchecks(std::span<const GradCheck> checks,
                                            double tolerance = 1e-4);

}  // namespace metaslot
