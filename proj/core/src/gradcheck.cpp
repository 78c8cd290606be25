#include "metaslot/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "metaslot/codebook.hpp"
#include "metaslot/decoder.hpp"
#include "metaslot/metaslot.hpp"
#include "metaslot/nn.hpp"
#include "metaslot/ops.hpp"
#include "metaslot/slot_attention.hpp"

namespace metaslot {

std::vector<std::vector<double>> analytic_gradients(std::span<const Tensor> inputs,
                                                    const LossFn& loss_fn) {
  for (auto t : inputs) t.zero_grad();
  {
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> grads;
  for (auto t : inputs) {
    grads.push_back(t.grad());
    t.zero_grad();
  }
  return grads;
}

std::vector<std::vector<double>> numeric_gradients(std::span<const Tensor> inputs,
                                                   const LossFn& loss_fn, double h) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> grads;
  for (auto t : inputs) {
    auto values = t.mutable_data();
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_fn().item();
      values[i] = saved - h;
      const double down = loss_fn().item();
      values[i] = saved;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

double stacked_error(const std::vector<std::vector<double>>& a,
                     const std::vector<std::vector<double>>& b) {
  std::vector<double> flat_a, flat_b;
  for (const auto& g : a) flat_a.insert(flat_a.end(), g.begin(), g.end());
  for (const auto& g : b) flat_b.insert(flat_b.end(), g.begin(), g.end());
  return relative_error(flat_a, flat_b);
}

GradCheckResult check_gradients(const std::string& name, std::span<const Tensor> inputs,
                                const LossFn& loss_fn, double tolerance, double h) {
  const auto analytic = analytic_gradients(inputs, loss_fn);
  const auto numeric = numeric_gradients(inputs, loss_fn, h);
  GradCheckResult r{name, stacked_error(analytic, numeric), false, {}};
  r.passed = r.max_rel_error <= tolerance;
  return r;
}

Tensor probe_loss(const Tensor& x, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(x.numel());
  for (auto& v : w) v = dist(rng);
  return ops::sum(ops::mul(x, Tensor(x.shape(), std::move(w))));
}

std::vector<std::string> differentiable_ops() {
  return {"matmul",      "transpose",   "add",        "sub",          "mul",
          "div",         "scale",       "add_scalar", "sigmoid",      "tanh",
          "relu",        "exp",         "square",     "sum",          "mean",
          "sum_axis",    "softmax",     "layer_norm", "linear",       "gather_rows",
          "slice_cols",  "reshape",     "stop_gradient", "broadcast_pairs", "mixture_combine",
          "mlp",         "gru_cell",    "attention_step", "slot_update", "run_iterations",
          "decode",      "metaslot_forward"};
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double offset = 0.0, double spread = 1.0) {
  std::uniform_real_distribution<double> dist(-spread, spread);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = offset + dist(rng);
  return Tensor(std::move(shape), std::move(data), true);
}

GradCheck fd(std::string name, std::string op, std::function<std::vector<Tensor>(Rng&)> make_inputs,
             std::function<Tensor(const std::vector<Tensor>&)> body) {
  return {name, op, [name, make_inputs, body](double tol) {
            Rng rng(std::hash<std::string>{}(name) & 0xffffffffULL);
            auto inputs = make_inputs(rng);
            return check_gradients(name, inputs, [&] { return probe_loss(body(inputs)); }, tol);
          }};
}

GradCheckResult exact_zero(const std::string& name, std::span<const double> grad,
                           const std::string& what) {
  double worst = 0.0;
  for (double g : grad) worst = std::max(worst, std::abs(g));
  return {name, worst, worst == 0.0, what};
}

struct TinyMetaSlot {
  MetaSlotConfig config;
  SlotAttentionParams params;
  DecoderParams decoder;
  PrototypeCodebook codebook;
  Tensor features;
};

// N=6 features, D=4, K=3 slots, T=2 iterations per stage, 4 prototypes. Two
// prototypes sit on stage-one slots so quantisation yields a duplicate.
TinyMetaSlot tiny_metaslot() {
  TinyMetaSlot t;
  Rng rng(2024);
  SlotAttentionConfig sa;
  sa.dim = 4;
  sa.max_slots = 3;
  sa.mlp_hidden = 8;
  t.params = SlotAttentionParams::create(sa, rng);
  t.decoder = DecoderParams::create(6, 4, 8, rng);
  t.features = random_tensor({6, 4}, rng);
  t.config.max_slots = 3;
  t.config.iterations = 2;
  t.config.noise_sigma = 0.5;
  t.config.codebook.size = 4;

  Tensor mid;
  {
    NoGradGuard no_grad;
    Rng unused(0);
    IterationOptions opts;
    opts.iterations = t.config.iterations;
    mid = run_iterations(t.features, init_slots(t.params, 3, unused, true), t.params,
                         SlotMask::all(3), opts, unused)
              .state.slots;
  }
  std::vector<double> protos;
  const auto push = [&](std::span<const double> v) { protos.insert(protos.end(), v.begin(), v.end()); };
  push(mid.data().subspan(0, 4));
  push(mid.data().subspan(8, 4));
  for (double v : {9.0, 9.0, 9.0, 9.0, -9.0, 9.0, -9.0, 9.0}) protos.push_back(v);
  t.codebook = PrototypeCodebook(4, std::move(protos), 0.1, 100);
  return t;
}

std::vector<Tensor> tiny_inputs(const TinyMetaSlot& t) {
  ParamList named;
  t.params.collect("sa", named);
  t.decoder.collect("dec", named);
  std::vector<Tensor> inputs;
  for (auto& n : named) inputs.push_back(n.tensor);
  inputs.push_back(t.features);
  return inputs;
}

Tensor tiny_loss(const TinyMetaSlot& t, const MetaSlotOutput& out) {
  return reconstruction_loss(decode(out.final_slots.slots, out.mask, t.decoder), t.features);
}

GradCheck metaslot_end_to_end() {
  return {"metaslot_end_to_end", "metaslot_forward", [](double tol) {
            auto t = tiny_metaslot();
            const auto inputs = tiny_inputs(t);
            constexpr std::uint64_t kSeed = 99;
            const auto full = [&] {
              Rng rng(kSeed);
              return tiny_loss(t, metaslot_forward(t.features, t.params, t.codebook, t.config, rng, true));
            };
            MetaSlotPrefix prefix;
            {
              NoGradGuard no_grad;
              Rng rng(kSeed);
              prefix = metaslot_prefix(t.features, t.params, t.codebook, t.config, rng, true);
            }
            const Tensor anchor = ops::stop_gradient(prefix.init.slots);
            const auto surrogate = [&] {
              Rng unused(0);
              const auto init = init_slots(t.params, 3, unused, true);
              return tiny_loss(t, metaslot_final(t.features, t.params, prefix.detached, init.slots,
                                                 anchor, prefix.mask, t.config));
            };
            const auto analytic = analytic_gradients(inputs, full);
            const auto numeric = numeric_gradients(inputs, surrogate);
            GradCheckResult r{"metaslot_end_to_end", stacked_error(analytic, numeric), false, {}};
            r.passed = r.max_rel_error <= tol;
            r.detail = "active slots " + std::to_string(prefix.mask.active_count()) + "/3";
            return r;
          }};
}

GradCheck metaslot_truncation() {
  return {"metaslot_truncation", "metaslot_forward", [](double) {
            auto t = tiny_metaslot();
            const auto inputs = tiny_inputs(t);
            constexpr std::uint64_t kSeed = 5;
            std::size_t full_tape = 0, surrogate_tape = 0;

            std::vector<std::vector<double>> full(inputs.size());
            Tensor prefix_state;
            SlotMask mask;
            {
              for (auto x : inputs) x.zero_grad();
              Tape tape;
              Tape::Scope scope(tape);
              Rng rng(kSeed);
              const auto out = metaslot_forward(t.features, t.params, t.codebook, t.config, rng, true);
              tape.backward(tiny_loss(t, out));
              full_tape = tape.size();
              for (std::size_t i = 0; i < inputs.size(); ++i) full[i] = inputs[i].grad();
              for (auto x : inputs) x.zero_grad();
            }
            {
              NoGradGuard no_grad;
              Rng rng(kSeed);
              auto prefix = metaslot_prefix(t.features, t.params, t.codebook, t.config, rng, true);
              prefix_state = prefix.detached.clone().set_requires_grad(true);
              mask = prefix.mask;
            }
            std::vector<std::vector<double>> frozen(inputs.size());
            {
              Tape tape;
              Tape::Scope scope(tape);
              Rng unused(0);
              const auto init = init_slots(t.params, 3, unused, true);
              const auto out = metaslot_final(t.features, t.params, prefix_state, init.slots,
                                              ops::stop_gradient(init.slots), mask, t.config);
              tape.backward(tiny_loss(t, out));
              surrogate_tape = tape.size();
              for (std::size_t i = 0; i < inputs.size(); ++i) frozen[i] = inputs[i].grad();
              for (auto x : inputs) x.zero_grad();
            }
            double worst = 0.0;
            for (std::size_t i = 0; i < inputs.size(); ++i)
              for (std::size_t j = 0; j < full[i].size(); ++j)
                worst = std::max(worst, std::abs(full[i][j] - frozen[i][j]));
            const auto prefix_grad = prefix_state.grad();
            for (double g : prefix_grad) worst = std::max(worst, std::abs(g));
            const bool same_tape = full_tape == surrogate_tape;
            std::ostringstream detail;
            detail << "tape entries " << full_tape << " vs " << surrogate_tape;
            return GradCheckResult{"metaslot_truncation", worst, worst == 0.0 && same_tape,
                                   detail.str()};
          }};
}

}  // namespace

std::vector<GradCheck> default_gradchecks() {
  using In = std::vector<Tensor>;
  std::vector<GradCheck> checks;

  checks.push_back(fd("matmul", "matmul", [](Rng& r) { return In{random_tensor({3, 4}, r), random_tensor({4, 2}, r)}; },
                      [](const In& x) { return ops::matmul(x[0], x[1]); }));
  checks.push_back(fd("transpose", "transpose", [](Rng& r) { return In{random_tensor({3, 4}, r)}; },
                      [](const In& x) { return ops::transpose(x[0]); }));
  checks.push_back(fd("add", "add", [](Rng& r) { return In{random_tensor({3, 4}, r), random_tensor({3, 4}, r)}; },
                      [](const In& x) { return ops::add(x[0], x[1]); }));
  checks.push_back(fd("add_row_broadcast", "add", [](Rng& r) { return In{random_tensor({3, 4}, r), random_tensor({1, 4}, r)}; },
                      [](const In& x) { return ops::add(x[0], x[1]); }));
  checks.push_back(fd("sub_col_broadcast", "sub", [](Rng& r) { return In{random_tensor({3, 4}, r), random_tensor({3, 1}, r)}; },
                      [](const In& x) { return ops::sub(x[0], x[1]); }));
  checks.push_back(fd("mul", "mul", [](Rng& r) { return In{random_tensor({3, 4}, r), random_tensor({3, 4}, r)}; },
                      [](const In& x) { return ops::mul(x[0], x[1]); }));
  checks.push_back(fd("mul_scalar_broadcast", "mul", [](Rng& r) { return In{random_tensor({3, 4}, r), random_tensor({1, 1}, r)}; },
                      [](const In& x) { return ops::mul(x[0], x[1]); }));
  checks.push_back(fd("div_row_broadcast", "div", [](Rng& r) { return In{random_tensor({3, 4}, r), random_tensor({1, 4}, r, 2.0, 0.5)}; },
                      [](const In& x) { return ops::div(x[0], x[1]); }));
  checks.push_back(fd("scale", "scale", [](Rng& r) { return In{random_tensor({2, 3}, r)}; },
                      [](const In& x) { return ops::scale(x[0], -1.7); }));
  checks.push_back(fd("add_scalar", "add_scalar", [](Rng& r) { return In{random_tensor({2, 3}, r)}; },
                      [](const In& x) { return ops::add_scalar(x[0], 0.3); }));
  checks.push_back(fd("sigmoid", "sigmoid", [](Rng& r) { return In{random_tensor({2, 3}, r, 0.0, 3.0)}; },
                      [](const In& x) { return ops::sigmoid(x[0]); }));
  checks.push_back(fd("tanh", "tanh", [](Rng& r) { return In{random_tensor({2, 3}, r, 0.0, 2.0)}; },
                      [](const In& x) { return ops::tanh(x[0]); }));
  checks.push_back(fd("relu", "relu", [](Rng& r) { return In{random_tensor({2, 5}, r)}; },
                      [](const In& x) { return ops::relu(x[0]); }));
  checks.push_back(fd("exp", "exp", [](Rng& r) { return In{random_tensor({2, 3}, r)}; },
                      [](const In& x) { return ops::exp(x[0]); }));
  checks.push_back(fd("square", "square", [](Rng& r) { return In{random_tensor({2, 3}, r)}; },
                      [](const In& x) { return ops::square(x[0]); }));
  checks.push_back(fd("sum", "sum", [](Rng& r) { return In{random_tensor({2, 3}, r)}; },
                      [](const In& x) { return ops::sum(ops::square(x[0])); }));
  checks.push_back(fd("mean", "mean", [](Rng& r) { return In{random_tensor({2, 3}, r)}; },
                      [](const In& x) { return ops::mean(ops::square(x[0])); }));
  checks.push_back(fd("sum_axis0", "sum_axis", [](Rng& r) { return In{random_tensor({3, 4}, r)}; },
                      [](const In& x) { return ops::sum_axis(x[0], 0); }));
  checks.push_back(fd("sum_axis1", "sum_axis", [](Rng& r) { return In{random_tensor({3, 4}, r)}; },
                      [](const In& x) { return ops::sum_axis(x[0], 1); }));
  checks.push_back(fd("softmax_vector", "softmax", [](Rng& r) { return In{random_tensor({5}, r, 0.0, 2.0)}; },
                      [](const In& x) { return ops::softmax(x[0], 0); }));
  checks.push_back(fd("softmax_axis0", "softmax", [](Rng& r) { return In{random_tensor({4, 3}, r, 0.0, 2.0)}; },
                      [](const In& x) { return ops::softmax(x[0], 0); }));
  checks.push_back(fd("softmax_masked", "softmax", [](Rng& r) { return In{random_tensor({4, 4}, r, 0.0, 2.0)}; },
                      [](const In& x) {
                        const std::vector<double> mask{1, 0, 1, 1};
                        return ops::softmax(x[0], 1, mask);
                      }));
  checks.push_back(fd("layer_norm_axis1", "layer_norm",
                      [](Rng& r) { return In{random_tensor({3, 5}, r), random_tensor({1, 5}, r, 1.0, 0.5), random_tensor({1, 5}, r)}; },
                      [](const In& x) { return ops::layer_norm(x[0], 1, x[1], x[2]); }));
  checks.push_back(fd("layer_norm_axis0", "layer_norm",
                      [](Rng& r) { return In{random_tensor({4, 2}, r), random_tensor({4}, r, 1.0, 0.5), random_tensor({4}, r)}; },
                      [](const In& x) { return ops::layer_norm(x[0], 0, x[1], x[2]); }));
  checks.push_back(fd("linear", "linear",
                      [](Rng& r) { return In{random_tensor({3, 4}, r), random_tensor({4, 2}, r), random_tensor({1, 2}, r)}; },
                      [](const In& x) { return ops::linear(x[0], x[1], x[2]); }));
  checks.push_back(fd("gather_rows", "gather_rows", [](Rng& r) { return In{random_tensor({3, 2}, r)}; },
                      [](const In& x) {
                        const std::vector<std::size_t> rows{0, 2, 0};
                        return ops::gather_rows(x[0], rows);
                      }));
  checks.push_back(fd("slice_cols", "slice_cols", [](Rng& r) { return In{random_tensor({3, 5}, r)}; },
                      [](const In& x) { return ops::slice_cols(x[0], 1, 4); }));
  checks.push_back(fd("reshape", "reshape", [](Rng& r) { return In{random_tensor({3, 4}, r)}; },
                      [](const In& x) { return ops::matmul(ops::reshape(x[0], {2, 6}), ops::reshape(x[0], {6, 2})); }));
  checks.push_back(fd("broadcast_pairs", "broadcast_pairs", [](Rng& r) { return In{random_tensor({2, 3}, r), random_tensor({4, 3}, r)}; },
                      [](const In& x) { return ops::square(ops::broadcast_pairs(x[0], x[1])); }));
  checks.push_back(fd("mixture_combine", "mixture_combine", [](Rng& r) { return In{random_tensor({4, 2}, r), random_tensor({8, 3}, r)}; },
                      [](const In& x) { return ops::mixture_combine(x[0], x[1]); }));
  checks.push_back({"mlp", "mlp", [](double tol) {
                      Rng rng(11);
                      auto p = MlpParams::xavier(3, 5, 2, rng);
                      auto x = random_tensor({4, 3}, rng);
                      ParamList named;
                      p.collect("mlp", named);
                      std::vector<Tensor> in{x};
                      for (auto& n : named) in.push_back(n.tensor);
                      return check_gradients("mlp", in, [&] { return probe_loss(ops::mlp(x, p)); }, tol);
                    }});
  checks.push_back({"gru_cell", "gru_cell", [](double tol) {
                      Rng rng(12);
                      auto p = GruParams::xavier(3, rng);
                      for (auto* b : {&p.bias_input, &p.bias_hidden}) *b = random_tensor({1, 9}, rng, 0.0, 0.5);
                      auto h = random_tensor({2, 3}, rng);
                      auto x = random_tensor({2, 3}, rng);
                      ParamList named;
                      p.collect("gru", named);
                      std::vector<Tensor> in{h, x};
                      for (auto& n : named) in.push_back(n.tensor);
                      return check_gradients("gru_cell", in, [&] { return probe_loss(ops::gru_cell(h, x, p)); }, tol);
                    }});

  const auto slot_setup = [](Rng& rng) {
    SlotAttentionConfig sa;
    sa.dim = 4;
    sa.max_slots = 3;
    sa.mlp_hidden = 6;
    return SlotAttentionParams::create(sa, rng);
  };
  const auto slot_inputs = [](const SlotAttentionParams& p, std::vector<Tensor> extra) {
    ParamList named;
    p.collect("sa", named);
    for (auto& n : named) extra.push_back(n.tensor);
    return extra;
  };
  checks.push_back({"attention_step_masked", "attention_step", [=](double tol) {
                      Rng rng(21);
                      auto p = slot_setup(rng);
                      auto z = random_tensor({6, 4}, rng);
                      auto s = random_tensor({3, 4}, rng);
                      SlotMask mask = SlotMask::all(3);
                      mask.keep[1] = 0;
                      const auto in = slot_inputs(p, {z, s});
                      return check_gradients("attention_step_masked", in, [&] {
                        auto r = attention_step(SlotState{s, 0}, z, p, mask);
                        return ops::add(probe_loss(r.increments, 3), probe_loss(r.attention, 4));
                      }, tol);
                    }});
  checks.push_back({"slot_update_masked", "slot_update", [=](double tol) {
                      Rng rng(22);
                      auto p = slot_setup(rng);
                      auto s = random_tensor({3, 4}, rng);
                      auto inc = random_tensor({3, 4}, rng);
                      SlotMask mask = SlotMask::all(3);
                      mask.keep[2] = 0;
                      const auto in = slot_inputs(p, {s, inc});
                      return check_gradients("slot_update_masked", in, [&] {
                        return probe_loss(slot_update(SlotState{s, 0}, inc, p, mask).slots);
                      }, tol);
                    }});
  checks.push_back({"run_iterations", "run_iterations", [=](double tol) {
                      Rng rng(23);
                      auto p = slot_setup(rng);
                      auto z = random_tensor({6, 4}, rng);
                      const auto in = slot_inputs(p, {z});
                      return check_gradients("run_iterations", in, [&] {
                        Rng unused(0);
                        IterationOptions opts;
                        opts.iterations = 3;
                        auto s0 = init_slots(p, 3, unused, true);
                        return probe_loss(run_iterations(z, s0, p, SlotMask::all(3), opts, unused).state.slots);
                      }, tol);
                    }});
  checks.push_back({"run_iterations_detach_zero", "run_iterations", [=](double) {
                      Rng rng(24);
                      auto p = slot_setup(rng);
                      auto z = random_tensor({6, 4}, rng);
                      auto s0 = random_tensor({3, 4}, rng);
                      const std::vector<Tensor> in{s0};
                      const auto g = analytic_gradients(in, [&] {
                        Rng unused(0);
                        IterationOptions opts;
                        opts.iterations = 3;
                        opts.detach_until_last = true;
                        return probe_loss(run_iterations(z, SlotState{s0, 0}, p, SlotMask::all(3), opts, unused).state.slots);
                      });
                      return exact_zero("run_iterations_detach_zero", g[0], "d loss / d S0 with T=3");
                    }});
  checks.push_back({"decode_loss", "decode", [](double tol) {
                      Rng rng(31);
                      auto dec = DecoderParams::create(5, 3, 6, rng);
                      auto slots = random_tensor({3, 3}, rng);
                      auto target = Tensor({5, 3}, std::vector<double>(15, 0.25));
                      SlotMask mask = SlotMask::all(3);
                      mask.keep[0] = 0;
                      ParamList named;
                      dec.collect("dec", named);
                      std::vector<Tensor> in{slots};
                      for (auto& n : named) in.push_back(n.tensor);
                      return check_gradients("decode_loss", in, [&] {
                        return reconstruction_loss(decode(slots, mask, dec), target);
                      }, tol);
                    }});
  checks.push_back({"stop_gradient_paths", "stop_gradient", [](double) {
                      Rng rng(41);
                      auto x = random_tensor({2, 3}, rng);
                      auto a = random_tensor({2, 3}, rng);
                      const std::vector<Tensor> xs{x};
                      const auto product = analytic_gradients(xs, [&] { return ops::sum(ops::mul(ops::stop_gradient(x), x)); });
                      const auto detached = analytic_gradients(xs, [&] { return ops::sum(ops::stop_gradient(x)); });
                      const std::vector<Tensor> ab{a, x};
                      const auto through = analytic_gradients(ab, [&] {
                        return ops::sum(ops::sub(ops::add(ops::stop_gradient(a), x), ops::stop_gradient(x)));
                      });
                      double worst = relative_error(product[0], x.data());
                      for (double g : detached[0]) worst = std::max(worst, std::abs(g));
                      for (double g : through[0]) worst = std::max(worst, std::abs(g));
                      for (double g : through[1]) worst = std::max(worst, std::abs(g - 1.0));
                      return GradCheckResult{"stop_gradient_paths", worst, worst == 0.0, {}};
                    }});
  checks.push_back(metaslot_end_to_end());
  checks.push_back(metaslot_truncation());
  return checks;
}

std::vector<GradCheckResult> run_gradchecks(std::span<const GradCheck> checks, double tolerance) {
  std::vector<GradCheckResult> results;
  for (const auto& c : checks) {
    try {
      results.push_back(c.run(tolerance));
    } catch (const std::exception& e) {
      results.push_back({c.name, std::numeric_limits<double>::infinity(), false, e.what()});
    }
  }
  return results;
}

}  // namespace metaslot
