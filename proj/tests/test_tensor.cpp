#include <doctest.h>

#include <cmath>
#include <random>

#include "metaslot/gradcheck.hpp"
#include "metaslot/nn.hpp"
#include "metaslot/ops.hpp"

using namespace metaslot;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, bool grad = true) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = standard_normal(rng);
  return Tensor({r, c}, std::move(v), grad);
}

void check_close(std::span<const double> a, std::span<const double> b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("tensor construction validates shape and values") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), NumericError);
  CHECK_THROWS_AS(Tensor::matrix({{1, 2}, {3}}), ShapeError);
  const auto t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
}

TEST_CASE("clone is independent, copies share storage") {
  auto a = Tensor::vector({1, 2});
  auto shared = a;
  auto cloned = a.clone();
  a.mutable_data()[0] = 9;
  CHECK(shared.at(0) == 9);
  CHECK(cloned.at(0) == 1);
}

TEST_CASE("matmul hand cases") {
  const auto id = Tensor::matrix({{1, 0}, {0, 1}});
  const auto b = Tensor::matrix({{3, 4}, {5, 6}});
  const auto c = ops::matmul(id, b);
  CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{3, 4, 5, 6});
  CHECK(ops::matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})).item() == 11);
  CHECK_THROWS_AS(ops::matmul(b, Tensor::matrix({{1, 2, 3}})), ShapeError);
}

TEST_CASE("matmul gradients match finite differences at 1e-6") {
  Rng rng(3);
  const std::vector<Tensor> in{random_matrix(3, 4, rng), random_matrix(4, 2, rng)};
  const auto r = check_gradients("matmul", in, [&] { return probe_loss(ops::matmul(in[0], in[1])); }, 1e-6);
  CHECK(r.passed);
}

TEST_CASE("softmax stabilisation and normalisation") {
  const auto u = ops::softmax(Tensor::vector({0, 0, 0}), 0);
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
  const auto big = ops::softmax(Tensor::vector({1000, 0}), 0);
  CHECK(big.at(0) == 1.0);
  CHECK(big.at(1) < 1e-300);

  Rng rng(5);
  const auto x = random_matrix(7, 5, rng, false);
  for (std::size_t axis : {0u, 1u}) {
    const auto s = ops::softmax(x, axis);
    const auto sums = ops::sum_axis(s, axis);
    for (double v : sums.data()) CHECK(std::abs(v - 1.0) <= 1e-12);
  }
}

TEST_CASE("masked softmax zeroes excluded positions and renormalises the rest") {
  const auto x = Tensor::matrix({{1, 2, 3}, {0, -1, 4}});
  const std::vector<double> mask{1, 0, 1};
  const auto s = ops::softmax(x, 1, mask);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(s.at(r, 1) == 0.0);
    CHECK(std::abs(s.at(r, 0) + s.at(r, 2) - 1.0) <= 1e-12);
  }
  const double e = std::exp(1.0), f = std::exp(3.0);
  CHECK(s.at(0, 0) == doctest::Approx(e / (e + f)));
  const std::vector<double> none{0, 0, 0};
  CHECK_THROWS_AS(ops::softmax(x, 1, none), std::invalid_argument);
}

TEST_CASE("softmax vector Jacobian matches finite differences at 1e-6") {
  Rng rng(8);
  std::vector<double> v(5);
  for (auto& x : v) x = standard_normal(rng);
  const std::vector<Tensor> in{Tensor({5}, v, true)};
  CHECK(check_gradients("softmax", in, [&] { return probe_loss(ops::softmax(in[0], 0)); }, 1e-6).passed);
}

TEST_CASE("layer norm of a constant row is zero before the affine") {
  const auto x = Tensor::matrix({{2, 2, 2, 2}});
  const auto y = ops::layer_norm(x, 1, Tensor::full({1, 4}, 1.0), Tensor::zeros({1, 4}));
  for (double v : y.data()) CHECK(v == 0.0);
  const auto shifted = ops::layer_norm(x, 1, Tensor::full({1, 4}, 3.0), Tensor::full({1, 4}, 0.5));
  for (double v : shifted.data()) CHECK(v == 0.5);
}

TEST_CASE("layer norm output has zero mean and unit variance per lane") {
  Rng rng(9);
  const auto x = random_matrix(4, 6, rng, false);
  const auto y = ops::layer_norm(x, 1, Tensor::full({1, 6}, 1.0), Tensor::zeros({1, 6}));
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 6; ++c) m += y.at(r, c);
    m /= 6;
    for (std::size_t c = 0; c < 6; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 6 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("linear with identity weight is the identity") {
  Rng rng(10);
  const auto x = random_matrix(3, 4, rng, false);
  std::vector<double> eye(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  const auto y = ops::linear(x, Tensor({4, 4}, eye), Tensor::zeros({1, 4}));
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) ==
        std::vector<double>(x.data().begin(), x.data().end()));
}

TEST_CASE("every elementary op passes finite differences at 1e-6") {
  const auto checks = default_gradchecks();
  const std::vector<std::string> composite{"attention_step", "slot_update", "run_iterations", "decode",
                                           "metaslot_forward", "mlp", "gru_cell"};
  for (const auto& c : checks) {
    if (std::find(composite.begin(), composite.end(), c.op) != composite.end()) continue;
    CAPTURE(c.name);
    CHECK(c.run(1e-6).passed);
  }
}

TEST_CASE("gru gate saturation") {
  Rng rng(12);
  const std::size_t d = 3;
  auto p = GruParams::xavier(d, rng);
  const auto prev = random_matrix(2, d, rng, false);
  const auto input = random_matrix(2, d, rng, false);
  // Update gate block is columns [d, 2d).
  for (auto* w : {&p.weight_input, &p.weight_hidden}) {
    auto data = w->mutable_data();
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = d; c < 2 * d; ++c) data[r * 3 * d + c] = 0.0;
  }
  SUBCASE("update gate 0 keeps prev exactly") {
    for (std::size_t c = d; c < 2 * d; ++c) p.bias_input.mutable_data()[c] = -800.0;
    const auto out = ops::gru_cell(prev, input, p);
    CHECK(std::vector<double>(out.data().begin(), out.data().end()) ==
          std::vector<double>(prev.data().begin(), prev.data().end()));
  }
  SUBCASE("update gate 1 gives the candidate") {
    for (std::size_t c = d; c < 2 * d; ++c) p.bias_input.mutable_data()[c] = 40.0;
    const auto out = ops::gru_cell(prev, input, p);
    // candidate n = tanh(x Wn + bn + r * (h Un + cn)), r = sigmoid(x Wr + br + h Ur + cr)
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t j = 0; j < d; ++j) {
        double xr = 0, hr = 0, xn = 0, hn = 0;
        for (std::size_t i = 0; i < d; ++i) {
          xr += input.at(k, i) * p.weight_input.at(i, j);
          hr += prev.at(k, i) * p.weight_hidden.at(i, j);
          xn += input.at(k, i) * p.weight_input.at(i, 2 * d + j);
          hn += prev.at(k, i) * p.weight_hidden.at(i, 2 * d + j);
        }
        const double r = 1.0 / (1.0 + std::exp(-(xr + hr)));
        const double n = std::tanh(xn + r * hn);
        CHECK(out.at(k, j) == doctest::Approx(n).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("stop_gradient is a forward identity and cuts the backward path") {
  Rng rng(13);
  auto x = random_matrix(2, 3, rng);
  const auto y = ops::stop_gradient(x);
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) ==
        std::vector<double>(x.data().begin(), x.data().end()));
  const std::vector<Tensor> in{x};
  auto g = analytic_gradients(in, [&] { return ops::sum(ops::mul(ops::stop_gradient(x), x)); });
  CHECK(g[0] == std::vector<double>(x.data().begin(), x.data().end()));
  g = analytic_gradients(in, [&] { return ops::sum(ops::stop_gradient(x)); });
  for (double v : g[0]) CHECK(v == 0.0);
}

TEST_CASE("non-finite results raise NumericError naming the op") {
  const auto x = Tensor::vector({1000.0});
  try {
    ops::exp(x);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("exp") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::div(Tensor::matrix({{1.0}}), Tensor::matrix({{0.0}})), NumericError);
}

TEST_CASE("broadcasting rules") {
  const auto a = Tensor::matrix({{1, 2}, {3, 4}});
  const auto row = ops::add(a, Tensor::matrix({{10, 20}}));
  CHECK(row.at(1, 1) == 24);
  const auto col = ops::sub(a, Tensor::matrix({{1}, {2}}));
  CHECK(col.at(1, 0) == 1);
  const auto s = ops::mul(a, Tensor::matrix({{2}}));
  CHECK(s.at(0, 1) == 4);
  CHECK_THROWS_AS(ops::add(a, Tensor::matrix({{1, 2, 3}})), ShapeError);
}

TEST_CASE("backward visits ops in reverse order and accumulates shared inputs") {
  auto x = Tensor::scalar(3.0, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    const auto x2 = ops::mul(x, x);
    const auto y = ops::add(ops::mul(x2, x), x2);  // x^3 + x^2
    tape.backward(y);
  }
  CHECK(x.grad()[0] == doctest::Approx(3 * 9 + 2 * 3));
  CHECK(tape.size() == 3);
}

TEST_CASE("no-grad guard records nothing") {
  auto x = Tensor::scalar(2.0, true);
  Tape tape;
  Tape::Scope scope(tape);
  {
    NoGradGuard guard;
    ops::mul(x, x);
  }
  CHECK(tape.size() == 0);
  ops::mul(x, x);
  CHECK(tape.size() == 1);
}

TEST_CASE("replaying the same computation twice is bit-identical") {
  const auto run = [] {
    Rng rng(77);
    auto a = random_matrix(4, 4, rng);
    auto b = random_matrix(4, 4, rng);
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(ops::sum(ops::tanh(ops::matmul(a, ops::softmax(b, 1)))));
    auto g = a.grad();
    const auto gb = b.grad();
    g.insert(g.end(), gb.begin(), gb.end());
    return g;
  };
  CHECK(run() == run());
}

TEST_CASE("mixture_combine inverts the broadcast_pairs layout") {
  const auto slots = Tensor::matrix({{1, 0}, {0, 1}});
  const auto pos = Tensor::matrix({{10, 10}, {20, 20}, {30, 30}});
  const auto pairs = ops::broadcast_pairs(slots, pos);
  CHECK(pairs.rows() == 6);
  CHECK(pairs.at(4, 1) == 21);  // slot 1, position 1
  const auto w = Tensor::matrix({{1, 0}, {0, 1}, {0.5, 0.5}});
  const auto out = ops::mixture_combine(w, pairs);
  CHECK(out.at(0, 0) == 11);
  CHECK(out.at(1, 1) == 21);
  CHECK(out.at(2, 0) == 30.5);
}
