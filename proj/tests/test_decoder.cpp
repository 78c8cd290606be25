#include <doctest.h>

#include <cmath>

#include "metaslot/decoder.hpp"
#include "metaslot/gradcheck.hpp"
#include "metaslot/ops.hpp"

using namespace metaslot;

namespace {

Tensor randn(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = standard_normal(rng);
  return Tensor({r, c}, std::move(v));
}

SlotMask mask_of(std::vector<std::uint8_t> keep) {
  SlotMask m = SlotMask::all(keep.size());
  m.keep = std::move(keep);
  return m;
}

}  // namespace

TEST_CASE("single retained slot: alpha is one and the reconstruction is its MLP output") {
  Rng rng(1);
  const auto p = DecoderParams::create(6, 4, 8, rng);
  const auto slots = randn(3, 4, rng);
  const auto out = decode(slots, mask_of({0, 1, 0}), p);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(out.alpha.at(i, 1) == 1.0);
    CHECK(out.alpha.at(i, 0) == 0.0);
    CHECK(out.pred_labels[i] == 2);
  }
  const auto direct = ops::mlp(ops::add(p.positional, ops::gather_rows(slots, std::vector<std::size_t>{1, 1, 1, 1, 1, 1})), p.mlp);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(out.reconstruction.at(i, c) == doctest::Approx(direct.at(i, c)).epsilon(1e-14));
}

TEST_CASE("identical retained slots split alpha evenly") {
  Rng rng(2);
  const auto p = DecoderParams::create(5, 3, 6, rng);
  const auto s = Tensor::matrix({{0.3, -1, 2}, {0.3, -1, 2}, {5, 5, 5}});
  const auto out = decode(s, mask_of({1, 1, 0}), p);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(out.alpha.at(i, 0) == 0.5);
    CHECK(out.alpha.at(i, 1) == 0.5);
    CHECK(out.alpha.at(i, 2) == 0.0);
    CHECK(out.pred_labels[i] == 1);  // tie goes to the lower slot
  }
}

TEST_CASE("alpha rows sum to one and labels name retained slots only") {
  Rng rng(3);
  const auto p = DecoderParams::create(16, 4, 8, rng);
  const auto out = decode(randn(5, 4, rng), mask_of({1, 0, 1, 1, 0}), p);
  for (std::size_t i = 0; i < 16; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += out.alpha.at(i, j);
    CHECK(std::abs(s - 1.0) <= 1e-12);
    CHECK(out.alpha.at(i, 1) == 0.0);
    CHECK(out.alpha.at(i, 4) == 0.0);
    CHECK(out.pred_labels[i] != 2);
    CHECK(out.pred_labels[i] != 5);
  }
}

TEST_CASE("predicted labels match an exhaustive argmax scan") {
  Rng rng(4);
  const auto p = DecoderParams::create(20, 4, 8, rng);
  const auto mask = mask_of({1, 1, 0, 1});
  const auto out = decode(randn(4, 4, rng), mask, p);
  for (std::size_t i = 0; i < 20; ++i) {
    std::int32_t best = 0;
    double best_a = -1;
    for (std::size_t j = 0; j < 4; ++j)
      if (mask.keep[j] && out.alpha.at(i, j) > best_a) {
        best_a = out.alpha.at(i, j);
        best = static_cast<std::int32_t>(j + 1);
      }
    CHECK(out.pred_labels[i] == best);
  }
}

TEST_CASE("decoder is equivariant under slot permutation") {
  Rng rng(5);
  const auto p = DecoderParams::create(7, 4, 8, rng);
  const auto s = randn(3, 4, rng);
  const std::vector<std::size_t> perm{2, 0, 1};
  const auto a = decode(s, SlotMask::all(3), p);
  const auto b = decode(ops::gather_rows(s, perm), SlotMask::all(3), p);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(b.alpha.at(i, j) == doctest::Approx(a.alpha.at(i, perm[j])).epsilon(1e-13));
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(b.reconstruction.at(i, c) == doctest::Approx(a.reconstruction.at(i, c)).epsilon(1e-12));
  }
}

TEST_CASE("decode errors") {
  Rng rng(6);
  const auto p = DecoderParams::create(4, 3, 5, rng);
  CHECK_THROWS_AS(decode(randn(2, 3, rng), mask_of({0, 0}), p), std::invalid_argument);
  CHECK_THROWS_AS(decode(randn(2, 4, rng), SlotMask::all(2), p), ShapeError);
  CHECK_THROWS_AS(decode(randn(2, 3, rng), SlotMask::all(3), p), ShapeError);
}

TEST_CASE("reconstruction loss") {
  Rng rng(7);
  const auto z = randn(6, 3, rng);
  DecodedScene d;
  d.reconstruction = z;
  CHECK(reconstruction_loss(d, z).item() == 0.0);
  d.reconstruction = ops::add_scalar(z, 1.0);
  CHECK(reconstruction_loss(d, z).item() == doctest::Approx(1.0).epsilon(1e-15));
  d.reconstruction = randn(6, 3, rng);
  double expect = 0;
  for (std::size_t i = 0; i < 18; ++i) expect += std::pow(d.reconstruction.at(i) - z.at(i), 2);
  CHECK(reconstruction_loss(d, z).item() == doctest::Approx(expect / 18).epsilon(1e-14));
}

TEST_CASE("gradient through decode and loss") {
  Rng rng(8);
  const auto p = DecoderParams::create(5, 3, 6, rng);
  auto slots = randn(3, 3, rng).set_requires_grad(true);
  const auto target = randn(5, 3, rng);
  ParamList named;
  p.collect("dec", named);
  std::vector<Tensor> in{slots};
  for (auto& n : named) in.push_back(n.tensor);
  const auto r = check_gradients("decode", in, [&] {
    return reconstruction_loss(decode(slots, mask_of({1, 0, 1}), p), target);
  });
  CHECK(r.passed);
}
