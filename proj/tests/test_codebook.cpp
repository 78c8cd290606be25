#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "metaslot/codebook.hpp"
#include "oracles.hpp"

using namespace metaslot;

namespace {

PrototypeCodebook make(std::size_t d, std::vector<double> v, double eta = 0.1, std::int64_t timeout = 10) {
  return PrototypeCodebook(d, std::move(v), eta, timeout);
}

std::vector<double> randn(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

CodebookSample sample(std::size_t k, std::size_t d, std::vector<double> v, std::vector<std::uint8_t> keep = {}) {
  SlotMask m = SlotMask::all(k);
  if (!keep.empty()) m.keep = std::move(keep);
  return {Tensor({k, d}, std::move(v)), m};
}

}  // namespace

TEST_CASE("quantize hand cases") {
  const auto cb = make(2, {0, 0, 1, 1});
  auto q = quantize(Tensor::matrix({{0.1, 0.2}}), cb);
  CHECK(q.idx == std::vector<std::size_t>{0});
  CHECK(q.slots.at(0) == 0.0);
  q = quantize(Tensor::matrix({{1, 1}}), cb);
  CHECK(q.idx == std::vector<std::size_t>{1});
  CHECK(q.slots.at(1) == 1.0);
  CHECK_FALSE(q.slots.requires_grad());
  CHECK_THROWS(quantize(Tensor::matrix({{1, 1}}), PrototypeCodebook()));
  CHECK_THROWS_AS(quantize(Tensor::matrix({{1, 1, 1}}), cb), ShapeError);
}

TEST_CASE("quantize agrees with an exhaustive distance scan") {
  Rng rng(1);
  const auto protos = randn(16 * 5, rng);
  const auto cb = make(5, protos);
  const auto slots = randn(100 * 5, rng);
  const auto q = quantize(Tensor({100, 5}, slots), cb);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto expect = oracle::nearest_row(std::span<const double>(slots).subspan(i * 5, 5), protos, 5);
    CHECK(q.idx[i] == expect);
    for (std::size_t c = 0; c < 5; ++c) CHECK(q.slots.at(i, c) == protos[expect * 5 + c]);
  }
}

TEST_CASE("ties go to the lowest index") {
  const auto cb = make(1, {1, -1, 1});
  CHECK(cb.nearest(std::vector<double>{0.0}) == 0);
  CHECK(cb.nearest(std::vector<double>{1.0}) == 0);
  Rng rng(2);
  CodebookConfig zero;
  zero.init_scale = 0.0;
  const auto degenerate = init_codebook(rng, 4, 3, zero);
  for (double v : degenerate.vectors()) CHECK(v == 0.0);
  CHECK(quantize(Tensor::matrix({{5, -2, 1}}), degenerate).idx[0] == 0);
}

TEST_CASE("prune_duplicates keeps the first hit") {
  CHECK(prune_duplicates(std::vector<std::size_t>{3, 5, 3, 7}).keep == std::vector<std::uint8_t>{1, 1, 0, 1});
  CHECK(prune_duplicates(std::vector<std::size_t>{0, 1, 2}).keep == std::vector<std::uint8_t>{1, 1, 1});
  CHECK(prune_duplicates(std::vector<std::size_t>{4, 4, 4, 4}).keep == std::vector<std::uint8_t>{1, 0, 0, 0});
  const auto m = prune_duplicates(std::vector<std::size_t>{2, 2, 1});
  CHECK(m.idx == std::vector<std::size_t>{2, 2, 1});
  CHECK(m.active_count() == 2);
}

TEST_CASE("quantize then prune is idempotent on the retained set") {
  Rng rng(3);
  const auto cb = make(3, randn(6 * 3, rng));
  const auto slots = Tensor({8, 3}, randn(8 * 3, rng));
  const auto q = quantize(slots, cb);
  const auto m = prune_duplicates(q.idx);
  std::vector<std::size_t> rows, kept_idx;
  for (std::size_t i = 0; i < 8; ++i)
    if (m.retained(i)) {
      rows.push_back(i);
      kept_idx.push_back(q.idx[i]);
    }
  std::vector<double> retained;
  for (auto r : rows) {
    const auto row = q.slots.row(r);
    retained.insert(retained.end(), row.begin(), row.end());
  }
  const auto again = quantize(Tensor({rows.size(), 3}, retained), cb);
  CHECK(again.idx == kept_idx);
  CHECK(prune_duplicates(again.idx).all_kept());
}

TEST_CASE("init_codebook") {
  CodebookConfig c;
  c.init_scale = 0.5;
  Rng a(4), b(4);
  const auto x = init_codebook(a, 32, 8, c);
  CHECK(x.vectors() == init_codebook(b, 32, 8, c).vectors());
  for (std::size_t k = 0; k < 32; ++k) CHECK(x.last_used(k) == 0);
  Rng big(5);
  const auto y = init_codebook(big, 1250, 8, c);
  double m = 0, v = 0;
  for (double e : y.vectors()) m += e;
  m /= y.vectors().size();
  for (double e : y.vectors()) v += (e - m) * (e - m);
  v /= y.vectors().size();
  CHECK(v == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("ema_update direct evaluation") {
  SUBCASE("eta 0.1") {
    auto cb = make(2, {1, 0}, 0.1);
    const std::vector<CodebookSample> batch{sample(1, 2, {0, 1})};
    // (0,1) is nearest to the only prototype.
    CHECK(ema_update(cb, batch, 3) == 1);
    CHECK(cb.vector(0)[0] == doctest::Approx(0.9));
    CHECK(cb.vector(0)[1] == doctest::Approx(0.1));
    CHECK(cb.last_used(0) == 3);
  }
  SUBCASE("eta 1 replaces with the centroid") {
    auto cb = make(2, {0, 0, 10, 10}, 1.0);
    const std::vector<CodebookSample> batch{sample(2, 2, {1, 2, 3, 0}), sample(1, 2, {-1, 1})};
    ema_update(cb, batch, 1);
    CHECK(cb.vector(0)[0] == doctest::Approx(1.0));
    CHECK(cb.vector(0)[1] == doctest::Approx(1.0));
    CHECK(cb.vector(1)[0] == 10.0);
    CHECK(cb.last_used(1) == 0);
  }
  SUBCASE("masked slots are ignored") {
    auto cb = make(2, {0, 0}, 1.0);
    const std::vector<CodebookSample> batch{sample(2, 2, {1, 1, 9, 9}, {1, 0})};
    ema_update(cb, batch, 1);
    CHECK(cb.vector(0)[0] == 1.0);
  }
  SUBCASE("stage-one assignment reuses idx") {
    auto cb = make(2, {0, 0, 10, 10}, 1.0);
    auto s = sample(1, 2, {1, 1});
    s.mask.idx = {1};
    const std::vector<CodebookSample> batch{s};
    ema_update(cb, batch, 1, EmaAssignment::kStageOne);
    CHECK(cb.vector(1)[0] == 1.0);
    CHECK(cb.vector(0)[0] == 0.0);
  }
  SUBCASE("slots carrying gradient are rejected") {
    auto cb = make(2, {0, 0});
    CodebookSample s{Tensor({1, 2}, {1, 1}, true), SlotMask::all(1)};
    const std::vector<CodebookSample> batch{s};
    CHECK_THROWS_AS(ema_update(cb, batch, 1), std::invalid_argument);
  }
}

TEST_CASE("ema_update is order-insensitive within a batch") {
  Rng rng(6);
  const auto protos = randn(4 * 3, rng);
  std::vector<CodebookSample> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(sample(3, 3, randn(9, rng)));
  auto a = make(3, protos, 0.3), b = make(3, protos, 0.3);
  ema_update(a, batch, 1);
  std::reverse(batch.begin(), batch.end());
  ema_update(b, batch, 1);
  for (std::size_t i = 0; i < protos.size(); ++i) CHECK(std::abs(a.vectors()[i] - b.vectors()[i]) <= 1e-12);
}

TEST_CASE("ema_update converges to separated cluster means") {
  const std::vector<std::vector<double>> means{{4, 0}, {-4, 0}, {0, 4}, {0, -4}};
  std::vector<double> init;
  for (const auto& m : means) {
    init.push_back(m[0] + 0.5);
    init.push_back(m[1] - 0.5);
  }
  auto cb = make(2, init, 0.05, 1000);
  Rng rng(7);
  for (int step = 1; step <= 200; ++step) {
    std::vector<double> pts;
    for (int i = 0; i < 64; ++i) {
      const auto& m = means[i % 4];
      pts.push_back(m[0] + 0.3 * standard_normal(rng));
      pts.push_back(m[1] + 0.3 * standard_normal(rng));
    }
    const std::vector<CodebookSample> batch{sample(64, 2, pts)};
    ema_update(cb, batch, step);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::sqrt(oracle::sq_dist(cb.vector(k), means[k])) < 0.05);
  }
}

TEST_CASE("revive_dead") {
  SUBCASE("nothing stale") {
    auto cb = make(2, {1, 0, 0, 1}, 0.1, 10);
    const auto before = cb.vectors();
    const std::vector<CodebookSample> batch{sample(1, 2, {5, 5})};
    CHECK(revive_dead(cb, batch, 10) == 0);
    CHECK(cb.vectors() == before);
  }
  SUBCASE("two-candidate argmax") {
    auto cb = make(2, {1, 0, 7, 7}, 0.1, 10);
    cb.set_last_used(0, 20);
    const std::vector<CodebookSample> batch{sample(2, 2, {1, 0, 0, 1})};
    CHECK(revive_dead(cb, batch, 20) == 1);
    CHECK(cb.vector(1)[0] == 0.0);
    CHECK(cb.vector(1)[1] == 1.0);
    CHECK(cb.last_used(1) == 20);
  }
  SUBCASE("randomised instance against an exhaustive scan") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      auto cb = make(4, randn(6 * 4, rng), 0.1, 5);
      std::vector<std::int64_t> used{50, 50, 50, 10, 50, 50};
      cb.set_last_used(used);
      std::vector<CodebookSample> batch{sample(5, 4, randn(20, rng)), sample(5, 4, randn(20, rng), {1, 1, 0, 1, 1})};
      std::vector<std::vector<double>> candidates, active;
      for (const auto& s : batch)
        for (std::size_t i = 0; i < 5; ++i)
          if (s.mask.retained(i)) candidates.push_back(s.slots.row(i));
      for (std::size_t k = 0; k < 6; ++k)
        if (k != 3) active.emplace_back(cb.vector(k).begin(), cb.vector(k).end());
      const auto expect = candidates[oracle::max_min_cosine(candidates, active)];
      CHECK(revive_dead(cb, batch, 50) == 1);
      CHECK(std::vector<double>(cb.vector(3).begin(), cb.vector(3).end()) == expect);
    }
  }
  SUBCASE("a revived prototype counts as active for the next one") {
    auto cb = make(2, {1, 0, 9, 9, 9, 9}, 0.1, 5);
    cb.set_last_used(std::vector<std::int64_t>{30, 0, 0});
    const std::vector<CodebookSample> batch{sample(3, 2, {1, 0.1, 0, 1, -1, 0})};
    CHECK(revive_dead(cb, batch, 30) == 2);
    // First revival takes (-1, 0) (distance 2 from (1,0)); the second then
    // takes (0, 1), the farthest from both.
    CHECK(cb.vector(1)[0] == -1.0);
    CHECK(cb.vector(2)[1] == 1.0);
  }
  SUBCASE("empty batch") {
    auto cb = make(2, {1, 0});
    CHECK_THROWS(revive_dead(cb, std::vector<CodebookSample>{}, 1));
  }
}

TEST_CASE("cosine distance conventions") {
  CHECK(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 1.0);
  CHECK(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{-2, 0}) == 2.0);
  CHECK(cosine_distance(std::vector<double>{0, 0}, std::vector<double>{1, 0}) == 1.0);
}
