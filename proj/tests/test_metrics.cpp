#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "metaslot/metrics.hpp"
#include "metaslot/random.hpp"
#include "oracles.hpp"

using namespace metaslot;
using Labels = std::vector<std::int32_t>;

namespace {

Labels random_labels(Rng& rng, std::size_t n, int k, bool background = false) {
  std::uniform_int_distribution<int> d(background ? 0 : 1, k);
  Labels l(n);
  for (auto& v : l) v = d(rng);
  return l;
}

Labels permuted(const Labels& l, Rng& rng) {
  const auto mx = *std::max_element(l.begin(), l.end());
  std::vector<std::int32_t> perm(static_cast<std::size_t>(mx) + 1);
  std::iota(perm.begin(), perm.end(), 100);
  std::shuffle(perm.begin(), perm.end(), rng);
  Labels out(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) out[i] = perm[static_cast<std::size_t>(l[i])];
  return out;
}

}  // namespace

TEST_CASE("ARI basics") {
  const Labels gt{1, 1, 2, 2, 3, 3};
  CHECK(adjusted_rand_index(gt, gt) == 1.0);
  CHECK(adjusted_rand_index(Labels{7, 7, 4, 4, 9, 9}, gt) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index(Labels{1, 1, 1}, Labels{2, 2, 2}) == 1.0);
  CHECK(adjusted_rand_index(Labels{1, 2, 3}, Labels{4, 5, 6}) == 1.0);
  CHECK_THROWS(adjusted_rand_index(Labels{1}, Labels{1, 2}));
  CHECK_THROWS(adjusted_rand_index(Labels{1, 2}, Labels{0, 0}, true));
}

TEST_CASE("ARI and FG-ARI match the pair-counting oracle on random maps") {
  Rng rng(1);
  std::uniform_int_distribution<int> size(2, 64), labels(1, 8);
  for (int t = 0; t < 200; ++t) {
    const auto n = static_cast<std::size_t>(size(rng));
    auto gt = random_labels(rng, n, labels(rng), true);
    gt[0] = 1;
    const auto pred = random_labels(rng, n, labels(rng));
    CHECK(std::abs(adjusted_rand_index(pred, gt) - oracle::ari_pairs(pred, gt, false)) <= 1e-12);
    CHECK(std::abs(adjusted_rand_index(pred, gt, true) - oracle::ari_pairs(pred, gt, true)) <= 1e-12);
  }
}

TEST_CASE("mBO hand cases and exhaustive scan") {
  const Labels gt{1, 1, 2, 2};
  CHECK(mean_best_overlap(gt, gt) == 1.0);
  CHECK(mean_best_overlap(Labels{5, 5, 5, 5}, gt) == 0.5);
  CHECK_THROWS(mean_best_overlap(Labels{1, 1}, Labels{0, 0}));
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    auto gt2 = random_labels(rng, 30, 4, true);
    gt2[0] = 1;
    const auto pred = random_labels(rng, 30, 5);
    CHECK(std::abs(mean_best_overlap(pred, gt2) - oracle::mbo_scan(pred, gt2)) <= 1e-12);
  }
}

TEST_CASE("mIoU hand cases and enumeration") {
  const Labels gt{0, 1, 1, 2, 2};
  CHECK(mean_iou(gt, gt) == 1.0);
  CHECK(mean_iou(Labels{3, 1, 1, 3, 3}, Labels{0, 1, 1, 2, 2}) == doctest::Approx((1.0 + 2.0 / 3.0) / 2));
  CHECK(mean_iou(Labels{1, 1, 1, 2, 2}, Labels{1, 1, 1, 0, 0}) == 1.0);
  // two gt objects, one predicted mask over both: it matches one at IoU 1/2, the other gets 0
  CHECK(mean_iou(Labels{5, 5, 5, 5}, Labels{1, 1, 2, 2}) == 0.25);
  Rng rng(3);
  std::uniform_int_distribution<int> k(1, 5);
  for (int t = 0; t < 150; ++t) {
    auto g = random_labels(rng, 25, k(rng), true);
    g[0] = 1;
    const auto p = random_labels(rng, 25, k(rng), true);
    CHECK(std::abs(mean_iou(p, g) - oracle::miou_enumerate(p, g)) <= 1e-12);
  }
}

TEST_CASE("solve_assignment matches brute force on rectangular matrices") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t rows = 1; rows <= 5; ++rows) {
    for (std::size_t cols = 1; cols <= 5; ++cols) {
      std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
      for (auto& r : cost)
        for (auto& v : r) v = u(rng);
      const auto match = solve_assignment(cost);
      double got = 0;
      std::set<int> used;
      for (std::size_t r = 0; r < rows; ++r) {
        if (match[r] < 0) continue;
        got += cost[r][static_cast<std::size_t>(match[r])];
        CHECK(used.insert(match[r]).second);
      }
      CHECK(used.size() == std::min(rows, cols));
      std::vector<std::size_t> perm(std::max(rows, cols));
      std::iota(perm.begin(), perm.end(), 0);
      double best = 1e300;
      do {
        double c = 0;
        for (std::size_t r = 0; r < rows; ++r)
          if (perm[r] < cols) c += cost[r][perm[r]];
        best = std::min(best, c);
      } while (std::next_permutation(perm.begin(), perm.end()));
      CHECK(got == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("all metrics are invariant under predicted relabelling") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    auto gt = random_labels(rng, 40, 4, true);
    gt[0] = 1;
    const auto pred = random_labels(rng, 40, 5);
    const auto p2 = permuted(pred, rng);
    CHECK(adjusted_rand_index(pred, gt) == doctest::Approx(adjusted_rand_index(p2, gt)).epsilon(1e-12));
    CHECK(adjusted_rand_index(pred, gt, true) == doctest::Approx(adjusted_rand_index(p2, gt, true)).epsilon(1e-12));
    CHECK(mean_best_overlap(pred, gt) == doctest::Approx(mean_best_overlap(p2, gt)).epsilon(1e-12));
    CHECK(mean_iou(pred, gt) == doctest::Approx(mean_iou(p2, gt)).epsilon(1e-12));
  }
}

TEST_CASE("overlap metrics rise monotonically as the prediction is refined") {
  const Labels gt{1, 1, 1, 1, 2, 2, 2, 2};
  const std::vector<Labels> steps{{1, 1, 1, 1, 1, 1, 1, 1},
                                  {1, 1, 1, 1, 1, 1, 2, 2},
                                  {1, 1, 1, 1, 1, 2, 2, 2},
                                  {1, 1, 1, 1, 2, 2, 2, 2}};
  for (std::size_t i = 1; i < steps.size(); ++i) {
    CHECK(mean_best_overlap(steps[i], gt) > mean_best_overlap(steps[i - 1], gt));
    CHECK(mean_iou(steps[i], gt) > mean_iou(steps[i - 1], gt));
  }
}

TEST_CASE("evaluate_split aggregates") {
  const SceneOutcome a{{1, 1, 2, 2}, {0, 1, 1, 2}, 2, 2};
  const SceneOutcome b{{1, 2, 3, 4}, {1, 1, 2, 2}, 4, 2};
  SUBCASE("single scene") {
    const std::vector<SceneOutcome> one{a};
    const auto r = evaluate_split(one);
    CHECK(r.fg_ari.mean == r.scenes[0].fg_ari);
    CHECK(r.mbo.std == 0.0);
    CHECK(r.mean_count_error == 0.0);
  }
  SUBCASE("duplicated scene") {
    const std::vector<SceneOutcome> two{a, a};
    const auto r = evaluate_split(two);
    CHECK(r.miou.mean == r.scenes[0].miou);
    CHECK(r.ari.std == 0.0);
  }
  SUBCASE("recomputation") {
    const std::vector<SceneOutcome> both{a, b};
    const auto r = evaluate_split(both);
    const double fa = adjusted_rand_index(a.pred, a.gt, true), fb = adjusted_rand_index(b.pred, b.gt, true);
    CHECK(r.fg_ari.mean == doctest::Approx((fa + fb) / 2));
    CHECK(r.fg_ari.std == doctest::Approx(std::abs(fa - fb) / 2));
    CHECK(r.mean_active_count == 3.0);
    CHECK(r.mean_count_error == 1.0);
  }
  CHECK_THROWS(evaluate_split(std::vector<SceneOutcome>{}));
}

TEST_CASE("report is line-delimited JSON with fixed fields") {
  const std::vector<SceneOutcome> both{{{1, 1, 2, 2}, {0, 1, 1, 2}, 2, 2}, {{1, 2, 3, 4}, {1, 1, 2, 2}, 4, 2}};
  const auto r = evaluate_split(both);
  std::stringstream ss;
  write_report(ss, r);
  std::string line;
  std::vector<nlohmann::json> records;
  while (std::getline(ss, line)) records.push_back(nlohmann::json::parse(line));
  REQUIRE(records.size() == 3);
  CHECK(records[0]["record"] == "scene");
  CHECK(records[0]["fg_ari"].get<double>() == r.scenes[0].fg_ari);
  CHECK(records[2]["record"] == "aggregate");
  CHECK(records[2]["scenes"] == 2);
  CHECK(records[2]["mbo_mean"].get<double>() == r.mbo.mean);
}
