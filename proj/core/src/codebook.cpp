#include "metaslot/codebook.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace metaslot {

PrototypeCodebook::PrototypeCodebook(std::size_t dim, std::vector<double> vectors,
                                     double ema_rate, std::int64_t timeout)
    : dim_(dim), vectors_(std::move(vectors)), ema_rate_(ema_rate), timeout_(timeout) {
  if (dim_ == 0 || vectors_.size() % dim_ != 0) {
    throw std::invalid_argument("codebook: vector storage is not a multiple of dim");
  }
  if (!(ema_rate_ > 0.0 && ema_rate_ <= 1.0)) {
    throw std::invalid_argument("codebook: ema rate must lie in (0, 1]");
  }
  for (double v : vectors_) {
    if (!std::isfinite(v)) throw NumericError("codebook: non-finite prototype");
  }
  last_used_.assign(vectors_.size() / dim_, 0);
}

void PrototypeCodebook::set_last_used(std::vector<std::int64_t> steps) {
  if (steps.size() != size()) throw std::invalid_argument("codebook: last-used size mismatch");
  last_used_ = std::move(steps);
}

std::size_t PrototypeCodebook::nearest(std::span<const double> v) const {
  if (size() == 0) throw std::invalid_argument("codebook: empty");
  if (v.size() != dim_) throw ShapeError("codebook: query width differs from prototype width");
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < size(); ++k) {
    const auto e = vector(k);
    double dist = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) {
      const double diff = v[c] - e[c];
      dist += diff * diff;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

PrototypeCodebook init_codebook(Rng& rng, std::size_t prototypes, std::size_t dim,
                                const CodebookConfig& config) {
  std::vector<double> vectors(prototypes * dim);
  if (config.init_scale > 0.0) {
    std::normal_distribution<double> dist(0.0, config.init_scale);
    for (auto& v : vectors) v = dist(rng);
  }
  return PrototypeCodebook(dim, std::move(vectors), config.ema_rate, config.timeout);
}

Quantized quantize(const Tensor& slots, const PrototypeCodebook& codebook) {
  if (codebook.size() == 0) throw std::invalid_argument("quantize: empty codebook");
  if (slots.rank() != 2 || slots.cols() != codebook.dim()) {
    throw ShapeError("quantize: slots " + shape_string(slots.shape()) + " vs codebook width " +
                     std::to_string(codebook.dim()));
  }
  const std::size_t k = slots.rows(), d = slots.cols();
  Quantized out;
  out.idx.resize(k);
  std::vector<double> data(k * d);
  for (std::size_t i = 0; i < k; ++i) {
    const auto row = slots.data().subspan(i * d, d);
    out.idx[i] = codebook.nearest(row);
    const auto e = codebook.vector(out.idx[i]);
    std::copy(e.begin(), e.end(), data.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  out.slots = Tensor({k, d}, std::move(data));
  return out;
}

SlotMask prune_duplicates(std::span<const std::size_t> idx) {
  SlotMask mask;
  mask.idx.assign(idx.begin(), idx.end());
  mask.keep.assign(idx.size(), 0);
  std::unordered_map<std::size_t, bool> seen;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (seen.emplace(idx[i], true).second) mask.keep[i] = 1;
  }
  return mask;
}

std::size_t ema_update(PrototypeCodebook& codebook, std::span<const CodebookSample> batch,
                       std::int64_t step, EmaAssignment mode) {
  const std::size_t d = codebook.dim();
  std::vector<double> sums(codebook.size() * d, 0.0);
  std::vector<std::size_t> counts(codebook.size(), 0);
  for (const auto& sample : batch) {
    if (sample.slots.requires_grad()) {
      throw std::invalid_argument("ema_update: slots must be detached");
    }
    if (sample.slots.cols() != d || sample.mask.size() != sample.slots.rows()) {
      throw ShapeError("ema_update: sample shape does not match codebook or mask");
    }
    for (std::size_t i = 0; i < sample.slots.rows(); ++i) {
      if (!sample.mask.retained(i)) continue;
      const auto row = sample.slots.data().subspan(i * d, d);
      const std::size_t k =
          mode == EmaAssignment::kRequantize ? codebook.nearest(row) : sample.mask.idx[i];
      if (k >= codebook.size()) throw std::out_of_range("ema_update: prototype index");
      for (std::size_t c = 0; c < d; ++c) sums[k * d + c] += row[c];
      ++counts[k];
    }
  }
  const double eta = codebook.ema_rate();
  std::size_t moved = 0;
  for (std::size_t k = 0; k < codebook.size(); ++k) {
    if (counts[k] == 0) continue;
    auto e = codebook.vector(k);
    const double inv = 1.0 / static_cast<double>(counts[k]);
    for (std::size_t c = 0; c < d; ++c) {
      const double centroid = sums[k * d + c] * inv;
      e[c] = (1.0 - eta) * e[c] + eta * centroid;
    }
    codebook.set_last_used(k, step);
    ++moved;
  }
  return moved;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

std::size_t revive_dead(PrototypeCodebook& codebook, std::span<const CodebookSample> batch,
                        std::int64_t step) {
  if (batch.empty()) throw std::invalid_argument("revive_dead: empty batch");
  const std::size_t d = codebook.dim();

  std::vector<std::span<const double>> candidates;
  for (const auto& sample : batch) {
    for (std::size_t i = 0; i < sample.slots.rows(); ++i) {
      if (sample.mask.retained(i)) candidates.push_back(sample.slots.data().subspan(i * d, d));
    }
  }
  if (candidates.empty()) return 0;

  std::vector<std::uint8_t> active(codebook.size());
  std::vector<std::size_t> dead;
  for (std::size_t k = 0; k < codebook.size(); ++k) {
    active[k] = codebook.is_dead(k, step) ? 0 : 1;
    if (!active[k]) dead.push_back(k);
  }

  for (const std::size_t k : dead) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      double score = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < codebook.size(); ++j) {
        if (active[j]) score = std::min(score, cosine_distance(candidates[c], codebook.vector(j)));
      }
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    auto e = codebook.vector(k);
    std::copy(candidates[best].begin(), candidates[best].end(), e.begin());
    codebook.set_last_used(k, step);
    active[k] = 1;
  }
  return dead.size();
}

}  // namespace metaslot
