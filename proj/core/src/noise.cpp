#include "metaslot/noise.hpp"

#include <stdexcept>
#include <string>

#include "metaslot/ops.hpp"

namespace metaslot {

double noise_sigma(std::size_t t, const NoiseSchedule& schedule) {
  if (schedule.iterations == 0 || t >= schedule.iterations) {
    throw std::out_of_range("noise_sigma: step " + std::to_string(t) + " outside [0, " +
                            std::to_string(schedule.iterations) + ")");
  }
  if (schedule.sigma < 0.0) throw std::invalid_argument("noise_sigma: negative sigma");
  if (schedule.iterations == 1) return 0.0;
  const double span = static_cast<double>(schedule.iterations - 1);
  return schedule.sigma * (1.0 - static_cast<double>(t) / span);
}

Tensor inject_noise(const Tensor& features, double alpha, Rng& rng) {
  if (alpha < 0.0) throw std::invalid_argument("inject_noise: negative alpha");
  if (alpha == 0.0) return features;
  std::normal_distribution<double> dist(0.0, alpha);
  std::vector<double> xi(features.numel());
  for (auto& v : xi) v = dist(rng);
  return ops::add(features, Tensor(features.shape(), std::move(xi)));
}

}  // namespace metaslot
