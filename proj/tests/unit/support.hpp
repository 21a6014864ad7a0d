#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mists/config.hpp"
#include "mists/datagen.hpp"
#include "mists/tensor.hpp"

namespace mists::test {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

inline TrainConfig tiny_config() {
  TrainConfig c;
  c.d_zc = 2;
  c.d_zt = 2;
  c.hidden = 4;
  c.K = 2;
  c.batch_size = 4;
  c.epochs = 3;
  return c;
}

/// Two-class stream whose label is the sign of the first feature.
inline DomainStream separable_stream(int domains, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  DomainStream s;
  s.feature_dim = 2;
  s.n_classes = 2;
  s.name = "separable";
  for (int t = 1; t <= domains; ++t) {
    Domain d;
    d.index = t;
    d.X.resize(n, 2);
    for (int i = 0; i < n; ++i) {
      const int y = i % 2;
      d.X(i, 0) = (y ? 1.5 : -1.5) + 0.3 * g(rng);
      d.X(i, 1) = 0.1 * t + g(rng);
      d.y.push_back(y);
    }
    s.domains.push_back(std::move(d));
  }
  return s;
}

}  // namespace mists::test
