#include "mists/rng.hpp"

#include <cmath>

namespace mists {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t a, std::uint64_t b) {
  // FNV-1a over the stream name, then mixed with the seed and indices.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t x = splitmix64(seed ^ h);
  x = splitmix64(x ^ a);
  x = splitmix64(x ^ (b + 0x632be59bd9b4e019ULL));
  return x;
}

Engine make_engine(std::uint64_t seed, std::string_view stream,
                   std::uint64_t a, std::uint64_t b) {
  return Engine(derive_seed(seed, stream, a, b));
}

Tensor normal_noise(Engine& engine, Shape shape) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = normal(engine);
  return Tensor(std::move(shape), std::move(values));
}

Tensor gumbel_noise(Engine& engine, Shape shape) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) {
    double u = uniform(engine);
    while (u <= 0.0) u = uniform(engine);
    v = -std::log(-std::log(u));
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace mists
