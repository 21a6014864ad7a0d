#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "mists/tensor.hpp"

namespace mists {

using Engine = std::mt19937_64;

/// Derives an independent seed for a named sub-stream, e.g.
/// `derive_seed(seed, "batching", epoch, domain)`.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t a = 0, std::uint64_t b = 0);

Engine make_engine(std::uint64_t seed, std::string_view stream,
                   std::uint64_t a = 0, std::uint64_t b = 0);

/// Standard-normal noise of the given shape.
Tensor normal_noise(Engine& engine, Shape shape);

/// Gumbel(0, 1) noise of the given shape.
Tensor gumbel_noise(Engine& engine, Shape shape);

}  // namespace mists
