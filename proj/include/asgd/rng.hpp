#ifndef ASGD_RNG_HPP
#define ASGD_RNG_HPP

#include <cstdint>
#include <random>

namespace asgd {

using Rng = std::mt19937_64;

// Independent named streams derived from one master seed.
enum class Stream : std::uint32_t {
    init = 1,
    partition = 2,
    worker_samples = 3,
    worker_peers = 4,
    datagen_centers = 5,
    datagen_points = 6,
    fold = 7,
    eval = 8,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

}  // namespace asgd

#endif  // ASGD_RNG_HPP
