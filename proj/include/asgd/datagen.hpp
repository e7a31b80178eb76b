#ifndef ASGD_DATAGEN_HPP
#define ASGD_DATAGEN_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "asgd/kmeans.hpp"

namespace asgd {

struct SyntheticSpec {
    std::size_t n = 10;  // dimension
    std::size_t m = 10000;
    std::size_t k = 10;
    double min_center_dist = 0.0;
    double cluster_sigma = 1.0;
    double box = 10.0;  // centers are uniform in [-box, box]^n
    std::uint64_t seed = 1;
    // Optional per-cluster deviations; overrides cluster_sigma when non-empty.
    std::vector<double> sigmas;
    // Rejection draws allowed per center before giving up.
    std::size_t max_attempts = 10000;

    void validate() const;
};

// Places k centers uniformly in the box with pairwise distance at least
// min_center_dist (rejection sampling), then draws m samples: a uniformly
// chosen center plus isotropic Gaussian noise.
std::pair<Dataset, GroundTruth> generate(const SyntheticSpec& spec);

}  // namespace asgd

#endif  // ASGD_DATAGEN_HPP
