#include "asgd/datagen.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "asgd/rng.hpp"

namespace asgd {

void SyntheticSpec::validate() const {
    if (n < 1) throw std::invalid_argument("n: must be >= 1");
    if (m < 1) throw std::invalid_argument("m: must be >= 1");
    if (k < 1) throw std::invalid_argument("k: must be >= 1");
    if (!(min_center_dist >= 0.0)) throw std::invalid_argument("min-center-dist: must be >= 0");
    if (!(cluster_sigma > 0.0)) throw std::invalid_argument("cluster-sigma: must be > 0");
    if (!(box > 0.0)) throw std::invalid_argument("box: must be > 0");
    if (!sigmas.empty()) {
        if (sigmas.size() != k)
            throw std::invalid_argument("sigmas: expected one deviation per cluster");
        for (double s : sigmas)
            if (!(s > 0.0)) throw std::invalid_argument("sigmas: every deviation must be > 0");
    }
}

std::pair<Dataset, GroundTruth> generate(const SyntheticSpec& spec) {
    spec.validate();
    auto center_rng = make_rng(spec.seed, Stream::datagen_centers);
    std::uniform_real_distribution<double> coord(-spec.box, spec.box);
    const double min_sq = spec.min_center_dist * spec.min_center_dist;

    std::vector<double> centers;
    centers.reserve(spec.k * spec.n);
    std::vector<double> candidate(spec.n);
    for (std::size_t c = 0; c < spec.k; ++c) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
            for (auto& v : candidate) v = coord(center_rng);
            placed = true;
            for (std::size_t j = 0; j < c && placed; ++j) {
                std::span<const double> other(centers.data() + j * spec.n, spec.n);
                placed = distance_sq(candidate, other) >= min_sq;
            }
        }
        if (!placed) {
            std::ostringstream msg;
            msg << "generate: could not place center " << c + 1 << " of " << spec.k
                << " at min-center-dist " << spec.min_center_dist << " inside box half-width "
                << spec.box << " (n=" << spec.n << ") after " << spec.max_attempts
                << " attempts";
            throw std::runtime_error(msg.str());
        }
        centers.insert(centers.end(), candidate.begin(), candidate.end());
    }

    auto point_rng = make_rng(spec.seed, Stream::datagen_points);
    std::uniform_int_distribution<std::size_t> which(0, spec.k - 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> points;
    points.reserve(spec.m * spec.n);
    for (std::size_t i = 0; i < spec.m; ++i) {
        const std::size_t c = which(point_rng);
        const double sigma = spec.sigmas.empty() ? spec.cluster_sigma : spec.sigmas[c];
        for (std::size_t d = 0; d < spec.n; ++d)
            points.push_back(centers[c * spec.n + d] + sigma * noise(point_rng));
    }
    return {Dataset(spec.m, spec.n, std::move(points)),
            GroundTruth{ModelState(spec.k, spec.n, std::move(centers))}};
}

}  // namespace asgd
