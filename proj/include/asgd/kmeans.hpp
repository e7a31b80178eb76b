#ifndef ASGD_KMEANS_HPP
#define ASGD_KMEANS_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "asgd/model.hpp"

namespace asgd {

// m points of dimension n, row-major.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t m, std::size_t n, std::vector<double> values);

    std::size_t m() const { return m_; }
    std::size_t n() const { return n_; }
    std::span<const double> values() const { return values_; }
    std::span<const double> point(std::size_t i) const { return {values_.data() + i * n_, n_}; }

    // New dataset holding the selected rows, in order.
    Dataset subset(std::span<const std::size_t> rows) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    std::size_t m_ = 0;
    std::size_t n_ = 0;
    std::vector<double> values_;
};

struct GroundTruth {
    ModelState centers;
};

// Index of the nearest prototype; ties go to the lowest index.
std::size_t assign(std::span<const double> x, const ModelState& w);

// E(w) = sum_i 1/2 |x_i - w_{assign(x_i)}|^2
double quantization_error(const Dataset& X, const ModelState& w);
// Same sum restricted to the given rows.
double quantization_error(const Dataset& X, std::span<const std::size_t> rows,
                          const ModelState& w);

// (x - w_s) on the nearest row s, zero elsewhere. This is the negative
// gradient of the single-sample quantization error.
Update point_update(std::span<const double> x, const ModelState& w);

// Sum of point_update over the batch, every point assigned against the
// same incoming w. Throws std::invalid_argument on an empty batch.
Update minibatch_update(const Dataset& batch, const ModelState& w);

// Hot-path variant: out is overwritten with the summed update of X's rows
// listed in idx. out must already have w's shape.
void accumulate_minibatch(const Dataset& X, std::span<const std::size_t> idx,
                          const ModelState& w, Update& out);

// Minimum-cost perfect matching of a square cost matrix (row-major, size
// k*k). Returns, for every row, the matched column.
std::vector<std::size_t> optimal_matching(std::span<const double> cost, std::size_t k);

// Mean squared distance between w's prototypes and the true centers under
// the optimal one-to-one matching.
double ground_truth_error(const ModelState& w, const GroundTruth& gt);

// Shared initial state: k distinct rows of X drawn with the given seed.
ModelState init_from_data(const Dataset& X, std::size_t k, std::uint64_t seed);

// Binary files: u64 magic, u64 rows, u64 n, then rows*n little-endian doubles.
inline constexpr std::uint64_t kDatasetMagic = 0x4B4D44;      // "KMD"
inline constexpr std::uint64_t kGroundTruthMagic = 0x4B4D43;  // "KMC"

void write_dataset(const std::filesystem::path& path, const Dataset& X);
Dataset read_dataset(const std::filesystem::path& path);
void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt);
GroundTruth read_ground_truth(const std::filesystem::path& path);

}  // namespace asgd

#endif  // ASGD_KMEANS_HPP
