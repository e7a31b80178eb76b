#ifndef ASGD_MODEL_HPP
#define ASGD_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace asgd {

// Raised whenever two states, points or datasets do not conform.
class dimension_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// k prototype vectors of dimension n, stored flattened row-major.
// The same shape is used for update vectors (one row per prototype).
class ModelState {
public:
    ModelState() = default;
    ModelState(std::size_t k, std::size_t n);
    // Throws std::invalid_argument if values.size() != k*n or any entry is
    // not finite.
    ModelState(std::size_t k, std::size_t n, std::vector<double> values);

    std::size_t k() const { return k_; }
    std::size_t n() const { return n_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    std::span<const double> row(std::size_t c) const {
        return {values_.data() + c * n_, n_};
    }
    std::span<double> row(std::size_t c) { return {values_.data() + c * n_, n_}; }

    double operator()(std::size_t c, std::size_t d) const { return values_[c * n_ + d]; }
    double& operator()(std::size_t c, std::size_t d) { return values_[c * n_ + d]; }

    bool conforms(const ModelState& other) const {
        return k_ == other.k_ && n_ == other.n_;
    }
    bool is_finite() const;
    void fill(double v);

    friend bool operator==(const ModelState&, const ModelState&) = default;

private:
    std::size_t k_ = 0;
    std::size_t n_ = 0;
    std::vector<double> values_;
};

// Update vectors share the prototype layout.
using Update = ModelState;

struct Hyperparams {
    double epsilon = 0.01;
    std::size_t b = 1;
    // Mini-batch steps per worker. Zero is accepted by the solvers and
    // returns the initial state.
    std::size_t iterations = 1;
    std::size_t workers = 1;
    std::uint64_t seed = 1;

    // Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct UpdateMessage {
    ModelState state;
    std::size_t sender = 0;
    std::uint64_t sender_iteration = 0;
};

// Virtual compute cost of the numeric kernels. A "flop" here is one
// multiply-add on a state component; copies are charged per byte.
struct CostModel {
    double flop_time = 1e-10;
    double copy_bandwidth = 1e10;

    double sample_cost(std::size_t k, std::size_t n) const {
        // nearest-prototype search plus accumulation into one row
        return flop_time * static_cast<double>(k * n + n);
    }
    // one mini-batch: b samples plus applying the update to every component
    double step_cost(std::size_t b, std::size_t k, std::size_t n) const {
        return static_cast<double>(b) * sample_cost(k, n) + flop_time * static_cast<double>(k * n);
    }
    double copy_cost(std::size_t bytes) const {
        return static_cast<double>(bytes) / copy_bandwidth;
    }
};

inline constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

// Sum of squared component differences.
double distance_sq(const ModelState& a, const ModelState& b);
double distance_sq(std::span<const double> a, std::span<const double> b);

// Wire encoding: u64 k, u64 n, then k*n IEEE-754 doubles, all little-endian.
std::size_t serialized_size(std::size_t k, std::size_t n);
std::vector<std::byte> serialize_state(const ModelState& s);
// Throws std::invalid_argument on truncated or inconsistent input.
ModelState deserialize_state(std::span<const std::byte> bytes);

namespace detail {
void put_u64(std::vector<std::byte>& out, std::uint64_t v);
void put_f64(std::vector<std::byte>& out, double v);
std::uint64_t get_u64(std::span<const std::byte> in, std::size_t offset);
double get_f64(std::span<const std::byte> in, std::size_t offset);
}  // namespace detail

}  // namespace asgd

#endif  // ASGD_MODEL_HPP
