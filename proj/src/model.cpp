#include "asgd/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace asgd {

ModelState::ModelState(std::size_t k, std::size_t n) : k_(k), n_(n), values_(k * n, 0.0) {}

ModelState::ModelState(std::size_t k, std::size_t n, std::vector<double> values)
    : k_(k), n_(n), values_(std::move(values)) {
    if (values_.size() != k_ * n_)
        throw std::invalid_argument("ModelState: expected " + std::to_string(k_ * n_) +
                                    " components, got " + std::to_string(values_.size()));
    if (!is_finite())
        throw std::invalid_argument("ModelState: non-finite component");
}

bool ModelState::is_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
}

void ModelState::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void Hyperparams::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw std::invalid_argument("epsilon: must be a finite value > 0");
    if (b < 1) throw std::invalid_argument("b: must be >= 1");
    if (workers < 1) throw std::invalid_argument("workers: must be >= 1");
}

double distance_sq(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw dimension_error("distance_sq: length " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double distance_sq(const ModelState& a, const ModelState& b) {
    if (!a.conforms(b))
        throw dimension_error("distance_sq: state shapes differ");
    return distance_sq(a.values(), b.values());
}

std::size_t serialized_size(std::size_t k, std::size_t n) { return 16 + 8 * k * n; }

namespace detail {

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::vector<std::byte>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t get_u64(std::span<const std::byte> in, std::size_t offset) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
    return v;
}

double get_f64(std::span<const std::byte> in, std::size_t offset) {
    return std::bit_cast<double>(get_u64(in, offset));
}

}  // namespace detail

std::vector<std::byte> serialize_state(const ModelState& s) {
    std::vector<std::byte> out;
    out.reserve(serialized_size(s.k(), s.n()));
    detail::put_u64(out, s.k());
    detail::put_u64(out, s.n());
    for (double v : s.values()) detail::put_f64(out, v);
    return out;
}

ModelState deserialize_state(std::span<const std::byte> bytes) {
    if (bytes.size() < 16)
        throw std::invalid_argument("deserialize_state: truncated header");
    const auto k = detail::get_u64(bytes, 0);
    const auto n = detail::get_u64(bytes, 8);
    if (n != 0 && k > (bytes.size() - 16) / 8 / n)
        throw std::invalid_argument("deserialize_state: payload shorter than header claims");
    if (bytes.size() != serialized_size(k, n))
        throw std::invalid_argument("deserialize_state: size mismatch");
    std::vector<double> values(k * n);
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = detail::get_f64(bytes, 16 + 8 * i);
    return ModelState(k, n, std::move(values));
}

}  // namespace asgd
