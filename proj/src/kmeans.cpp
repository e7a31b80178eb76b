#include "asgd/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "asgd/rng.hpp"

namespace asgd {

Dataset::Dataset(std::size_t m, std::size_t n, std::vector<double> values)
    : m_(m), n_(n), values_(std::move(values)) {
    if (values_.size() != m_ * n_)
        throw std::invalid_argument("Dataset: expected " + std::to_string(m_ * n_) +
                                    " components, got " + std::to_string(values_.size()));
    for (double v : values_)
        if (!std::isfinite(v)) throw std::invalid_argument("Dataset: non-finite component");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    std::vector<double> out;
    out.reserve(rows.size() * n_);
    for (std::size_t r : rows) {
        if (r >= m_) throw std::out_of_range("Dataset::subset: row out of range");
        auto p = point(r);
        out.insert(out.end(), p.begin(), p.end());
    }
    return Dataset(rows.size(), n_, std::move(out));
}

namespace {

void require_point(std::span<const double> x, const ModelState& w, const char* who) {
    if (x.size() != w.n())
        throw dimension_error(std::string(who) + ": point has dimension " +
                              std::to_string(x.size()) + ", prototypes have " +
                              std::to_string(w.n()));
    if (w.k() == 0) throw dimension_error(std::string(who) + ": state has no prototypes");
}

// assign() without the shape checks, for inner loops.
std::size_t nearest(const double* x, const ModelState& w) {
    const std::size_t n = w.n();
    const double* c = w.values().data();
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < w.k(); ++j, c += n) {
        // four independent partial sums so the loop vectorizes
        double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
        std::size_t i = 0;
        for (; i + 4 <= n; i += 4) {
            const double t0 = x[i] - c[i], t1 = x[i + 1] - c[i + 1];
            const double t2 = x[i + 2] - c[i + 2], t3 = x[i + 3] - c[i + 3];
            p0 += t0 * t0;
            p1 += t1 * t1;
            p2 += t2 * t2;
            p3 += t3 * t3;
        }
        for (; i < n; ++i) {
            const double t = x[i] - c[i];
            p0 += t * t;
        }
        const double d = (p0 + p1) + (p2 + p3);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

}  // namespace

std::size_t assign(std::span<const double> x, const ModelState& w) {
    require_point(x, w, "assign");
    return nearest(x.data(), w);
}

double quantization_error(const Dataset& X, const ModelState& w) {
    std::vector<std::size_t> rows(X.m());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return quantization_error(X, rows, w);
}

double quantization_error(const Dataset& X, std::span<const std::size_t> rows,
                          const ModelState& w) {
    if (X.n() != w.n()) throw dimension_error("quantization_error: dataset and state dimension differ");
    double e = 0.0;
    for (std::size_t r : rows) {
        const auto x = X.point(r);
        const auto s = nearest(x.data(), w);
        e += 0.5 * distance_sq(x, w.row(s));
    }
    return e;
}

Update point_update(std::span<const double> x, const ModelState& w) {
    require_point(x, w, "point_update");
    Update u(w.k(), w.n());
    const auto s = nearest(x.data(), w);
    auto dst = u.row(s);
    auto src = w.row(s);
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = x[i] - src[i];
    return u;
}

void accumulate_minibatch(const Dataset& X, std::span<const std::size_t> idx,
                          const ModelState& w, Update& out) {
    if (X.n() != w.n()) throw dimension_error("minibatch_update: dataset and state dimension differ");
    if (!out.conforms(w)) throw dimension_error("minibatch_update: output shape differs from state");
    out.fill(0.0);
    const std::size_t n = w.n();
    for (std::size_t r : idx) {
        const double* x = X.point(r).data();
        const auto s = nearest(x, w);
        double* dst = out.row(s).data();
        const double* c = w.row(s).data();
        for (std::size_t i = 0; i < n; ++i) dst[i] += x[i] - c[i];
    }
}

Update minibatch_update(const Dataset& batch, const ModelState& w) {
    if (batch.m() == 0) throw std::invalid_argument("minibatch_update: empty batch");
    std::vector<std::size_t> idx(batch.m());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Update out(w.k(), w.n());
    accumulate_minibatch(batch, idx, w, out);
    return out;
}

std::vector<std::size_t> optimal_matching(std::span<const double> cost, std::size_t k) {
    if (cost.size() != k * k) throw dimension_error("optimal_matching: cost matrix is not k*k");
    // Hungarian method with row/column potentials, 1-based internally.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
    std::vector<std::size_t> p(k + 1, 0), way(k + 1, 0);
    for (std::size_t i = 1; i <= k; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(k + 1, inf);
        std::vector<char> used(k + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= k; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * k + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= k; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> match(k);
    for (std::size_t j = 1; j <= k; ++j)
        if (p[j] != 0) match[p[j] - 1] = j - 1;
    return match;
}

double ground_truth_error(const ModelState& w, const GroundTruth& gt) {
    const auto& c = gt.centers;
    if (!w.conforms(c))
        throw dimension_error("ground_truth_error: state is " + std::to_string(w.k()) + "x" +
                              std::to_string(w.n()) + ", ground truth is " +
                              std::to_string(c.k()) + "x" + std::to_string(c.n()));
    const std::size_t k = w.k();
    if (k == 0) return 0.0;
    std::vector<double> cost(k * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) cost[i * k + j] = distance_sq(w.row(i), c.row(j));
    const auto match = optimal_matching(cost, k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += cost[i * k + match[i]];
    return total / static_cast<double>(k);
}

ModelState init_from_data(const Dataset& X, std::size_t k, std::uint64_t seed) {
    if (k == 0 || k > X.m())
        throw std::invalid_argument("init_from_data: need 1 <= k <= m (k=" + std::to_string(k) +
                                    ", m=" + std::to_string(X.m()) + ")");
    auto rng = make_rng(seed, Stream::init);
    std::vector<std::size_t> idx(X.m());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // partial Fisher-Yates: the first k slots become a uniform sample
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, X.m() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<double> values;
    values.reserve(k * X.n());
    for (std::size_t i = 0; i < k; ++i) {
        auto p = X.point(idx[i]);
        values.insert(values.end(), p.begin(), p.end());
    }
    return ModelState(k, X.n(), std::move(values));
}

namespace {

void write_table(const std::filesystem::path& path, std::uint64_t magic, std::size_t rows,
                 std::size_t n, std::span<const double> values) {
    std::vector<std::byte> buf;
    buf.reserve(24 + 8 * values.size());
    detail::put_u64(buf, magic);
    detail::put_u64(buf, rows);
    detail::put_u64(buf, n);
    for (double v : values) detail::put_f64(buf, v);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct Table {
    std::size_t rows;
    std::size_t n;
    std::vector<double> values;
};

Table read_table(const std::filesystem::path& path, std::uint64_t magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::byte> buf(std::filesystem::file_size(path));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (buf.size() < 24) throw std::runtime_error(path.string() + ": truncated header");
    if (detail::get_u64(buf, 0) != magic)
        throw std::runtime_error(path.string() + ": bad magic number");
    Table t{detail::get_u64(buf, 8), detail::get_u64(buf, 16), {}};
    if (t.n != 0 && t.rows > (buf.size() - 24) / 8 / t.n)
        throw std::runtime_error(path.string() + ": payload shorter than header claims");
    if (buf.size() != 24 + 8 * t.rows * t.n)
        throw std::runtime_error(path.string() + ": size does not match header");
    t.values.resize(t.rows * t.n);
    for (std::size_t i = 0; i < t.values.size(); ++i)
        t.values[i] = detail::get_f64(buf, 24 + 8 * i);
    return t;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& X) {
    write_table(path, kDatasetMagic, X.m(), X.n(), X.values());
}

Dataset read_dataset(const std::filesystem::path& path) {
    auto t = read_table(path, kDatasetMagic);
    if (t.rows == 0) throw std::runtime_error(path.string() + ": dataset has no points");
    return Dataset(t.rows, t.n, std::move(t.values));
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
    write_table(path, kGroundTruthMagic, gt.centers.k(), gt.centers.n(), gt.centers.values());
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
    auto t = read_table(path, kGroundTruthMagic);
    return GroundTruth{ModelState(t.rows, t.n, std::move(t.values))};
}

}  // namespace asgd
