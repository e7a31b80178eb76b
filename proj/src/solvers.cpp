#include "asgd/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace asgd {

std::vector<std::vector<std::size_t>> partition_rows(std::size_t m, std::size_t workers,
                                                     std::uint64_t seed) {
    if (workers == 0) throw std::invalid_argument("workers: must be >= 1");
    if (workers > m)
        throw std::invalid_argument("workers: " + std::to_string(workers) +
                                    " exceeds the number of samples " + std::to_string(m));
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto rng = make_rng(seed, Stream::partition);
    std::shuffle(perm.begin(), perm.end(), rng);

    const std::size_t h = m / workers;
    std::vector<std::vector<std::size_t>> parts(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const auto first = perm.begin() + static_cast<std::ptrdiff_t>(w * h);
        const auto last = (w + 1 == workers) ? perm.end() : first + static_cast<std::ptrdiff_t>(h);
        parts[w].assign(first, last);
    }
    return parts;
}

LocalSampler::LocalSampler(std::vector<std::size_t> rows, std::uint64_t seed, std::size_t worker)
    : rows_(std::move(rows)), rng_(make_rng(seed, Stream::worker_samples, worker)) {
    if (rows_.empty()) throw std::invalid_argument("LocalSampler: empty partition");
    std::shuffle(rows_.begin(), rows_.end(), rng_);
}

void LocalSampler::draw(std::size_t b, std::vector<std::size_t>& out) {
    std::uniform_int_distribution<std::size_t> pick(0, rows_.size() - 1);
    out.resize(b);
    for (auto& r : out) r = rows_[pick(rng_)];
}

TraceRecorder::TraceRecorder(const Dataset& X, const RunOptions& opts, std::uint64_t seed,
                             std::size_t iterations)
    : X_(X), opts_(opts), every_(std::max<std::size_t>(1, iterations / 100)) {
    if (opts.max_samples > 0) {
        sample_every_ = std::max<std::uint64_t>(1, opts.max_samples / 100);
        next_mark_ = sample_every_;
    }
    eval_rows_.resize(X.m());
    std::iota(eval_rows_.begin(), eval_rows_.end(), std::size_t{0});
    if (opts.eval_points > 0 && opts.eval_points < X.m()) {
        auto rng = make_rng(seed, Stream::eval);
        std::shuffle(eval_rows_.begin(), eval_rows_.end(), rng);
        eval_rows_.resize(opts.eval_points);
        std::sort(eval_rows_.begin(), eval_rows_.end());
    }
}

void TraceRecorder::record(const ModelState& w, std::uint64_t samples, double time_s,
                           std::uint64_t sent, std::uint64_t accepted, std::size_t b) {
    if (!trace_.empty() && trace_.back().samples == samples && trace_.back().time_s == time_s)
        return;
    TracePoint p;
    p.samples = samples;
    p.time_s = time_s;
    p.quant_error = quantization_error(X_, eval_rows_, w) * static_cast<double>(X_.m()) /
                    static_cast<double>(eval_rows_.size());
    p.gt_error = opts_.ground_truth ? ground_truth_error(w, *opts_.ground_truth)
                                    : std::numeric_limits<double>::quiet_NaN();
    p.msgs_sent = sent;
    p.msgs_accepted = accepted;
    p.b_current = b;
    trace_.push_back(p);
    if (sample_every_)
        while (next_mark_ <= samples) next_mark_ += sample_every_;
    if (!reached_ && opts_.target_gt_error && p.gt_error < *opts_.target_gt_error)
        reached_ = time_s;
}

ModelState average_states(std::span<const ModelState> states) {
    if (states.empty()) throw std::invalid_argument("average_states: no states");
    const ModelState& first = states.front();
    ModelState out = first;
    const double inv = 1.0 / static_cast<double>(states.size());
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        // mean as offset from the first state keeps identical inputs exact
        double acc = 0.0;
        for (const auto& s : states) {
            if (!s.conforms(first)) throw dimension_error("average_states: state shapes differ");
            acc += s.values()[i] - first.values()[i];
        }
        dst[i] = first.values()[i] + acc * inv;
    }
    return out;
}

namespace {

void check_inputs(const Dataset& X, const Hyperparams& hp, const ModelState& w0) {
    hp.validate();
    if (X.m() == 0) throw std::invalid_argument("dataset: empty");
    if (X.n() != w0.n())
        throw dimension_error("initial state dimension " + std::to_string(w0.n()) +
                              " does not match dataset dimension " + std::to_string(X.n()));
    if (w0.k() == 0) throw dimension_error("initial state has no prototypes");
}

void apply_step(ModelState& w, const Update& delta, double epsilon) {
    auto dst = w.values();
    auto src = delta.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += epsilon * src[i];
}

bool budget_spent(const RunOptions& opts, std::uint64_t samples) {
    return opts.max_samples != 0 && samples >= opts.max_samples;
}

}  // namespace

SolverResult sgd_run(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                     const RunOptions& opts) {
    check_inputs(X, hp, w0);
    auto parts = partition_rows(X.m(), 1, hp.seed);
    LocalSampler sampler(std::move(parts[0]), hp.seed, 0);
    TraceRecorder rec(X, opts, hp.seed, hp.iterations);

    ModelState w = w0;
    Update delta(w.k(), w.n());
    std::vector<std::size_t> batch;
    std::uint64_t samples = 0;
    double now = 0.0;
    const double step_time = opts.cost.step_cost(hp.b, w.k(), w.n());
    rec.record(w, 0, 0.0, 0, 0, hp.b);

    std::size_t t = 0;
    while (t < hp.iterations && !budget_spent(opts, samples) && !rec.should_stop()) {
        sampler.draw(hp.b, batch);
        accumulate_minibatch(X, batch, w, delta);
        apply_step(w, delta, hp.epsilon);
        ++t;
        samples += hp.b;
        now += step_time;
        if (opts.on_step) opts.on_step(0, t, w);
        if (rec.due(t, samples)) rec.record(w, samples, now, 0, 0, hp.b);
    }
    rec.record(w, samples, now, 0, 0, hp.b);

    SolverResult res;
    res.stats.min_worker_steps = t;
    res.stats.time_to_target = rec.time_to_target();
    res.trace = rec.take();
    res.worker_states = {w};
    res.final_state = std::move(w);
    return res;
}

SolverResult simuparallel_sgd(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                              const RunOptions& opts) {
    check_inputs(X, hp, w0);
    auto parts = partition_rows(X.m(), hp.workers, hp.seed);
    std::vector<LocalSampler> samplers;
    samplers.reserve(hp.workers);
    for (std::size_t i = 0; i < hp.workers; ++i)
        samplers.emplace_back(std::move(parts[i]), hp.seed, i);
    TraceRecorder rec(X, opts, hp.seed, hp.iterations);

    std::vector<ModelState> states(hp.workers, w0);
    Update delta(w0.k(), w0.n());
    std::vector<std::size_t> batch;
    std::uint64_t samples = 0;
    double now = 0.0;
    const double step_time = opts.cost.step_cost(hp.b, w0.k(), w0.n());
    rec.record(w0, 0, 0.0, 0, 0, hp.b);

    // Workers share nothing, so running them in lock-step gives the same
    // per-worker trajectories as running them concurrently.
    std::size_t t = 0;
    while (t < hp.iterations && !budget_spent(opts, samples) && !rec.should_stop()) {
        ++t;
        for (std::size_t i = 0; i < hp.workers; ++i) {
            samplers[i].draw(hp.b, batch);
            accumulate_minibatch(X, batch, states[i], delta);
            apply_step(states[i], delta, hp.epsilon);
            if (opts.on_step) opts.on_step(i, t, states[i]);
        }
        samples += hp.b;
        now += step_time;
        if (rec.due(t, samples)) rec.record(average_states(states), samples, now, 0, 0, hp.b);
    }
    ModelState avg = average_states(states);
    // the final reduction is a single transfer of every state
    const double reduce_time =
        hp.workers > 1 ? opts.cost.copy_cost(serialized_size(w0.k(), w0.n()) * hp.workers) : 0.0;
    rec.record(avg, samples, now + reduce_time, 0, 0, hp.b);

    SolverResult res;
    res.stats.min_worker_steps = t;
    res.stats.time_to_target = rec.time_to_target();
    res.trace = rec.take();
    res.worker_states = std::move(states);
    res.final_state = std::move(avg);
    return res;
}

SolverResult batch_gd(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                      const RunOptions& opts) {
    check_inputs(X, hp, w0);
    TraceRecorder rec(X, opts, hp.seed, hp.iterations);

    ModelState w = w0;
    Update delta(w.k(), w.n());
    std::vector<std::size_t> all(X.m());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const double scale = hp.epsilon / static_cast<double>(X.m());
    const std::size_t share = (X.m() + hp.workers - 1) / hp.workers;
    const double epoch_time = opts.cost.step_cost(share, w.k(), w.n());
    std::uint64_t samples = 0;
    double now = 0.0;
    rec.record(w, 0, 0.0, 0, 0, X.m());

    std::size_t t = 0;
    while (t < hp.iterations && !budget_spent(opts, samples) && !rec.should_stop()) {
        accumulate_minibatch(X, all, w, delta);
        apply_step(w, delta, scale);
        ++t;
        samples += share;
        now += epoch_time;
        if (opts.on_step) opts.on_step(0, t, w);
        rec.record(w, samples, now, 0, 0, X.m());
    }

    SolverResult res;
    res.stats.min_worker_steps = t;
    res.stats.time_to_target = rec.time_to_target();
    res.trace = rec.take();
    res.worker_states = {w};
    res.final_state = std::move(w);
    return res;
}

}  // namespace asgd
