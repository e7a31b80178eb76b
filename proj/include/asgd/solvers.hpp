#ifndef ASGD_SOLVERS_HPP
#define ASGD_SOLVERS_HPP

#include <functional>
#include <optional>
#include <vector>

#include "asgd/kmeans.hpp"
#include "asgd/model.hpp"
#include "asgd/rng.hpp"

namespace asgd {

struct TracePoint {
    std::uint64_t samples = 0;  // per worker
    double time_s = 0.0;        // virtual (or wall) seconds
    double quant_error = 0.0;
    double gt_error = 0.0;      // NaN without ground truth
    std::uint64_t msgs_sent = 0;
    std::uint64_t msgs_accepted = 0;
    std::size_t b_current = 0;

    friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

struct RunStats {
    std::uint64_t messages_sent = 0;      // accepted by the transport
    std::uint64_t messages_refused = 0;   // egress queue full
    std::uint64_t messages_received = 0;  // polled from a receive slot
    std::uint64_t messages_accepted = 0;  // passed the Parzen filter
    std::uint64_t slot_overwrites = 0;
    std::uint64_t filter_violations = 0;  // only counted with audit_filter
    std::uint64_t filter_audits = 0;
    std::uint64_t min_worker_steps = 0;
    double mean_queue_last_half = 0.0;
    std::optional<double> time_to_target;
};

struct SolverResult {
    ModelState final_state;
    std::vector<TracePoint> trace;
    std::vector<ModelState> worker_states;
    RunStats stats;
};

// Called after every applied step with (worker, step index starting at 1, state).
using StepObserver = std::function<void(std::size_t, std::size_t, const ModelState&)>;

struct RunOptions {
    const GroundTruth* ground_truth = nullptr;
    // Rows used for the quantization error at checkpoints; 0 means all of X.
    // A subset estimate is rescaled to the full dataset size.
    std::size_t eval_points = 0;
    std::optional<double> target_gt_error;
    bool stop_at_target = false;
    // Per-worker sample budget; 0 means iterations alone bound the run.
    std::uint64_t max_samples = 0;
    CostModel cost;
    StepObserver on_step;
};

// Random split of [0, m) into `workers` parts of floor(m/workers) rows; the
// remainder goes to the last part. Throws when workers > m.
std::vector<std::vector<std::size_t>> partition_rows(std::size_t m, std::size_t workers,
                                                     std::uint64_t seed);

// Per-worker uniform sampler over a local partition. The partition is
// shuffled once with the worker stream before any draw.
class LocalSampler {
public:
    LocalSampler(std::vector<std::size_t> rows, std::uint64_t seed, std::size_t worker);
    void draw(std::size_t b, std::vector<std::size_t>& out);
    std::span<const std::size_t> rows() const { return rows_; }

private:
    std::vector<std::size_t> rows_;
    Rng rng_;
};

// Checkpoint bookkeeping shared by every solver.
class TraceRecorder {
public:
    TraceRecorder(const Dataset& X, const RunOptions& opts, std::uint64_t seed,
                  std::size_t iterations);

    // True when step t (1-based) is a checkpoint. With a sample budget the grid
    // is every max_samples/100 samples instead, so runs with a changing b stay
    // comparable.
    bool due(std::size_t t, std::uint64_t samples) const {
        return sample_every_ ? samples >= next_mark_ : t % every_ == 0;
    }
    void record(const ModelState& w, std::uint64_t samples, double time_s,
                std::uint64_t sent = 0, std::uint64_t accepted = 0, std::size_t b = 0);
    bool target_reached() const { return reached_.has_value(); }
    bool should_stop() const { return opts_.stop_at_target && reached_.has_value(); }
    std::optional<double> time_to_target() const { return reached_; }
    std::vector<TracePoint> take() { return std::move(trace_); }
    const std::vector<TracePoint>& trace() const { return trace_; }

private:
    const Dataset& X_;
    const RunOptions& opts_;
    std::vector<std::size_t> eval_rows_;
    std::size_t every_;
    std::uint64_t sample_every_ = 0;
    std::uint64_t next_mark_ = 0;
    std::vector<TracePoint> trace_;
    std::optional<double> reached_;
};

// Component-wise mean; identical inputs give back the input exactly.
ModelState average_states(std::span<const ModelState> states);

// Sequential mini-batch SGD; with hp.b == 1 this is plain online SGD.
// Applies w <- w + epsilon * sum_{x in M} (x - w_s(x)). hp.workers is ignored.
SolverResult sgd_run(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                     const RunOptions& opts = {});

// Communication-free parallel SGD: independent mini-batch SGD per partition,
// states averaged once at the end. Checkpoints report the running average.
SolverResult simuparallel_sgd(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                              const RunOptions& opts = {});

// Full-batch gradient descent: w <- w + (epsilon/m) * sum_i (x_i - w_s(x_i))
// once per epoch; hp.iterations counts epochs.
SolverResult batch_gd(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                      const RunOptions& opts = {});

}  // namespace asgd

#endif  // ASGD_SOLVERS_HPP
