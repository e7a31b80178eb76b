#ifndef ASGD_ENGINE_HPP
#define ASGD_ENGINE_HPP

#include <optional>
#include <vector>

#include "asgd/adaptive_b.hpp"
#include "asgd/kmeans.hpp"
#include "asgd/solvers.hpp"
#include "asgd/transport.hpp"

namespace asgd {

struct WorkerCounters {
    std::uint64_t messages_sent = 0;
    std::uint64_t messages_refused = 0;
    std::uint64_t messages_received = 0;
    std::uint64_t messages_accepted = 0;
    std::uint64_t filter_audits = 0;
    std::uint64_t filter_violations = 0;
};

// One ASGD worker: local state w, iteration counter t, private sample and
// peer streams over its data partition.
struct WorkerState {
    WorkerState(std::size_t id, const Dataset& data, ModelState w0,
                std::vector<std::size_t> partition, std::uint64_t seed);

    std::size_t id;
    const Dataset* data;
    ModelState w;
    std::size_t t = 0;
    std::uint64_t samples = 0;
    LocalSampler sampler;
    Rng peers;
    WorkerCounters stats;

    // scratch buffers reused across steps
    std::vector<std::size_t> batch;
    Update delta;
    Update merged;
};

struct StepSettings {
    // Post the new state every `send_every` steps; kNever disables sending.
    std::size_t send_every = 1;
    // Check every received message against the filter contract.
    bool audit_filter = false;
    CostModel cost;
};

struct StepReport {
    bool received = false;
    bool accepted = false;
    std::optional<SendStatus> sent;
    double message_time = 0.0;  // virtual cost of message handling this step
};

// True iff the local step moves w_i strictly closer to w_j:
// |(w_i - eps*step) - w_j|^2 < |w_i - w_j|^2.
bool parzen_accept(const ModelState& w_i, const ModelState& w_j, const Update& step,
                   double epsilon);

// Filtered merge: step unchanged when w_j is absent or rejected, otherwise
// 1/2 (w_i - w_j) + step. `step` is the descent direction (w moves by -eps*step).
Update merge_update(const ModelState& w_i, const ModelState* w_j, const Update& step,
                    double epsilon);

// One mini-batch of hp.b samples: poll at most one message, merge, apply
// w <- w - eps * merged, then post w to one random other worker. With a null
// transport (or a single worker) there is no communication.
StepReport worker_step(WorkerState& ws, const Hyperparams& hp, Transport* net, double now,
                       const StepSettings& settings);

struct AsgdSettings {
    std::size_t workers_per_node = 1;
    std::size_t send_every = 1;
    bool audit_filter = false;
};

// Asynchronous SGD over the given network model. Returns worker 0's final
// state; the trace follows worker 0 and reports totals over all workers.
// With a controller, every node adapts its b each `interval` worker steps.
SolverResult run_asgd(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                      const NetworkModel& net, const std::optional<ControllerState>& controller,
                      const RunOptions& opts = {}, const AsgdSettings& settings = {});

}  // namespace asgd

#endif  // ASGD_ENGINE_HPP
