#include "asgd/engine.hpp"

#include <atomic>
#include <queue>
#include <thread>

namespace asgd {

WorkerState::WorkerState(std::size_t id_, const Dataset& data_, ModelState w0,
                         std::vector<std::size_t> partition, std::uint64_t seed)
    : id(id_),
      data(&data_),
      w(std::move(w0)),
      sampler(std::move(partition), seed, id_),
      peers(make_rng(seed, Stream::worker_peers, id_)),
      delta(w.k(), w.n()),
      merged(w.k(), w.n()) {}

namespace {

// merged <- step, plus 1/2 (w_i - w_j) when accepted. Returns acceptance.
bool merge_into(const ModelState& w_i, const ModelState* w_j, const Update& step,
                double epsilon, Update& merged) {
    const bool accepted = w_j != nullptr && parzen_accept(w_i, *w_j, step, epsilon);
    auto out = merged.values();
    auto s = step.values();
    if (!accepted) {
        std::copy(s.begin(), s.end(), out.begin());
        return false;
    }
    auto a = w_i.values();
    auto b = w_j->values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (a[i] - b[i]) + s[i];
    return true;
}

}  // namespace

bool parzen_accept(const ModelState& w_i, const ModelState& w_j, const Update& step,
                   double epsilon) {
    if (!w_i.conforms(w_j) || !w_i.conforms(step))
        throw dimension_error("parzen_accept: state shapes differ");
    auto a = w_i.values();
    auto b = w_j.values();
    auto s = step.values();
    double after = 0.0;
    double before = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double moved = (a[i] - epsilon * s[i]) - b[i];
        const double still = a[i] - b[i];
        after += moved * moved;
        before += still * still;
    }
    return after < before;
}

Update merge_update(const ModelState& w_i, const ModelState* w_j, const Update& step,
                    double epsilon) {
    if (!w_i.conforms(step)) throw dimension_error("merge_update: step shape differs from state");
    Update out(w_i.k(), w_i.n());
    merge_into(w_i, w_j, step, epsilon, out);
    return out;
}

StepReport worker_step(WorkerState& ws, const Hyperparams& hp, Transport* net, double now,
                       const StepSettings& settings) {
    StepReport report;
    auto& w = ws.w;
    const std::size_t bytes = serialized_size(w.k(), w.n());

    ws.sampler.draw(hp.b, ws.batch);
    accumulate_minibatch(*ws.data, ws.batch, w, ws.delta);
    // descent direction: the K-Means update is the negative gradient
    for (double& v : ws.delta.values()) v = -v;

    std::optional<UpdateMessage> msg;
    if (net) msg = net->poll_receive(ws.id);
    const ModelState* external = msg ? &msg->state : nullptr;
    if (msg) {
        if (!msg->state.conforms(w))
            throw dimension_error("worker_step: received state shape differs from local state");
        report.received = true;
        ++ws.stats.messages_received;
        report.message_time += settings.cost.flop_time * 3.0 * static_cast<double>(w.size()) +
                               settings.cost.copy_cost(bytes);
    }

    std::optional<ModelState> before;
    if (msg && settings.audit_filter) before = w;

    report.accepted = merge_into(w, external, ws.delta, hp.epsilon, ws.merged);
    if (report.accepted) ++ws.stats.messages_accepted;

    auto dst = w.values();
    auto m = ws.merged.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= hp.epsilon * m[i];
    ++ws.t;
    ws.samples += hp.b;

    if (before) {
        ++ws.stats.filter_audits;
        auto pre = before->values();
        auto g = ws.delta.values();
        if (report.accepted) {
            ModelState local = *before;
            auto l = local.values();
            for (std::size_t i = 0; i < l.size(); ++i) l[i] = pre[i] - hp.epsilon * g[i];
            if (!(distance_sq(local, *external) < distance_sq(*before, *external)))
                ++ws.stats.filter_violations;
        } else {
            ModelState plain = *before;
            auto p = plain.values();
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= hp.epsilon * g[i];
            if (!(plain == w)) ++ws.stats.filter_violations;
        }
    }

    const bool may_send = net && net->workers() > 1 && settings.send_every != kNever &&
                          ws.t % settings.send_every == 0;
    if (may_send) {
        std::uniform_int_distribution<std::size_t> pick(0, net->workers() - 2);
        std::size_t peer = pick(ws.peers);
        if (peer >= ws.id) ++peer;
        report.sent = net->post_send(ws.id, peer, UpdateMessage{w, ws.id, ws.t}, now);
        report.message_time += settings.cost.copy_cost(bytes);
        if (*report.sent == SendStatus::accepted)
            ++ws.stats.messages_sent;
        else
            ++ws.stats.messages_refused;
    }
    return report;
}

namespace {

struct QueueSample {
    double time;
    std::size_t size;
};

double mean_last_half(const std::vector<std::vector<QueueSample>>& samples, double end) {
    double sum = 0.0;
    std::size_t nodes = 0;
    for (const auto& node : samples) {
        double s = 0.0;
        std::size_t c = 0;
        for (const auto& q : node)
            if (q.time >= end / 2.0) {
                s += static_cast<double>(q.size);
                ++c;
            }
        if (c > 0) {
            sum += s / static_cast<double>(c);
            ++nodes;
        }
    }
    return nodes ? sum / static_cast<double>(nodes) : 0.0;
}

bool finished(const WorkerState& ws, const Hyperparams& hp, const RunOptions& opts) {
    return ws.t >= hp.iterations || (opts.max_samples != 0 && ws.samples >= opts.max_samples);
}

struct Prepared {
    std::vector<WorkerState> workers;
    std::vector<ControllerState> controllers;
};

Prepared prepare(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                 const std::optional<ControllerState>& controller, std::size_t nodes) {
    hp.validate();
    if (X.m() == 0) throw std::invalid_argument("dataset: empty");
    if (X.n() != w0.n())
        throw dimension_error("initial state dimension " + std::to_string(w0.n()) +
                              " does not match dataset dimension " + std::to_string(X.n()));
    if (controller) controller->validate();
    auto parts = partition_rows(X.m(), hp.workers, hp.seed);
    Prepared p;
    p.workers.reserve(hp.workers);
    for (std::size_t i = 0; i < hp.workers; ++i)
        p.workers.emplace_back(i, X, w0, std::move(parts[i]), hp.seed);
    if (controller) p.controllers.assign(nodes, *controller);
    return p;
}

void collect(SolverResult& res, const std::vector<WorkerState>& workers, const Transport& net) {
    auto& s = res.stats;
    s.min_worker_steps = workers.empty() ? 0 : workers.front().t;
    for (const auto& w : workers) {
        s.messages_sent += w.stats.messages_sent;
        s.messages_refused += w.stats.messages_refused;
        s.messages_received += w.stats.messages_received;
        s.messages_accepted += w.stats.messages_accepted;
        s.filter_audits += w.stats.filter_audits;
        s.filter_violations += w.stats.filter_violations;
        s.min_worker_steps = std::min<std::uint64_t>(s.min_worker_steps, w.t);
        s.slot_overwrites += net.overwrite_count(w.id);
        res.worker_states.push_back(w.w);
    }
    res.final_state = workers.front().w;
}

SolverResult run_virtual(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                         const NetworkModel& model,
                         const std::optional<ControllerState>& controller,
                         const RunOptions& opts, const AsgdSettings& settings) {
    SimulatedNetwork net(model, hp.workers, settings.workers_per_node);
    Prepared prepared = prepare(X, hp, w0, controller, net.nodes());
    auto& workers = prepared.workers;
    auto& controllers = prepared.controllers;
    const StepSettings step{settings.send_every, settings.audit_filter, opts.cost};
    TraceRecorder rec(X, opts, hp.seed, hp.iterations);

    const std::size_t b0 = controller ? controller->b : hp.b;
    std::vector<std::size_t> node_b(net.nodes(), b0);
    std::vector<std::uint64_t> node_steps(net.nodes(), 0);
    std::vector<std::vector<QueueSample>> queue_samples(net.nodes());
    std::uint64_t sent = 0;
    std::uint64_t accepted = 0;
    double worker0_time = 0.0;
    rec.record(workers[0].w, 0, 0.0, 0, 0, b0);

    // (completion time, worker): equal times resolve to the lower worker id
    using Event = std::pair<double, std::size_t>;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
    for (std::size_t i = 0; i < workers.size(); ++i)
        if (!finished(workers[i], hp, opts))
            events.emplace(opts.cost.step_cost(b0, w0.k(), w0.n()), i);

    double now = 0.0;
    while (!events.empty() && !rec.should_stop()) {
        const auto [time, i] = events.top();
        events.pop();
        now = time;
        net.advance(now);

        auto& ws = workers[i];
        const std::size_t node = net.node_of(i);
        Hyperparams local = hp;
        local.b = node_b[node];
        const auto report = worker_step(ws, local, &net, now, step);
        if (report.sent == SendStatus::accepted) ++sent;
        if (report.accepted) ++accepted;
        if (opts.on_step) opts.on_step(i, ws.t, ws.w);

        ++node_steps[node];
        if (controller && node_steps[node] % controllers[node].interval == 0) {
            controllers[node] = controller_tick(controllers[node], net, node);
            node_b[node] = controllers[node].b;
        }
        queue_samples[node].push_back({now, net.queue_size(node)});

        if (i == 0) {
            worker0_time = now;
            if (rec.due(ws.t, ws.samples)) rec.record(ws.w, ws.samples, now, sent, accepted, node_b[0]);
        }
        if (!finished(ws, hp, opts))
            events.emplace(now + opts.cost.step_cost(node_b[node], w0.k(), w0.n()) +
                               report.message_time,
                           i);
    }
    rec.record(workers[0].w, workers[0].samples, worker0_time, sent, accepted, node_b[0]);

    SolverResult res;
    collect(res, workers, net);
    res.stats.mean_queue_last_half = mean_last_half(queue_samples, now);
    res.stats.time_to_target = rec.time_to_target();
    res.trace = rec.take();
    return res;
}

SolverResult run_wall_clock(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                            const NetworkModel& model,
                            const std::optional<ControllerState>& controller,
                            const RunOptions& opts, const AsgdSettings& settings) {
    ThreadedNetwork net(model, hp.workers, settings.workers_per_node);
    Prepared prepared = prepare(X, hp, w0, controller, net.nodes());
    auto& workers = prepared.workers;
    auto& controllers = prepared.controllers;
    const StepSettings step{settings.send_every, settings.audit_filter, opts.cost};
    TraceRecorder rec(X, opts, hp.seed, hp.iterations);

    const std::size_t b0 = controller ? controller->b : hp.b;
    std::vector<std::atomic<std::size_t>> node_b(net.nodes());
    for (auto& b : node_b) b.store(b0);
    std::vector<std::vector<QueueSample>> queue_samples(net.nodes());
    std::atomic<std::uint64_t> sent{0};
    std::atomic<std::uint64_t> accepted{0};
    std::atomic<bool> stop{false};
    double worker0_time = 0.0;
    rec.record(workers[0].w, 0, 0.0, 0, 0, b0);

    auto body = [&](std::size_t i) {
        auto& ws = workers[i];
        const std::size_t node = net.node_of(i);
        // the first worker of a node runs that node's controller
        const bool leader = i % settings.workers_per_node == 0;
        std::uint64_t steps = 0;
        while (!finished(ws, hp, opts) && !stop.load(std::memory_order_relaxed)) {
            Hyperparams local = hp;
            local.b = node_b[node].load(std::memory_order_acquire);
            const double now = net.elapsed();
            const auto report = worker_step(ws, local, &net, now, step);
            if (report.sent == SendStatus::accepted) sent.fetch_add(1, std::memory_order_relaxed);
            if (report.accepted) accepted.fetch_add(1, std::memory_order_relaxed);
            if (opts.on_step) opts.on_step(i, ws.t, ws.w);
            if (leader) {
                ++steps;
                if (controller && steps % controllers[node].interval == 0) {
                    controllers[node] = controller_tick(controllers[node], net, node);
                    node_b[node].store(controllers[node].b, std::memory_order_release);
                }
                queue_samples[node].push_back({net.elapsed(), net.queue_size(node)});
            }
            if (i == 0) {
                worker0_time = net.elapsed();
                if (rec.due(ws.t, ws.samples))
                    rec.record(ws.w, ws.samples, worker0_time, sent.load(), accepted.load(),
                               node_b[0].load());
                if (rec.should_stop()) stop.store(true);
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t i = 1; i < workers.size(); ++i) threads.emplace_back(body, i);
    body(0);
    for (auto& t : threads) t.join();
    rec.record(workers[0].w, workers[0].samples, worker0_time, sent.load(), accepted.load(),
               node_b[0].load());

    SolverResult res;
    collect(res, workers, net);
    res.stats.mean_queue_last_half = mean_last_half(queue_samples, net.elapsed());
    res.stats.time_to_target = rec.time_to_target();
    res.trace = rec.take();
    return res;
}

}  // namespace

SolverResult run_asgd(const Dataset& X, const Hyperparams& hp, const ModelState& w0,
                      const NetworkModel& net, const std::optional<ControllerState>& controller,
                      const RunOptions& opts, const AsgdSettings& settings) {
    if (settings.send_every == 0) throw std::invalid_argument("send-every: must be >= 1");
    if (net.mode == ClockMode::wall_clock)
        return run_wall_clock(X, hp, w0, net, controller, opts, settings);
    return run_virtual(X, hp, w0, net, controller, opts, settings);
}

}  // namespace asgd
