#include "asgd/transport.hpp"

#include <cmath>
#include <limits>

namespace asgd {

void NetworkModel::validate() const {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth: must be > 0");
    if (!(latency >= 0.0) || !std::isfinite(latency))
        throw std::invalid_argument("latency: must be a finite value >= 0");
    if (queue_capacity < 1) throw std::invalid_argument("queue-capacity: must be >= 1");
}

NetworkModel NetworkModel::preset(std::string_view name) {
    NetworkModel m;
    if (name == "infiniband") {
        m.bandwidth = 6.8e9;
        m.latency = 1e-6;
    } else if (name == "ethernet") {
        m.bandwidth = 1.25e8;
        m.latency = 50e-6;
    } else {
        throw std::invalid_argument("network: unknown preset '" + std::string(name) +
                                    "' (expected infiniband or ethernet)");
    }
    return m;
}

Transport::Transport(const NetworkModel& model, std::size_t workers, std::size_t workers_per_node)
    : model_(model), workers_(workers), workers_per_node_(workers_per_node) {
    model_.validate();
    if (workers == 0) throw std::invalid_argument("transport: need at least one worker");
    if (workers_per_node == 0) throw std::invalid_argument("workers-per-node: must be >= 1");
    nodes_ = (workers + workers_per_node - 1) / workers_per_node;
}

void Transport::check_endpoints(std::size_t src, std::size_t dst) const {
    if (src >= workers_ || dst >= workers_)
        throw std::out_of_range("post_send: worker id out of range");
    if (src == dst) throw std::invalid_argument("post_send: source and destination are equal");
}

// ---------------------------------------------------------------------------

SimulatedNetwork::SimulatedNetwork(const NetworkModel& model, std::size_t workers,
                                   std::size_t workers_per_node)
    : Transport(model, workers, workers_per_node), nodes_state_(nodes_), slots_(workers) {}

SendStatus SimulatedNetwork::post_send(std::size_t src, std::size_t dst, UpdateMessage msg,
                                       double now) {
    check_endpoints(src, dst);
    auto& node = nodes_state_[node_of(src)];
    ++node.counters.posted;
    if (node.queue.size() >= model_.queue_capacity) {
        ++node.counters.refused;
        return SendStatus::refused;
    }
    const std::size_t bytes = serialized_size(msg.state.k(), msg.state.n());
    const double start = std::max(now, node.link_free_at);
    const double finish = start + static_cast<double>(bytes) / model_.bandwidth;
    node.link_free_at = finish;
    node.queue.push_back(Pending{std::move(msg), dst, bytes, now, start, finish + model_.latency});
    return SendStatus::accepted;
}

std::size_t SimulatedNetwork::advance(double now) {
    if (now < now_)
        throw std::invalid_argument("advance: time moved backwards (" + std::to_string(now) +
                                    " < " + std::to_string(now_) + ")");
    now_ = now;
    std::size_t count = 0;
    for (;;) {
        // earliest due head across nodes; ties go to the lower node id
        std::size_t best = nodes_state_.size();
        double best_t = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < nodes_state_.size(); ++i) {
            const auto& q = nodes_state_[i].queue;
            if (!q.empty() && q.front().deliver_at <= now && q.front().deliver_at < best_t) {
                best = i;
                best_t = q.front().deliver_at;
            }
        }
        if (best == nodes_state_.size()) break;
        Pending p = std::move(nodes_state_[best].queue.front());
        nodes_state_[best].queue.pop_front();
        deliver(best, std::move(p));
        ++count;
    }
    return count;
}

void SimulatedNetwork::deliver(std::size_t node, Pending p) {
    auto& c = nodes_state_[node].counters;
    ++c.delivered;
    c.delivered_bytes += p.bytes;
    if (on_delivery_)
        on_delivery_(Delivery{node, p.dst, p.bytes, p.enqueued, p.start, p.deliver_at});

    auto& slot = slots_[p.dst];
    if (slot.msg) {
        ++slot.overwrites;
        if (model_.torn_writes && slot.msg->state.conforms(p.msg.state)) {
            auto older = slot.msg->state.values();
            auto newer = p.msg.state.values();
            for (std::size_t i = 0; i < newer.size() / 2; ++i) newer[i] = older[i];
        }
    }
    slot.msg = std::move(p.msg);
}

std::optional<UpdateMessage> SimulatedNetwork::poll_receive(std::size_t worker) {
    auto& slot = slots_.at(worker);
    std::optional<UpdateMessage> out;
    out.swap(slot.msg);
    return out;
}

std::size_t SimulatedNetwork::queue_size(std::size_t node) const {
    return nodes_state_.at(node).queue.size();
}

NodeCounters SimulatedNetwork::counters(std::size_t node) const {
    return nodes_state_.at(node).counters;
}

std::uint64_t SimulatedNetwork::overwrite_count(std::size_t worker) const {
    return slots_.at(worker).overwrites;
}

// ---------------------------------------------------------------------------

ThreadedNetwork::ThreadedNetwork(const NetworkModel& model, std::size_t workers,
                                 std::size_t workers_per_node)
    : Transport(model, workers, workers_per_node), start_(std::chrono::steady_clock::now()) {
    if (model_.torn_writes)
        throw std::invalid_argument("torn-writes: only emulated on the virtual clock");
    for (std::size_t i = 0; i < nodes_; ++i) node_state_.push_back(std::make_unique<Node>());
    for (std::size_t i = 0; i < workers; ++i) slots_.push_back(std::make_unique<Slot>());
    drainer_ = std::thread([this] { drain_loop(); });
}

ThreadedNetwork::~ThreadedNetwork() {
    stop_.store(true, std::memory_order_relaxed);
    if (drainer_.joinable()) drainer_.join();
    for (auto& s : slots_) delete s->msg.exchange(nullptr);
}

double ThreadedNetwork::elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

SendStatus ThreadedNetwork::post_send(std::size_t src, std::size_t dst, UpdateMessage msg,
                                      double /*now*/) {
    check_endpoints(src, dst);
    auto& node = *node_state_[node_of(src)];
    const std::size_t bytes = serialized_size(msg.state.k(), msg.state.n());
    const double t = elapsed();
    std::lock_guard lock(node.mu);
    node.posted.fetch_add(1, std::memory_order_relaxed);
    if (node.queue.size() >= model_.queue_capacity) {
        node.refused.fetch_add(1, std::memory_order_relaxed);
        return SendStatus::refused;
    }
    const double start = std::max(t, node.link_free_at);
    node.link_free_at = start + static_cast<double>(bytes) / model_.bandwidth;
    node.queue.push_back(Pending{std::move(msg), dst, bytes, node.link_free_at + model_.latency});
    node.size.store(node.queue.size(), std::memory_order_release);
    return SendStatus::accepted;
}

void ThreadedNetwork::deliver(Pending p) {
    auto* fresh = new UpdateMessage(std::move(p.msg));
    auto& slot = *slots_[p.dst];
    if (UpdateMessage* old = slot.msg.exchange(fresh, std::memory_order_acq_rel)) {
        slot.overwrites.fetch_add(1, std::memory_order_relaxed);
        delete old;
    }
}

void ThreadedNetwork::drain_loop() {
    while (!stop_.load(std::memory_order_relaxed)) {
        const double now = elapsed();
        for (auto& np : node_state_) {
            auto& node = *np;
            for (;;) {
                Pending p;
                {
                    std::lock_guard lock(node.mu);
                    if (node.queue.empty() || node.queue.front().deliver_at > now) break;
                    p = std::move(node.queue.front());
                    node.queue.pop_front();
                    node.delivered.fetch_add(1, std::memory_order_relaxed);
                    node.delivered_bytes.fetch_add(p.bytes, std::memory_order_relaxed);
                    node.size.store(node.queue.size(), std::memory_order_release);
                }
                deliver(std::move(p));
            }
        }
        std::this_thread::sleep_for(std::chrono::microseconds(20));
    }
}

std::optional<UpdateMessage> ThreadedNetwork::poll_receive(std::size_t worker) {
    UpdateMessage* p = slots_.at(worker)->msg.exchange(nullptr, std::memory_order_acq_rel);
    if (!p) return std::nullopt;
    std::unique_ptr<UpdateMessage> owned(p);
    return std::move(*owned);
}

std::size_t ThreadedNetwork::queue_size(std::size_t node) const {
    return node_state_.at(node)->size.load(std::memory_order_acquire);
}

NodeCounters ThreadedNetwork::counters(std::size_t node) const {
    const auto& n = *node_state_.at(node);
    std::lock_guard lock(n.mu);
    return NodeCounters{n.posted.load(), n.delivered.load(), n.refused.load(),
                        n.delivered_bytes.load()};
}

std::uint64_t ThreadedNetwork::overwrite_count(std::size_t worker) const {
    return slots_.at(worker)->overwrites.load();
}

void ThreadedNetwork::flush() {
    for (;;) {
        bool empty = true;
        for (std::size_t i = 0; i < nodes_; ++i) empty = empty && queue_size(i) == 0;
        if (empty) return;
        std::this_thread::sleep_for(std::chrono::microseconds(50));
    }
}

std::unique_ptr<Transport> make_transport(const NetworkModel& model, std::size_t workers,
                                          std::size_t workers_per_node) {
    if (model.mode == ClockMode::wall_clock)
        return std::make_unique<ThreadedNetwork>(model, workers, workers_per_node);
    return std::make_unique<SimulatedNetwork>(model, workers, workers_per_node);
}

}  // namespace asgd
