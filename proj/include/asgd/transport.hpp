#ifndef ASGD_TRANSPORT_HPP
#define ASGD_TRANSPORT_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "asgd/model.hpp"

namespace asgd {

enum class ClockMode { virtual_time, wall_clock };

struct NetworkModel {
    double bandwidth = 6.8e9;  // bytes per second, per node egress
    double latency = 1e-6;     // seconds per message
    std::size_t queue_capacity = 64;
    ClockMode mode = ClockMode::virtual_time;
    // Overwrites of an unread slot leave the first half of the old state and
    // the second half of the new one.
    bool torn_writes = false;

    void validate() const;

    // "infiniband" or "ethernet"; throws std::invalid_argument otherwise.
    static NetworkModel preset(std::string_view name);
};

enum class SendStatus { accepted, refused };

struct NodeCounters {
    std::uint64_t posted = 0;
    std::uint64_t delivered = 0;
    std::uint64_t refused = 0;
    std::uint64_t delivered_bytes = 0;
};

struct Delivery {
    std::size_t src_node = 0;
    std::size_t dst = 0;
    std::size_t bytes = 0;
    double enqueued = 0.0;
    double start = 0.0;  // first byte leaves the node
    double delivered = 0.0;
};

// One-sided, non-blocking message passing between workers. Each worker owns a
// single receive slot; each node owns one bounded egress queue shared by its
// workers.
class Transport {
public:
    virtual ~Transport() = default;

    // Never blocks. Refusal (queue full) is reported, not thrown.
    virtual SendStatus post_send(std::size_t src, std::size_t dst, UpdateMessage msg,
                                 double now) = 0;
    // Takes the slot content, if any. Never blocks.
    virtual std::optional<UpdateMessage> poll_receive(std::size_t worker) = 0;
    virtual std::size_t queue_size(std::size_t node) const = 0;

    virtual NodeCounters counters(std::size_t node) const = 0;
    virtual std::uint64_t overwrite_count(std::size_t worker) const = 0;

    std::size_t workers() const { return workers_; }
    std::size_t nodes() const { return nodes_; }
    std::size_t node_of(std::size_t worker) const { return worker / workers_per_node_; }
    const NetworkModel& model() const { return model_; }

protected:
    Transport(const NetworkModel& model, std::size_t workers, std::size_t workers_per_node);
    void check_endpoints(std::size_t src, std::size_t dst) const;

    NetworkModel model_;
    std::size_t workers_;
    std::size_t workers_per_node_;
    std::size_t nodes_;
};

// Discrete-event emulation on a virtual clock driven by advance().
//
// A message enqueued at time e on an idle link starts transmitting at e,
// occupies the link for bytes/bandwidth seconds and lands in the destination
// slot latency seconds after its last byte left. Messages stay counted in the
// egress queue until they land.
class SimulatedNetwork final : public Transport {
public:
    SimulatedNetwork(const NetworkModel& model, std::size_t workers,
                     std::size_t workers_per_node = 1);

    SendStatus post_send(std::size_t src, std::size_t dst, UpdateMessage msg,
                         double now) override;
    std::optional<UpdateMessage> poll_receive(std::size_t worker) override;
    std::size_t queue_size(std::size_t node) const override;
    NodeCounters counters(std::size_t node) const override;
    std::uint64_t overwrite_count(std::size_t worker) const override;

    // Delivers every message due at or before now; returns how many landed.
    // Throws std::invalid_argument if now is earlier than a previous call.
    std::size_t advance(double now);
    double now() const { return now_; }

    // Observer invoked for every delivery, in delivery order.
    void on_delivery(std::function<void(const Delivery&)> fn) { on_delivery_ = std::move(fn); }

private:
    struct Pending {
        UpdateMessage msg;
        std::size_t dst;
        std::size_t bytes;
        double enqueued;
        double start;
        double deliver_at;
    };
    struct Node {
        std::deque<Pending> queue;
        double link_free_at = 0.0;
        NodeCounters counters;
    };
    struct Slot {
        std::optional<UpdateMessage> msg;
        std::uint64_t overwrites = 0;
    };

    void deliver(std::size_t node, Pending p);

    std::vector<Node> nodes_state_;
    std::vector<Slot> slots_;
    double now_ = 0.0;
    std::function<void(const Delivery&)> on_delivery_;
};

// Wall-clock emulation: a background drainer thread moves messages from the
// egress queues into receive slots following the same bandwidth/latency
// schedule in real time. Receive slots are lock-free (atomic pointer swap).
class ThreadedNetwork final : public Transport {
public:
    ThreadedNetwork(const NetworkModel& model, std::size_t workers,
                    std::size_t workers_per_node = 1);
    ~ThreadedNetwork() override;
    ThreadedNetwork(const ThreadedNetwork&) = delete;
    ThreadedNetwork& operator=(const ThreadedNetwork&) = delete;

    // `now` is ignored; the wall clock is used.
    SendStatus post_send(std::size_t src, std::size_t dst, UpdateMessage msg,
                         double now) override;
    std::optional<UpdateMessage> poll_receive(std::size_t worker) override;
    std::size_t queue_size(std::size_t node) const override;
    NodeCounters counters(std::size_t node) const override;
    std::uint64_t overwrite_count(std::size_t worker) const override;

    // Seconds since construction.
    double elapsed() const;
    // Blocks until every queue is empty (test helper).
    void flush();

private:
    struct Pending {
        UpdateMessage msg;
        std::size_t dst;
        std::size_t bytes;
        double deliver_at;
    };
    struct Node {
        mutable std::mutex mu;
        std::deque<Pending> queue;
        double link_free_at = 0.0;
        std::atomic<std::size_t> size{0};
        std::atomic<std::uint64_t> posted{0};
        std::atomic<std::uint64_t> delivered{0};
        std::atomic<std::uint64_t> refused{0};
        std::atomic<std::uint64_t> delivered_bytes{0};
    };
    struct Slot {
        std::atomic<UpdateMessage*> msg{nullptr};
        std::atomic<std::uint64_t> overwrites{0};
    };

    void drain_loop();
    void deliver(Pending p);

    std::chrono::steady_clock::time_point start_;
    std::vector<std::unique_ptr<Node>> node_state_;
    std::vector<std::unique_ptr<Slot>> slots_;
    std::atomic<bool> stop_{false};
    std::thread drainer_;
};

std::unique_ptr<Transport> make_transport(const NetworkModel& model, std::size_t workers,
                                          std::size_t workers_per_node = 1);

}  // namespace asgd

#endif  // ASGD_TRANSPORT_HPP
