#ifndef ASGD_ADAPTIVE_B_HPP
#define ASGD_ADAPTIVE_B_HPP

#include <cstddef>
#include <cstdint>

#include "asgd/model.hpp"

namespace asgd {

class Transport;

// Mini-batch size controller driven by egress-queue occupancy. One instance
// runs per node; its b is what every worker of the node uses for the next
// mini-batch.
struct ControllerState {
    double q_opt = 32.0;     // target queue size
    std::int64_t q1 = 0;     // previous queue sizes, most recent first
    std::int64_t q2 = 0;
    double gamma = 1.0;
    std::size_t b = 500;
    std::size_t b_min = 8;
    std::size_t b_max = 100000;
    std::size_t interval = 10;  // worker steps between ticks; kNever disables

    void validate() const;

    // q_opt = capacity/2, gamma = 0.1 * b / q_opt, interval 10, history
    // primed at q_opt.
    static ControllerState defaults(std::size_t b_initial, std::size_t queue_capacity);

    friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

// (q_opt - q0) - (q2 - q0). Algebraically this is q_opt - q2: the current
// queue size only enters through the history.
double queue_gradient(const ControllerState& cs, std::size_t q0);

// b <- round(b - gradient * gamma) clamped to [b_min, b_max]; then q2 <- q1,
// q1 <- q0.
ControllerState adapt(const ControllerState& cs, std::size_t q0);

// Reads the node's current egress occupancy and adapts.
ControllerState controller_tick(const ControllerState& cs, const Transport& net,
                                std::size_t node);

}  // namespace asgd

#endif  // ASGD_ADAPTIVE_B_HPP
