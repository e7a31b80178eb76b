#include "asgd/adaptive_b.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "asgd/transport.hpp"

namespace asgd {

void ControllerState::validate() const {
    if (!(q_opt >= 0.0)) throw std::invalid_argument("q-opt: must be >= 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma: must be > 0");
    if (b_min < 1 || b_min > b_max) throw std::invalid_argument("b-min/b-max: need 1 <= b-min <= b-max");
    if (b < b_min || b > b_max) throw std::invalid_argument("b: initial value outside [b-min, b-max]");
    if (interval < 1) throw std::invalid_argument("controller-interval: must be >= 1");
}

ControllerState ControllerState::defaults(std::size_t b_initial, std::size_t queue_capacity) {
    ControllerState cs;
    cs.q_opt = static_cast<double>(queue_capacity) / 2.0;
    cs.gamma = cs.q_opt > 0.0 ? 0.1 * static_cast<double>(b_initial) / cs.q_opt : 1.0;
    cs.b = std::clamp(b_initial, cs.b_min, cs.b_max);
    cs.interval = 10;
    cs.q1 = cs.q2 = static_cast<std::int64_t>(std::llround(cs.q_opt));
    return cs;
}

double queue_gradient(const ControllerState& cs, std::size_t q0) {
    const double q = static_cast<double>(q0);
    return (cs.q_opt - q) - (static_cast<double>(cs.q2) - q);
}

ControllerState adapt(const ControllerState& cs, std::size_t q0) {
    ControllerState next = cs;
    const double proposed = static_cast<double>(cs.b) - queue_gradient(cs, q0) * cs.gamma;
    const double lo = static_cast<double>(cs.b_min);
    const double hi = static_cast<double>(cs.b_max);
    next.b = static_cast<std::size_t>(std::llround(std::clamp(std::round(proposed), lo, hi)));
    next.q2 = cs.q1;
    next.q1 = static_cast<std::int64_t>(q0);
    return next;
}

ControllerState controller_tick(const ControllerState& cs, const Transport& net,
                                std::size_t node) {
    return adapt(cs, net.queue_size(node));
}

}  // namespace asgd
