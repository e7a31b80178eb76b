#include "doctest.h"

#include <random>

#include "asgd/datagen.hpp"
#include "asgd/engine.hpp"

using namespace asgd;

namespace {

std::pair<Dataset, GroundTruth> blobs(std::size_t m, std::size_t n, std::size_t k,
                                      std::uint64_t seed) {
    SyntheticSpec s;
    s.n = n;
    s.m = m;
    s.k = k;
    s.box = 4;
    s.seed = seed;
    return generate(s);
}

using Trajectory = std::vector<std::vector<ModelState>>;

StepObserver recorder(Trajectory& out) {
    return [&out](std::size_t worker, std::size_t, const ModelState& w) {
        if (out.size() <= worker) out.resize(worker + 1);
        out[worker].push_back(w);
    };
}

StepSettings quiet() {
    StepSettings s;
    s.send_every = kNever;
    return s;
}

// Single worker over the one-point dataset {3}, k=1, n=1, started at w=1.
struct Scalar {
    Dataset X{1, 1, {3.0}};
    Hyperparams hp;
    Scalar() {
        hp.epsilon = 0.1;
        hp.b = 1;
        hp.workers = 2;
    }
    WorkerState worker() const { return WorkerState(0, X, ModelState(1, 1, {1.0}), {0}, 1); }
};

}  // namespace

TEST_CASE("merge examples") {
    const ModelState wi(1, 1, {2.0}), wj(1, 1, {0.0});
    const Update step(1, 1, {0.5});
    CHECK(merge_update(wi, nullptr, step, 0.1) == step);
    CHECK(merge_update(wi, &wi, step, 0.1) == step);
    CHECK(parzen_accept(wi, wj, step, 0.1));
    CHECK(merge_update(wi, &wj, step, 0.1) == Update(1, 1, {1.5}));
    // moving away from w_j is rejected
    const Update away(1, 1, {-0.5});
    CHECK_FALSE(parzen_accept(wi, wj, away, 0.1));
    CHECK(merge_update(wi, &wj, away, 0.1) == away);
    CHECK_THROWS_AS(parzen_accept(wi, ModelState(2, 1), step, 0.1), dimension_error);
}

TEST_CASE("worker step without transport is a plain mini-batch step") {
    const auto [X, gt] = blobs(300, 3, 4, 1);
    const auto w0 = init_from_data(X, 4, 1);
    Hyperparams hp;
    hp.b = 6;
    hp.epsilon = 0.05;
    hp.iterations = 50;
    Trajectory sgd;
    RunOptions opts;
    opts.on_step = recorder(sgd);
    sgd_run(X, hp, w0, opts);

    auto parts = partition_rows(X.m(), 1, hp.seed);
    WorkerState ws(0, X, w0, parts[0], hp.seed);
    for (std::size_t t = 0; t < 50; ++t) {
        const auto r = worker_step(ws, hp, nullptr, 0.0, {});
        CHECK_FALSE(r.received);
        CHECK_FALSE(r.sent.has_value());
        CHECK(ws.w == sgd[0][t]);
    }
    CHECK(ws.t == 50);
    CHECK(ws.samples == 300);
}

TEST_CASE("injected message that fails the filter changes nothing") {
    Scalar s;
    SimulatedNetwork net(NetworkModel::preset("infiniband"), 2);
    net.post_send(1, 0, UpdateMessage{ModelState(1, 1, {-5.0}), 1, 3}, 0.0);
    net.advance(1.0);
    auto ws = s.worker();
    auto plain = s.worker();
    const auto r = worker_step(ws, s.hp, &net, 1.0, quiet());
    worker_step(plain, s.hp, nullptr, 1.0, quiet());
    CHECK(r.received);
    CHECK_FALSE(r.accepted);
    CHECK(ws.w == plain.w);
    CHECK(ws.w(0, 0) == doctest::Approx(1.2));
    CHECK(ws.stats.messages_received == 1);
    CHECK(ws.stats.messages_accepted == 0);
}

TEST_CASE("injected message that passes the filter is merged") {
    Scalar s;
    SimulatedNetwork net(NetworkModel::preset("infiniband"), 2);
    net.post_send(1, 0, UpdateMessage{ModelState(1, 1, {5.0}), 1, 3}, 0.0);
    net.advance(1.0);
    auto ws = s.worker();
    const auto r = worker_step(ws, s.hp, &net, 1.0, quiet());
    // step = -(3 - 1) = -2; merged = (1 - 5)/2 - 2 = -4; w = 1 - 0.1 * -4
    CHECK(r.accepted);
    CHECK(ws.w(0, 0) == doctest::Approx(1.4).epsilon(1e-15));
    CHECK(ws.stats.messages_accepted == 1);
    CHECK(r.message_time > 0.0);
}

TEST_CASE("worker step sends to another worker") {
    const auto [X, gt] = blobs(100, 2, 2, 2);
    NetworkModel m = NetworkModel::preset("infiniband");
    SimulatedNetwork net(m, 3);
    auto parts = partition_rows(X.m(), 3, 1);
    WorkerState ws(1, X, init_from_data(X, 2, 1), parts[1], 1);
    Hyperparams hp;
    hp.workers = 3;
    for (int i = 0; i < 20; ++i) {
        const auto r = worker_step(ws, hp, &net, 0.0, {});
        REQUIRE(r.sent.has_value());
        CHECK(*r.sent == SendStatus::accepted);
    }
    net.advance(1.0);
    CHECK_FALSE(net.poll_receive(1).has_value());
    CHECK(net.overwrite_count(0) + net.overwrite_count(2) == 18);
}

TEST_CASE("one worker without a controller is simuparallel and mini-batch sgd") {
    const auto [X, gt] = blobs(500, 4, 5, 3);
    const auto w0 = init_from_data(X, 5, 4);
    Hyperparams hp;
    hp.b = 4;
    hp.epsilon = 0.03;
    hp.iterations = 400;
    hp.seed = 4;
    Trajectory a, s, g;
    RunOptions oa, os, og;
    oa.on_step = recorder(a);
    os.on_step = recorder(s);
    og.on_step = recorder(g);
    run_asgd(X, hp, w0, NetworkModel::preset("ethernet"), std::nullopt, oa);
    simuparallel_sgd(X, hp, w0, os);
    sgd_run(X, hp, w0, og);
    REQUIRE(a.size() == 1);
    CHECK(a[0].size() == 400);
    CHECK(a[0] == s[0]);
    CHECK(a[0] == g[0]);
}

TEST_CASE("infinite communication interval is simuparallel per worker") {
    const auto [X, gt] = blobs(800, 3, 4, 5);
    const auto w0 = init_from_data(X, 4, 6);
    Hyperparams hp;
    hp.b = 3;
    hp.epsilon = 0.05;
    hp.iterations = 200;
    hp.workers = 4;
    hp.seed = 6;
    Trajectory a, s;
    RunOptions oa, os;
    oa.on_step = recorder(a);
    os.on_step = recorder(s);
    AsgdSettings never;
    never.send_every = kNever;
    const auto ra = run_asgd(X, hp, w0, NetworkModel::preset("infiniband"), std::nullopt, oa, never);
    const auto rs = simuparallel_sgd(X, hp, w0, os);
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == s[i]);
    CHECK(ra.worker_states == rs.worker_states);
    CHECK(ra.stats.messages_sent == 0);
}

TEST_CASE("filter contract holds over a full eight-worker run") {
    const auto [X, gt] = blobs(4000, 5, 6, 7);
    Hyperparams hp;
    hp.b = 2;
    hp.epsilon = 0.1;
    hp.iterations = 1500;
    hp.workers = 8;
    AsgdSettings st;
    st.audit_filter = true;
    const auto r = run_asgd(X, hp, init_from_data(X, 6, 1), NetworkModel::preset("infiniband"),
                            std::nullopt, {}, st);
    CHECK(r.stats.filter_audits == r.stats.messages_received);
    CHECK(r.stats.messages_received > 1000);
    CHECK(r.stats.messages_accepted > 0);
    CHECK(r.stats.messages_accepted < r.stats.messages_received);
    CHECK(r.stats.filter_violations == 0);
}

TEST_CASE("message counters are ordered") {
    const auto [X, gt] = blobs(2000, 4, 4, 8);
    Hyperparams hp;
    hp.b = 1;
    hp.epsilon = 0.05;
    hp.iterations = 2000;
    hp.workers = 4;
    const auto r = run_asgd(X, hp, init_from_data(X, 4, 2), NetworkModel::preset("ethernet"),
                            std::nullopt);
    CHECK(r.stats.messages_accepted <= r.stats.messages_received);
    CHECK(r.stats.messages_received <= r.stats.messages_sent);
    CHECK(r.stats.messages_refused > 0);
    CHECK(r.trace.back().msgs_sent == r.stats.messages_sent);
    CHECK(r.trace.back().msgs_accepted == r.stats.messages_accepted);
}

TEST_CASE("backpressure never stalls a worker") {
    const auto [X, gt] = blobs(1000, 10, 10, 9);
    Hyperparams hp;
    hp.b = 1;
    hp.iterations = 700;
    hp.workers = 4;
    NetworkModel tight = NetworkModel::preset("ethernet");
    tight.queue_capacity = 1;
    tight.bandwidth = 1e3;  // a message takes most of a second
    const auto r = run_asgd(X, hp, init_from_data(X, 10, 1), tight, std::nullopt);
    CHECK(r.stats.min_worker_steps == 700);
    CHECK(r.stats.messages_refused > 2000);
    const auto loose = run_asgd(X, hp, init_from_data(X, 10, 1), NetworkModel::preset("infiniband"),
                                std::nullopt);
    CHECK(loose.stats.min_worker_steps == 700);
}

TEST_CASE("virtual-time runs are deterministic") {
    const auto [X, gt] = blobs(1500, 6, 5, 10);
    Hyperparams hp;
    hp.b = 3;
    hp.iterations = 600;
    hp.workers = 6;
    RunOptions opts;
    opts.ground_truth = &gt;
    const auto w0 = init_from_data(X, 5, 3);
    const auto a = run_asgd(X, hp, w0, NetworkModel::preset("ethernet"), std::nullopt, opts);
    const auto b = run_asgd(X, hp, w0, NetworkModel::preset("ethernet"), std::nullopt, opts);
    CHECK(a.final_state == b.final_state);
    CHECK(a.worker_states == b.worker_states);
    CHECK(a.trace == b.trace);
    CHECK(a.stats.messages_accepted == b.stats.messages_accepted);
}

TEST_CASE("trace follows worker zero in virtual time") {
    const auto [X, gt] = blobs(1000, 3, 3, 11);
    Hyperparams hp;
    hp.b = 5;
    hp.iterations = 300;
    hp.workers = 3;
    RunOptions opts;
    opts.ground_truth = &gt;
    const auto r = run_asgd(X, hp, init_from_data(X, 3, 1), NetworkModel::preset("infiniband"),
                            std::nullopt, opts);
    CHECK(r.trace.front().samples == 0);
    CHECK(r.trace.back().samples == 1500);
    CHECK(r.final_state == r.worker_states[0]);
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
        CHECK(r.trace[i].time_s > r.trace[i - 1].time_s);
        CHECK(r.trace[i].msgs_sent >= r.trace[i - 1].msgs_sent);
    }
    CHECK(r.trace.back().gt_error < r.trace.front().gt_error);
}

TEST_CASE("controller adapts b per node") {
    const auto [X, gt] = blobs(4000, 100, 10, 12);
    Hyperparams hp;
    hp.b = 200;
    hp.iterations = 2000;
    hp.workers = 2;
    hp.epsilon = 0.001;
    RunOptions opts;
    opts.max_samples = 100000;
    auto cs = ControllerState::defaults(200, 64);
    const auto r = run_asgd(X, hp, init_from_data(X, 10, 1), NetworkModel::preset("ethernet"), cs,
                            opts);
    CHECK(r.trace.front().b_current == 200);
    bool changed = false;
    for (const auto& p : r.trace) {
        changed = changed || p.b_current != 200;
        CHECK(p.b_current >= cs.b_min);
        CHECK(p.b_current <= cs.b_max);
    }
    CHECK(changed);
    CHECK(r.trace.back().samples >= 100000);

    // an infinite interval leaves b alone
    cs.interval = kNever;
    const auto fixed = run_asgd(X, hp, init_from_data(X, 10, 1), NetworkModel::preset("ethernet"),
                                cs, opts);
    for (const auto& p : fixed.trace) CHECK(p.b_current == 200);
}

TEST_CASE("wall-clock mode runs to completion") {
    const auto [X, gt] = blobs(2000, 4, 4, 13);
    Hyperparams hp;
    hp.b = 4;
    hp.iterations = 500;
    hp.workers = 3;
    NetworkModel m = NetworkModel::preset("infiniband");
    m.mode = ClockMode::wall_clock;
    RunOptions opts;
    opts.ground_truth = &gt;
    const auto r = run_asgd(X, hp, init_from_data(X, 4, 1), m, std::nullopt, opts);
    CHECK(r.stats.min_worker_steps == 500);
    CHECK(r.worker_states.size() == 3);
    CHECK(r.final_state.is_finite());
    CHECK(r.stats.messages_accepted <= r.stats.messages_received);
}

TEST_CASE("run_asgd input errors") {
    const auto [X, gt] = blobs(10, 2, 2, 14);
    Hyperparams hp;
    hp.workers = 11;
    CHECK_THROWS(run_asgd(X, hp, init_from_data(X, 2, 1), NetworkModel::preset("ethernet"),
                          std::nullopt));
    hp.workers = 2;
    CHECK_THROWS_AS(run_asgd(X, hp, ModelState(2, 3), NetworkModel::preset("ethernet"), std::nullopt),
                    dimension_error);
    auto cs = ControllerState::defaults(100, 64);
    cs.gamma = -1;
    CHECK_THROWS_AS(run_asgd(X, hp, init_from_data(X, 2, 1), NetworkModel::preset("ethernet"), cs),
                    std::invalid_argument);
}
