#include "asgd/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "asgd/engine.hpp"

namespace asgd {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }

const char* solver_name(Solver s) {
    switch (s) {
        case Solver::sgd: return "sgd";
        case Solver::spsgd: return "spsgd";
        case Solver::batch: return "batch";
        case Solver::asgd: return "asgd";
    }
    return "?";
}

class Reader {
public:
    explicit Reader(const KeyValues& kv) : kv_(kv) {
        for (const auto& [key, value] : kv) {
            const auto& keys = config_keys();
            const bool known = std::any_of(keys.begin(), keys.end(),
                                           [&](const auto& k) { return k.first == key; });
            if (!known) throw config_error(key + ": unknown key");
        }
    }

    const std::string* raw(const std::string& key) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? nullptr : &it->second;
    }

    double real(const std::string& key, double fallback) const {
        const auto* s = raw(key);
        return s ? parse_real(key, *s) : fallback;
    }

    std::optional<double> opt_real(const std::string& key) const {
        const auto* s = raw(key);
        if (!s) return std::nullopt;
        return parse_real(key, *s);
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
        const auto* s = raw(key);
        return s ? parse_count(key, *s) : fallback;
    }

    bool flag(const std::string& key, bool fallback) const {
        const auto* s = raw(key);
        if (!s) return fallback;
        if (*s == "true" || *s == "1" || *s == "on" || *s == "yes") return true;
        if (*s == "false" || *s == "0" || *s == "off" || *s == "no") return false;
        throw config_error(key + ": expected true or false, got '" + *s + "'");
    }

    std::string text(const std::string& key, const std::string& fallback) const {
        const auto* s = raw(key);
        return s ? *s : fallback;
    }

    static double parse_real(const std::string& key, const std::string& s) {
        if (s == "inf") return std::numeric_limits<double>::infinity();
        double v = 0.0;
        auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
            throw config_error(key + ": expected a number, got '" + s + "'");
        return v;
    }

    static std::uint64_t parse_count(const std::string& key, const std::string& s) {
        std::uint64_t v = 0;
        auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
            throw config_error(key + ": expected a non-negative integer, got '" + s + "'");
        return v;
    }

private:
    const KeyValues& kv_;
};

// Rethrow plain invalid_argument (whose messages already start with the key)
// as config_error.
template <class F>
void as_config_error(F&& f) {
    try {
        f();
    } catch (const config_error&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::optional<double> first_below(const std::vector<TracePoint>& trace, double target) {
    for (const auto& p : trace)
        if (p.gt_error < target) return p.time_s;
    return std::nullopt;
}

ModelState initial_state(const ExperimentConfig& cfg, const Dataset& X, std::uint64_t seed) {
    const std::size_t k = cfg.synthetic.k;
    if (cfg.init_zeros) return ModelState(k, X.n());
    return init_from_data(X, k, seed);
}

SolverResult run_solver(const ExperimentConfig& cfg, const Dataset& X, const Hyperparams& hp,
                        const ModelState& w0, const RunOptions& opts) {
    switch (cfg.solver) {
        case Solver::sgd: return sgd_run(X, hp, w0, opts);
        case Solver::spsgd: return simuparallel_sgd(X, hp, w0, opts);
        case Solver::batch: return batch_gd(X, hp, w0, opts);
        case Solver::asgd: {
            AsgdSettings settings;
            settings.workers_per_node = cfg.workers_per_node;
            settings.send_every = cfg.send_every;
            settings.audit_filter = cfg.audit_filter;
            return run_asgd(X, hp, w0, cfg.net, cfg.controller(), opts, settings);
        }
    }
    throw std::logic_error("unknown solver");
}

std::string summary_csv(const ExperimentReport& r) {
    std::ostringstream os;
    os << "fold,runtime_to_target,final_gt_error,msgs_sent,msgs_accepted,"
          "mean_queue_last_half,target\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
        const auto& fr = r.folds[f];
        const double rt = !r.target ? nan : fr.runtime_to_target.value_or(inf);
        os << f << ',' << fmt(rt) << ',' << fmt(fr.final_gt_error) << ',' << fr.msgs_sent << ','
           << fr.msgs_accepted << ',' << fmt(fr.mean_queue_last_half) << ','
           << fmt(r.target.value_or(nan)) << '\n';
    }
    return os.str();
}

ExperimentReport run_on(const ExperimentConfig& cfg, const Dataset& X,
                        const std::optional<GroundTruth>& gt, bool write_files) {
    ExperimentReport report;
    report.target = cfg.target;
    if (!report.target && gt) report.target = reference_target(cfg, X, *gt);

    ExperimentConfig resolved = cfg;
    resolved.target = report.target;

    for (std::size_t f = 0; f < cfg.folds; ++f) {
        Hyperparams hp = cfg.hp;
        hp.seed = cfg.hp.seed + f;
        hp.iterations = cfg.resolved_iterations();
        RunOptions opts;
        opts.ground_truth = gt ? &*gt : nullptr;
        opts.eval_points = cfg.eval_points;
        opts.target_gt_error = report.target;
        opts.stop_at_target = cfg.stop_at_target && report.target.has_value();
        opts.max_samples = cfg.solver == Solver::batch ? 0 : cfg.samples;
        opts.cost = cfg.cost;

        SolverResult res;
        try {
            res = run_solver(cfg, X, hp, initial_state(cfg, X, hp.seed), opts);
        } catch (const std::exception& e) {
            throw std::runtime_error("fold " + std::to_string(f) + ": " + e.what());
        }
        FoldReport fr;
        fr.trace = std::move(res.trace);
        if (report.target) fr.runtime_to_target = first_below(fr.trace, *report.target);
        fr.final_gt_error = fr.trace.back().gt_error;
        fr.msgs_sent = fr.trace.back().msgs_sent;
        fr.msgs_accepted = fr.trace.back().msgs_accepted;
        fr.mean_queue_last_half = res.stats.mean_queue_last_half;
        report.folds.push_back(std::move(fr));
    }

    std::vector<std::vector<TracePoint>> traces;
    std::vector<double> rt, final_gt, accepted, queue;
    for (const auto& fr : report.folds) {
        traces.push_back(fr.trace);
        rt.push_back(fr.runtime_to_target.value_or(std::numeric_limits<double>::infinity()));
        final_gt.push_back(fr.final_gt_error);
        accepted.push_back(static_cast<double>(fr.msgs_accepted));
        queue.push_back(fr.mean_queue_last_half);
    }
    report.median = median_trace(traces);
    report.median_runtime_to_target =
        report.target ? lower_median(rt) : std::numeric_limits<double>::quiet_NaN();
    report.median_final_gt_error = lower_median(final_gt);
    report.median_msgs_accepted = lower_median(accepted);
    report.median_queue_last_half = lower_median(queue);

    if (write_files) {
        for (std::size_t f = 0; f < report.folds.size(); ++f) {
            const std::string path = cfg.out + "_fold" + std::to_string(f) + ".csv";
            write_text(path, trace_csv(report.folds[f].trace));
            report.files.push_back(path);
        }
        const std::string median = cfg.out + "_median.csv";
        write_text(median, trace_csv(report.median));
        const std::string summary = cfg.out + "_summary.csv";
        write_text(summary, summary_csv(report));
        const std::string manifest = cfg.out + ".manifest";
        write_text(manifest, "# resolved experiment configuration\n" +
                                 format_key_values(to_key_values(resolved)));
        report.files.insert(report.files.end(), {median, summary, manifest});
    }
    return report;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) throw config_error("line " + std::to_string(lineno) + ": empty key");
        kv[key] = trim(std::string_view(body).substr(eq + 1));
    }
    return kv;
}

KeyValues read_config_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw config_error("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

const std::vector<std::pair<std::string, std::string>>& config_keys() {
    static const std::vector<std::pair<std::string, std::string>> keys = {
        {"solver", "sgd | spsgd | batch | asgd"},
        {"data", "binary dataset file (synthetic data when absent)"},
        {"truth", "binary ground-truth file"},
        {"n", "synthetic: dimension"},
        {"m", "synthetic: sample count"},
        {"k", "cluster count"},
        {"min-center-dist", "synthetic: minimum pairwise center distance"},
        {"cluster-sigma", "synthetic: cluster standard deviation"},
        {"sigmas", "synthetic: comma-separated per-cluster deviations"},
        {"box", "synthetic: centers uniform in [-box, box]^n"},
        {"data-seed", "synthetic: generator seed"},
        {"init", "data | zeros"},
        {"epsilon", "step size"},
        {"b", "mini-batch size (initial b with adaptive-b)"},
        {"iterations", "mini-batch steps per worker"},
        {"samples", "per-worker sample budget; overrides iterations"},
        {"workers", "worker count"},
        {"seed", "base seed; fold i uses seed + i"},
        {"network", "infiniband | ethernet"},
        {"bandwidth", "bytes per second per node (overrides the preset)"},
        {"latency", "seconds per message (overrides the preset)"},
        {"queue-capacity", "egress queue slots per node"},
        {"mode", "virtual | wall"},
        {"torn-writes", "virtual mode only: overwrites mix old and new halves"},
        {"workers-per-node", "workers sharing one egress queue and controller"},
        {"send-every", "steps between sends, or never"},
        {"audit-filter", "count Parzen filter contract violations"},
        {"adaptive-b", "enable the queue-driven b controller"},
        {"q-opt", "controller target queue size (default capacity/2)"},
        {"gamma", "controller step size (default 0.1 b / q-opt)"},
        {"b-min", "controller lower bound on b"},
        {"b-max", "controller upper bound on b"},
        {"controller-interval", "node steps between controller updates"},
        {"folds", "repetitions with seeds seed..seed+folds-1"},
        {"out", "output path prefix"},
        {"target", "gt_error target for runtime-to-target"},
        {"target-factor", "target = factor x best batch_gd gt_error"},
        {"batch-epsilon", "step size of the batch_gd reference (default k)"},
        {"batch-iterations", "epochs of the batch_gd reference"},
        {"stop-at-target", "end each fold when the target is reached"},
        {"eval-points", "rows used for quantization error (0 = all)"},
        {"flop-time", "virtual seconds per floating point operation"},
        {"copy-bandwidth", "virtual bytes per second for state copies"},
    };
    return keys;
}

void ExperimentConfig::validate() const {
    as_config_error([&] {
        if (folds < 1) throw config_error("folds: must be >= 1");
        if (data_path.empty()) {
            synthetic.validate();
            if (!truth_path.empty()) throw config_error("truth: given without data");
        } else {
            if (!std::filesystem::exists(data_path))
                throw config_error("data: file '" + data_path + "' does not exist");
            if (!truth_path.empty() && !std::filesystem::exists(truth_path))
                throw config_error("truth: file '" + truth_path + "' does not exist");
            if (synthetic.k < 1) throw config_error("k: must be >= 1");
        }
        Hyperparams h = hp;
        h.validate();
        net.validate();
        if (net.torn_writes && net.mode != ClockMode::virtual_time)
            throw config_error("torn-writes: only available in virtual mode");
        if (workers_per_node < 1) throw config_error("workers-per-node: must be >= 1");
        if (send_every < 1) throw config_error("send-every: must be >= 1 or never");
        if (samples > 0 && solver == Solver::batch)
            throw config_error("samples: not used by the batch solver; set iterations");
        if (adaptive_b && solver != Solver::asgd)
            throw config_error("adaptive-b: only the asgd solver has a controller");
        if (adaptive_b) controller()->validate();
        if (target && !std::isfinite(*target)) throw config_error("target: must be finite");
        if (!(target_factor > 0.0)) throw config_error("target-factor: must be > 0");
        if (!(batch_epsilon >= 0.0)) throw config_error("batch-epsilon: must be >= 0");
        if (batch_iterations < 1) throw config_error("batch-iterations: must be >= 1");
        if (!(cost.flop_time > 0.0)) throw config_error("flop-time: must be > 0");
        if (!(cost.copy_bandwidth > 0.0)) throw config_error("copy-bandwidth: must be > 0");
    });
}

std::size_t ExperimentConfig::resolved_iterations() const {
    if (samples == 0 || solver == Solver::batch) return hp.iterations;
    const std::uint64_t step = adaptive_b ? b_min : hp.b;
    return static_cast<std::size_t>((samples + step - 1) / step);
}

std::optional<ControllerState> ExperimentConfig::controller() const {
    if (!adaptive_b) return std::nullopt;
    ControllerState cs = ControllerState::defaults(std::max<std::size_t>(hp.b, 1), net.queue_capacity);
    cs.b_min = b_min;
    cs.b_max = b_max;
    cs.b = hp.b;
    cs.interval = controller_interval;
    if (q_opt) {
        cs.q_opt = *q_opt;
        cs.q1 = cs.q2 = static_cast<std::int64_t>(std::llround(*q_opt));
        if (!gamma && *q_opt > 0.0) cs.gamma = 0.1 * static_cast<double>(hp.b) / *q_opt;
    }
    if (gamma) cs.gamma = *gamma;
    return cs;
}

ExperimentConfig config_from(const KeyValues& kv) {
    Reader r(kv);
    ExperimentConfig c;
    as_config_error([&] {
        const std::string solver = r.text("solver", "asgd");
        if (solver == "sgd") c.solver = Solver::sgd;
        else if (solver == "spsgd") c.solver = Solver::spsgd;
        else if (solver == "batch") c.solver = Solver::batch;
        else if (solver == "asgd") c.solver = Solver::asgd;
        else throw config_error("solver: expected sgd, spsgd, batch or asgd, got '" + solver + "'");

        c.data_path = r.text("data", "");
        c.truth_path = r.text("truth", "");
        auto& s = c.synthetic;
        s.n = r.count("n", s.n);
        s.m = r.count("m", s.m);
        s.k = r.count("k", s.k);
        s.min_center_dist = r.real("min-center-dist", s.min_center_dist);
        s.cluster_sigma = r.real("cluster-sigma", s.cluster_sigma);
        s.box = r.real("box", s.box);
        s.seed = r.count("data-seed", s.seed);
        if (const auto* list = r.raw("sigmas"); list && !list->empty()) {
            std::istringstream in(*list);
            std::string item;
            while (std::getline(in, item, ','))
                s.sigmas.push_back(Reader::parse_real("sigmas", trim(item)));
        }

        const std::string init = r.text("init", "data");
        if (init != "data" && init != "zeros")
            throw config_error("init: expected data or zeros, got '" + init + "'");
        c.init_zeros = init == "zeros";

        c.hp.epsilon = r.real("epsilon", c.hp.epsilon);
        c.hp.b = r.count("b", c.hp.b);
        c.hp.iterations = r.count("iterations", c.hp.iterations);
        c.hp.workers = r.count("workers", c.hp.workers);
        c.hp.seed = r.count("seed", c.hp.seed);
        c.samples = r.count("samples", 0);

        c.network = r.text("network", c.network);
        c.net = NetworkModel::preset(c.network);
        c.net.bandwidth = r.real("bandwidth", c.net.bandwidth);
        c.net.latency = r.real("latency", c.net.latency);
        c.net.queue_capacity = r.count("queue-capacity", c.net.queue_capacity);
        const std::string mode = r.text("mode", "virtual");
        if (mode == "virtual") c.net.mode = ClockMode::virtual_time;
        else if (mode == "wall") c.net.mode = ClockMode::wall_clock;
        else throw config_error("mode: expected virtual or wall, got '" + mode + "'");
        c.net.torn_writes = r.flag("torn-writes", false);
        c.workers_per_node = r.count("workers-per-node", c.workers_per_node);
        if (r.text("send-every", "1") == "never") c.send_every = kNever;
        else c.send_every = r.count("send-every", c.send_every);
        c.audit_filter = r.flag("audit-filter", false);

        c.adaptive_b = r.flag("adaptive-b", false);
        c.q_opt = r.opt_real("q-opt");
        c.gamma = r.opt_real("gamma");
        c.b_min = r.count("b-min", c.b_min);
        c.b_max = r.count("b-max", c.b_max);
        c.controller_interval = r.count("controller-interval", c.controller_interval);

        c.folds = r.count("folds", c.folds);
        c.out = r.text("out", c.out);
        c.target = r.opt_real("target");
        c.target_factor = r.real("target-factor", c.target_factor);
        c.batch_epsilon = r.real("batch-epsilon", c.batch_epsilon);
        c.batch_iterations = r.count("batch-iterations", c.batch_iterations);
        c.stop_at_target = r.flag("stop-at-target", false);
        c.eval_points = r.count("eval-points", c.eval_points);
        c.cost.flop_time = r.real("flop-time", c.cost.flop_time);
        c.cost.copy_bandwidth = r.real("copy-bandwidth", c.cost.copy_bandwidth);
    });
    c.validate();
    return c;
}

KeyValues to_key_values(const ExperimentConfig& c) {
    KeyValues kv;
    kv["solver"] = solver_name(c.solver);
    if (!c.data_path.empty()) kv["data"] = c.data_path;
    if (!c.truth_path.empty()) kv["truth"] = c.truth_path;
    const auto& s = c.synthetic;
    kv["k"] = fmt(s.k);
    if (c.data_path.empty()) {
        kv["n"] = fmt(s.n);
        kv["m"] = fmt(s.m);
        kv["min-center-dist"] = fmt(s.min_center_dist);
        kv["cluster-sigma"] = fmt(s.cluster_sigma);
        kv["box"] = fmt(s.box);
        kv["data-seed"] = fmt(s.seed);
        if (!s.sigmas.empty()) {
            std::string list;
            for (double v : s.sigmas) list += (list.empty() ? "" : ",") + fmt(v);
            kv["sigmas"] = list;
        }
    }
    kv["init"] = c.init_zeros ? "zeros" : "data";
    kv["epsilon"] = fmt(c.hp.epsilon);
    kv["b"] = fmt(c.hp.b);
    kv["iterations"] = fmt(c.hp.iterations);
    kv["samples"] = fmt(c.samples);
    kv["workers"] = fmt(c.hp.workers);
    kv["seed"] = fmt(c.hp.seed);
    kv["network"] = c.network;
    kv["bandwidth"] = fmt(c.net.bandwidth);
    kv["latency"] = fmt(c.net.latency);
    kv["queue-capacity"] = fmt(c.net.queue_capacity);
    kv["mode"] = c.net.mode == ClockMode::virtual_time ? "virtual" : "wall";
    kv["torn-writes"] = c.net.torn_writes ? "true" : "false";
    kv["workers-per-node"] = fmt(c.workers_per_node);
    kv["send-every"] = c.send_every == kNever ? "never" : fmt(c.send_every);
    kv["audit-filter"] = c.audit_filter ? "true" : "false";
    kv["adaptive-b"] = c.adaptive_b ? "true" : "false";
    if (c.adaptive_b) {
        const auto cs = *c.controller();
        kv["q-opt"] = fmt(cs.q_opt);
        kv["gamma"] = fmt(cs.gamma);
    }
    kv["b-min"] = fmt(c.b_min);
    kv["b-max"] = fmt(c.b_max);
    kv["controller-interval"] = fmt(c.controller_interval);
    kv["folds"] = fmt(c.folds);
    kv["out"] = c.out;
    if (c.target) kv["target"] = fmt(*c.target);
    kv["target-factor"] = fmt(c.target_factor);
    kv["batch-epsilon"] = fmt(c.batch_epsilon);
    kv["batch-iterations"] = fmt(c.batch_iterations);
    kv["stop-at-target"] = c.stop_at_target ? "true" : "false";
    kv["eval-points"] = fmt(c.eval_points);
    kv["flop-time"] = fmt(c.cost.flop_time);
    kv["copy-bandwidth"] = fmt(c.cost.copy_bandwidth);
    return kv;
}

double lower_median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("lower_median: no values");
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
    std::nth_element(v.begin(), mid, v.end(), [](double a, double b) {
        // NaN sorts last so it only wins when most values are NaN
        if (std::isnan(a)) return false;
        if (std::isnan(b)) return true;
        return a < b;
    });
    return *mid;
}

std::vector<TracePoint> median_trace(const std::vector<std::vector<TracePoint>>& traces) {
    std::size_t rows = 0;
    for (const auto& t : traces) {
        if (t.empty()) throw std::invalid_argument("median_trace: empty trace");
        rows = std::max(rows, t.size());
    }
    std::vector<TracePoint> out(rows);
    std::vector<double> col(traces.size());
    auto column = [&](std::size_t row, auto get) {
        for (std::size_t f = 0; f < traces.size(); ++f) {
            const auto& t = traces[f];
            col[f] = static_cast<double>(get(t[std::min(row, t.size() - 1)]));
        }
        return lower_median(col);
    };
    for (std::size_t i = 0; i < rows; ++i) {
        auto& p = out[i];
        p.time_s = column(i, [](const TracePoint& q) { return q.time_s; });
        p.samples = static_cast<std::uint64_t>(column(i, [](const TracePoint& q) { return q.samples; }));
        p.quant_error = column(i, [](const TracePoint& q) { return q.quant_error; });
        p.gt_error = column(i, [](const TracePoint& q) { return q.gt_error; });
        p.msgs_sent = static_cast<std::uint64_t>(column(i, [](const TracePoint& q) { return q.msgs_sent; }));
        p.msgs_accepted =
            static_cast<std::uint64_t>(column(i, [](const TracePoint& q) { return q.msgs_accepted; }));
        p.b_current = static_cast<std::size_t>(column(i, [](const TracePoint& q) { return q.b_current; }));
    }
    return out;
}

const char* const kTraceHeader =
    "time_s,samples,quant_error,gt_error,msgs_sent,msgs_accepted,b_current";

std::string trace_csv(const std::vector<TracePoint>& trace) {
    std::string out = std::string(kTraceHeader) + "\n";
    for (const auto& p : trace) {
        out += fmt(p.time_s) + ',' + fmt(p.samples) + ',' + fmt(p.quant_error) + ',' +
               fmt(p.gt_error) + ',' + fmt(p.msgs_sent) + ',' + fmt(p.msgs_accepted) + ',' +
               fmt(static_cast<std::uint64_t>(p.b_current)) + '\n';
    }
    return out;
}

std::pair<Dataset, std::optional<GroundTruth>> load_data(const ExperimentConfig& cfg) {
    if (cfg.data_path.empty()) {
        auto [X, gt] = generate(cfg.synthetic);
        return {std::move(X), std::optional<GroundTruth>(std::move(gt))};
    }
    Dataset X = read_dataset(cfg.data_path);
    std::optional<GroundTruth> gt;
    if (!cfg.truth_path.empty()) {
        gt = read_ground_truth(cfg.truth_path);
        if (gt->centers.n() != X.n())
            throw config_error("truth: dimension differs from the dataset");
        if (gt->centers.k() != cfg.synthetic.k)
            throw config_error("k: ground truth has " + std::to_string(gt->centers.k()) +
                               " centers");
    }
    return {std::move(X), std::move(gt)};
}

double reference_target(const ExperimentConfig& cfg, const Dataset& X, const GroundTruth& gt) {
    Hyperparams hp;
    hp.epsilon = cfg.batch_epsilon > 0.0 ? cfg.batch_epsilon : static_cast<double>(cfg.synthetic.k);
    hp.iterations = cfg.batch_iterations;
    hp.workers = cfg.hp.workers;
    hp.seed = cfg.hp.seed;
    RunOptions opts;
    opts.ground_truth = &gt;
    opts.eval_points = cfg.eval_points;
    opts.cost = cfg.cost;
    const auto res = batch_gd(X, hp, initial_state(cfg, X, hp.seed), opts);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : res.trace) best = std::min(best, p.gt_error);
    return cfg.target_factor * best;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, bool write_files) {
    cfg.validate();
    auto [X, gt] = load_data(cfg);
    if (X.m() < cfg.synthetic.k)
        throw config_error("k: dataset has fewer rows than clusters");
    return run_on(cfg, X, gt, write_files);
}

void SweepConfig::validate() const {
    base.validate();
    if (variable != "b" && variable != "workers" && variable != "bandwidth")
        throw config_error("variable: expected b, workers or bandwidth, got '" + variable + "'");
    if (values.empty()) throw config_error("values: at least one value is required");
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw config_error("values: every value must be positive");
        if (variable != "bandwidth" && v != std::floor(v))
            throw config_error("values: " + variable + " takes integers");
    }
}

std::vector<SweepRow> run_sweep(const SweepConfig& sweep, bool write_files) {
    sweep.validate();
    auto [X, gt] = load_data(sweep.base);
    ExperimentConfig shared = sweep.base;
    if (!shared.target && gt) shared.target = reference_target(shared, X, *gt);

    std::vector<SweepRow> rows;
    std::ostringstream csv;
    csv << "value,median_runtime_to_target,median_final_gt_error,median_msgs_accepted\n";
    for (double v : sweep.values) {
        ExperimentConfig cfg = shared;
        if (sweep.variable == "b") cfg.hp.b = static_cast<std::size_t>(v);
        else if (sweep.variable == "workers") cfg.hp.workers = static_cast<std::size_t>(v);
        else cfg.net.bandwidth = v;
        cfg.out = sweep.base.out + "_" + sweep.variable + fmt(v);
        cfg.validate();
        SweepRow row{v, run_on(cfg, X, gt, write_files)};
        csv << fmt(v) << ',' << fmt(row.report.median_runtime_to_target) << ','
            << fmt(row.report.median_final_gt_error) << ',' << fmt(row.report.median_msgs_accepted)
            << '\n';
        rows.push_back(std::move(row));
    }
    if (write_files) write_text(sweep.base.out + "_sweep.csv", csv.str());
    return rows;
}

std::vector<PresetRow> compare_presets(const ExperimentConfig& base,
                                       const std::vector<std::string>& presets,
                                       bool write_files) {
    base.validate();
    if (presets.empty()) throw config_error("presets: at least one preset is required");
    auto [X, gt] = load_data(base);
    ExperimentConfig shared = base;
    if (!shared.target && gt) shared.target = reference_target(shared, X, *gt);

    std::vector<PresetRow> rows;
    std::ostringstream csv;
    csv << "preset,median_runtime_to_target,median_final_gt_error,median_msgs_accepted,"
           "runtime_ratio\n";
    for (const auto& name : presets) {
        ExperimentConfig cfg = shared;
        as_config_error([&] {
            const NetworkModel p = NetworkModel::preset(name);
            cfg.network = name;
            cfg.net.bandwidth = p.bandwidth;
            cfg.net.latency = p.latency;
        });
        cfg.out = base.out + "_" + name;
        rows.push_back({name, run_on(cfg, X, gt, write_files)});
        const double first = rows.front().report.median_runtime_to_target;
        const double mine = rows.back().report.median_runtime_to_target;
        csv << name << ',' << fmt(mine) << ',' << fmt(rows.back().report.median_final_gt_error)
            << ',' << fmt(rows.back().report.median_msgs_accepted) << ',' << fmt(mine / first)
            << '\n';
    }
    if (write_files) write_text(base.out + "_compare.csv", csv.str());
    return rows;
}

}  // namespace asgd
