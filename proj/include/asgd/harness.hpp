#ifndef ASGD_HARNESS_HPP
#define ASGD_HARNESS_HPP

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asgd/adaptive_b.hpp"
#include "asgd/datagen.hpp"
#include "asgd/solvers.hpp"
#include "asgd/transport.hpp"

namespace asgd {

// Invalid configuration; what() starts with the offending key.
class config_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using KeyValues = std::map<std::string, std::string>;

// Flat `key = value` text, `#` starts a comment. Later keys win.
KeyValues parse_key_values(const std::string& text);
KeyValues read_config_file(const std::string& path);
// One `key = value` line per entry, in key order.
std::string format_key_values(const KeyValues& kv);

// Every key understood by the harness, with a one-line description.
const std::vector<std::pair<std::string, std::string>>& config_keys();

enum class Solver { sgd, spsgd, batch, asgd };

struct ExperimentConfig {
    Solver solver = Solver::asgd;
    // Binary dataset / ground truth; when data_path is empty the synthetic
    // parameters are used to generate data instead.
    std::string data_path;
    std::string truth_path;
    SyntheticSpec synthetic;
    bool init_zeros = false;  // otherwise k distinct data rows

    Hyperparams hp;
    // Per-worker sample budget; when nonzero it fixes iterations = ceil(samples/b).
    std::uint64_t samples = 0;

    std::string network = "infiniband";
    NetworkModel net = NetworkModel::preset("infiniband");
    std::size_t workers_per_node = 1;
    std::size_t send_every = 1;
    bool audit_filter = false;

    bool adaptive_b = false;
    std::optional<double> q_opt;
    std::optional<double> gamma;
    std::size_t b_min = 8;
    std::size_t b_max = 100000;
    std::size_t controller_interval = 10;

    std::size_t folds = 1;
    std::string out = "run";

    // Explicit gt_error target; otherwise target_factor times the best
    // gt_error of a batch_gd reference run.
    std::optional<double> target;
    double target_factor = 5.0;
    double batch_epsilon = 0.0;  // 0 means k
    std::size_t batch_iterations = 30;
    bool stop_at_target = false;

    std::size_t eval_points = 0;
    CostModel cost;

    void validate() const;
    // Iterations after applying the sample budget.
    std::size_t resolved_iterations() const;
    std::optional<ControllerState> controller() const;
};

ExperimentConfig config_from(const KeyValues& kv);
// Fully resolved configuration; config_from(to_key_values(c)) reproduces c.
KeyValues to_key_values(const ExperimentConfig& cfg);

struct FoldReport {
    std::vector<TracePoint> trace;
    std::optional<double> runtime_to_target;
    double final_gt_error = 0.0;
    std::uint64_t msgs_sent = 0;
    std::uint64_t msgs_accepted = 0;
    double mean_queue_last_half = 0.0;
};

struct ExperimentReport {
    std::optional<double> target;
    std::vector<FoldReport> folds;
    std::vector<TracePoint> median;
    // Unreached folds count as +infinity.
    double median_runtime_to_target = 0.0;
    double median_final_gt_error = 0.0;
    double median_msgs_accepted = 0.0;
    double median_queue_last_half = 0.0;
    std::vector<std::string> files;
};

// Lower median (deterministic for even counts). Throws on empty input.
double lower_median(std::vector<double> v);
// Element-wise lower median over aligned checkpoints; shorter traces are
// padded with their last row.
std::vector<TracePoint> median_trace(const std::vector<std::vector<TracePoint>>& traces);

// Loads or generates the dataset named by cfg.
std::pair<Dataset, std::optional<GroundTruth>> load_data(const ExperimentConfig& cfg);
// target_factor x best gt_error of the batch_gd reference (fold 0 start).
double reference_target(const ExperimentConfig& cfg, const Dataset& X, const GroundTruth& gt);

// Runs cfg.folds repetitions and writes
//   <out>_fold<i>.csv, <out>_median.csv, <out>_summary.csv, <out>.manifest
// When write_files is false nothing touches the disk.
ExperimentReport run_experiment(const ExperimentConfig& cfg, bool write_files = true);

extern const char* const kTraceHeader;
std::string trace_csv(const std::vector<TracePoint>& trace);

struct SweepConfig {
    ExperimentConfig base;
    std::string variable = "b";  // b | workers | bandwidth
    std::vector<double> values;

    void validate() const;
};

struct SweepRow {
    double value = 0.0;
    ExperimentReport report;
};

// One experiment per value (sharing one target) plus <out>_sweep.csv.
std::vector<SweepRow> run_sweep(const SweepConfig& sweep, bool write_files = true);

struct PresetRow {
    std::string preset;
    ExperimentReport report;
};

// The same experiment under each preset (sharing one target) plus
// <out>_compare.csv.
std::vector<PresetRow> compare_presets(const ExperimentConfig& cfg,
                                       const std::vector<std::string>& presets,
                                       bool write_files = true);

}  // namespace asgd

#endif  // ASGD_HARNESS_HPP
