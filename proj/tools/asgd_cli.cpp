#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "asgd/harness.hpp"

using namespace asgd;

namespace {

// --config plus one --<key> flag per config key; flags override the file.
struct KeyOptions {
    std::string config;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "key = value configuration file");
        for (const auto& [key, help] : config_keys())
            options[key] = app->add_option("--" + key, values[key], help);
    }

    KeyValues resolve() const {
        KeyValues kv = config.empty() ? KeyValues{} : read_config_file(config);
        for (const auto& [key, opt] : options)
            if (opt->count() > 0) kv[key] = values.at(key);
        return kv;
    }
};

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string show(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void print_report(const std::string& label, const ExperimentReport& r) {
    std::cout << label << "median runtime to target " << show(r.median_runtime_to_target)
              << " s, final gt_error " << show(r.median_final_gt_error)
              << ", accepted messages " << show(r.median_msgs_accepted) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Asynchronous SGD K-Means experiments on a simulated cluster"};
    app.require_subcommand(1);

    KeyOptions gen_keys, run_keys, sweep_keys, cmp_keys;
    std::string data_out, truth_out, variable = "b", values, presets = "infiniband,ethernet";

    auto* gen = app.add_subcommand("generate", "write a synthetic dataset and its centers");
    gen_keys.attach(gen);
    gen->add_option("--data-out", data_out, "dataset file")->required();
    gen->add_option("--truth-out", truth_out, "ground-truth file")->required();

    auto* run = app.add_subcommand("run", "run one experiment over all folds");
    run_keys.attach(run);

    auto* sweep = app.add_subcommand("sweep", "run one experiment per value of a variable");
    sweep_keys.attach(sweep);
    sweep->add_option("--variable", variable, "b | workers | bandwidth");
    sweep->add_option("--values", values, "comma-separated values")->required();

    auto* cmp = app.add_subcommand("compare", "run the same experiment under network presets");
    cmp_keys.attach(cmp);
    cmp->add_option("--presets", presets, "comma-separated preset names");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto cfg = config_from(gen_keys.resolve());
            auto [X, gt] = generate(cfg.synthetic);
            write_dataset(data_out, X);
            write_ground_truth(truth_out, gt);
            std::cout << "wrote " << X.m() << " x " << X.n() << " points to " << data_out
                      << " and " << gt.centers.k() << " centers to " << truth_out << "\n";
        } else if (run->parsed()) {
            const auto cfg = config_from(run_keys.resolve());
            const auto report = run_experiment(cfg);
            print_report("", report);
            for (const auto& f : report.files) std::cout << "  " << f << "\n";
        } else if (sweep->parsed()) {
            SweepConfig sc;
            sc.base = config_from(sweep_keys.resolve());
            sc.variable = variable;
            for (const auto& v : split(values)) {
                try {
                    sc.values.push_back(std::stod(v));
                } catch (const std::exception&) {
                    throw config_error("values: '" + v + "' is not a number");
                }
            }
            for (const auto& row : run_sweep(sc))
                print_report(variable + "=" + show(row.value) + ": ", row.report);
            std::cout << "  " << sc.base.out << "_sweep.csv\n";
        } else if (cmp->parsed()) {
            const auto cfg = config_from(cmp_keys.resolve());
            for (const auto& row : compare_presets(cfg, split(presets)))
                print_report(row.preset + ": ", row.report);
            std::cout << "  " << cfg.out << "_compare.csv\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
