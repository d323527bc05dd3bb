#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "celm/config.hpp"
#include "celm/data.hpp"
#include "celm/federation.hpp"
#include "celm/io.hpp"
#include "celm/probe.hpp"

namespace celm {

/// Train/test data for one seed. IDX sources ignore the seed.
inline TrainTest load_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    const auto& d = cfg.data;
    if (d.synthetic) return synth_train_test(d.classes, d.per_class, d.test_per_class, d.dim, seed, d.radius);
    TrainTest tt{load_idx(d.train_images, d.train_labels), load_idx(d.test_images, d.test_labels)};
    const std::size_t k = std::max(tt.train.num_classes, tt.test.num_classes);
    tt.train.num_classes = tt.test.num_classes = k;
    if (tt.train.dim() != tt.test.dim()) throw FormatError("train and test images differ in size", 0);
    return tt;
}

struct SeedRun {
    std::uint64_t seed = 0;
    Partition partition;
    std::vector<ExperimentTrace> traces;  // one per configured strategy, in config order
};

inline SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t workers) {
    const auto data = load_data(cfg, seed);
    SeedRun run;
    run.seed = seed;
    run.partition = partition(data.train, cfg.partition_for(seed));
    for (auto s : cfg.strategies) {
        auto fc = cfg.for_run(s, seed);
        fc.workers = workers;
        run.traces.push_back(run_experiment(run.partition.clients, data.test, fc));
    }
    return run;
}

inline std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

/// allocation_<seed>.csv and bubble_<seed>.json for one partition.
inline void write_partition_outputs(const std::filesystem::path& dir, std::uint64_t seed,
                                    const LabelAllocation& alloc) {
    io::write_text(dir / ("allocation_" + seed_tag(seed) + ".csv"), io::to_csv(io::allocation_table(alloc)));
    io::write_json(dir / ("bubble_" + seed_tag(seed) + ".json"), io::bubble_json(alloc));
}

inline void dump_probe_images(const std::filesystem::path& dir, const ExperimentTrace& trace, std::size_t rows,
                              std::size_t cols) {
    const auto& bank = trace.final_state.probe_bank;
    for (std::size_t s = 0; s < bank.slots(); ++s) {
        const Tensor& images = bank.slot(s);
        const auto [r, c] = image_layout(images.cols(), rows, cols);
        const std::string who = s == ProbeBank::global_slot() ? "global" : "client" + std::to_string(s);
        for (std::size_t k = 0; k < images.rows(); ++k) {
            write_pgm((dir / (who + "_class" + std::to_string(k + 1) + ".pgm")).string(), images.row(k), r, c);
        }
    }
}

struct RunOutputOptions {
    std::string config_text;       // stored verbatim as config.conf
    std::string effective_config;  // key = value after command-line overrides
    std::string git_describe;
    bool dump_probes = false;
};

inline io::Json run_summary_entry(const ExperimentTrace& t) {
    const auto& last = t.rounds.back().accuracy;
    io::Json j;
    j["strategy"] = to_string(t.strategy);
    j["seed"] = t.seed;
    j["final_accuracy"] = last.accuracy;
    j["final_balanced_accuracy"] = last.balanced;
    j["final_rare_accuracy"] = std::isnan(last.rare) ? io::Json(nullptr) : io::Json(last.rare);
    j["final_weights"] = t.rounds.back().weights;
    j["rounds"] = t.rounds.size();
    return j;
}

/// Writes every artefact of a finished run into `dir`.
inline void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                              const std::vector<SeedRun>& runs, const RunOutputOptions& opt) {
    std::filesystem::create_directories(dir);
    io::write_text(dir / "config.conf", opt.config_text);
    io::write_text(dir / "effective.conf", opt.effective_config);

    io::CsvTable trace;
    bool header_set = false;
    io::Json summary_runs = io::Json::array();
    for (const auto& run : runs) {
        write_partition_outputs(dir, run.seed, run.partition.allocation);
        for (const auto& t : run.traces) {
            if (!header_set) {
                trace.header = io::trace_header(t.rounds.front().accuracy.per_class.size(), t.rounds.front().weights.size());
                header_set = true;
            }
            io::append_trace_rows(trace, t);
            io::write_json(dir / ("contribution_" + to_string(t.strategy) + "_" + seed_tag(run.seed) + ".json"),
                           io::contribution_json(t));
            summary_runs.push_back(run_summary_entry(t));
            if (opt.dump_probes && t.strategy == StrategyKind::Celm) {
                const auto pdir = dir / "probes" / (to_string(t.strategy) + "_" + seed_tag(run.seed));
                std::filesystem::create_directories(pdir);
                dump_probe_images(pdir, t, 0, 0);
            }
        }
    }
    io::write_text(dir / "trace.csv", io::to_csv(trace));

    io::Json summary;
    summary["git_describe"] = opt.git_describe;
    summary["config"] = "config.conf";
    summary["seeds"] = cfg.seeds;
    std::vector<std::string> names;
    for (auto s : cfg.strategies) names.push_back(to_string(s));
    summary["strategies"] = names;
    summary["warmup_rounds"] = cfg.warmup();
    summary["runs"] = std::move(summary_runs);
    io::write_json(dir / "summary.json", summary);
}

}  // namespace celm
