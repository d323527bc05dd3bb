// Command-line front end: partition, run, sweep, detect, fidelity, report.
//
// Exit codes: 0 all outputs written, 1 runtime failure, 2 usage or config error,
// 3 file I/O error, 4 malformed input file.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "celm/celm.hpp"

#ifndef CELM_GIT_DESCRIBE
#define CELM_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using namespace celm;

namespace {

enum Exit { kOk = 0, kRuntime = 1, kUsage = 2, kIo = 3, kSchema = 4 };

std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& sets) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        out.emplace_back(KeyValueFile::trim(s.substr(0, eq)), KeyValueFile::trim(s.substr(eq + 1)));
    }
    return out;
}

struct LoadedConfig {
    std::string text;
    KeyValueFile kv;
    ExperimentConfig cfg;
};

LoadedConfig load(const std::string& path, const std::vector<std::string>& sets) {
    LoadedConfig lc;
    lc.text = io::read_text(path);
    lc.kv = KeyValueFile::parse(lc.text, path);
    for (const auto& [k, v] : parse_overrides(sets)) lc.kv.set(k, v);
    lc.cfg = experiment_config(lc.kv);
    return lc;
}

std::string fmt(Real v) {
    if (std::isnan(v)) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

int cmd_partition(const std::string& config, const std::vector<std::string>& sets, const std::string& out_opt) {
    const auto lc = load(config, sets);
    const fs::path dir = out_opt.empty() ? fs::path(lc.cfg.output_dir) : fs::path(out_opt);
    for (auto seed : lc.cfg.seeds) {
        const auto data = load_data(lc.cfg, seed);
        const auto part = partition(data.train, lc.cfg.partition_for(seed));
        write_partition_outputs(dir, seed, part.allocation);
        std::cout << "seed " << seed << ": " << part.clients.size() << " clients, " << data.train.size()
                  << " samples -> " << (dir / ("allocation_" + seed_tag(seed) + ".csv")).string() << "\n";
    }
    return kOk;
}

int cmd_run(const std::string& config, const std::vector<std::string>& sets, const std::string& out_opt,
            std::size_t workers, bool dump_probes) {
    const auto lc = load(config, sets);
    const fs::path dir = out_opt.empty() ? fs::path(lc.cfg.output_dir) : fs::path(out_opt);
    std::vector<SeedRun> runs;
    for (auto seed : lc.cfg.seeds) {
        runs.push_back(run_seed(lc.cfg, seed, workers));
        for (const auto& t : runs.back().traces) {
            const auto& a = t.rounds.back().accuracy;
            std::cout << "seed " << seed << " " << to_string(t.strategy) << ": accuracy " << fmt(a.accuracy)
                      << " balanced " << fmt(a.balanced) << " rare " << fmt(a.rare) << "\n";
        }
    }
    RunOutputOptions opt;
    opt.config_text = lc.text;
    opt.effective_config = serialize(lc.kv);
    opt.git_describe = CELM_GIT_DESCRIBE;
    opt.dump_probes = dump_probes;
    write_run_outputs(dir, lc.cfg, runs, opt);
    std::cout << "wrote " << dir.string() << "\n";
    return kOk;
}

std::string sweep_key(const std::string& axis) {
    if (axis == "warmup_fraction") return "celm.warmup_fraction";
    if (axis == "lm_steps") return "probe.steps";
    if (axis == "lm_lr") return "probe.lr";
    throw ConfigError("unknown sweep axis '" + axis + "' (expected warmup_fraction, lm_steps or lm_lr)");
}

int cmd_sweep(const std::string& config, std::vector<std::string> sets, const std::string& out_opt,
              const std::string& axis, std::vector<std::string> values, std::size_t workers) {
    const auto key = sweep_key(axis);
    std::erase_if(values, [](const std::string& v) { return KeyValueFile::trim(v).empty(); });
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    const auto base = load(config, sets);
    const fs::path dir = out_opt.empty() ? fs::path(base.cfg.output_dir) : fs::path(out_opt);

    io::CsvTable grid;
    grid.header = {"axis", "value", "warmup_rounds", "strategy", "seed",
                   "final_accuracy", "final_balanced_accuracy", "final_rare_accuracy"};
    for (const auto& v : values) {
        auto point_sets = sets;
        point_sets.push_back(key + "=" + v);
        const auto lc = load(config, point_sets);
        for (auto seed : lc.cfg.seeds) {
            const auto run = run_seed(lc.cfg, seed, workers);
            for (const auto& t : run.traces) {
                const auto& a = t.rounds.back().accuracy;
                grid.rows.push_back({axis, v, std::to_string(lc.cfg.warmup()), to_string(t.strategy),
                                     std::to_string(seed), io::format_real(a.accuracy), io::format_real(a.balanced),
                                     io::format_real(a.rare)});
                std::cout << axis << "=" << v << " seed " << seed << " " << to_string(t.strategy) << ": balanced "
                          << fmt(a.balanced) << "\n";
            }
        }
    }
    io::write_text(dir / ("sweep_" + axis + ".csv"), io::to_csv(grid));
    io::write_text(dir / "config.conf", base.text);
    std::cout << "wrote " << (dir / ("sweep_" + axis + ".csv")).string() << "\n";
    return kOk;
}

int cmd_detect(const std::string& trace_path, const std::vector<std::size_t>& free_riders,
               const std::vector<std::string>& threshold_args, const std::string& out) {
    std::vector<Real> thresholds;
    for (const auto& t : threshold_args) {
        if (KeyValueFile::trim(t).empty()) continue;
        try {
            thresholds.push_back(io::parse_real(KeyValueFile::trim(t)));
        } catch (const Error&) {
            throw ConfigError("threshold '" + t + "' is not a number");
        }
    }
    if (free_riders.empty()) throw ConfigError("--free-riders needs at least one client id");
    std::vector<std::size_t> ids;
    for (auto id : free_riders) {
        if (id == 0) throw ConfigError("client ids are 1-based");
        ids.push_back(id - 1);
    }
    const auto report = reports::detection(io::read_csv(trace_path), ids, thresholds);
    std::cout << "strategy,seed,auroc,mean_fpr\n";
    for (const auto& r : report["results"]) {
        std::cout << r["strategy"].get<std::string>() << "," << r["seed"].get<std::string>() << ","
                  << fmt(r["auroc"].get<Real>()) << "," << fmt(r["mean_fpr"].get<Real>()) << "\n";
    }
    if (!out.empty()) io::write_json(out, report);
    return kOk;
}

int cmd_fidelity(const std::string& contribution, const std::string& allocation, const std::string& out) {
    const auto evidence = io::final_evidence(io::read_json(contribution));
    const auto truth = io::parse_allocation(io::read_csv(allocation));
    const auto report = reports::fidelity(evidence, truth);
    std::cout << "scope,reference,jsd,emd,hellinger\n";
    for (const char* scope : {"global", "clients"}) {
        for (const char* ref : {"uniform", "estimated"}) {
            const auto& d = report[scope][ref];
            std::cout << scope << "," << ref << "," << fmt(d["jsd"].get<Real>()) << "," << fmt(d["emd"].get<Real>())
                      << "," << fmt(d["hellinger"].get<Real>()) << "\n";
        }
    }
    if (!out.empty()) io::write_json(out, report);
    return kOk;
}

int cmd_report(const std::vector<std::string>& summaries, const std::string& out) {
    std::vector<io::Json> docs;
    for (const auto& s : summaries) docs.push_back(io::read_json(s));
    const auto rep = reports::aggregate_summaries(docs);
    std::cout << "strategy,balanced_mean,balanced_std,rare_mean,rare_std,n\n";
    for (const auto& r : rep["strategies"]) {
        const auto& b = r["balanced_accuracy"];
        const auto& q = r["rare_accuracy"];
        std::cout << r["strategy"].get<std::string>() << "," << fmt(b["mean"].get<Real>()) << ","
                  << fmt(b["std"].get<Real>()) << "," << (q.is_null() ? "n/a" : fmt(q["mean"].get<Real>())) << ","
                  << (q.is_null() ? "n/a" : fmt(q["std"].get<Real>())) << "," << b["n"].get<std::size_t>() << "\n";
    }
    if (!out.empty()) io::write_json(out, rep);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning simulator with logit-probe contribution estimates"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(CELM_GIT_DESCRIBE));

    std::string config, out;
    std::vector<std::string> sets;
    std::size_t workers = default_workers();
    bool dump_probes = false;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("config", config, "key = value config file")->required();
        sub->add_option("--set", sets, "override a config key (key=value), repeatable");
        sub->add_option("--out", out, "output directory (default: run.output_dir)");
    };

    auto* partition_cmd = app.add_subcommand("partition", "write the client-by-class allocation and bubble data");
    add_config(partition_cmd);

    auto* run_cmd = app.add_subcommand("run", "train every configured strategy and seed");
    add_config(run_cmd);
    run_cmd->add_option("--workers", workers, "worker threads (default: available cores)")->check(CLI::PositiveNumber);
    run_cmd->add_flag("--dump-probes", dump_probes, "write final probe images as PGM files");

    std::string axis;
    std::vector<std::string> values;
    auto* sweep_cmd = app.add_subcommand("sweep", "grid over warmup_fraction, lm_steps or lm_lr");
    add_config(sweep_cmd);
    sweep_cmd->add_option("--axis", axis, "warmup_fraction | lm_steps | lm_lr")->required();
    sweep_cmd->add_option("--values", values, "comma-separated axis values")->required()->delimiter(',');
    sweep_cmd->add_option("--workers", workers, "worker threads (default: available cores)")->check(CLI::PositiveNumber);

    std::string trace;
    std::vector<std::size_t> free_riders;
    std::vector<std::string> thresholds;
    auto* detect_cmd = app.add_subcommand("detect", "z-score free-rider detection from a trace CSV");
    detect_cmd->add_option("trace", trace, "trace.csv from a run")->required();
    detect_cmd->add_option("--free-riders", free_riders, "1-based free-rider client ids")->required()->delimiter(',');
    detect_cmd->add_option("--thresholds", thresholds, "z-score cutoffs, strictly increasing (default -2.0..-0.5 step 0.25)")->delimiter(',');
    detect_cmd->add_option("--out", out, "write the report as JSON");

    std::string contribution, allocation;
    auto* fidelity_cmd = app.add_subcommand("fidelity", "distribution distances of the evidence estimate");
    fidelity_cmd->add_option("contribution", contribution, "contribution JSON from a CELM run")->required();
    fidelity_cmd->add_option("allocation", allocation, "allocation CSV for the same seed")->required();
    fidelity_cmd->add_option("--out", out, "write the report as JSON");

    std::vector<std::string> summaries;
    auto* report_cmd = app.add_subcommand("report", "per-strategy mean and spread of final metrics");
    report_cmd->add_option("summaries", summaries, "summary.json files")->required();
    report_cmd->add_option("--out", out, "write the report as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*partition_cmd) return cmd_partition(config, sets, out);
        if (*run_cmd) return cmd_run(config, sets, out, workers, dump_probes);
        if (*sweep_cmd) return cmd_sweep(config, sets, out, axis, values, workers);
        if (*detect_cmd) return cmd_detect(trace, free_riders, thresholds, out);
        if (*fidelity_cmd) return cmd_fidelity(contribution, allocation, out);
        if (*report_cmd) return cmd_report(summaries, out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const io::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const io::SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kSchema;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kSchema;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
