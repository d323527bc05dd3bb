#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "celm/analysis.hpp"
#include "celm/estimator.hpp"
#include "celm/io.hpp"

namespace celm::reports {

/// Free-rider detection over every (strategy, seed) block of a trace CSV.
/// `free_riders` holds zero-based client indices.
inline io::Json detection(const io::CsvTable& trace, const std::vector<std::size_t>& free_riders,
                          std::vector<Real> thresholds) {
    if (thresholds.empty()) thresholds = analysis::default_thresholds();
    const auto s_col = trace.column("strategy");
    const auto seed_col = trace.column("seed");
    std::vector<std::pair<std::string, std::string>> blocks;
    for (const auto& row : trace.rows) {
        std::pair<std::string, std::string> key{row[s_col], row[seed_col]};
        if (std::find(blocks.begin(), blocks.end(), key) == blocks.end()) blocks.push_back(key);
    }
    if (blocks.empty()) throw io::SchemaError("trace has no rows");

    io::Json rows = io::Json::array();
    for (const auto& [strategy, seed] : blocks) {
        const auto w = io::trace_weights(trace, strategy, seed);
        std::vector<bool> mask(w.clients, false);
        for (auto i : free_riders) {
            if (i >= w.clients) throw io::SchemaError("free-rider id exceeds the client count in the trace");
            mask[i] = true;
        }
        io::Json r;
        r["strategy"] = strategy;
        r["seed"] = seed;
        r["rounds"] = w.rounds.size();
        r["auroc"] = analysis::mean_auroc(w.rounds, mask);
        r["mean_fpr"] = analysis::fpr_sweep(w.rounds, thresholds, mask);
        rows.push_back(std::move(r));
    }
    io::Json out;
    out["thresholds"] = thresholds;
    std::vector<std::size_t> ids;
    for (auto i : free_riders) ids.push_back(i + 1);
    out["free_riders"] = ids;
    out["results"] = std::move(rows);
    return out;
}

inline io::Json distances_json(const analysis::Distances& d) {
    return io::Json{{"jsd", d.jsd}, {"emd", d.emd}, {"hellinger", d.hellinger}};
}

/// Distances from the uniform guess and from the evidence-based estimate to the true
/// allocation, for the global class marginal and averaged over clients.
inline io::Json fidelity(const Matrix& evidence, const LabelAllocation& truth) {
    if (evidence.cols() != truth.cols()) {
        throw io::SchemaError("class count differs: evidence has " + std::to_string(evidence.cols()) +
                              ", allocation has " + std::to_string(truth.cols()));
    }
    if (evidence.rows() != truth.rows()) {
        throw io::SchemaError("client count differs: evidence has " + std::to_string(evidence.rows()) +
                              ", allocation has " + std::to_string(truth.rows()));
    }
    const auto est = estimate_distributions(evidence);
    const auto rep = analysis::fidelity(est, truth);
    io::Json out;
    out["global"] = {{"uniform", distances_json(rep.uniform_global)},
                     {"estimated", distances_json(rep.estimated_global)}};
    out["clients"] = {{"uniform", distances_json(rep.uniform_clients)},
                      {"estimated", distances_json(rep.estimated_clients)}};
    out["estimated_global_distribution"] = est.global;
    return out;
}

/// Mean and population spread of final metrics per strategy, from one or more summaries.
inline io::Json aggregate_summaries(const std::vector<io::Json>& summaries) {
    struct Acc {
        std::vector<Real> bal, rare, acc;
    };
    std::vector<std::string> order;
    std::map<std::string, Acc> by;
    for (const auto& s : summaries) {
        if (!s.contains("runs")) throw io::SchemaError("summary has no runs");
        for (const auto& r : s["runs"]) {
            const auto name = r.at("strategy").get<std::string>();
            if (!by.count(name)) order.push_back(name);
            auto& a = by[name];
            a.acc.push_back(r.at("final_accuracy").get<Real>());
            a.bal.push_back(r.at("final_balanced_accuracy").get<Real>());
            if (!r.at("final_rare_accuracy").is_null()) a.rare.push_back(r["final_rare_accuracy"].get<Real>());
        }
    }
    auto stats = [](const std::vector<Real>& v) -> io::Json {
        if (v.empty()) return nullptr;
        Real m = 0.0;
        for (Real x : v) m += x;
        m /= static_cast<Real>(v.size());
        Real var = 0.0;
        for (Real x : v) var += (x - m) * (x - m);
        return io::Json{{"mean", m}, {"std", std::sqrt(var / static_cast<Real>(v.size()))}, {"n", v.size()}};
    };
    io::Json rows = io::Json::array();
    for (const auto& name : order) {
        const auto& a = by[name];
        rows.push_back(io::Json{{"strategy", name},
                                {"accuracy", stats(a.acc)},
                                {"balanced_accuracy", stats(a.bal)},
                                {"rare_accuracy", stats(a.rare)}});
    }
    return io::Json{{"strategies", rows}};
}

}  // namespace celm::reports
