#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "celm/data.hpp"
#include "celm/error.hpp"
#include "celm/federation.hpp"
#include "celm/io.hpp"

namespace celm {

/// Flat `key = value` text with dotted keys. `#` starts a comment; blank lines are ignored.
class KeyValueFile {
public:
    static KeyValueFile parse(std::string_view text, const std::string& origin = "<config>") {
        KeyValueFile kv;
        std::size_t line_no = 0;
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
            }
            auto key = trim(trimmed.substr(0, eq));
            auto value = trim(trimmed.substr(eq + 1));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
            if (kv.values_.count(key)) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
            }
            kv.values_[key] = value;
        }
        return kv;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& entries() const { return values_; }

    std::optional<std::string> get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    static std::string trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t");
        return std::string(s.substr(b, e - b + 1));
    }

private:
    std::map<std::string, std::string> values_;
};

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(KeyValueFile::trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!KeyValueFile::trim(cur).empty() || !out.empty()) out.push_back(KeyValueFile::trim(cur));
    for (const auto& v : out)
        if (v.empty()) throw ConfigError("empty item in list '" + std::string(s) + "'");
    return out;
}

struct DataSource {
    bool synthetic = true;
    // synthetic Gaussian classes
    std::size_t classes = 6;
    std::size_t per_class = 600;
    std::size_t test_per_class = 300;
    std::size_t dim = 16;
    Real radius = 2.5;
    // IDX files
    std::string train_images, train_labels, test_images, test_labels;
};

struct ExperimentConfig {
    DataSource data;
    PartitionSpec partition;  // seed is filled per run
    FederationConfig federation;  // seed and strategy are filled per run
    Real warmup_fraction = 0.05;
    std::optional<std::size_t> warmup_rounds;  // overrides the fraction when set
    std::vector<StrategyKind> strategies{StrategyKind::UniformFedAvg, StrategyKind::Celm};
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";

    std::size_t warmup() const {
        return warmup_rounds ? *warmup_rounds : warmup_horizon(federation.round.total_rounds, warmup_fraction);
    }

    /// Federation settings for one (strategy, seed) run.
    FederationConfig for_run(StrategyKind s, std::uint64_t seed) const {
        FederationConfig fc = federation;
        fc.strategy = s;
        fc.round.seed = seed;
        fc.round.warmup_rounds = warmup();
        return fc;
    }

    PartitionSpec partition_for(std::uint64_t seed) const {
        PartitionSpec p = partition;
        p.seed = seed;
        return p;
    }

    void validate() const {
        if (data.synthetic) {
            if (data.classes < 2) throw ConfigError("data.classes must be at least 2");
            if (data.dim < 2) throw ConfigError("data.dim must be at least 2");
            if (data.per_class == 0 || data.test_per_class == 0) throw ConfigError("per-class sample counts must be positive");
            if (!(data.radius > 0.0)) throw ConfigError("data.radius must be positive");
        } else if (data.train_images.empty() || data.train_labels.empty() || data.test_images.empty() ||
                   data.test_labels.empty()) {
            throw ConfigError("IDX source needs train and test image and label paths");
        }
        if (partition.clients < 1) throw ConfigError("partition.clients must be positive");
        if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("warmup_fraction must lie in [0, 1]");
        if (strategies.empty()) throw ConfigError("run.strategies is empty");
        if (seeds.empty()) throw ConfigError("run.seeds is empty");
        if (output_dir.empty()) throw ConfigError("run.output_dir is empty");
        FederationConfig fc = for_run(strategies.front(), seeds.front());
        fc.validate();
    }
};

namespace config_detail {

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
        const auto x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
    }
}

inline Real to_real(const std::string& key, const std::string& v) {
    try {
        return io::parse_real(v);
    } catch (const Error&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> to_counts(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(static_cast<std::size_t>(to_u64(key, item)));
    return out;
}

/// 1-based ids on disk, 0-based inside.
inline std::size_t to_index(const std::string& key, const std::string& v) {
    const auto x = to_u64(key, v);
    if (x == 0) throw ConfigError(key + ": ids are 1-based");
    return static_cast<std::size_t>(x - 1);
}

inline std::vector<std::size_t> to_indices(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(to_index(key, item));
    return out;
}

}  // namespace config_detail

/// Every key the config reader understands.
inline const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys{
        "data.source", "data.classes", "data.per_class", "data.test_per_class", "data.dim", "data.radius",
        "data.train_images", "data.train_labels", "data.test_images", "data.test_labels",
        "partition.regime", "partition.clients", "partition.alpha", "partition.min_client_samples",
        "partition.max_redraws", "partition.classes_per_client", "partition.class_step", "partition.sample_step",
        "partition.samples_per_client", "partition.rare_classes", "partition.maverick_client",
        "partition.free_rider_client", "partition.free_rider_classes", "partition.free_rider_fraction",
        "model.hidden",
        "train.rounds", "train.local_epochs", "train.batch_size", "train.lr", "train.lr_decay_round",
        "train.lr_decay_factor",
        "probe.steps", "probe.lr", "probe.reg_weight", "probe.divergence_limit",
        "celm.beta", "celm.epsilon", "celm.warmup_fraction", "celm.warmup_rounds",
        "run.strategies", "run.seeds", "run.output_dir",
    };
    return keys;
}

inline ExperimentConfig experiment_config(const KeyValueFile& kv) {
    using namespace config_detail;
    for (const auto& [k, v] : kv.entries()) {
        if (!config_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
    ExperimentConfig c;
    auto get = [&](const std::string& key, auto&& apply) {
        if (auto v = kv.get(key)) apply(key, *v);
    };

    get("data.source", [&](auto& k, auto& v) {
        if (v == "synthetic") c.data.synthetic = true;
        else if (v == "idx") c.data.synthetic = false;
        else throw ConfigError(k + ": expected synthetic or idx, got '" + v + "'");
    });
    get("data.classes", [&](auto& k, auto& v) { c.data.classes = to_u64(k, v); });
    get("data.per_class", [&](auto& k, auto& v) { c.data.per_class = to_u64(k, v); });
    get("data.test_per_class", [&](auto& k, auto& v) { c.data.test_per_class = to_u64(k, v); });
    get("data.dim", [&](auto& k, auto& v) { c.data.dim = to_u64(k, v); });
    get("data.radius", [&](auto& k, auto& v) { c.data.radius = to_real(k, v); });
    get("data.train_images", [&](auto&, auto& v) { c.data.train_images = v; });
    get("data.train_labels", [&](auto&, auto& v) { c.data.train_labels = v; });
    get("data.test_images", [&](auto&, auto& v) { c.data.test_images = v; });
    get("data.test_labels", [&](auto&, auto& v) { c.data.test_labels = v; });

    auto& p = c.partition;
    get("partition.regime", [&](auto& k, auto& v) {
        try {
            p.regime = regime_from_string(v);
        } catch (const Error& e) {
            throw ConfigError(k + ": " + e.what());
        }
    });
    get("partition.clients", [&](auto& k, auto& v) { p.clients = to_u64(k, v); });
    get("partition.alpha", [&](auto& k, auto& v) { p.alpha = to_real(k, v); });
    get("partition.min_client_samples", [&](auto& k, auto& v) { p.min_client_samples = to_u64(k, v); });
    get("partition.max_redraws", [&](auto& k, auto& v) { p.max_redraws = to_u64(k, v); });
    get("partition.classes_per_client", [&](auto& k, auto& v) { p.classes_per_client = to_counts(k, v); });
    get("partition.class_step", [&](auto& k, auto& v) { p.class_step = to_u64(k, v); });
    get("partition.sample_step", [&](auto& k, auto& v) { p.sample_step = to_u64(k, v); });
    get("partition.samples_per_client", [&](auto& k, auto& v) { p.samples_per_client = to_u64(k, v); });
    get("partition.rare_classes", [&](auto& k, auto& v) { p.rare_classes = to_indices(k, v); });
    get("partition.maverick_client", [&](auto& k, auto& v) { p.maverick_client = to_index(k, v); });
    get("partition.free_rider_client", [&](auto& k, auto& v) { p.free_rider_client = to_index(k, v); });
    get("partition.free_rider_classes", [&](auto& k, auto& v) { p.free_rider_classes = to_indices(k, v); });
    get("partition.free_rider_fraction", [&](auto& k, auto& v) { p.free_rider_fraction = to_real(k, v); });

    auto& f = c.federation;
    get("model.hidden", [&](auto& k, auto& v) { f.hidden = to_counts(k, v); });
    get("train.rounds", [&](auto& k, auto& v) { f.round.total_rounds = to_u64(k, v); });
    get("train.local_epochs", [&](auto& k, auto& v) { f.round.local_epochs = to_u64(k, v); });
    get("train.batch_size", [&](auto& k, auto& v) { f.round.batch_size = to_u64(k, v); });
    get("train.lr", [&](auto& k, auto& v) { f.round.client_lr.base = to_real(k, v); });
    get("train.lr_decay_round", [&](auto& k, auto& v) { f.round.client_lr.decay_round = to_u64(k, v); });
    get("train.lr_decay_factor", [&](auto& k, auto& v) { f.round.client_lr.factor = to_real(k, v); });
    get("probe.steps", [&](auto& k, auto& v) { f.probe.steps = to_u64(k, v); });
    get("probe.lr", [&](auto& k, auto& v) { f.probe.learning_rate = to_real(k, v); });
    get("probe.reg_weight", [&](auto& k, auto& v) { f.probe.reg_weight = to_real(k, v); });
    get("probe.divergence_limit", [&](auto& k, auto& v) { f.probe.divergence_limit = to_real(k, v); });
    get("celm.beta", [&](auto& k, auto& v) { f.beta = to_real(k, v); });
    get("celm.epsilon", [&](auto& k, auto& v) { f.epsilon = to_real(k, v); });
    get("celm.warmup_fraction", [&](auto& k, auto& v) { c.warmup_fraction = to_real(k, v); });
    get("celm.warmup_rounds", [&](auto& k, auto& v) { c.warmup_rounds = to_u64(k, v); });

    get("run.strategies", [&](auto& k, auto& v) {
        c.strategies.clear();
        for (const auto& s : split_list(v)) {
            try {
                c.strategies.push_back(strategy_from_string(s));
            } catch (const Error& e) {
                throw ConfigError(k + ": " + e.what());
            }
        }
    });
    get("run.seeds", [&](auto& k, auto& v) {
        c.seeds.clear();
        for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(k, s));
    });
    get("run.output_dir", [&](auto&, auto& v) { c.output_dir = v; });

    // Maverick/free-rider rare classes also drive the rare-class accuracy column.
    f.rare_classes = p.rare_classes;
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                               const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    auto kv = KeyValueFile::parse(io::read_text(path), path.string());
    for (const auto& [k, v] : overrides) kv.set(k, v);
    return experiment_config(kv);
}

/// Writes the effective key/value pairs back out, one per line in key order.
inline std::string serialize(const KeyValueFile& kv) {
    std::string out;
    for (const auto& [k, v] : kv.entries()) out += k + " = " + v + "\n";
    return out;
}

}  // namespace celm
