#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "celm/error.hpp"
#include "celm/estimator.hpp"
#include "celm/federation.hpp"
#include "celm/tensor.hpp"

namespace celm::io {

using Json = nlohmann::ordered_json;

class IoError : public Error {
public:
    using Error::Error;
};

/// Schema problems in otherwise readable files: wrong header, wrong width, mismatched K.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Shortest text that parses back to the same double. NaN is written as "nan".
inline std::string format_real(Real v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline Real parse_real(std::string_view s) {
    if (s == "nan") return std::numeric_limits<Real>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<Real>::infinity();
    if (s == "-inf") return -std::numeric_limits<Real>::infinity();
    Real v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw SchemaError("not a number: '" + std::string(s) + "'");
    }
    return v;
}

inline std::size_t parse_count(std::string_view s) {
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw SchemaError("not a nonnegative integer: '" + std::string(s) + "'");
    }
    return v;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_field(std::string_view f) {
    if (f.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(f);
    std::string out = "\"";
    for (char c : f) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

using CsvRow = std::vector<std::string>;

struct CsvTable {
    CsvRow header;
    std::vector<CsvRow> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw SchemaError("missing CSV column '" + std::string(name) + "'");
    }
};

/// RFC 4180 with CRLF line ends.
inline std::string to_csv(const CsvTable& t) {
    std::string out;
    auto emit = [&](const CsvRow& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i) out += ',';
            out += csv_field(r[i]);
        }
        out += "\r\n";
    };
    emit(t.header);
    for (const auto& r : t.rows) emit(r);
    return out;
}

/// Parses RFC 4180 text; accepts LF or CRLF. The first record is the header and every
/// record must match its width.
inline CsvTable parse_csv(std::string_view text) {
    std::vector<CsvRow> records;
    CsvRow rec;
    std::string field;
    bool quoted = false, field_started = false;
    std::size_t i = 0;
    auto end_field = [&] {
        rec.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(rec));
        rec.clear();
    };
    while (i < text.size()) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    i += 2;
                    continue;
                }
                quoted = false;
            } else {
                field += c;
            }
            ++i;
            continue;
        }
        if (c == '"' && !field_started && field.empty()) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            end_record();
            ++i;
        } else if (c == '\n') {
            end_record();
        } else {
            field += c;
            field_started = true;
        }
        ++i;
    }
    if (quoted) throw SchemaError("unterminated quoted CSV field");
    if (field_started || !field.empty() || !rec.empty()) end_record();
    if (records.empty()) throw SchemaError("CSV has no header row");
    CsvTable t;
    t.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size()) {
            throw SchemaError("CSV record " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                              " fields, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

inline CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

inline Json read_json(const std::filesystem::path& path) {
    const auto text = read_text(path);
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Allocation tables (clients and classes are 1-based on disk)

inline CsvTable allocation_table(const LabelAllocation& alloc) {
    CsvTable t;
    t.header.push_back("client");
    for (std::size_t c = 0; c < alloc.cols(); ++c) t.header.push_back("class_" + std::to_string(c + 1));
    for (std::size_t i = 0; i < alloc.rows(); ++i) {
        CsvRow r{std::to_string(i + 1)};
        for (std::size_t c = 0; c < alloc.cols(); ++c) r.push_back(std::to_string(alloc(i, c)));
        t.rows.push_back(std::move(r));
    }
    return t;
}

inline LabelAllocation parse_allocation(const CsvTable& t) {
    if (t.header.empty() || t.header.front() != "client") throw SchemaError("allocation CSV must start with 'client'");
    const std::size_t k = t.header.size() - 1;
    if (k == 0) throw SchemaError("allocation CSV has no class columns");
    for (std::size_t c = 0; c < k; ++c) {
        if (t.header[c + 1] != "class_" + std::to_string(c + 1)) {
            throw SchemaError("unexpected allocation column '" + t.header[c + 1] + "'");
        }
    }
    LabelAllocation alloc(t.rows.size(), k);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (parse_count(t.rows[i][0]) != i + 1) throw SchemaError("allocation rows must list clients 1..N in order");
        for (std::size_t c = 0; c < k; ++c) alloc(i, c) = parse_count(t.rows[i][c + 1]);
    }
    return alloc;
}

/// One record per client-class pair, for bubble charts.
inline Json bubble_json(const LabelAllocation& alloc) {
    Json cells = Json::array();
    for (std::size_t i = 0; i < alloc.rows(); ++i) {
        for (std::size_t c = 0; c < alloc.cols(); ++c) {
            cells.push_back(Json{{"client", i + 1}, {"class", c + 1}, {"count", alloc(i, c)}});
        }
    }
    Json j;
    j["clients"] = alloc.rows();
    j["classes"] = alloc.cols();
    j["cells"] = std::move(cells);
    return j;
}

// ---------------------------------------------------------------------------
// Run outputs

inline Json matrix_json(const Matrix& m) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        rows.push_back(std::vector<Real>(r.begin(), r.end()));
    }
    return rows;
}

inline Matrix matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) throw SchemaError("expected a nonempty matrix");
    std::vector<std::vector<Real>> rows;
    for (const auto& r : j) {
        if (!r.is_array()) throw SchemaError("matrix row is not an array");
        rows.push_back(r.get<std::vector<Real>>());
        if (rows.back().size() != rows.front().size()) throw SchemaError("ragged matrix");
    }
    return Matrix::from_rows(rows);
}

inline Json estimator_json(const EstimatorRecord& rec) {
    Json j;
    j["round"] = rec.round;
    j["raw"] = matrix_json(rec.raw);
    j["Q"] = matrix_json(rec.q);
    j["b"] = rec.baseline;
    j["r"] = matrix_json(rec.r);
    j["c_hat"] = rec.c_hat;
    j["c_bar"] = rec.c_bar;
    j["c"] = rec.c;
    j["frozen"] = rec.frozen;
    return j;
}

/// Per-round contribution vectors and, for CELM, every estimator step.
inline Json contribution_json(const ExperimentTrace& trace) {
    Json j;
    j["strategy"] = to_string(trace.strategy);
    j["seed"] = trace.seed;
    Json weights = Json::array();
    for (const auto& r : trace.rounds) weights.push_back(Json{{"round", r.round}, {"c", r.weights}});
    j["weights"] = std::move(weights);
    Json est = Json::array();
    for (const auto& e : trace.estimator) est.push_back(estimator_json(e));
    j["estimator"] = std::move(est);
    return j;
}

/// Evidence matrix of the last estimator step in a contribution document.
inline Matrix final_evidence(const Json& contribution) {
    if (!contribution.contains("estimator") || !contribution["estimator"].is_array() ||
        contribution["estimator"].empty()) {
        throw SchemaError("contribution file has no estimator records");
    }
    return matrix_from_json(contribution["estimator"].back().at("Q"));
}

inline CsvRow trace_header(std::size_t classes, std::size_t clients) {
    CsvRow h{"round", "strategy", "seed", "accuracy", "balanced_accuracy", "rare_accuracy", "mean_client_loss"};
    for (std::size_t c = 0; c < classes; ++c) h.push_back("acc_class_" + std::to_string(c + 1));
    for (std::size_t i = 0; i < clients; ++i) h.push_back("c_" + std::to_string(i + 1));
    return h;
}

inline void append_trace_rows(CsvTable& t, const ExperimentTrace& trace) {
    for (const auto& r : trace.rounds) {
        CsvRow row{std::to_string(r.round), to_string(trace.strategy), std::to_string(trace.seed),
                   format_real(r.accuracy.accuracy), format_real(r.accuracy.balanced),
                   format_real(r.accuracy.rare), format_real(r.mean_client_loss)};
        for (Real v : r.accuracy.per_class) row.push_back(format_real(v));
        for (Real v : r.weights) row.push_back(format_real(v));
        if (row.size() != t.header.size()) throw DimensionError("trace row does not match header");
        t.rows.push_back(std::move(row));
    }
}

/// Contribution vectors of one (strategy, seed) block of a trace CSV, in round order.
struct TraceWeights {
    std::vector<std::vector<Real>> rounds;
    std::size_t clients = 0;
};

inline TraceWeights trace_weights(const CsvTable& t, const std::string& strategy = "", const std::string& seed = "") {
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i].rfind("c_", 0) == 0) cols.push_back(i);
    if (cols.empty()) throw SchemaError("trace CSV has no contribution columns");
    const auto s_col = t.column("strategy");
    const auto seed_col = t.column("seed");
    TraceWeights out;
    out.clients = cols.size();
    for (const auto& row : t.rows) {
        if (!strategy.empty() && row[s_col] != strategy) continue;
        if (!seed.empty() && row[seed_col] != seed) continue;
        std::vector<Real> w;
        for (auto c : cols) w.push_back(parse_real(row[c]));
        out.rounds.push_back(std::move(w));
    }
    return out;
}

}  // namespace celm::io
