#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "celm/error.hpp"
#include "celm/rng.hpp"
#include "celm/tensor.hpp"

namespace celm {

/// Labelled samples. Labels are zero-based internally; files and reports show 1..K.
struct Dataset {
    Tensor inputs;  // [n x d]
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;
    // Optional 2-D layout of one input (e.g. 28x28 for IDX images); 0 means unknown.
    std::size_t image_rows = 0;
    std::size_t image_cols = 0;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    std::size_t dim() const { return inputs.rank() == 2 ? inputs.cols() : 0; }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(num_classes, 0);
        for (auto y : labels) ++counts[y];
        return counts;
    }

    /// Sub-dataset with the given row indices, in order.
    Dataset subset(std::span<const std::size_t> rows) const {
        Dataset out;
        out.num_classes = num_classes;
        out.image_rows = image_rows;
        out.image_cols = image_cols;
        const std::size_t d = dim();
        out.inputs = Tensor({rows.size(), d});
        out.labels.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto src = inputs.row(rows[i]);
            std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
            out.labels.push_back(labels[rows[i]]);
        }
        return out;
    }

    void validate() const {
        if (inputs.rank() != 2 || inputs.rows() != labels.size()) {
            throw DimensionError("dataset input rows do not match label count");
        }
        for (auto y : labels) {
            if (y >= num_classes) throw DomainError("dataset label outside 1.." + std::to_string(num_classes));
        }
    }
};

/// Gaussian class clusters with unit covariance around the given means.
inline Dataset synth_dataset_from_means(const std::vector<std::vector<Real>>& means, std::size_t n_per_class,
                                        Rng& rng) {
    if (means.size() < 2) throw DomainError("synthetic dataset needs at least 2 classes");
    if (n_per_class == 0) throw DomainError("synthetic dataset would be empty (n_per_class = 0)");
    const std::size_t k = means.size();
    const std::size_t d = means.front().size();
    if (d < 2) throw DomainError("synthetic dataset needs input dimension >= 2");
    std::normal_distribution<Real> noise(0.0, 1.0);
    Dataset ds;
    ds.num_classes = k;
    ds.inputs = Tensor({k * n_per_class, d});
    ds.labels.reserve(k * n_per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < k; ++c) {
        if (means[c].size() != d) throw DimensionError("class means differ in dimension");
        for (std::size_t j = 0; j < n_per_class; ++j, ++row) {
            auto x = ds.inputs.row(row);
            for (std::size_t i = 0; i < d; ++i) x[i] = means[c][i] + noise(rng);
            ds.labels.push_back(c);
        }
    }
    return ds;
}

/// Class means drawn as random directions scaled to `radius`.
inline std::vector<std::vector<Real>> synth_class_means(std::size_t k, std::size_t d, Real radius, Rng& rng) {
    if (k < 2) throw DomainError("synthetic dataset needs at least 2 classes");
    if (d < 2) throw DomainError("synthetic dataset needs input dimension >= 2");
    std::normal_distribution<Real> gauss(0.0, 1.0);
    std::vector<std::vector<Real>> means(k, std::vector<Real>(d));
    for (auto& m : means) {
        Real norm = 0.0;
        do {
            for (auto& v : m) v = gauss(rng);
            norm = std::sqrt(squared_norm(m));
        } while (norm == 0.0);
        for (auto& v : m) v *= radius / norm;
    }
    return means;
}

/// Desk-scale stand-in for an image benchmark: K Gaussian clusters in d dimensions.
/// The default radius leaves enough overlap that a linear model tops out near 90%.
inline Dataset synth_dataset(std::size_t k, std::size_t n_per_class, std::size_t d, std::uint64_t seed,
                             Real radius = 2.5) {
    auto rng = substream(seed, streams::data);
    const auto means = synth_class_means(k, d, radius, rng);
    return synth_dataset_from_means(means, n_per_class, rng);
}

struct TrainTest {
    Dataset train;
    Dataset test;
};

/// Train set identical to synth_dataset(); the test set shares its class means and draws
/// its noise from a separate substream.
inline TrainTest synth_train_test(std::size_t k, std::size_t n_train, std::size_t n_test, std::size_t d,
                                  std::uint64_t seed, Real radius = 2.5) {
    auto rng = substream(seed, streams::data);
    const auto means = synth_class_means(k, d, radius, rng);
    TrainTest out;
    out.train = synth_dataset_from_means(means, n_train, rng);
    auto test_rng = substream(seed, streams::test_data);
    out.test = synth_dataset_from_means(means, n_test, test_rng);
    return out;
}

// ---------------------------------------------------------------------------
// IDX files (MNIST / FashionMNIST layout, big-endian)

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& path) {
    if (offset + 4 > buf.size()) throw FormatError(path + ": truncated header", buf.size());
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    out.write(bytes, 4);
}

}  // namespace detail

/// Loads an IDX image/label pair. Pixels are scaled to [0,1].
/// The class count is one more than the largest label present.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = detail::read_file(images_path);
    const auto lab = detail::read_file(labels_path);

    if (img.empty()) throw FormatError(images_path + ": empty file", 0);
    if (lab.empty()) throw FormatError(labels_path + ": empty file", 0);
    if (detail::read_be32(img, 0, images_path) != kIdxImagesMagic) {
        throw FormatError(images_path + ": bad IDX image magic", 0);
    }
    if (detail::read_be32(lab, 0, labels_path) != kIdxLabelsMagic) {
        throw FormatError(labels_path + ": bad IDX label magic", 0);
    }
    const std::size_t n = detail::read_be32(img, 4, images_path);
    const std::size_t rows = detail::read_be32(img, 8, images_path);
    const std::size_t cols = detail::read_be32(img, 12, images_path);
    const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
    if (n_labels != n) {
        throw FormatError(labels_path + ": label count " + std::to_string(n_labels) + " != image count " +
                              std::to_string(n),
                          4);
    }
    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + n * pixels) throw FormatError(images_path + ": truncated pixel data", img.size());
    if (lab.size() < 8 + n) throw FormatError(labels_path + ": truncated label data", lab.size());

    Dataset ds;
    ds.inputs = Tensor({n, pixels});
    ds.labels.resize(n);
    ds.image_rows = rows;
    ds.image_cols = cols;
    for (std::size_t i = 0; i < n * pixels; ++i) ds.inputs[i] = static_cast<Real>(img[16 + i]) / 255.0;
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = lab[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = n ? max_label + 1 : 0;
    return ds;
}

/// Inverse of load_idx for [0,1] inputs; pixels are rounded to the nearest byte.
inline void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols, const std::string& images_path,
                      const std::string& labels_path) {
    if (rows * cols != ds.dim()) throw DimensionError("image layout does not match dataset dimension");
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw Error("cannot open IDX output files");
    detail::write_be32(img, kIdxImagesMagic);
    detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
    detail::write_be32(img, static_cast<std::uint32_t>(rows));
    detail::write_be32(img, static_cast<std::uint32_t>(cols));
    for (Real v : ds.inputs.values()) {
        const auto byte = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        img.put(static_cast<char>(byte));
    }
    detail::write_be32(lab, kIdxLabelsMagic);
    detail::write_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (auto y : ds.labels) lab.put(static_cast<char>(y));
}

// ---------------------------------------------------------------------------
// Partitioning

/// Client-by-class sample counts.
using LabelAllocation = Grid<std::size_t>;

enum class Regime { Iid, Dirichlet, Pls, Sls, Maverick, FreeRider, FreeRiderMaverick };

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::Iid: return "iid";
        case Regime::Dirichlet: return "dirichlet";
        case Regime::Pls: return "pls";
        case Regime::Sls: return "sls";
        case Regime::Maverick: return "maverick";
        case Regime::FreeRider: return "freerider";
        case Regime::FreeRiderMaverick: return "freerider_maverick";
    }
    return "?";
}

inline Regime regime_from_string(const std::string& s) {
    for (Regime r : {Regime::Iid, Regime::Dirichlet, Regime::Pls, Regime::Sls, Regime::Maverick, Regime::FreeRider,
                     Regime::FreeRiderMaverick}) {
        if (to_string(r) == s) return r;
    }
    if (s == "frm") return Regime::FreeRiderMaverick;
    if (s == "fr") return Regime::FreeRider;
    throw ConfigError("unknown partition regime '" + s + "'");
}

/// How to split a dataset across clients. Client and class indices are zero-based.
struct PartitionSpec {
    Regime regime = Regime::Iid;
    std::size_t clients = 5;
    std::uint64_t seed = 0;

    // Dirichlet
    Real alpha = 0.5;
    std::size_t min_client_samples = 1;  // redraw Dirichlet proportions until every client meets this
    std::size_t max_redraws = 1000;

    // PLS: number of classes per client (size N); empty selects an even ramp 1..K.
    std::vector<std::size_t> classes_per_client;
    // SLS: client i holds min(K, (i+1) * class_step) classes and (i+1) * sample_step shares of data.
    std::size_t class_step = 0;  // 0 selects ceil(K / N)
    std::size_t sample_step = 1;
    // PLS/SLS: samples per client (PLS) or per share (SLS); 0 uses the largest feasible value.
    std::size_t samples_per_client = 0;

    // Maverick: the rare classes are held exclusively by one client.
    std::vector<std::size_t> rare_classes;
    std::size_t maverick_client = 0;
    // Free-rider: a small budget of well-represented classes.
    std::size_t free_rider_client = 0;
    std::vector<std::size_t> free_rider_classes;  // empty selects every non-rare class
    Real free_rider_fraction = 0.01;              // budget as a fraction of the average honest client size
};

struct Partition {
    std::vector<Dataset> clients;
    LabelAllocation allocation;
    std::vector<std::vector<std::size_t>> indices;  // source rows per client
};

namespace detail {

/// Distributes `total` across weights with floor plus largest-remainder correction.
/// Ties in the remainder go to the lower index.
inline std::vector<std::size_t> largest_remainder(std::span<const Real> weights, std::size_t total) {
    const Real wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> out(weights.size(), 0);
    if (weights.empty() || wsum <= 0.0) return out;
    std::vector<std::pair<Real, std::size_t>> rema;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const Real exact = static_cast<Real>(total) * weights[i] / wsum;
        out[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += out[i];
        rema.emplace_back(exact - static_cast<Real>(out[i]), i);
    }
    std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t j = 0; assigned < total && j < rema.size(); ++j, ++assigned) ++out[rema[j].second];
    return out;
}

/// Dir(alpha * 1_n) via normalized log-gammas; stable for very small alpha.
inline std::vector<Real> dirichlet(std::size_t n, Real alpha, Rng& rng) {
    std::vector<Real> logs(n);
    std::gamma_distribution<Real> gamma(alpha + 1.0, 1.0);
    std::uniform_real_distribution<Real> unif(0.0, 1.0);
    for (auto& l : logs) {
        // Gamma(a) = Gamma(a + 1) * U^(1/a)
        Real u = unif(rng);
        while (u <= 0.0) u = unif(rng);
        l = std::log(gamma(rng)) + std::log(u) / alpha;
    }
    const Real mx = *std::max_element(logs.begin(), logs.end());
    std::vector<Real> p(n);
    Real s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (p[i] = std::exp(logs[i] - mx));
    for (auto& v : p) v /= s;
    return p;
}

inline std::vector<std::vector<std::size_t>> class_pools(const Dataset& ds, Rng& rng) {
    std::vector<std::vector<std::size_t>> pools(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) pools[ds.labels[i]].push_back(i);
    for (auto& p : pools) std::shuffle(p.begin(), p.end(), rng);
    return pools;
}

inline void check_supply(const LabelAllocation& alloc, const std::vector<std::size_t>& supply) {
    const auto cols = alloc.col_sums();
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c] > supply[c]) {
            throw AllocationError("class " + std::to_string(c + 1) + " needs " + std::to_string(cols[c]) +
                                  " samples but the supply is " + std::to_string(supply[c]));
        }
    }
}

inline void check_nonempty_clients(const LabelAllocation& alloc) {
    const auto rows = alloc.row_sums();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] == 0) throw AllocationError("client " + std::to_string(i + 1) + " would receive no samples");
    }
}

/// Evenly spread `supply` of every class in `classes` over `members`.
inline void spread_iid(LabelAllocation& alloc, std::span<const std::size_t> members,
                       std::span<const std::size_t> classes, const std::vector<std::size_t>& supply) {
    std::vector<Real> w(members.size(), 1.0);
    for (std::size_t c : classes) {
        const auto counts = largest_remainder(w, supply[c]);
        for (std::size_t j = 0; j < members.size(); ++j) alloc(members[j], c) += counts[j];
    }
}

inline std::vector<std::size_t> pls_classes_per_client(const PartitionSpec& spec, std::size_t k) {
    if (!spec.classes_per_client.empty()) {
        if (spec.classes_per_client.size() != spec.clients) {
            throw ConfigError("classes_per_client needs one entry per client");
        }
        for (auto v : spec.classes_per_client) {
            if (v == 0 || v > k) throw ConfigError("classes_per_client entries must lie in 1..K");
        }
        return spec.classes_per_client;
    }
    std::vector<std::size_t> out(spec.clients);
    for (std::size_t i = 0; i < spec.clients; ++i) {
        const Real frac = spec.clients == 1 ? 1.0 : static_cast<Real>(i) / static_cast<Real>(spec.clients - 1);
        out[i] = 1 + static_cast<std::size_t>(std::lround(frac * static_cast<Real>(k - 1)));
    }
    return out;
}

/// Allocation for regimes where every client's count of class c is share_i(c) * scale.
/// `shares(i, c)` is a relative weight; the scale is the largest one that fits the supply
/// unless `fixed_scale` is nonzero.
inline LabelAllocation scaled_allocation(const Matrix& shares, const std::vector<std::size_t>& supply,
                                         std::size_t fixed_scale) {
    const std::size_t n = shares.rows();
    const std::size_t k = shares.cols();
    Real scale = static_cast<Real>(fixed_scale);
    if (fixed_scale == 0) {
        scale = std::numeric_limits<Real>::infinity();
        const auto demand = shares.col_sums();
        for (std::size_t c = 0; c < k; ++c) {
            if (demand[c] > 0.0) scale = std::min(scale, static_cast<Real>(supply[c]) / demand[c]);
        }
        scale = std::floor(scale);
    }
    auto build = [&](Real s) {
        LabelAllocation alloc(n, k);
        for (std::size_t i = 0; i < n; ++i) {
            const Real row_total = std::accumulate(shares.row(i).begin(), shares.row(i).end(), 0.0);
            const auto counts = largest_remainder(shares.row(i), static_cast<std::size_t>(std::lround(s * row_total)));
            for (std::size_t c = 0; c < k; ++c) alloc(i, c) = counts[c];
        }
        return alloc;
    };
    auto fits = [&](const LabelAllocation& alloc) {
        const auto cols = alloc.col_sums();
        for (std::size_t c = 0; c < k; ++c)
            if (cols[c] > supply[c]) return false;
        return true;
    };
    LabelAllocation alloc = build(scale);
    // Rounding can push a column a few samples past its supply; shrink until it fits.
    while (fixed_scale == 0 && scale > 1.0 && !fits(alloc)) alloc = build(--scale);
    return alloc;
}

inline LabelAllocation allocate_dirichlet(const PartitionSpec& spec, const std::vector<std::size_t>& supply,
                                          Rng& rng) {
    const std::size_t n = spec.clients;
    const std::size_t k = supply.size();
    for (std::size_t attempt = 0; attempt < spec.max_redraws; ++attempt) {
        LabelAllocation alloc(n, k);
        for (std::size_t c = 0; c < k; ++c) {
            const auto p = dirichlet(n, spec.alpha, rng);
            const auto counts = largest_remainder(p, supply[c]);
            for (std::size_t i = 0; i < n; ++i) alloc(i, c) = counts[i];
        }
        const auto rows = alloc.row_sums();
        if (std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return r >= spec.min_client_samples; })) {
            return alloc;
        }
    }
    throw AllocationError("Dirichlet split left a client below " + std::to_string(spec.min_client_samples) +
                          " samples after " + std::to_string(spec.max_redraws) + " redraws");
}

inline LabelAllocation allocate_special(const PartitionSpec& spec, const std::vector<std::size_t>& supply) {
    const std::size_t n = spec.clients;
    const std::size_t k = supply.size();
    const bool with_maverick = spec.regime == Regime::Maverick || spec.regime == Regime::FreeRiderMaverick;
    const bool with_free_rider = spec.regime == Regime::FreeRider || spec.regime == Regime::FreeRiderMaverick;

    std::vector<bool> rare(k, false);
    if (with_maverick) {
        if (spec.rare_classes.empty()) throw ConfigError("Maverick split needs at least one rare class");
        if (spec.maverick_client >= n) throw ConfigError("maverick client index out of range");
        for (auto c : spec.rare_classes) {
            if (c >= k || supply[c] == 0) {
                throw AllocationError("rare class " + std::to_string(c + 1) + " is absent from the dataset");
            }
            rare[c] = true;
        }
    }
    if (with_free_rider && spec.free_rider_client >= n) throw ConfigError("free-rider client index out of range");
    if (with_maverick && with_free_rider && spec.free_rider_client == spec.maverick_client) {
        throw ConfigError("free-rider and Maverick must be different clients");
    }

    std::vector<std::size_t> fr_classes;
    if (with_free_rider) {
        if (spec.free_rider_classes.empty()) {
            for (std::size_t c = 0; c < k; ++c)
                if (!rare[c]) fr_classes.push_back(c);
        } else {
            fr_classes = spec.free_rider_classes;
        }
        for (auto c : fr_classes) {
            if (c >= k) throw ConfigError("free-rider class out of range");
            if (rare[c]) throw ConfigError("free-rider classes must be disjoint from the rare classes");
        }
    }

    LabelAllocation alloc(n, k);
    std::vector<std::size_t> remaining = supply;
    if (with_maverick) {
        for (auto c : spec.rare_classes) {
            alloc(spec.maverick_client, c) = supply[c];
            remaining[c] = 0;
        }
    }

    std::vector<std::size_t> honest;
    for (std::size_t i = 0; i < n; ++i) {
        if (with_maverick && i == spec.maverick_client) continue;
        if (with_free_rider && i == spec.free_rider_client) continue;
        honest.push_back(i);
    }
    std::vector<std::size_t> common;
    for (std::size_t c = 0; c < k; ++c)
        if (!rare[c]) common.push_back(c);

    if (with_free_rider) {
        // Budget B = f * (average size of the other clients), where the others share all
        // supply except B itself: B = f * (S - B) / M  =>  B = f * S / (M + f).
        std::size_t total = 0;
        for (std::size_t c = 0; c < k; ++c) total += supply[c];
        const std::size_t others = n - 1;
        const Real budget_real = spec.free_rider_fraction * static_cast<Real>(total) /
                                 (static_cast<Real>(others) + spec.free_rider_fraction);
        const auto budget = static_cast<std::size_t>(std::lround(budget_real));
        std::vector<Real> w(fr_classes.size(), 1.0);
        const auto counts = largest_remainder(w, budget);
        for (std::size_t j = 0; j < fr_classes.size(); ++j) {
            const std::size_t c = fr_classes[j];
            if (counts[j] > remaining[c]) throw AllocationError("free-rider budget exceeds class supply");
            alloc(spec.free_rider_client, c) = counts[j];
            remaining[c] -= counts[j];
        }
    }
    if (!honest.empty()) spread_iid(alloc, honest, common, remaining);
    return alloc;
}

}  // namespace detail

/// Client-by-class counts for a split regime, before any samples are drawn.
inline LabelAllocation plan_allocation(const std::vector<std::size_t>& supply, const PartitionSpec& spec) {
    const std::size_t n = spec.clients;
    const std::size_t k = supply.size();
    if (n == 0) throw ConfigError("partition needs at least one client");
    if (k == 0) throw ConfigError("partition needs at least one class");
    auto rng = substream(spec.seed, streams::partition, {1});

    switch (spec.regime) {
        case Regime::Iid: {
            LabelAllocation alloc(n, k);
            std::vector<std::size_t> members(n), classes(k);
            std::iota(members.begin(), members.end(), 0);
            std::iota(classes.begin(), classes.end(), 0);
            detail::spread_iid(alloc, members, classes, supply);
            return alloc;
        }
        case Regime::Dirichlet: {
            if (!(spec.alpha > 0.0)) throw ConfigError("Dirichlet alpha must be positive");
            return detail::allocate_dirichlet(spec, supply, rng);
        }
        case Regime::Pls: {
            // Client i holds k_i consecutive classes starting at i*K/N; every client gets the same total.
            const auto per_client = detail::pls_classes_per_client(spec, k);
            Matrix shares(n, k);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t start = i * k / n;
                for (std::size_t j = 0; j < per_client[i]; ++j) {
                    shares(i, (start + j) % k) = 1.0 / static_cast<Real>(per_client[i]);
                }
            }
            return detail::scaled_allocation(shares, supply, spec.samples_per_client);
        }
        case Regime::Sls: {
            // Client i holds the first min(K, (i+1)*step) classes and (i+1)*sample_step data shares.
            const std::size_t step = spec.class_step ? spec.class_step : (k + n - 1) / n;
            Matrix shares(n, k);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t held = std::min(k, (i + 1) * step);
                const Real total = static_cast<Real>((i + 1) * spec.sample_step);
                for (std::size_t c = 0; c < held; ++c) shares(i, c) = total / static_cast<Real>(held);
            }
            return detail::scaled_allocation(shares, supply, spec.samples_per_client);
        }
        case Regime::Maverick:
        case Regime::FreeRider:
        case Regime::FreeRiderMaverick:
            return detail::allocate_special(spec, supply);
    }
    throw ConfigError("unhandled partition regime");
}

/// Splits `ds` into disjoint client datasets. The returned allocation tallies them exactly.
inline Partition partition(const Dataset& ds, const PartitionSpec& spec) {
    ds.validate();
    const auto supply = ds.class_counts();
    LabelAllocation alloc = plan_allocation(supply, spec);
    detail::check_supply(alloc, supply);
    detail::check_nonempty_clients(alloc);

    auto rng = substream(spec.seed, streams::partition, {2});
    auto pools = detail::class_pools(ds, rng);
    std::vector<std::size_t> cursor(ds.num_classes, 0);

    Partition out;
    out.indices.resize(spec.clients);
    for (std::size_t i = 0; i < spec.clients; ++i) {
        for (std::size_t c = 0; c < ds.num_classes; ++c) {
            for (std::size_t j = 0; j < alloc(i, c); ++j) out.indices[i].push_back(pools[c][cursor[c]++]);
        }
        std::sort(out.indices[i].begin(), out.indices[i].end());
        out.clients.push_back(ds.subset(out.indices[i]));
    }
    out.allocation = std::move(alloc);
    return out;
}

/// Maverick / free-rider constructions; same contract as `partition` for those regimes.
inline Partition maverick_freerider_split(const Dataset& ds, const PartitionSpec& spec) {
    if (spec.regime != Regime::Maverick && spec.regime != Regime::FreeRider &&
        spec.regime != Regime::FreeRiderMaverick) {
        throw ConfigError("maverick_freerider_split needs a Maverick or free-rider regime");
    }
    return partition(ds, spec);
}

}  // namespace celm
