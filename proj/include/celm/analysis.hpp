#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "celm/error.hpp"
#include "celm/estimator.hpp"
#include "celm/tensor.hpp"

namespace celm::analysis {

// ---------------------------------------------------------------------------
// Free-rider detection

/// Standardized contributions with the population standard deviation.
/// Zero spread means nobody stands out: every z is 0.
inline std::vector<Real> zscores(std::span<const Real> contribs) {
    if (contribs.size() < 2) throw DomainError("z-scores need at least two clients");
    const Real n = static_cast<Real>(contribs.size());
    const Real mean = std::accumulate(contribs.begin(), contribs.end(), 0.0) / n;
    Real var = 0.0;
    for (Real v : contribs) var += (v - mean) * (v - mean);
    const Real sd = std::sqrt(var / n);
    std::vector<Real> z(contribs.size(), 0.0);
    if (sd > 0.0) {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = (contribs[i] - mean) / sd;
    }
    return z;
}

/// Flags clients whose z-score lies strictly below `threshold`.
inline std::vector<bool> zscore_flags(std::span<const Real> contribs, Real threshold) {
    const auto z = zscores(contribs);
    std::vector<bool> flags(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) flags[i] = z[i] < threshold;
    return flags;
}

/// Area under the ROC curve for ranking flagged (positive) clients *below* the others.
///
/// Equals P(score_pos < score_neg) with ties counted as one half, computed from midranks.
inline Real auroc(std::span<const Real> scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) throw DimensionError("scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Descending scores: the lowest contribution gets the highest rank.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<Real> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const Real mid = (static_cast<Real>(i + 1) + static_cast<Real>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    Real pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (positive[i]) {
            pos_rank_sum += rank[i];
            ++n_pos;
        }
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DomainError("AUROC needs at least one positive and one negative client");
    const Real np = static_cast<Real>(n_pos);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<Real>(n_neg));
}

/// AUROC of each round's contribution vector, averaged over rounds.
inline Real mean_auroc(const std::vector<std::vector<Real>>& trace, const std::vector<bool>& positive) {
    if (trace.empty()) throw DomainError("empty contribution trace");
    Real s = 0.0;
    for (const auto& round : trace) s += auroc(round, positive);
    return s / static_cast<Real>(trace.size());
}

/// Default threshold grid for FPR averaging: -2.0 to -0.5 in steps of 0.25.
inline std::vector<Real> default_thresholds() {
    std::vector<Real> t;
    for (int i = -8; i <= -2; ++i) t.push_back(0.25 * i);
    return t;
}

/// Fraction of honest clients flagged, averaged over thresholds and rounds.
inline Real fpr_sweep(const std::vector<std::vector<Real>>& trace, std::span<const Real> thresholds,
                      const std::vector<bool>& free_rider) {
    if (trace.empty()) throw DomainError("empty contribution trace");
    if (thresholds.empty()) throw DomainError("threshold list is empty");
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
        if (!(thresholds[i] > thresholds[i - 1])) throw DomainError("thresholds must be strictly increasing");
    }
    const auto honest = static_cast<std::size_t>(std::count(free_rider.begin(), free_rider.end(), false));
    if (honest == 0) throw DomainError("FPR needs at least one honest client");
    Real total = 0.0;
    for (const auto& round : trace) {
        if (round.size() != free_rider.size()) throw DimensionError("trace row length differs from label mask");
        for (Real t : thresholds) {
            const auto flags = zscore_flags(round, t);
            std::size_t fp = 0;
            for (std::size_t i = 0; i < flags.size(); ++i)
                if (flags[i] && !free_rider[i]) ++fp;
            total += static_cast<Real>(fp) / static_cast<Real>(honest);
        }
    }
    return total / static_cast<Real>(trace.size() * thresholds.size());
}

// ---------------------------------------------------------------------------
// Distribution distances

namespace detail {
inline void check_distributions(std::span<const Real> p, std::span<const Real> q) {
    if (p.size() != q.size() || p.empty()) throw DimensionError("distributions must share a nonempty support");
    auto check = [](std::span<const Real> d) {
        Real s = 0.0;
        for (Real v : d) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("distribution entries must be nonnegative");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-6) throw DomainError("distribution does not sum to 1");
    };
    check(p);
    check(q);
}

inline Real kl_term(Real a, Real m) { return a > 0.0 ? a * std::log(a / m) : 0.0; }
}  // namespace detail

/// Jensen-Shannon divergence in nats; lies in [0, ln 2].
inline Real jsd(std::span<const Real> p, std::span<const Real> q) {
    detail::check_distributions(p, q);
    Real kp = 0.0, kq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Real m = 0.5 * (p[i] + q[i]);
        kp += detail::kl_term(p[i], m);
        kq += detail::kl_term(q[i], m);
    }
    return std::max(0.0, 0.5 * kp + 0.5 * kq);
}

/// 1-D earth mover distance over class indices with ground distance 1/K per step.
inline Real emd_1d(std::span<const Real> p, std::span<const Real> q) {
    detail::check_distributions(p, q);
    const Real delta = 1.0 / static_cast<Real>(p.size());
    Real cp = 0.0, cq = 0.0, s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        cp += p[i];
        cq += q[i];
        s += std::abs(cp - cq);
    }
    return s * delta;
}

/// Hellinger distance sqrt(1 - sum sqrt(p q)); lies in [0, 1].
inline Real hellinger(std::span<const Real> p, std::span<const Real> q) {
    detail::check_distributions(p, q);
    Real bc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) bc += std::sqrt(p[i] * q[i]);
    return std::sqrt(std::max(0.0, 1.0 - bc));
}

struct Distances {
    Real jsd = 0.0;
    Real emd = 0.0;
    Real hellinger = 0.0;
};

inline Distances distances(std::span<const Real> p, std::span<const Real> q) {
    return {analysis::jsd(p, q), analysis::emd_1d(p, q), analysis::hellinger(p, q)};
}

/// Distances to the true class distribution from a uniform guess and from the estimate,
/// for the global marginal and averaged over client rows.
struct FidelityReport {
    Distances uniform_global;
    Distances estimated_global;
    Distances uniform_clients;
    Distances estimated_clients;
};

inline std::vector<Real> normalized(std::span<const Real> v) {
    const Real s = std::accumulate(v.begin(), v.end(), 0.0);
    if (!(s > 0.0)) throw UndefinedDistribution("cannot normalize an all-zero vector");
    std::vector<Real> out(v.begin(), v.end());
    for (auto& x : out) x /= s;
    return out;
}

template <typename Count>
inline FidelityReport fidelity(const DistributionEstimate& est, const Grid<Count>& truth) {
    if (est.clients.rows() != truth.rows() || est.clients.cols() != truth.cols()) {
        throw DimensionError("estimated and true allocations differ in shape");
    }
    const std::size_t n = truth.rows();
    const std::size_t k = truth.cols();
    const std::vector<Real> uniform(k, 1.0 / static_cast<Real>(k));

    auto to_real = [](std::span<const Count> v) { return std::vector<Real>(v.begin(), v.end()); };
    const auto true_global = normalized(to_real(truth.col_sums()));

    FidelityReport rep;
    rep.uniform_global = distances(uniform, true_global);
    rep.estimated_global = distances(est.global, true_global);
    std::size_t counted = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = to_real(truth.row(i));
        if (std::accumulate(row.begin(), row.end(), 0.0) <= 0.0) continue;
        const auto t = normalized(row);
        const auto u = distances(uniform, t);
        const auto e = distances(est.clients.row(i), t);
        rep.uniform_clients.jsd += u.jsd;
        rep.uniform_clients.emd += u.emd;
        rep.uniform_clients.hellinger += u.hellinger;
        rep.estimated_clients.jsd += e.jsd;
        rep.estimated_clients.emd += e.emd;
        rep.estimated_clients.hellinger += e.hellinger;
        ++counted;
    }
    if (counted > 0) {
        for (Distances* d : {&rep.uniform_clients, &rep.estimated_clients}) {
            d->jsd /= static_cast<Real>(counted);
            d->emd /= static_cast<Real>(counted);
            d->hellinger /= static_cast<Real>(counted);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Accuracy

struct AccuracyBreakdown {
    Real accuracy = 0.0;
    Real balanced = 0.0;  // mean recall over classes present in the labels
    Real rare = std::numeric_limits<Real>::quiet_NaN();
    std::vector<Real> per_class;  // recall per class; NaN when the class has no samples
};

inline AccuracyBreakdown accuracy_decomposition(std::span<const std::size_t> predictions,
                                                std::span<const std::size_t> labels, std::size_t num_classes,
                                                std::span<const std::size_t> rare_classes = {}) {
    if (predictions.size() != labels.size()) throw DimensionError("prediction and label counts differ");
    std::vector<std::size_t> hit(num_classes, 0), support(num_classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) throw DomainError("label outside class range");
        ++support[labels[i]];
        if (predictions[i] == labels[i]) {
            ++hit[labels[i]];
            ++correct;
        }
    }
    AccuracyBreakdown out;
    out.accuracy = labels.empty() ? 0.0 : static_cast<Real>(correct) / static_cast<Real>(labels.size());
    out.per_class.resize(num_classes);
    Real sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (support[c] == 0) {
            out.per_class[c] = std::numeric_limits<Real>::quiet_NaN();
            continue;
        }
        out.per_class[c] = static_cast<Real>(hit[c]) / static_cast<Real>(support[c]);
        sum += out.per_class[c];
        ++present;
    }
    out.balanced = present ? sum / static_cast<Real>(present) : 0.0;
    if (!rare_classes.empty()) {
        Real rs = 0.0;
        std::size_t rn = 0;
        for (auto c : rare_classes) {
            if (c >= num_classes) throw DomainError("rare class outside class range");
            if (support[c] == 0) continue;
            rs += out.per_class[c];
            ++rn;
        }
        if (rn) out.rare = rs / static_cast<Real>(rn);
    }
    return out;
}

}  // namespace celm::analysis
