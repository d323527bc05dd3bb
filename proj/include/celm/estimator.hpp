#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "celm/error.hpp"
#include "celm/log.hpp"
#include "celm/tensor.hpp"

namespace celm {

inline constexpr Real kDefaultShareEpsilon = 1e-8;

/// Q[i][c] = max(0, raw[i][c] - b): client-class evidence above the global baseline.
inline Matrix debias(const Matrix& raw, Real baseline) {
    if (!std::isfinite(baseline)) throw DomainError("baseline must be finite");
    Matrix q(raw.rows(), raw.cols());
    for (std::size_t i = 0; i < raw.rows(); ++i)
        for (std::size_t c = 0; c < raw.cols(); ++c) q(i, c) = std::max(0.0, raw(i, c) - baseline);
    return q;
}

/// r[i][c] = Q[i][c] / (sum_j Q[j][c] + eps). Normalizing per class keeps a client that
/// dominates frequent classes from also owning the rare ones.
inline Matrix class_shares(const Matrix& q, Real eps = kDefaultShareEpsilon) {
    if (!(eps > 0.0)) throw DomainError("share epsilon must be positive");
    const auto col = q.col_sums();
    Matrix r(q.rows(), q.cols());
    for (std::size_t i = 0; i < q.rows(); ++i)
        for (std::size_t c = 0; c < q.cols(); ++c) r(i, c) = q(i, c) / (col[c] + eps);
    return r;
}

/// Mean share over classes, one score per client.
inline std::vector<Real> client_scores(const Matrix& r) {
    if (r.cols() == 0) throw DimensionError("share matrix has no classes");
    std::vector<Real> out = r.row_sums();
    for (auto& v : out) v /= static_cast<Real>(r.cols());
    return out;
}

/// Projects nonnegative scores onto the simplex by dividing by their sum. An all-zero
/// vector has no direction to keep, so it falls back to uniform and logs a warning.
inline std::vector<Real> simplex_normalize(std::span<const Real> scores) {
    if (scores.empty()) throw DimensionError("cannot normalize an empty score vector");
    for (Real v : scores) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("scores must be finite and nonnegative");
    }
    const Real total = std::accumulate(scores.begin(), scores.end(), 0.0);
    std::vector<Real> out(scores.size());
    if (total <= 0.0) {
        log::warn("degenerate round: all contribution scores are zero, using uniform weights");
        std::fill(out.begin(), out.end(), 1.0 / static_cast<Real>(scores.size()));
        return out;
    }
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] / total;
    return out;
}

inline bool on_simplex(std::span<const Real> w, Real tol = 1e-9) {
    if (w.empty()) return false;
    Real s = 0.0;
    for (Real v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) return false;
        s += v;
    }
    return std::abs(s - 1.0) <= tol;
}

/// EMA-smoothed client weights with a freeze after the warm-up horizon.
class ContributionState {
public:
    ContributionState() = default;

    /// Starts at the uniform vector 1/N.
    ContributionState(std::size_t clients, Real beta, std::size_t warmup_horizon, Real eps = kDefaultShareEpsilon)
        : beta_(beta),
          eps_(eps),
          warmup_(warmup_horizon),
          current_(clients, clients ? 1.0 / static_cast<Real>(clients) : 0.0),
          previous_(current_),
          bar_(current_) {
        if (clients == 0) throw ConfigError("contribution state needs at least one client");
        if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("EMA factor must lie in [0, 1)");
        if (!(eps > 0.0)) throw ConfigError("share epsilon must be positive");
        if (warmup_ == 0) frozen_ = true;
    }

    Real beta() const noexcept { return beta_; }
    Real epsilon() const noexcept { return eps_; }
    std::size_t warmup_horizon() const noexcept { return warmup_; }
    bool frozen() const noexcept { return frozen_; }
    std::size_t clients() const noexcept { return current_.size(); }

    const std::vector<Real>& current() const noexcept { return current_; }
    const std::vector<Real>& previous() const noexcept { return previous_; }
    const std::vector<Real>& instantaneous() const noexcept { return bar_; }

    /// c <- beta * c_prev + (1 - beta) * c_bar. Rejected once frozen.
    void ema_update(std::span<const Real> c_bar) {
        if (frozen_) throw FrozenStateError("contribution weights are frozen after the warm-up horizon");
        if (c_bar.size() != current_.size()) throw DimensionError("instantaneous score vector has wrong length");
        if (!on_simplex(c_bar)) throw ContractError("instantaneous scores must lie on the simplex");
        previous_ = current_;
        bar_.assign(c_bar.begin(), c_bar.end());
        for (std::size_t i = 0; i < current_.size(); ++i) {
            current_[i] = beta_ * previous_[i] + (1.0 - beta_) * bar_[i];
        }
    }

    /// Freezes at the end of round `round` once it reaches the warm-up horizon.
    void maybe_freeze(std::size_t round) {
        if (!frozen_ && round >= warmup_) frozen_ = true;
    }

private:
    Real beta_ = 0.5;
    Real eps_ = kDefaultShareEpsilon;
    std::size_t warmup_ = 0;
    bool frozen_ = false;
    std::vector<Real> current_;
    std::vector<Real> previous_;
    std::vector<Real> bar_;
};

/// Default warm-up horizon: ceil(fraction * T).
inline std::size_t warmup_horizon(std::size_t total_rounds, Real fraction = 0.05) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("warm-up fraction must lie in [0, 1]");
    // Guard against 0.05 * 100 landing a hair above 5 in floating point.
    const Real exact = fraction * static_cast<Real>(total_rounds);
    const Real rounded = std::round(exact);
    const Real v = std::abs(exact - rounded) < 1e-9 ? rounded : std::ceil(exact);
    return static_cast<std::size_t>(v);
}

struct DistributionEstimate {
    Matrix clients;           // row i: estimated class distribution of client i
    std::vector<Real> global; // estimated global class distribution
};

/// Reads evidence as class distributions: rows normalized per client, and column mass
/// over total mass for the cohort. An all-zero row maps to uniform.
inline DistributionEstimate estimate_distributions(const Matrix& q) {
    if (q.rows() == 0 || q.cols() == 0) throw DimensionError("evidence matrix is empty");
    const auto rows = q.row_sums();
    const auto cols = q.col_sums();
    const Real total = std::accumulate(rows.begin(), rows.end(), 0.0);
    if (!(total > 0.0)) throw UndefinedDistribution("evidence matrix has no positive entry");
    DistributionEstimate out;
    out.clients = Matrix(q.rows(), q.cols());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        for (std::size_t c = 0; c < q.cols(); ++c) {
            out.clients(i, c) = rows[i] > 0.0 ? q(i, c) / rows[i] : 1.0 / static_cast<Real>(q.cols());
        }
    }
    out.global.resize(q.cols());
    for (std::size_t c = 0; c < q.cols(); ++c) out.global[c] = cols[c] / total;
    return out;
}

/// Everything computed in one estimation round, kept for offline re-derivation.
struct EstimatorRecord {
    std::size_t round = 0;
    Matrix raw;  // un-debiased client scores
    Matrix q;
    Real baseline = 0.0;
    Matrix r;
    std::vector<Real> c_hat;
    std::vector<Real> c_bar;
    std::vector<Real> c;
    bool frozen = false;
};

/// One warm-up estimation step from raw client probe scores and the global baseline.
inline EstimatorRecord estimate_round(ContributionState& state, std::size_t round, const Matrix& raw, Real baseline) {
    EstimatorRecord rec;
    rec.round = round;
    rec.raw = raw;
    rec.baseline = baseline;
    rec.q = debias(raw, baseline);
    rec.r = class_shares(rec.q, state.epsilon());
    rec.c_hat = client_scores(rec.r);
    rec.c_bar = simplex_normalize(rec.c_hat);
    state.ema_update(rec.c_bar);
    state.maybe_freeze(round);
    rec.c = state.current();
    rec.frozen = state.frozen();
    return rec;
}

}  // namespace celm
