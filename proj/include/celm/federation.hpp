#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "celm/analysis.hpp"
#include "celm/data.hpp"
#include "celm/error.hpp"
#include "celm/estimator.hpp"
#include "celm/log.hpp"
#include "celm/nn.hpp"
#include "celm/parallel.hpp"
#include "celm/probe.hpp"
#include "celm/rng.hpp"

namespace celm {

struct RoundConfig {
    std::size_t total_rounds = 30;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 128;
    StepSchedule client_lr{0.1, 0, 0.1};
    std::uint64_t seed = 0;
    std::size_t warmup_rounds = 2;  // T_w; only consulted by CELM

    void validate() const {
        if (total_rounds < 1) throw ConfigError("need at least one round");
        if (warmup_rounds > total_rounds) throw ConfigError("warm-up horizon exceeds total rounds");
        if (batch_size < 1) throw ConfigError("batch size must be positive");
        if (local_epochs < 1) throw ConfigError("need at least one local epoch");
        if (!(client_lr.base >= 0.0)) throw ConfigError("client learning rate must be nonnegative");
    }
};

enum class StrategyKind { UniformFedAvg, Celm, Cgsv };

inline std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::UniformFedAvg: return "fedavg";
        case StrategyKind::Celm: return "celm";
        case StrategyKind::Cgsv: return "cgsv";
    }
    return "?";
}

inline StrategyKind strategy_from_string(const std::string& s) {
    if (s == "fedavg" || s == "uniform") return StrategyKind::UniformFedAvg;
    if (s == "celm") return StrategyKind::Celm;
    if (s == "cgsv") return StrategyKind::Cgsv;
    throw ConfigError("unknown strategy '" + s + "' (expected fedavg, celm or cgsv)");
}

/// Client weighting rule plus whatever it remembers between rounds.
struct AggregationStrategy {
    StrategyKind kind = StrategyKind::UniformFedAvg;
    ContributionState celm;                 // CELM only
    std::vector<Real> cgsv_reputation;      // CGSV only: EMA of per-round cosine weights
    Real beta = 0.5;

    static AggregationStrategy uniform() { return {}; }

    static AggregationStrategy make_celm(std::size_t clients, Real beta, std::size_t warmup, Real eps) {
        AggregationStrategy s;
        s.kind = StrategyKind::Celm;
        s.beta = beta;
        s.celm = ContributionState(clients, beta, warmup, eps);
        return s;
    }

    static AggregationStrategy make_cgsv(std::size_t clients, Real beta) {
        if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("EMA factor must lie in [0, 1)");
        AggregationStrategy s;
        s.kind = StrategyKind::Cgsv;
        s.beta = beta;
        s.cgsv_reputation.assign(clients, 1.0 / static_cast<Real>(clients));
        return s;
    }
};

struct FederationState {
    MlpModel global_model;
    std::vector<MlpModel> client_models;
    std::size_t round = 0;  // rounds completed
    ProbeBank probe_bank;

    /// Every client starts as a copy of the initial global model; probe images ~ N(0, 1).
    static FederationState initial(MlpModel global, std::size_t clients, Rng& probe_rng) {
        FederationState s;
        s.client_models.assign(clients, global);
        s.probe_bank = ProbeBank::gaussian(clients + 1, global.num_classes(), global.input_dim(), probe_rng);
        s.global_model = std::move(global);
        return s;
    }
};

/// Copies the global model into every client. During warm-up only the backbone is
/// copied and each client keeps its own classifier head.
inline void broadcast(FederationState& state, bool warmup) {
    const auto& global = state.global_model.layers();
    for (auto& client : state.client_models) {
        if (!client.same_architecture(state.global_model)) throw DimensionError("client architecture mismatch");
        if (!warmup) {
            client = state.global_model;
            continue;
        }
        for (std::size_t l = 0; l < state.global_model.head_index(); ++l) client.layers()[l] = global[l];
    }
}

/// One or more epochs of mini-batch SGD over a shuffle seeded by (seed, round, client).
/// Returns the mean batch loss of the final epoch; an empty dataset is skipped.
inline Real local_train(MlpModel& model, const Dataset& data, const RoundConfig& cfg, std::size_t round,
                        std::size_t client) {
    if (data.empty()) {
        log::warn("client " + std::to_string(client + 1) + " has no data; skipping local training");
        return 0.0;
    }
    auto rng = substream(cfg.seed, streams::shuffle, {round, client});
    Sgd sgd(cfg.client_lr.at(round));
    std::vector<std::size_t> order(data.size());
    const std::size_t d = data.dim();
    Real last_epoch_loss = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        Real loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Tensor x({end - start, d});
            std::vector<std::size_t> y(end - start);
            for (std::size_t j = start; j < end; ++j) {
                const auto src = data.inputs.row(order[j]);
                std::copy(src.begin(), src.end(), x.row(j - start).begin());
                y[j - start] = data.labels[order[j]];
            }
            auto lg = loss_and_param_grad(model, x, y);
            sgd.step(model, lg.grads);
            loss_sum += lg.loss;
            ++batches;
        }
        last_epoch_loss = loss_sum / static_cast<Real>(batches);
    }
    return last_epoch_loss;
}

/// Weighted parameter average. Weights must lie on the simplex.
inline MlpModel aggregate(const std::vector<MlpModel>& clients, std::span<const Real> weights) {
    if (clients.empty()) throw ContractError("nothing to aggregate");
    if (weights.size() != clients.size()) throw ContractError("one weight per client required");
    if (!on_simplex(weights)) throw ContractError("aggregation weights must be nonnegative and sum to 1");
    MlpModel out = clients.front();
    auto& layers = out.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        for (Tensor* t : {&layers[l].weights, &layers[l].bias}) {
            const bool is_w = t == &layers[l].weights;
            for (std::size_t k = 0; k < t->size(); ++k) {
                Real s = 0.0;
                for (std::size_t i = 0; i < clients.size(); ++i) {
                    const auto& src = clients[i].layers()[l];
                    s += weights[i] * (is_w ? src.weights[k] : src.bias[k]);
                }
                (*t)[k] = s;
            }
        }
    }
    return out;
}

/// Cosine of each update against a reference direction, negatives clamped to zero,
/// then projected onto the simplex (uniform when every cosine is non-positive).
inline std::vector<Real> cosine_weights(const std::vector<std::vector<Real>>& deltas, std::span<const Real> reference) {
    std::vector<Real> cos(deltas.size(), 0.0);
    const Real ref_norm = std::sqrt(squared_norm(reference));
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        if (deltas[i].size() != reference.size()) throw DimensionError("update length mismatch");
        const Real n = std::sqrt(squared_norm(deltas[i]));
        if (n > 0.0 && ref_norm > 0.0) cos[i] = std::max(0.0, dot(deltas[i], reference) / (n * ref_norm));
    }
    const Real s = std::accumulate(cos.begin(), cos.end(), 0.0);
    if (s <= 0.0) return std::vector<Real>(deltas.size(), 1.0 / static_cast<Real>(deltas.size()));
    for (auto& v : cos) v /= s;
    return cos;
}

/// Similarity-to-average weights: each client's update against the mean of the
/// unit-normalized updates, so no single large update dictates the reference.
inline std::vector<Real> cgsv_weights(const std::vector<std::vector<Real>>& deltas) {
    if (deltas.empty()) throw ContractError("no client updates");
    std::vector<Real> mean(deltas.front().size(), 0.0);
    for (const auto& d : deltas) {
        if (d.size() != mean.size()) throw DimensionError("update length mismatch");
        const Real norm = std::sqrt(squared_norm(d));
        if (norm == 0.0) continue;
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += d[k] / norm;
    }
    for (auto& v : mean) v /= static_cast<Real>(deltas.size());
    return cosine_weights(deltas, mean);
}

struct RoundContext {
    const std::vector<Dataset>* client_data = nullptr;
    RoundConfig round;
    ProbeConfig probe;
    std::size_t workers = 1;
};

struct RoundOutcome {
    std::vector<Real> weights;
    std::vector<Real> client_losses;
    std::optional<EstimatorRecord> estimator;
};

/// Probes every model of one warm-up round and feeds the estimator.
inline EstimatorRecord celm_estimation(FederationState& state, ContributionState& contrib, std::size_t round,
                                       const MlpModel& previous_global, const ProbeConfig& probe,
                                       std::size_t workers) {
    const std::size_t n = state.client_models.size();
    const std::size_t k = previous_global.num_classes();
    std::vector<ProbeResult> results(n + 1);
    parallel_for(n + 1, workers, [&](std::size_t slot) {
        const MlpModel& model = slot == ProbeBank::global_slot() ? previous_global : state.client_models[slot - 1];
        results[slot] = lm_probe(model, state.probe_bank.slot(slot), probe);
    });
    const Real b = global_baseline(results[ProbeBank::global_slot()]);
    Matrix raw(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& res = results[ProbeBank::client_slot(i)];
        std::copy(res.scores.begin(), res.scores.end(), raw.row(i).begin());
    }
    for (std::size_t slot = 0; slot <= n; ++slot) state.probe_bank.store(slot, std::move(results[slot].images));
    return estimate_round(contrib, round, raw, b);
}

/// One communication round: broadcast, local training, strategy weights, aggregation.
inline RoundOutcome run_round(FederationState& state, AggregationStrategy& strategy, const RoundContext& ctx) {
    const auto& data = *ctx.client_data;
    const std::size_t n = state.client_models.size();
    if (data.size() != n) throw DimensionError("one dataset per client required");
    const std::size_t t = state.round + 1;
    const bool celm = strategy.kind == StrategyKind::Celm;
    const bool warmup = celm && t <= strategy.celm.warmup_horizon() && !strategy.celm.frozen();

    broadcast(state, warmup);

    RoundOutcome out;
    out.client_losses.resize(n);
    parallel_for(n, ctx.workers, [&](std::size_t i) {
        out.client_losses[i] = local_train(state.client_models[i], data[i], ctx.round, t, i);
    });

    switch (strategy.kind) {
        case StrategyKind::UniformFedAvg:
            out.weights.assign(n, 1.0 / static_cast<Real>(n));
            break;
        case StrategyKind::Celm:
            if (warmup) {
                out.estimator = celm_estimation(state, strategy.celm, t, state.global_model, ctx.probe, ctx.workers);
            }
            out.weights = strategy.celm.current();
            break;
        case StrategyKind::Cgsv: {
            const auto base = state.global_model.flatten();
            std::vector<std::vector<Real>> deltas(n);
            for (std::size_t i = 0; i < n; ++i) {
                deltas[i] = state.client_models[i].flatten();
                for (std::size_t k = 0; k < base.size(); ++k) deltas[i][k] -= base[k];
            }
            const auto w = cgsv_weights(deltas);
            auto& rep = strategy.cgsv_reputation;
            for (std::size_t i = 0; i < n; ++i) rep[i] = strategy.beta * rep[i] + (1.0 - strategy.beta) * w[i];
            out.weights = simplex_normalize(rep);
            break;
        }
    }

    state.global_model = aggregate(state.client_models, out.weights);
    state.round = t;
    return out;
}

// ---------------------------------------------------------------------------
// Whole experiments

struct FederationConfig {
    RoundConfig round;
    ProbeConfig probe;
    StrategyKind strategy = StrategyKind::Celm;
    Real beta = 0.5;
    Real epsilon = kDefaultShareEpsilon;
    std::vector<std::size_t> hidden{32, 32};
    std::vector<std::size_t> rare_classes;  // reported as rare-class accuracy
    std::size_t workers = 1;

    void validate() const {
        round.validate();
        probe.validate();
        if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("EMA factor beta must lie in [0, 1)");
        if (!(epsilon > 0.0)) throw ConfigError("share epsilon must be positive");
        for (auto h : hidden)
            if (h == 0) throw ConfigError("hidden widths must be positive");
    }
};

struct RoundMetrics {
    std::size_t round = 0;
    analysis::AccuracyBreakdown accuracy;
    std::vector<Real> weights;
    Real mean_client_loss = 0.0;
};

struct ExperimentTrace {
    StrategyKind strategy = StrategyKind::UniformFedAvg;
    std::uint64_t seed = 0;
    std::vector<RoundMetrics> rounds;
    std::vector<EstimatorRecord> estimator;
    FederationState final_state;
};

inline analysis::AccuracyBreakdown evaluate(const MlpModel& model, const Dataset& test,
                                            std::span<const std::size_t> rare_classes) {
    const auto pred = predict(model, test.inputs);
    return analysis::accuracy_decomposition(pred, test.labels, test.num_classes, rare_classes);
}

/// Runs T rounds from a seeded initial model, evaluating the aggregated global model
/// on the held-out test set after every round.
inline ExperimentTrace run_experiment(const std::vector<Dataset>& client_data, const Dataset& test,
                                      const FederationConfig& cfg) {
    cfg.validate();
    if (client_data.empty()) throw ConfigError("need at least one client");
    const std::size_t n = client_data.size();
    const std::size_t k = test.num_classes;
    const std::size_t d = test.dim();
    for (const auto& cd : client_data) {
        if (cd.num_classes != k || (!cd.empty() && cd.dim() != d)) {
            throw ConfigError("client datasets disagree with the test set on classes or input width");
        }
    }

    std::vector<std::size_t> dims{d};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(k);
    auto init_rng = substream(cfg.round.seed, streams::init);
    auto probe_rng = substream(cfg.round.seed, streams::probe_init);
    MlpModel global = MlpModel::random(std::span<const std::size_t>(dims), init_rng);

    ExperimentTrace trace;
    trace.strategy = cfg.strategy;
    trace.seed = cfg.round.seed;
    FederationState state = FederationState::initial(std::move(global), n, probe_rng);

    AggregationStrategy strategy;
    switch (cfg.strategy) {
        case StrategyKind::UniformFedAvg: strategy = AggregationStrategy::uniform(); break;
        case StrategyKind::Celm:
            strategy = AggregationStrategy::make_celm(n, cfg.beta, cfg.round.warmup_rounds, cfg.epsilon);
            break;
        case StrategyKind::Cgsv: strategy = AggregationStrategy::make_cgsv(n, cfg.beta); break;
    }

    RoundContext ctx{&client_data, cfg.round, cfg.probe, cfg.workers};
    for (std::size_t t = 1; t <= cfg.round.total_rounds; ++t) {
        auto outcome = run_round(state, strategy, ctx);
        RoundMetrics m;
        m.round = t;
        m.accuracy = evaluate(state.global_model, test, cfg.rare_classes);
        m.weights = outcome.weights;
        m.mean_client_loss = std::accumulate(outcome.client_losses.begin(), outcome.client_losses.end(), 0.0) /
                             static_cast<Real>(n);
        trace.rounds.push_back(std::move(m));
        if (outcome.estimator) trace.estimator.push_back(std::move(*outcome.estimator));
    }
    trace.final_state = std::move(state);
    return trace;
}

}  // namespace celm
