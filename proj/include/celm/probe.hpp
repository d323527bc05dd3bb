#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "celm/error.hpp"
#include "celm/nn.hpp"
#include "celm/rng.hpp"
#include "celm/tensor.hpp"

namespace celm {

/// Settings for class-wise logit maximization.
struct ProbeConfig {
    std::size_t steps = 200;       // L
    Real learning_rate = 0.01;     // Adam step size
    Real reg_weight = 0.001;       // lambda on ||x||^2
    Real divergence_limit = 1e12;  // abort when |objective| exceeds this

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("probe learning rate must be positive");
        if (!(reg_weight >= 0.0)) throw ConfigError("probe regularization weight must be nonnegative");
        if (!(divergence_limit > 0.0)) throw ConfigError("probe divergence limit must be positive");
    }
};

struct ProbeResult {
    std::vector<Real> scores;  // final optimized logit per class
    Tensor images;             // [K x d], row c is the final probe input for class c
};

/// Optimizes one input per class against a frozen model and reports the final logits.
///
/// Row c of `init_images` starts the ascent on s_c(x) - lambda * ||x||^2. All classes
/// are stepped jointly as one batch with fresh Adam moments. The model is not touched.
inline ProbeResult lm_probe(const MlpModel& model, const Tensor& init_images, const ProbeConfig& cfg) {
    cfg.validate();
    const std::size_t k = model.num_classes();
    if (init_images.rank() != 2 || init_images.rows() != k || init_images.cols() != model.input_dim()) {
        throw DimensionError("probe images must be [K x d] = [" + std::to_string(k) + "x" +
                             std::to_string(model.input_dim()) + "], got " + shape_string(init_images.shape()));
    }
    std::vector<std::size_t> targets(k);
    std::iota(targets.begin(), targets.end(), 0);

    Tensor x = init_images;
    Adam adam(cfg.learning_rate);
    std::vector<Real> objective;
    auto guard = [&](const std::vector<Real>& obj) {
        for (std::size_t c = 0; c < k; ++c) {
            if (!std::isfinite(obj[c]) || std::abs(obj[c]) > cfg.divergence_limit) {
                throw ProbeDivergence("logit-maximization probe diverged for class " + std::to_string(c + 1), c);
            }
        }
    };
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Tensor g = input_grad(model, x, targets, cfg.reg_weight, &objective);
        guard(objective);
        adam.ascend(x, g);
    }

    ProbeResult out;
    const Tensor logits = forward(model, x);
    out.scores.resize(k);
    for (std::size_t c = 0; c < k; ++c) out.scores[c] = logits(c, c);
    guard(logit_objective(model, x, targets, cfg.reg_weight));
    if (!x.all_finite()) throw ProbeDivergence("probe image became non-finite", 0);
    out.images = std::move(x);
    return out;
}

/// Mean optimized logit of the global model: the shared-confidence baseline b.
inline Real global_baseline(std::span<const Real> scores) {
    if (scores.empty()) throw DomainError("baseline needs at least one class score");
    return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<Real>(scores.size());
}

inline Real global_baseline(const ProbeResult& result_global) { return global_baseline(result_global.scores); }

/// Warm-start probe inputs: one [K x d] tensor per model slot. By convention slot 0
/// is the global model and slot i+1 is client i.
class ProbeBank {
public:
    ProbeBank() = default;

    /// Every image drawn i.i.d. from N(0, 1).
    static ProbeBank gaussian(std::size_t slots, std::size_t k, std::size_t d, Rng& rng) {
        ProbeBank bank;
        std::normal_distribution<Real> gauss(0.0, 1.0);
        bank.images_.reserve(slots);
        for (std::size_t s = 0; s < slots; ++s) {
            Tensor t({k, d});
            for (auto& v : t.values()) v = gauss(rng);
            bank.images_.push_back(std::move(t));
        }
        return bank;
    }

    std::size_t slots() const noexcept { return images_.size(); }
    const Tensor& slot(std::size_t s) const { return images_.at(s); }
    Tensor& slot(std::size_t s) { return images_.at(s); }

    void store(std::size_t s, Tensor images) {
        require_same_shape(images_.at(s), images, "probe bank store");
        images_[s] = std::move(images);
    }

    static constexpr std::size_t global_slot() noexcept { return 0; }
    static constexpr std::size_t client_slot(std::size_t client) noexcept { return client + 1; }

private:
    std::vector<Tensor> images_;
};

/// 8-bit binary PGM of one probe image, min-max normalized. A constant image maps to 0.
inline void write_pgm(const std::string& path, std::span<const Real> pixels, std::size_t rows, std::size_t cols) {
    if (rows * cols != pixels.size()) throw DimensionError("PGM layout does not match pixel count");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path);
    out << "P5\n" << cols << " " << rows << "\n255\n";
    const auto [lo, hi] = std::minmax_element(pixels.begin(), pixels.end());
    const Real span = pixels.empty() ? 0.0 : *hi - *lo;
    for (Real v : pixels) {
        const Real unit = span > 0.0 ? (v - *lo) / span : 0.0;
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(unit * 255.0))));
    }
}

/// Square-ish layout for a flat input of width d: the stored image shape when known,
/// an exact square when d is a perfect square, otherwise a single row.
inline std::pair<std::size_t, std::size_t> image_layout(std::size_t d, std::size_t rows = 0, std::size_t cols = 0) {
    if (rows * cols == d && rows > 0) return {rows, cols};
    const auto r = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<Real>(d))));
    if (r * r == d) return {r, r};
    return {1, d};
}

}  // namespace celm
