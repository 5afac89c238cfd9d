#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flupre/corpus.hpp"
#include "flupre/errors.hpp"
#include "flupre/rng.hpp"

namespace flupre {

// Parametric generator standing in for an ASR front-end. Each utterance is
// driven by a latent fluency factor f in [fluency_min, fluency_max]: low f
// stretches phone durations, injects more and longer pauses, and adds more
// feature noise, so duration/pause statistics predict the score by
// construction.
struct SynthConfig {
    std::size_t n_utterances = 0;
    int vocab_size = 40;
    std::size_t feature_dim = 64;
    std::size_t min_len = 10;          // chain-emitted phones per utterance
    std::size_t max_len = 60;
    double fluency_min = 0.0;
    double fluency_max = 1.0;
    double duration_stretch = 1.5;
    double pause_prob_scale = 0.3;
    double feature_noise_scale = 0.5;
    double score_noise_std = 0.4;
    std::uint64_t seed = 1;
};

inline void validate_synth_config(const SynthConfig& cfg) {
    if (cfg.vocab_size < 2) throw ConfigError("synth vocab_size must be >= 2");
    if (cfg.feature_dim < 1) throw ConfigError("synth feature_dim must be >= 1");
    if (cfg.min_len < 1) throw ConfigError("synth min_len must be >= 1");
    if (cfg.max_len < cfg.min_len) throw ConfigError("synth max_len must be >= min_len");
    if (cfg.fluency_min < 0.0 || cfg.fluency_max > 1.0 || cfg.fluency_min > cfg.fluency_max)
        throw ConfigError("synth fluency range must satisfy 0 <= min <= max <= 1");
    if (cfg.duration_stretch < 0.0) throw ConfigError("synth duration_stretch must be >= 0");
    if (cfg.pause_prob_scale < 0.0) throw ConfigError("synth pause_prob_scale must be >= 0");
    if (cfg.feature_noise_scale < 0.0) throw ConfigError("synth feature_noise_scale must be >= 0");
    if (cfg.score_noise_std < 0.0) throw ConfigError("synth score_noise_std must be >= 0");
}

namespace detail {

// Fixed per-vocabulary tables, all derived from the seed: a canonical feature
// vector and a base duration for every phone, and a first-order Markov chain
// over the non-silence phones (silence enters only through pause injection).
struct SynthTables {
    std::vector<float> canonical;        // vocab_size x feature_dim
    std::vector<double> base_duration;   // per phone, in [5, 25]
    std::vector<double> transition;      // (V-1) x (V-1) cumulative rows
    std::vector<double> initial;         // V-1 cumulative

    static SynthTables build(const SynthConfig& cfg) {
        SynthTables t;
        Rng rng(mix_seed(cfg.seed, 0x7ab1e5));
        const int v = cfg.vocab_size;
        t.canonical.resize(static_cast<std::size_t>(v) * cfg.feature_dim);
        for (float& x : t.canonical) x = static_cast<float>(rng.normal());
        t.base_duration.resize(static_cast<std::size_t>(v));
        for (double& d : t.base_duration) d = rng.uniform(5.0, 25.0);

        const int m = v - 1; // states 1..V-1
        t.transition.resize(static_cast<std::size_t>(m) * m);
        for (int p = 0; p < m; ++p) {
            double* row = t.transition.data() + static_cast<std::size_t>(p) * m;
            double sum = 0.0;
            for (int q = 0; q < m; ++q) {
                row[q] = std::exp(rng.normal(0.0, 1.5));
                sum += row[q];
            }
            double acc = 0.0;
            for (int q = 0; q < m; ++q) {
                acc += row[q] / sum;
                row[q] = acc;
            }
        }
        t.initial.resize(static_cast<std::size_t>(m));
        {
            double sum = 0.0;
            for (int q = 0; q < m; ++q) {
                t.initial[q] = std::exp(rng.normal(0.0, 1.0));
                sum += t.initial[q];
            }
            double acc = 0.0;
            for (int q = 0; q < m; ++q) {
                acc += t.initial[q] / sum;
                t.initial[q] = acc;
            }
        }
        return t;
    }

    int sample_initial(Rng& rng) const {
        const double u = rng.uniform();
        const auto it = std::upper_bound(initial.begin(), initial.end(), u);
        return 1 + static_cast<int>(it - initial.begin());
    }

    int sample_next(int phone, Rng& rng) const {
        const int m = static_cast<int>(initial.size());
        const double* row = transition.data() + static_cast<std::size_t>(phone - 1) * m;
        const double u = rng.uniform();
        const double* it = std::upper_bound(row, row + m, u);
        return 1 + static_cast<int>(it - row);
    }
};

} // namespace detail

inline Corpus generate_synthetic_corpus(const SynthConfig& cfg) {
    validate_synth_config(cfg);
    const detail::SynthTables tables = detail::SynthTables::build(cfg);

    Corpus corpus;
    corpus.vocab_size = cfg.vocab_size;
    corpus.feature_dim = cfg.feature_dim;
    corpus.metadata["generator"] = "flupre-synth";
    corpus.metadata["seed"] = std::to_string(cfg.seed);
    corpus.metadata["n_utterances"] = std::to_string(cfg.n_utterances);

    for (std::size_t idx = 0; idx < cfg.n_utterances; ++idx) {
        Rng rng(mix_seed(cfg.seed, 0x07737, idx));
        Utterance u;
        u.id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(idx);
        u.feature_dim = cfg.feature_dim;

        const double f = rng.uniform(cfg.fluency_min, cfg.fluency_max);
        const double pause_prob = (1.0 - f) * cfg.pause_prob_scale;
        const std::size_t n_chain = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(cfg.min_len),
                            static_cast<std::int64_t>(cfg.max_len)));

        int prev = -1;
        for (std::size_t k = 0; k < n_chain; ++k) {
            const int phone = (prev < 0) ? tables.sample_initial(rng)
                                         : tables.sample_next(prev, rng);
            prev = phone;
            const double stretch = 1.0 + (1.0 - f) * cfg.duration_stretch * rng.uniform();
            const int dur = std::max(
                1, static_cast<int>(std::lround(tables.base_duration[phone] * stretch)));
            u.phones.push_back(phone);
            u.durations.push_back(dur);
            if (rng.uniform() < pause_prob) {
                u.phones.push_back(kSilencePhone);
                u.durations.push_back(static_cast<int>(std::lround(rng.uniform(20.0, 120.0))));
            }
        }

        u.features.resize(u.phones.size() * cfg.feature_dim);
        const double noise_std = cfg.feature_noise_scale * (1.0 + (1.0 - f));
        for (std::size_t i = 0; i < u.phones.size(); ++i) {
            const float* canon =
                tables.canonical.data() + static_cast<std::size_t>(u.phones[i]) * cfg.feature_dim;
            float* row = u.feature_row(i);
            for (std::size_t d = 0; d < cfg.feature_dim; ++d)
                row[d] = canon[d] + static_cast<float>(rng.normal(0.0, noise_std));
        }

        const double raw = 10.0 * f + rng.normal(0.0, cfg.score_noise_std);
        u.has_score = true;
        u.score = static_cast<float>(std::clamp(raw, 0.0, 10.0));

        corpus.utterances.push_back(std::move(u));
    }
    return corpus;
}

} // namespace flupre
