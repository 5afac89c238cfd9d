#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flupre/errors.hpp"
#include "flupre/rng.hpp"

namespace flupre {

// One aligned utterance: a phone-id sequence, per-phone frame counts, one
// feature row per phone, and an optional human fluency score in [0, 10].
// Phone id 0 is reserved for silence/pause segments.
struct Utterance {
    std::string id;
    std::vector<int> phones;      // each in [0, vocab_size)
    std::vector<int> durations;   // frames, each >= 1
    std::vector<float> features;  // row-major, length() x feature_dim
    std::size_t feature_dim = 0;
    bool has_score = false;
    float score = 0.0f;           // valid iff has_score, in [0, 10]

    std::size_t length() const { return phones.size(); }

    const float* feature_row(std::size_t i) const { return features.data() + i * feature_dim; }
    float* feature_row(std::size_t i) { return features.data() + i * feature_dim; }
};

constexpr int kSilencePhone = 0;

inline void validate_utterance(const Utterance& u, int vocab_size) {
    const std::size_t n = u.phones.size();
    if (n < 1)
        throw SchemaError("utterance '" + u.id + "': empty phone sequence");
    if (u.durations.size() != n)
        throw SchemaError("utterance '" + u.id + "': durations length " +
                          std::to_string(u.durations.size()) + " != phones length " +
                          std::to_string(n));
    if (u.features.size() != n * u.feature_dim)
        throw SchemaError("utterance '" + u.id + "': feature array length " +
                          std::to_string(u.features.size()) + " != " + std::to_string(n) +
                          " x " + std::to_string(u.feature_dim));
    for (std::size_t i = 0; i < n; ++i) {
        if (u.phones[i] < 0 || u.phones[i] >= vocab_size)
            throw SchemaError("utterance '" + u.id + "': phone id " +
                              std::to_string(u.phones[i]) + " outside vocabulary of " +
                              std::to_string(vocab_size));
        if (u.durations[i] < 1)
            throw SchemaError("utterance '" + u.id + "': duration " +
                              std::to_string(u.durations[i]) + " at position " +
                              std::to_string(i) + " (must be >= 1)");
    }
    for (float v : u.features)
        if (!std::isfinite(v))
            throw SchemaError("utterance '" + u.id + "': non-finite feature value");
    if (u.has_score && (!std::isfinite(u.score) || u.score < 0.0f || u.score > 10.0f))
        throw SchemaError("utterance '" + u.id + "': score " + std::to_string(u.score) +
                          " outside [0, 10]");
}

struct Corpus {
    std::vector<Utterance> utterances;
    int vocab_size = 0;
    std::size_t feature_dim = 0;
    std::map<std::string, std::string> metadata;

    std::size_t size() const { return utterances.size(); }
    bool empty() const { return utterances.empty(); }
};

inline void validate_corpus(const Corpus& c) {
    if (c.vocab_size < 2) throw SchemaError("corpus vocab_size must be >= 2");
    for (const Utterance& u : c.utterances) {
        if (u.feature_dim != c.feature_dim)
            throw SchemaError("utterance '" + u.id + "': feature_dim " +
                              std::to_string(u.feature_dim) + " != corpus feature_dim " +
                              std::to_string(c.feature_dim));
        validate_utterance(u, c.vocab_size);
    }
}

struct CorpusSplit {
    Corpus train;
    Corpus dev;
    Corpus test;
};

// Deterministic shuffle-and-cut. Dev/test sizes are floors of their
// fractions; the remainder goes to train.
inline CorpusSplit split_corpus(const Corpus& corpus, double train_frac, double dev_frac,
                                double test_frac, std::uint64_t seed) {
    if (train_frac < 0.0 || dev_frac < 0.0 || test_frac < 0.0)
        throw ConfigError("split fractions must be non-negative");
    const double sum = train_frac + dev_frac + test_frac;
    if (std::fabs(sum - 1.0) > 1e-9)
        throw ConfigError("split fractions sum to " + std::to_string(sum) + ", expected 1");

    const std::size_t n = corpus.size();
    const std::size_t n_dev = static_cast<std::size_t>(dev_frac * static_cast<double>(n));
    const std::size_t n_test = static_cast<std::size_t>(test_frac * static_cast<double>(n));
    const std::size_t n_train = n - n_dev - n_test;

    Rng rng(mix_seed(seed, 0x5eedc0de));
    const std::vector<std::size_t> order = rng.permutation(n);

    CorpusSplit out;
    for (Corpus* part : {&out.train, &out.dev, &out.test}) {
        part->vocab_size = corpus.vocab_size;
        part->feature_dim = corpus.feature_dim;
        part->metadata = corpus.metadata;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Utterance& u = corpus.utterances[order[i]];
        if (i < n_train)
            out.train.utterances.push_back(u);
        else if (i < n_train + n_dev)
            out.dev.utterances.push_back(u);
        else
            out.test.utterances.push_back(u);
    }
    return out;
}

// Deterministic prefix subsample: shuffle by seed, keep the first n. Smaller
// sizes are prefixes of larger ones under the same seed.
inline Corpus subsample_corpus(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
    if (n > corpus.size())
        throw ConfigError("subsample size " + std::to_string(n) + " exceeds corpus size " +
                          std::to_string(corpus.size()));
    Rng rng(mix_seed(seed, 0x5ab5a111e));
    const std::vector<std::size_t> order = rng.permutation(corpus.size());
    Corpus out;
    out.vocab_size = corpus.vocab_size;
    out.feature_dim = corpus.feature_dim;
    out.metadata = corpus.metadata;
    out.utterances.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.utterances.push_back(corpus.utterances[order[i]]);
    return out;
}

} // namespace flupre
