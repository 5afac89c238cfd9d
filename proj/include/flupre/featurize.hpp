#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "flupre/corpus.hpp"
#include "flupre/errors.hpp"
#include "flupre/rng.hpp"
#include "flupre/tensor.hpp"

namespace flupre {

constexpr int kNumDurationClasses = 100;

// Duration class in 1..100: the frame count, capped at 100.
inline int duration_label(int frames) {
    if (frames < 1)
        throw DomainError("duration_label: frames " + std::to_string(frames) + " < 1");
    return std::min(frames, kNumDurationClasses);
}

// Positions chosen for reconstruction, which of them actually receive the
// mask token, and the ground-truth targets. Targets exist exactly for the
// selected positions (replaced and kept alike).
struct MaskPlan {
    std::vector<std::size_t> selected;   // sorted
    std::vector<std::size_t> replaced;   // sorted subset of selected
    std::vector<int> phone_targets;      // per selected position
    std::vector<int> duration_targets;   // per selected position, class 1..100

    bool empty() const { return selected.empty(); }
};

inline void validate_mask_plan(const MaskPlan& plan, std::size_t n) {
    if (!std::is_sorted(plan.selected.begin(), plan.selected.end()))
        throw SchemaError("mask plan: selected positions not sorted");
    for (std::size_t p : plan.selected)
        if (p >= n) throw IndexError("mask plan: position " + std::to_string(p) +
                                     " out of range for length " + std::to_string(n));
    for (std::size_t p : plan.replaced)
        if (!std::binary_search(plan.selected.begin(), plan.selected.end(), p))
            throw SchemaError("mask plan: replaced position " + std::to_string(p) +
                              " not in selected set");
    if (plan.phone_targets.size() != plan.selected.size() ||
        plan.duration_targets.size() != plan.selected.size())
        throw SchemaError("mask plan: target count != selected count");
    for (int c : plan.duration_targets)
        if (c < 1 || c > kNumDurationClasses)
            throw SchemaError("mask plan: duration target " + std::to_string(c) +
                              " outside [1, 100]");
}

// Independent Bernoulli(rate) selection per position; each selected position
// is replaced with probability replace_prob. When nothing gets selected and
// force_select is on, one uniform position is selected so the sample still
// contributes reconstruction loss.
inline MaskPlan sample_mask_plan(const std::vector<int>& phones,
                                 const std::vector<int>& durations, Rng& rng,
                                 double rate = 0.15, double replace_prob = 0.9,
                                 bool force_select = true) {
    const std::size_t n = phones.size();
    if (n < 1) throw DomainError("sample_mask_plan: empty sequence");
    if (durations.size() != n)
        throw SchemaError("sample_mask_plan: durations length != phones length");
    if (rate < 0.0 || rate > 1.0) throw ConfigError("mask rate must be in [0, 1]");
    if (replace_prob < 0.0 || replace_prob > 1.0)
        throw ConfigError("replace_prob must be in [0, 1]");

    MaskPlan plan;
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform() < rate) {
            plan.selected.push_back(i);
            if (rng.uniform() < replace_prob) plan.replaced.push_back(i);
        }
    }
    if (plan.selected.empty() && force_select) {
        const std::size_t pos = static_cast<std::size_t>(rng.below(n));
        plan.selected.push_back(pos);
        if (rng.uniform() < replace_prob) plan.replaced.push_back(pos);
    }
    plan.phone_targets.reserve(plan.selected.size());
    plan.duration_targets.reserve(plan.selected.size());
    for (std::size_t p : plan.selected) {
        plan.phone_targets.push_back(phones[p]);
        plan.duration_targets.push_back(duration_label(durations[p]));
    }
    return plan;
}

// An utterance after masking. Unlike Utterance, this may carry the mask
// phone id (== vocab size) and zero durations at replaced positions.
struct MaskedUtterance {
    std::vector<int> phones;
    std::vector<int> durations;
    std::vector<float> features;
    std::size_t feature_dim = 0;

    std::size_t length() const { return phones.size(); }
    const float* feature_row(std::size_t i) const { return features.data() + i * feature_dim; }
};

// Replaced positions get the mask token, duration 0, and a zero feature row;
// selected-but-kept and unselected positions are carried over bit-identically.
inline MaskedUtterance apply_mask(const Utterance& u, const MaskPlan& plan, int mask_phone_id) {
    validate_mask_plan(plan, u.length());
    MaskedUtterance m;
    m.phones = u.phones;
    m.durations = u.durations;
    m.features = u.features;
    m.feature_dim = u.feature_dim;
    for (std::size_t p : plan.replaced) {
        m.phones[p] = mask_phone_id;
        m.durations[p] = 0;
        float* row = m.features.data() + p * m.feature_dim;
        std::fill(row, row + m.feature_dim, 0.0f);
    }
    return m;
}

// Read-only view over either an Utterance or a MaskedUtterance.
struct SequenceView {
    const int* phones = nullptr;
    const int* durations = nullptr;
    const float* features = nullptr;
    std::size_t n = 0;
    std::size_t feature_dim = 0;

    static SequenceView of(const Utterance& u) {
        return {u.phones.data(), u.durations.data(), u.features.data(), u.length(),
                u.feature_dim};
    }
    static SequenceView of(const MaskedUtterance& m) {
        return {m.phones.data(), m.durations.data(), m.features.data(), m.length(),
                m.feature_dim};
    }
    const float* feature_row(std::size_t i) const { return features + i * feature_dim; }
};

// Non-owning handles on the preprocessing parameters. The embedding table has
// vocab_size + 2 rows: one per phone, then the mask token, then [CLS].
template <typename T>
struct PreprocParams {
    const Tensor<T>& embedding;  // (V+2) x E
    const Tensor<T>& proj_w;     // D x E
    const Tensor<T>& proj_b;     // E
    T duration_scale;

    int mask_phone_id() const { return static_cast<int>(embedding.rows()) - 2; }
    int cls_phone_id() const { return static_cast<int>(embedding.rows()) - 1; }
    std::size_t embed_dim() const { return embedding.cols(); }
};

// Encoder input rows: projected features plus phone embedding, concatenated
// with the scaled duration. Width is embed_dim + 1 (33 in the default setup).
template <typename T>
struct ModelInputSequence {
    Tensor<T> rows;                                  // N x (E+1)
    std::vector<std::size_t> mask_token_row_indices; // rows carrying the mask token
};

template <typename T>
inline ModelInputSequence<T> preprocess(const SequenceView& seq, const PreprocParams<T>& pp) {
    const std::size_t e = pp.embed_dim();
    if (pp.proj_w.rank() != 2 || pp.proj_w.rows() != seq.feature_dim || pp.proj_w.cols() != e)
        throw SchemaError("preprocess: projection " + pp.proj_w.shape_str() +
                          " incompatible with feature_dim " + std::to_string(seq.feature_dim) +
                          " and embedding width " + std::to_string(e));
    require_shape(pp.proj_b, {e}, "preprocess: projection bias");

    ModelInputSequence<T> out;
    out.rows = Tensor<T>({seq.n, e + 1});
    for (std::size_t i = 0; i < seq.n; ++i) {
        const int phone = seq.phones[i];
        if (phone < 0 || static_cast<std::size_t>(phone) >= pp.embedding.rows())
            throw SchemaError("preprocess: phone id " + std::to_string(phone) +
                              " outside embedding table of " +
                              std::to_string(pp.embedding.rows()) + " rows");
        if (phone == pp.mask_phone_id()) out.mask_token_row_indices.push_back(i);

        T* row = out.rows.row(i);
        const T* emb = pp.embedding.row(static_cast<std::size_t>(phone));
        for (std::size_t j = 0; j < e; ++j) row[j] = pp.proj_b[j] + emb[j];
        const float* x = seq.feature_row(i);
        for (std::size_t d = 0; d < seq.feature_dim; ++d) {
            const T xv = static_cast<T>(x[d]);
            const T* w = pp.proj_w.row(d);
            for (std::size_t j = 0; j < e; ++j) row[j] += xv * w[j];
        }
        row[e] = pp.duration_scale * static_cast<T>(seq.durations[i]);
    }
    return out;
}

// Accumulates preprocessing gradients for d(rows): embedding rows for the
// phone ids actually shown (mask token included), projection weight and bias.
// The duration column is an input, not a parameter, so its grad is dropped.
template <typename T>
inline void preprocess_backward(const SequenceView& seq, const PreprocParams<T>& pp,
                                const Tensor<T>& d_rows, Tensor<T>& d_embedding,
                                Tensor<T>& d_proj_w, Tensor<T>& d_proj_b) {
    const std::size_t e = pp.embed_dim();
    for (std::size_t i = 0; i < seq.n; ++i) {
        const T* dr = d_rows.row(i);
        T* demb = d_embedding.row(static_cast<std::size_t>(seq.phones[i]));
        for (std::size_t j = 0; j < e; ++j) {
            demb[j] += dr[j];
            d_proj_b[j] += dr[j];
        }
        const float* x = seq.feature_row(i);
        for (std::size_t d = 0; d < seq.feature_dim; ++d) {
            const T xv = static_cast<T>(x[d]);
            if (xv == T(0)) continue;
            T* dw = d_proj_w.row(d);
            for (std::size_t j = 0; j < e; ++j) dw[j] += xv * dr[j];
        }
    }
}

} // namespace flupre
