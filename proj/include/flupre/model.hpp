#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "flupre/errors.hpp"
#include "flupre/featurize.hpp"
#include "flupre/nn/checkpoint.hpp"
#include "flupre/nn/lstm.hpp"
#include "flupre/nn/param.hpp"
#include "flupre/nn/transformer.hpp"
#include "flupre/rng.hpp"
#include "flupre/tensor.hpp"

namespace flupre {

enum class EncoderKind { Blstm, Transformer };

inline std::string encoder_kind_name(EncoderKind k) {
    return k == EncoderKind::Blstm ? "blstm" : "transformer";
}

inline EncoderKind parse_encoder_kind(const std::string& s) {
    if (s == "blstm") return EncoderKind::Blstm;
    if (s == "transformer") return EncoderKind::Transformer;
    throw ConfigError("unknown encoder '" + s + "' (expected blstm or transformer)");
}

struct ModelDims {
    std::size_t vocab_size = 0;
    std::size_t feature_dim = 0;
    std::size_t embed_dim = 32;
    double duration_scale = 0.01;
    // BLSTM encoder
    std::size_t blstm_layers = 8;
    std::size_t blstm_hidden = 32;
    // Transformer encoder
    std::size_t tf_layers = 2;
    std::size_t d_model = 128;
    std::size_t heads = 4;
    std::size_t max_positions = 512;

    std::size_t input_dim() const { return embed_dim + 1; }
};

inline void validate_model_dims(const ModelDims& d) {
    if (d.vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
    if (d.feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (d.embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
    if (d.duration_scale <= 0) throw ConfigError("duration_scale must be > 0");
    if (d.max_positions < 2) throw ConfigError("max_positions must be >= 2");
}

// Encoder plus its preprocessing table and the three output heads. The
// reconstruction heads ride along through fine-tuning unused, so every
// checkpoint carries the same parameter set for a given encoder kind.
template <typename T>
struct EncoderModel {
    EncoderKind kind = EncoderKind::Blstm;
    ModelDims dims;
    nn::ParameterStore<T> ps;

    std::size_t hidden_dim() const {
        return kind == EncoderKind::Blstm ? 2 * dims.blstm_hidden : dims.d_model;
    }
    int mask_phone_id() const { return static_cast<int>(dims.vocab_size); }
    int cls_phone_id() const { return static_cast<int>(dims.vocab_size) + 1; }

    PreprocParams<T> preproc() const {
        return PreprocParams<T>{ps.value("preproc.embed"), ps.value("preproc.proj.w"),
                                ps.value("preproc.proj.b"),
                                static_cast<T>(dims.duration_scale)};
    }
    nn::BlstmSpec blstm_spec() const {
        return nn::BlstmSpec{dims.blstm_layers, dims.input_dim(), dims.blstm_hidden};
    }
    nn::TfLayerSpec tf_spec(std::size_t layer) const {
        return nn::TfLayerSpec{layer == 0 ? dims.input_dim() : dims.d_model, dims.d_model,
                               dims.heads, layer == 0};
    }
};

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(),
                                                  suffix) == 0;
}

} // namespace detail

// Seeded init: N(0, 0.02) for the embedding-style tables, uniform
// +-sqrt(1/fan_in) for matrices, zeros for biases with layer-norm gains at 1
// and LSTM forget-gate biases at 1. Each tensor draws from its own stream so
// the layout of one tensor never shifts another's values.
template <typename T>
inline void init_parameters(EncoderModel<T>& model, std::uint64_t seed) {
    for (std::size_t i = 0; i < model.ps.size(); ++i) {
        auto& e = model.ps.entry(i);
        Rng rng(mix_seed(seed, 0x1217, i));
        if (e.name == "preproc.embed" || e.name == "enc.pos") {
            for (T& v : e.value.data) v = static_cast<T>(rng.normal(0.0, 0.02));
        } else if (e.value.rank() == 2) {
            const double s = std::sqrt(1.0 / static_cast<double>(e.value.rows()));
            for (T& v : e.value.data) v = static_cast<T>(rng.uniform(-s, s));
        } else {
            e.value.zero();
            if (detail::ends_with(e.name, ".ln1.g") || detail::ends_with(e.name, ".ln2.g")) {
                e.value.fill(T(1));
            } else if (model.kind == EncoderKind::Blstm && e.name.rfind("enc.l", 0) == 0 &&
                       detail::ends_with(e.name, ".b")) {
                const std::size_t h = model.dims.blstm_hidden;
                for (std::size_t j = h; j < 2 * h; ++j) e.value[j] = T(1);
            }
        }
    }
}

template <typename T>
inline EncoderModel<T> make_model(EncoderKind kind, const ModelDims& dims, std::uint64_t seed) {
    validate_model_dims(dims);
    EncoderModel<T> m;
    m.kind = kind;
    m.dims = dims;
    m.ps.add("preproc.embed", {dims.vocab_size + 2, dims.embed_dim});
    m.ps.add("preproc.proj.w", {dims.feature_dim, dims.embed_dim});
    m.ps.add("preproc.proj.b", {dims.embed_dim});
    if (kind == EncoderKind::Blstm) {
        nn::register_blstm(m.ps, "enc", m.blstm_spec());
    } else {
        m.ps.add("enc.pos", {dims.max_positions, dims.input_dim()});
        for (std::size_t l = 0; l < dims.tf_layers; ++l)
            nn::register_tf_layer(m.ps, "enc.l" + std::to_string(l), m.tf_spec(l));
    }
    const std::size_t h = m.hidden_dim();
    m.ps.add("head.phone.w", {h, dims.vocab_size});
    m.ps.add("head.phone.b", {dims.vocab_size});
    m.ps.add("head.dur.w", {h, static_cast<std::size_t>(kNumDurationClasses)});
    m.ps.add("head.dur.b", {static_cast<std::size_t>(kNumDurationClasses)});
    m.ps.add("head.score.w", {h, 1});
    m.ps.add("head.score.b", {1});
    init_parameters(m, seed);
    return m;
}

// Everything the backward pass needs, including an owned copy of the fed
// sequence (the caller's masked utterance may be a temporary).
template <typename T>
struct EncodeCache {
    std::vector<int> phones;
    std::vector<int> durations;
    std::vector<float> features;
    std::size_t feature_dim = 0;

    Tensor<T> enc_in; // encoder input rows, CLS/position rows applied
    nn::BlstmCache<T> blstm;
    std::vector<nn::TfLayerCache<T>> tf;
    std::size_t n = 0;
    bool has_cls = false;

    // Hidden row holding sequence position `pos`.
    std::size_t hidden_row(std::size_t pos) const { return pos + (has_cls ? 1 : 0); }
    SequenceView view() const {
        return SequenceView{phones.data(), durations.data(), features.data(), n, feature_dim};
    }
};

// Eq.-(1) style forward: preprocess to N x (E+1) rows, then run the encoder.
// The Transformer variant prepends a [CLS] row (embedding only, duration 0)
// and adds the trainable position table; its output has N+1 rows with [CLS]
// at row 0. The BLSTM output has exactly N rows.
template <typename T>
inline Tensor<T> encode(EncoderModel<T>& model, const SequenceView& seq, EncodeCache<T>& cache) {
    if (seq.n < 1) throw DomainError("encode: empty sequence");
    cache.phones.assign(seq.phones, seq.phones + seq.n);
    cache.durations.assign(seq.durations, seq.durations + seq.n);
    cache.features.assign(seq.features, seq.features + seq.n * seq.feature_dim);
    cache.feature_dim = seq.feature_dim;
    cache.n = seq.n;
    cache.has_cls = model.kind == EncoderKind::Transformer;

    const PreprocParams<T> pp = model.preproc();
    ModelInputSequence<T> pre = preprocess(seq, pp);

    if (model.kind == EncoderKind::Blstm) {
        cache.enc_in = std::move(pre.rows);
        return nn::blstm_forward(model.ps, "enc", model.blstm_spec(), cache.enc_in,
                                 cache.blstm);
    }

    const std::size_t rows = seq.n + 1;
    if (rows > model.dims.max_positions)
        throw DomainError("encode: sequence of " + std::to_string(seq.n) +
                          " phones exceeds the " + std::to_string(model.dims.max_positions) +
                          "-entry position table");
    const std::size_t w = model.dims.input_dim();
    cache.enc_in = Tensor<T>({rows, w});
    const Tensor<T>& embed = model.ps.value("preproc.embed");
    const Tensor<T>& proj_b = model.ps.value("preproc.proj.b");
    const T* cls_emb = embed.row(static_cast<std::size_t>(model.cls_phone_id()));
    T* r0 = cache.enc_in.row(0);
    for (std::size_t j = 0; j + 1 < w; ++j) r0[j] = proj_b[j] + cls_emb[j];
    r0[w - 1] = T(0);
    std::copy(pre.rows.data.begin(), pre.rows.data.end(), cache.enc_in.row(1));

    const Tensor<T>& pos = model.ps.value("enc.pos");
    for (std::size_t i = 0; i < rows; ++i) {
        T* r = cache.enc_in.row(i);
        const T* p = pos.row(i);
        for (std::size_t j = 0; j < w; ++j) r[j] += p[j];
    }

    cache.tf.assign(model.dims.tf_layers, nn::TfLayerCache<T>{});
    Tensor<T> h = cache.enc_in;
    for (std::size_t l = 0; l < model.dims.tf_layers; ++l)
        h = nn::tf_layer_forward(model.ps, "enc.l" + std::to_string(l), model.tf_spec(l), h,
                                 cache.tf[l]);
    return h;
}

// Accumulates parameter gradients for d(hidden); no input gradient exists
// (phones/durations/features are data).
template <typename T>
inline void encode_backward(EncoderModel<T>& model, const EncodeCache<T>& cache,
                            const Tensor<T>& d_hidden) {
    const PreprocParams<T> pp = model.preproc();
    Tensor<T>& d_embed = model.ps.grad("preproc.embed");
    Tensor<T>& d_proj_w = model.ps.grad("preproc.proj.w");
    Tensor<T>& d_proj_b = model.ps.grad("preproc.proj.b");

    if (model.kind == EncoderKind::Blstm) {
        Tensor<T> d_in = nn::blstm_backward(model.ps, "enc", model.blstm_spec(), cache.blstm,
                                            d_hidden);
        preprocess_backward(cache.view(), pp, d_in, d_embed, d_proj_w, d_proj_b);
        return;
    }

    Tensor<T> d = d_hidden;
    for (std::size_t l = model.dims.tf_layers; l-- > 0;)
        d = nn::tf_layer_backward(model.ps, "enc.l" + std::to_string(l), model.tf_spec(l),
                                  cache.tf[l], d);

    const std::size_t rows = cache.n + 1;
    const std::size_t w = model.dims.input_dim();
    Tensor<T>& d_pos = model.ps.grad("enc.pos");
    for (std::size_t i = 0; i < rows; ++i) {
        const T* dr = d.row(i);
        T* dp = d_pos.row(i);
        for (std::size_t j = 0; j < w; ++j) dp[j] += dr[j];
    }
    // [CLS] row: embedding plus projection bias, no features, duration fixed 0.
    {
        const T* dr = d.row(0);
        T* de = d_embed.row(static_cast<std::size_t>(model.cls_phone_id()));
        for (std::size_t j = 0; j + 1 < w; ++j) {
            de[j] += dr[j];
            d_proj_b[j] += dr[j];
        }
    }
    Tensor<T> d_seq({cache.n, w});
    std::copy(d.row(1), d.row(1) + cache.n * w, d_seq.data.data());
    preprocess_backward(cache.view(), pp, d_seq, d_embed, d_proj_w, d_proj_b);
}

// Utterance-level pooling: mean over the sequence rows for the BLSTM, the
// [CLS] output row for the Transformer. `mean` can be forced for either kind;
// for the Transformer it averages the N sequence rows and skips [CLS].
enum class Pooling { Auto, Mean, Cls };

inline Pooling parse_pooling(const std::string& s) {
    if (s == "auto") return Pooling::Auto;
    if (s == "mean") return Pooling::Mean;
    if (s == "cls") return Pooling::Cls;
    throw ConfigError("unknown pooling '" + s + "' (expected auto, mean, or cls)");
}

template <typename T>
inline Pooling effective_pooling(const EncoderModel<T>& model, Pooling p) {
    if (p != Pooling::Auto) {
        if (p == Pooling::Cls && model.kind == EncoderKind::Blstm)
            throw ConfigError("cls pooling needs the transformer encoder");
        return p;
    }
    return model.kind == EncoderKind::Blstm ? Pooling::Mean : Pooling::Cls;
}

template <typename T>
inline std::vector<T> utterance_representation(const EncoderModel<T>& model,
                                               const EncodeCache<T>& cache,
                                               const Tensor<T>& hidden, Pooling pooling) {
    if (cache.n < 1) throw DomainError("utterance_representation: empty sequence");
    const std::size_t h = hidden.cols();
    std::vector<T> rep(h, T(0));
    switch (effective_pooling(model, pooling)) {
    case Pooling::Cls:
        std::copy(hidden.row(0), hidden.row(0) + h, rep.begin());
        break;
    case Pooling::Mean: {
        const std::size_t first = cache.has_cls ? 1 : 0;
        for (std::size_t i = 0; i < cache.n; ++i) {
            const T* r = hidden.row(first + i);
            for (std::size_t j = 0; j < h; ++j) rep[j] += r[j];
        }
        const T inv = T(1) / static_cast<T>(cache.n);
        for (T& v : rep) v *= inv;
        break;
    }
    case Pooling::Auto:
        break; // unreachable, resolved above
    }
    return rep;
}

// Scatters d(representation) back to d(hidden) rows for the chosen pooling.
template <typename T>
inline Tensor<T> utterance_representation_backward(const EncoderModel<T>& model,
                                                   const EncodeCache<T>& cache,
                                                   const Tensor<T>& hidden,
                                                   const std::vector<T>& d_rep,
                                                   Pooling pooling) {
    Tensor<T> d_hidden(hidden.shape);
    const std::size_t h = hidden.cols();
    switch (effective_pooling(model, pooling)) {
    case Pooling::Cls:
        std::copy(d_rep.begin(), d_rep.end(), d_hidden.row(0));
        break;
    case Pooling::Mean: {
        const std::size_t first = cache.has_cls ? 1 : 0;
        const T inv = T(1) / static_cast<T>(cache.n);
        for (std::size_t i = 0; i < cache.n; ++i) {
            T* r = d_hidden.row(first + i);
            for (std::size_t j = 0; j < h; ++j) r[j] = d_rep[j] * inv;
        }
        break;
    }
    case Pooling::Auto:
        break;
    }
    return d_hidden;
}

// ---------------------------------------------------------------------------
// Model-level checkpointing: module-3 binary plus a text sidecar carrying the
// model geometry and whatever run metadata the trainer wants recorded.
// ---------------------------------------------------------------------------

inline std::string checkpoint_meta_path(const std::string& path) { return path + ".meta"; }

template <typename T>
inline void save_model_checkpoint(const EncoderModel<T>& model, const std::string& path,
                                  const std::map<std::string, std::string>& extra = {}) {
    nn::save_checkpoint(model.ps, path);
    std::ofstream meta(checkpoint_meta_path(path));
    if (!meta) throw ParseError("cannot open '" + checkpoint_meta_path(path) + "' for writing");
    meta << "encoder=" << encoder_kind_name(model.kind) << "\n";
    meta << "vocab_size=" << model.dims.vocab_size << "\n";
    meta << "feature_dim=" << model.dims.feature_dim << "\n";
    meta << "embed_dim=" << model.dims.embed_dim << "\n";
    meta << "duration_scale=" << model.dims.duration_scale << "\n";
    meta << "blstm_layers=" << model.dims.blstm_layers << "\n";
    meta << "blstm_hidden=" << model.dims.blstm_hidden << "\n";
    meta << "tf_layers=" << model.dims.tf_layers << "\n";
    meta << "d_model=" << model.dims.d_model << "\n";
    meta << "heads=" << model.dims.heads << "\n";
    meta << "max_positions=" << model.dims.max_positions << "\n";
    for (const auto& [k, v] : extra) meta << k << "=" << v << "\n";
}

inline std::map<std::string, std::string> read_checkpoint_meta(const std::string& path) {
    std::ifstream in(checkpoint_meta_path(path));
    if (!in)
        throw ParseError("cannot open checkpoint sidecar '" + checkpoint_meta_path(path) + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("sidecar '" + checkpoint_meta_path(path) + "': bad line '" + line +
                             "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

namespace detail {

inline std::size_t meta_size(const std::map<std::string, std::string>& kv,
                             const std::string& key, const std::string& path) {
    auto it = kv.find(key);
    if (it == kv.end())
        throw ParseError("checkpoint sidecar '" + checkpoint_meta_path(path) +
                         "': missing key '" + key + "'");
    return static_cast<std::size_t>(std::stoull(it->second));
}

} // namespace detail

inline ModelDims dims_from_meta(const std::map<std::string, std::string>& kv,
                                const std::string& path) {
    ModelDims d;
    d.vocab_size = detail::meta_size(kv, "vocab_size", path);
    d.feature_dim = detail::meta_size(kv, "feature_dim", path);
    d.embed_dim = detail::meta_size(kv, "embed_dim", path);
    d.duration_scale = std::stod(kv.at("duration_scale"));
    d.blstm_layers = detail::meta_size(kv, "blstm_layers", path);
    d.blstm_hidden = detail::meta_size(kv, "blstm_hidden", path);
    d.tf_layers = detail::meta_size(kv, "tf_layers", path);
    d.d_model = detail::meta_size(kv, "d_model", path);
    d.heads = detail::meta_size(kv, "heads", path);
    d.max_positions = detail::meta_size(kv, "max_positions", path);
    return d;
}

// Full restore: geometry from the sidecar, every parameter from the binary.
template <typename T>
inline EncoderModel<T> load_model_checkpoint(const std::string& path) {
    const auto kv = read_checkpoint_meta(path);
    auto it = kv.find("encoder");
    if (it == kv.end())
        throw ParseError("checkpoint sidecar '" + checkpoint_meta_path(path) +
                         "': missing key 'encoder'");
    EncoderModel<T> m = make_model<T>(parse_encoder_kind(it->second), dims_from_meta(kv, path),
                                      /*seed=*/0);
    nn::load_checkpoint_into(m.ps, nn::read_checkpoint(path));
    return m;
}

// Fine-tune initialization: preprocessing and encoder weights come from the
// checkpoint bit-exactly, every head keeps its fresh initialization.
template <typename T>
inline void init_encoder_from_checkpoint(EncoderModel<T>& model, const std::string& path) {
    const nn::CheckpointData data = nn::read_checkpoint(path);
    nn::load_checkpoint_into(model.ps, data, "preproc.");
    nn::load_checkpoint_into(model.ps, data, "enc.");
}

} // namespace flupre
