#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flupre/corpus.hpp"
#include "flupre/errors.hpp"
#include "flupre/model.hpp"
#include "flupre/nn/adam.hpp"
#include "flupre/pcc.hpp"
#include "flupre/rng.hpp"

namespace flupre {

struct FinetuneConfig {
    std::size_t batch_size = 32;
    double lr = 0.002;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    std::string init_checkpoint; // empty = scratch initialization
    Pooling pooling = Pooling::Auto;
};

inline void validate_finetune_config(const FinetuneConfig& c) {
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.lr < 0.0) throw ConfigError("lr must be >= 0");
}

// Builds the scoring model: fresh throughout for scratch runs; preprocessing
// and encoder restored bit-exactly from the checkpoint otherwise, with every
// head (scorer included) keeping its fresh seeded initialization.
template <typename T>
inline EncoderModel<T> make_finetune_model(EncoderKind kind, const ModelDims& dims,
                                           const FinetuneConfig& cfg) {
    if (cfg.init_checkpoint.empty())
        return make_model<T>(kind, dims, mix_seed(cfg.seed, 0xf17e5));
    const auto meta = read_checkpoint_meta(cfg.init_checkpoint);
    auto it = meta.find("encoder");
    if (it == meta.end())
        throw ParseError("checkpoint sidecar for '" + cfg.init_checkpoint +
                         "' lacks an encoder entry");
    if (parse_encoder_kind(it->second) != kind)
        throw ConfigError("checkpoint '" + cfg.init_checkpoint + "' holds a " + it->second +
                          " encoder, not " + encoder_kind_name(kind));
    const ModelDims ck_dims = dims_from_meta(meta, cfg.init_checkpoint);
    EncoderModel<T> model = make_model<T>(kind, ck_dims, mix_seed(cfg.seed, 0xf17e5));
    init_encoder_from_checkpoint(model, cfg.init_checkpoint);
    return model;
}

// Raw machine score: pooled representation through the scorer head.
template <typename T>
inline T score_utterance(EncoderModel<T>& model, const Utterance& u,
                         Pooling pooling = Pooling::Auto) {
    EncodeCache<T> cache;
    const Tensor<T> hidden = encode(model, SequenceView::of(u), cache);
    const std::vector<T> rep = utterance_representation(model, cache, hidden, pooling);
    const Tensor<T>& w = model.ps.value("head.score.w");
    T s = model.ps.value("head.score.b")[0];
    for (std::size_t j = 0; j < rep.size(); ++j) s += rep[j] * w[j];
    return s;
}

// Display variant only; evaluation always uses raw scores (clamping is not
// affine, so it could change PCC).
template <typename T>
inline T clamped_score(T raw) {
    return std::min(T(10), std::max(T(0), raw));
}

template <typename T>
inline std::vector<double> predict_scores(EncoderModel<T>& model, const Corpus& corpus,
                                          Pooling pooling = Pooling::Auto) {
    std::vector<double> out;
    out.reserve(corpus.utterances.size());
    for (const Utterance& u : corpus.utterances)
        out.push_back(static_cast<double>(score_utterance(model, u, pooling)));
    return out;
}

inline std::vector<double> human_scores(const Corpus& corpus) {
    std::vector<double> out;
    out.reserve(corpus.utterances.size());
    for (const Utterance& u : corpus.utterances) {
        if (!u.has_score)
            throw SchemaError("utterance '" + u.id + "' has no human score");
        out.push_back(static_cast<double>(u.score));
    }
    return out;
}

template <typename T>
inline double evaluate_pcc(EncoderModel<T>& model, const Corpus& corpus,
                           Pooling pooling = Pooling::Auto) {
    return pcc(predict_scores(model, corpus, pooling), human_scores(corpus));
}

// id <tab> machine score <tab> human score when present.
inline void write_scores(const std::string& path, const Corpus& corpus,
                         const std::vector<double>& machine) {
    if (machine.size() != corpus.utterances.size())
        throw ShapeError("write_scores: " + std::to_string(machine.size()) + " scores for " +
                         std::to_string(corpus.utterances.size()) + " utterances");
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << std::setprecision(17);
    for (std::size_t i = 0; i < machine.size(); ++i) {
        const Utterance& u = corpus.utterances[i];
        out << u.id << "\t" << machine[i];
        if (u.has_score) out << "\t" << u.score;
        out << "\n";
    }
}

struct FinetuneResult {
    std::vector<double> train_loss; // per-epoch mean MSE over the train set
    std::vector<double> dev_pcc;    // per epoch; NaN marks an undefined epoch
    std::size_t best_epoch = 0;     // 1-based; 0 when selection never fired
    double best_dev_pcc = -std::numeric_limits<double>::infinity();
};

// Whole-network regression on human scores: batch-mean MSE, Adam, every
// parameter trainable (reconstruction heads sit idle with zero gradient).
// With a dev corpus the best-dev-PCC epoch's weights are restored into the
// model (and written to checkpoint_path when given); without one the
// last-epoch weights stand, which is recorded via best_epoch = epochs.
template <typename T>
inline FinetuneResult run_finetune(EncoderModel<T>& model, const Corpus& train,
                                   const Corpus* dev, const FinetuneConfig& cfg,
                                   const std::string& checkpoint_path = "",
                                   const std::string& curve_path = "") {
    validate_finetune_config(cfg);
    if (train.utterances.empty()) throw DomainError("finetune: empty training corpus");
    for (const Utterance& u : train.utterances)
        if (!u.has_score) throw SchemaError("utterance '" + u.id + "' has no human score");

    nn::AdamState<T> opt = nn::AdamState<T>::init(model.ps);
    FinetuneResult res;
    std::vector<Tensor<T>> best_params;
    bool saved = false;

    auto save = [&](std::size_t epoch, double dev_value, const char* note) {
        if (checkpoint_path.empty()) return;
        std::map<std::string, std::string> extra{
            {"phase", "finetune"},
            {"seed", std::to_string(cfg.seed)},
            {"epoch", std::to_string(epoch)},
            {"init", cfg.init_checkpoint.empty() ? "scratch" : cfg.init_checkpoint},
        };
        if (dev) {
            std::ostringstream os;
            os << std::setprecision(17) << dev_value;
            extra["dev_pcc"] = os.str();
        }
        if (note) extra["note"] = note;
        save_model_checkpoint(model, checkpoint_path, extra);
        saved = true;
    };

    std::vector<std::size_t> order(train.utterances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    EncodeCache<T> cache;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, 0xf75f, epoch));
        shuffle_rng.shuffle(order);

        double epoch_sq = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const T inv_batch = T(1) / static_cast<T>(stop - start);
            model.ps.zero_grads();
            T batch_loss = T(0);
            for (std::size_t b = start; b < stop; ++b) {
                const Utterance& u = train.utterances[order[b]];
                const Tensor<T> hidden = encode(model, SequenceView::of(u), cache);
                const std::vector<T> rep = utterance_representation(model, cache, hidden,
                                                                    cfg.pooling);
                const Tensor<T>& w = model.ps.value("head.score.w");
                T s = model.ps.value("head.score.b")[0];
                for (std::size_t j = 0; j < rep.size(); ++j) s += rep[j] * w[j];

                T d_s = T(0);
                batch_loss += nn::mse(s, static_cast<T>(u.score), &d_s) * inv_batch;
                d_s *= inv_batch;

                Tensor<T>& dw = model.ps.grad("head.score.w");
                std::vector<T> d_rep(rep.size());
                for (std::size_t j = 0; j < rep.size(); ++j) {
                    dw[j] += d_s * rep[j];
                    d_rep[j] = d_s * w[j];
                }
                model.ps.grad("head.score.b")[0] += d_s;
                const Tensor<T> d_hidden = utterance_representation_backward(
                    model, cache, hidden, d_rep, cfg.pooling);
                encode_backward(model, cache, d_hidden);
            }
            if (!std::isfinite(static_cast<double>(batch_loss))) {
                if (!saved) save(epoch, res.best_dev_pcc, "aborted-before-first-save");
                throw NumericError("finetune: non-finite loss at epoch " +
                                   std::to_string(epoch));
            }
            nn::adam_step(model.ps, opt, static_cast<T>(cfg.lr));
            epoch_sq += static_cast<double>(batch_loss) * static_cast<double>(stop - start);
        }
        res.train_loss.push_back(epoch_sq / static_cast<double>(order.size()));

        if (dev) {
            double dp = std::numeric_limits<double>::quiet_NaN();
            try {
                dp = evaluate_pcc(model, *dev, cfg.pooling);
            } catch (const DomainError&) {
                // collapsed predictions: no defined PCC this epoch
            }
            res.dev_pcc.push_back(dp);
            if (std::isfinite(dp) && dp > res.best_dev_pcc) {
                res.best_dev_pcc = dp;
                res.best_epoch = epoch;
                best_params.clear();
                best_params.reserve(model.ps.size());
                for (std::size_t i = 0; i < model.ps.size(); ++i)
                    best_params.push_back(model.ps.entry(i).value);
            }
        } else {
            res.best_epoch = epoch;
        }
    }

    if (!best_params.empty())
        for (std::size_t i = 0; i < model.ps.size(); ++i)
            model.ps.entry(i).value = best_params[i];
    save(res.best_epoch, res.best_dev_pcc, nullptr);

    if (!curve_path.empty()) {
        std::ofstream out(curve_path);
        if (!out) throw ParseError("cannot open '" + curve_path + "' for writing");
        out << std::setprecision(17);
        for (std::size_t e = 0; e < res.train_loss.size(); ++e) {
            out << (e + 1) << "," << res.train_loss[e];
            if (e < res.dev_pcc.size()) out << "," << res.dev_pcc[e];
            out << "\n";
        }
    }
    return res;
}

} // namespace flupre
