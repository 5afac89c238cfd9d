#pragma once

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
#include "flupre/featurize.hpp"
#include "flupre/model.hpp"
#include "flupre/nn/adam.hpp"
#include "flupre/nn/ops.hpp"
#include "flupre/rng.hpp"

namespace flupre {

struct LossComponents {
    bool phn = true;
    bool dur = true;
};

inline LossComponents parse_loss_components(const std::string& s) {
    if (s == "phn") return {true, false};
    if (s == "dur") return {false, true};
    if (s == "phn+dur" || s == "dur+phn") return {true, true};
    throw ConfigError("unknown loss components '" + s + "' (expected phn, dur, or phn+dur)");
}

inline std::string loss_components_name(const LossComponents& c) {
    if (c.phn && c.dur) return "phn+dur";
    if (c.phn) return "phn";
    if (c.dur) return "dur";
    throw ConfigError("loss components must include phn, dur, or both");
}

enum class LossNorm { Sum, MeanOverMasked };

inline LossNorm parse_loss_norm(const std::string& s) {
    if (s == "sum") return LossNorm::Sum;
    if (s == "mean-over-masked") return LossNorm::MeanOverMasked;
    throw ConfigError("unknown loss normalization '" + s +
                      "' (expected sum or mean-over-masked)");
}

struct PretrainConfig {
    double mask_rate = 0.15;
    double replace_prob = 0.9;
    bool force_select = true;
    std::size_t batch_size = 256;
    double lr = 0.001;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    LossComponents components;
    LossNorm normalization = LossNorm::MeanOverMasked;
};

inline void validate_pretrain_config(const PretrainConfig& c) {
    if (!c.components.phn && !c.components.dur)
        throw ConfigError("pretrain loss needs at least one of phn, dur");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.mask_rate < 0.0 || c.mask_rate > 1.0) throw ConfigError("mask_rate must be in [0, 1]");
    if (c.replace_prob < 0.0 || c.replace_prob > 1.0)
        throw ConfigError("replace_prob must be in [0, 1]");
    if (c.lr < 0.0) throw ConfigError("lr must be >= 0");
}

namespace detail {

// logits = b + h^T W for one hidden row; W is hidden x K.
template <typename T>
inline std::vector<T> head_logits(const Tensor<T>& w, const Tensor<T>& b, const T* h) {
    const std::size_t hd = w.rows(), k = w.cols();
    std::vector<T> logits(b.data.begin(), b.data.end());
    for (std::size_t j = 0; j < hd; ++j) {
        const T hv = h[j];
        if (hv == T(0)) continue;
        const T* wr = w.row(j);
        for (std::size_t c = 0; c < k; ++c) logits[c] += hv * wr[c];
    }
    return logits;
}

template <typename T>
inline void head_backward(const Tensor<T>& w, const T* h, const std::vector<T>& d_logits,
                          Tensor<T>& dw, Tensor<T>& db, T* d_h) {
    const std::size_t hd = w.rows(), k = w.cols();
    for (std::size_t c = 0; c < k; ++c) db[c] += d_logits[c];
    for (std::size_t j = 0; j < hd; ++j) {
        const T* wr = w.row(j);
        T* dwr = dw.row(j);
        T acc = T(0);
        const T hv = h[j];
        for (std::size_t c = 0; c < k; ++c) {
            dwr[c] += hv * d_logits[c];
            acc += wr[c] * d_logits[c];
        }
        d_h[j] += acc;
    }
}

} // namespace detail

// Per-token reconstruction loss: cross-entropy of the phone head plus
// cross-entropy of the duration head, restricted to the enabled components.
// When d_h is given, head-parameter gradients (times grad_scale) accumulate
// into the store and the hidden-state gradient (times grad_scale) into d_h.
template <typename T>
inline T masked_token_loss(EncoderModel<T>& model, const T* h, int phone_target,
                           int duration_target, const LossComponents& comps,
                           T grad_scale = T(1), T* d_h = nullptr) {
    if (!comps.phn && !comps.dur) throw ConfigError("loss needs at least one component");
    T loss = T(0);
    if (comps.phn) {
        if (phone_target < 0 || static_cast<std::size_t>(phone_target) >= model.dims.vocab_size)
            throw DomainError("phone target " + std::to_string(phone_target) +
                              " outside vocabulary of " + std::to_string(model.dims.vocab_size));
        const Tensor<T>& w = model.ps.value("head.phone.w");
        std::vector<T> logits = detail::head_logits(w, model.ps.value("head.phone.b"), h);
        std::vector<T> dl(d_h ? logits.size() : 0);
        loss += nn::softmax_cross_entropy<T>(std::span<const T>(logits),
                                             static_cast<std::size_t>(phone_target),
                                             d_h ? dl.data() : nullptr);
        if (d_h) {
            for (T& g : dl) g *= grad_scale;
            detail::head_backward(w, h, dl, model.ps.grad("head.phone.w"),
                                  model.ps.grad("head.phone.b"), d_h);
        }
    }
    if (comps.dur) {
        if (duration_target < 1 || duration_target > kNumDurationClasses)
            throw DomainError("duration target " + std::to_string(duration_target) +
                              " outside [1, " + std::to_string(kNumDurationClasses) + "]");
        const Tensor<T>& w = model.ps.value("head.dur.w");
        std::vector<T> logits = detail::head_logits(w, model.ps.value("head.dur.b"), h);
        std::vector<T> dl(d_h ? logits.size() : 0);
        loss += nn::softmax_cross_entropy<T>(std::span<const T>(logits),
                                             static_cast<std::size_t>(duration_target - 1),
                                             d_h ? dl.data() : nullptr);
        if (d_h) {
            for (T& g : dl) g *= grad_scale;
            detail::head_backward(w, h, dl, model.ps.grad("head.dur.w"),
                                  model.ps.grad("head.dur.b"), d_h);
        }
    }
    return loss;
}

// One pre-training sample: the masked inputs shown to the model and the plan
// holding the reconstruction targets.
struct PretrainItem {
    MaskedUtterance masked;
    MaskPlan plan;
};

inline PretrainItem make_pretrain_item(const Utterance& u, const PretrainConfig& cfg,
                                       int mask_phone_id, Rng& rng) {
    PretrainItem item;
    item.plan = sample_mask_plan(u.phones, u.durations, rng, cfg.mask_rate, cfg.replace_prob,
                                 cfg.force_select);
    item.masked = apply_mask(u, item.plan, mask_phone_id);
    return item;
}

// Loss over every selected position in the batch; with_grads additionally
// backpropagates through heads, encoder, and preprocessing. Positions outside
// the plans contribute nothing: the loss never reads them and no gradient
// path touches them.
template <typename T>
inline T batch_pretrain_loss(EncoderModel<T>& model, const std::vector<PretrainItem>& batch,
                             const LossComponents& comps, LossNorm norm, bool with_grads) {
    if (batch.empty()) throw DomainError("batch_pretrain_loss: empty batch");
    std::size_t total_selected = 0;
    for (const PretrainItem& it : batch) total_selected += it.plan.selected.size();
    if (total_selected == 0)
        throw DomainError("batch_pretrain_loss: no selected positions in batch");

    const T scale = norm == LossNorm::MeanOverMasked
                        ? T(1) / static_cast<T>(total_selected)
                        : T(1);
    T loss_sum = T(0);
    EncodeCache<T> cache;
    for (const PretrainItem& it : batch) {
        if (it.plan.empty()) continue;
        const Tensor<T> hidden = encode(model, SequenceView::of(it.masked), cache);
        Tensor<T> d_hidden;
        if (with_grads) d_hidden = Tensor<T>(hidden.shape);
        for (std::size_t k = 0; k < it.plan.selected.size(); ++k) {
            const std::size_t row = cache.hidden_row(it.plan.selected[k]);
            loss_sum += masked_token_loss(model, hidden.row(row), it.plan.phone_targets[k],
                                          it.plan.duration_targets[k], comps, scale,
                                          with_grads ? d_hidden.row(row) : nullptr);
        }
        if (with_grads) encode_backward(model, cache, d_hidden);
    }
    return loss_sum * scale;
}

struct PretrainResult {
    std::vector<double> train_loss;   // per epoch, normalization applied
    std::vector<double> dev_loss;     // per epoch; empty without a dev corpus
    std::size_t best_epoch = 0;       // 1-based; 0 when no epoch ran
    double best_dev_loss = 0.0;
    std::size_t total_selected_last_epoch = 0;
};

namespace detail {

template <typename T>
inline std::pair<double, std::size_t> pretrain_loss_over(EncoderModel<T>& model,
                                                         const std::vector<PretrainItem>& items,
                                                         const LossComponents& comps) {
    double sum = 0.0;
    std::size_t count = 0;
    EncodeCache<T> cache;
    for (const PretrainItem& it : items) {
        if (it.plan.empty()) continue;
        const Tensor<T> hidden = encode(model, SequenceView::of(it.masked), cache);
        for (std::size_t k = 0; k < it.plan.selected.size(); ++k) {
            const std::size_t row = cache.hidden_row(it.plan.selected[k]);
            sum += static_cast<double>(masked_token_loss(model, hidden.row(row),
                                                         it.plan.phone_targets[k],
                                                         it.plan.duration_targets[k], comps));
        }
        count += it.plan.selected.size();
    }
    return {sum, count};
}

inline double apply_norm(double sum, std::size_t count, LossNorm norm) {
    if (norm == LossNorm::Sum) return sum;
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

inline std::string format_loss(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

} // namespace detail

// Masked-reconstruction training. Fresh plans every epoch, shuffled batches,
// Adam updates. With a dev corpus the best-dev-loss epoch's weights go to
// checkpoint_path (plans on dev are fixed across epochs so the comparison is
// apples to apples); without one the final weights are written. A non-finite
// batch loss aborts before the update, leaving the last good weights in the
// checkpoint. The model argument holds the last-epoch weights afterwards.
template <typename T>
inline PretrainResult run_pretraining(EncoderModel<T>& model, const Corpus& train,
                                      const Corpus* dev, const PretrainConfig& cfg,
                                      const std::string& checkpoint_path,
                                      const std::string& loss_curve_path = "") {
    validate_pretrain_config(cfg);
    if (train.utterances.empty()) throw DomainError("pretrain: empty training corpus");

    std::vector<PretrainItem> dev_items;
    if (dev) {
        dev_items.reserve(dev->utterances.size());
        for (std::size_t i = 0; i < dev->utterances.size(); ++i) {
            Rng rng(mix_seed(cfg.seed, 0xdef5, i));
            dev_items.push_back(make_pretrain_item(dev->utterances[i], cfg,
                                                   model.mask_phone_id(), rng));
        }
    }

    nn::AdamState<T> opt = nn::AdamState<T>::init(model.ps);
    PretrainResult res;
    res.best_dev_loss = std::numeric_limits<double>::infinity();
    bool saved = false;

    auto save = [&](std::size_t epoch, double dev_loss_value, const char* note) {
        if (checkpoint_path.empty()) return;
        std::map<std::string, std::string> extra{
            {"phase", "pretrain"},
            {"seed", std::to_string(cfg.seed)},
            {"loss", loss_components_name(cfg.components)},
            {"epoch", std::to_string(epoch)},
        };
        if (dev) extra["dev_loss"] = detail::format_loss(dev_loss_value);
        if (note) extra["note"] = note;
        save_model_checkpoint(model, checkpoint_path, extra);
        saved = true;
    };

    std::vector<std::size_t> order(train.utterances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, 0xba7c4, epoch));
        shuffle_rng.shuffle(order);

        double epoch_sum = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<PretrainItem> batch;
            batch.reserve(stop - start);
            std::size_t batch_selected = 0;
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t idx = order[b];
                Rng rng(mix_seed(mix_seed(cfg.seed, 0x91a2, epoch), idx));
                batch.push_back(make_pretrain_item(train.utterances[idx], cfg,
                                                   model.mask_phone_id(), rng));
                batch_selected += batch.back().plan.selected.size();
            }
            if (batch_selected == 0) continue;

            model.ps.zero_grads();
            const T loss = batch_pretrain_loss(model, batch, cfg.components, cfg.normalization,
                                               /*with_grads=*/true);
            if (!std::isfinite(static_cast<double>(loss))) {
                if (!saved) save(epoch, res.best_dev_loss, "aborted-before-first-save");
                throw NumericError("pretrain: non-finite loss at epoch " +
                                   std::to_string(epoch));
            }
            nn::adam_step(model.ps, opt, static_cast<T>(cfg.lr));

            const double raw = cfg.normalization == LossNorm::MeanOverMasked
                                   ? static_cast<double>(loss) * static_cast<double>(batch_selected)
                                   : static_cast<double>(loss);
            epoch_sum += raw;
            epoch_count += batch_selected;
        }
        res.train_loss.push_back(detail::apply_norm(epoch_sum, epoch_count, cfg.normalization));
        res.total_selected_last_epoch = epoch_count;

        if (dev) {
            const auto [dsum, dcount] = detail::pretrain_loss_over(model, dev_items,
                                                                   cfg.components);
            const double dloss = detail::apply_norm(dsum, dcount, cfg.normalization);
            res.dev_loss.push_back(dloss);
            if (dloss < res.best_dev_loss) {
                res.best_dev_loss = dloss;
                res.best_epoch = epoch;
                save(epoch, dloss, nullptr);
            }
        } else {
            res.best_epoch = epoch;
        }
    }

    if (!dev) save(cfg.epochs, 0.0, nullptr);

    if (!loss_curve_path.empty()) {
        std::ofstream out(loss_curve_path);
        if (!out) throw ParseError("cannot open '" + loss_curve_path + "' for writing");
        for (std::size_t e = 0; e < res.train_loss.size(); ++e)
            out << (e + 1) << "," << detail::format_loss(res.train_loss[e]) << "\n";
    }
    return res;
}

// Top-1 masked-phone accuracy over fixed plans; the learnability check.
template <typename T>
inline double masked_phone_accuracy(EncoderModel<T>& model, const Corpus& corpus,
                                    const PretrainConfig& cfg) {
    std::size_t hits = 0, total = 0;
    EncodeCache<T> cache;
    for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
        Rng rng(mix_seed(cfg.seed, 0xacc0, i));
        const PretrainItem item = make_pretrain_item(corpus.utterances[i], cfg,
                                                     model.mask_phone_id(), rng);
        if (item.plan.empty()) continue;
        const Tensor<T> hidden = encode(model, SequenceView::of(item.masked), cache);
        const Tensor<T>& w = model.ps.value("head.phone.w");
        const Tensor<T>& b = model.ps.value("head.phone.b");
        for (std::size_t k = 0; k < item.plan.selected.size(); ++k) {
            const std::size_t row = cache.hidden_row(item.plan.selected[k]);
            const std::vector<T> logits = detail::head_logits(w, b, hidden.row(row));
            std::size_t arg = 0;
            for (std::size_t c = 1; c < logits.size(); ++c)
                if (logits[c] > logits[arg]) arg = c;
            hits += static_cast<int>(arg) == item.plan.phone_targets[k] ? 1 : 0;
            ++total;
        }
    }
    if (total == 0) throw DomainError("masked_phone_accuracy: no selected positions");
    return static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace flupre
