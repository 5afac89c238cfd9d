#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flupre/corpus.hpp"
#include "flupre/corpus_io.hpp"
#include "flupre/errors.hpp"
#include "flupre/model.hpp"
#include "flupre/pcc.hpp"
#include "flupre/pretrain.hpp"
#include "flupre/scorer.hpp"
#include "flupre/synth.hpp"

namespace flupre {

// One experimental condition: everything but the seed. Scratch rows carry
// loss "-" because fine-tuning never sees the reconstruction loss.
struct ConditionKey {
    EncoderKind encoder = EncoderKind::Blstm;
    bool pretrained = false;
    std::string loss = "-";
    std::size_t train_size = 0;

    std::string label() const {
        return encoder_kind_name(encoder) + "/pre=" + (pretrained ? "on" : "off") +
               "/loss=" + loss + "/n=" + std::to_string(train_size);
    }
    bool operator==(const ConditionKey& o) const {
        return encoder == o.encoder && pretrained == o.pretrained && loss == o.loss &&
               train_size == o.train_size;
    }
};

struct EvalRow {
    ConditionKey key;
    std::uint64_t seed = 0;
    double pcc = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    std::string error;
};

struct ConditionSummary {
    ConditionKey key;
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
    double mean_pcc = std::numeric_limits<double>::quiet_NaN();
    double std_pcc = 0.0; // sample std over seeds, 0 when fewer than 2 rows
};

struct EvalReport {
    std::vector<EvalRow> rows;

    std::vector<ConditionSummary> summaries() const {
        std::vector<ConditionSummary> out;
        for (const EvalRow& r : rows) {
            auto it = std::find_if(out.begin(), out.end(),
                                   [&](const ConditionSummary& s) { return s.key == r.key; });
            if (it == out.end()) {
                out.push_back(ConditionSummary{r.key, 0, 0, 0.0, 0.0});
                it = out.end() - 1;
            }
            if (r.ok) {
                ++it->n_ok;
                it->mean_pcc += r.pcc; // running sum; finalized below
            } else {
                ++it->n_failed;
            }
        }
        for (ConditionSummary& s : out) {
            if (s.n_ok == 0) {
                s.mean_pcc = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            s.mean_pcc /= static_cast<double>(s.n_ok);
            if (s.n_ok >= 2) {
                double acc = 0.0;
                for (const EvalRow& r : rows)
                    if (r.ok && r.key == s.key) {
                        const double d = r.pcc - s.mean_pcc;
                        acc += d * d;
                    }
                s.std_pcc = std::sqrt(acc / static_cast<double>(s.n_ok - 1));
            }
        }
        return out;
    }
};

inline EvalReport merge_reports(const std::vector<EvalReport>& parts) {
    EvalReport merged;
    for (const EvalReport& p : parts)
        merged.rows.insert(merged.rows.end(), p.rows.begin(), p.rows.end());
    return merged;
}

// Per-seed paired deltas a - b for two conditions of one report.
struct PairedComparison {
    std::vector<std::pair<std::uint64_t, double>> deltas; // (seed, delta)
    double mean_delta = 0.0;
    std::size_t n_positive = 0;
};

inline PairedComparison compare_conditions(const EvalReport& report, const ConditionKey& a,
                                           const ConditionKey& b) {
    std::map<std::uint64_t, double> pa, pb;
    for (const EvalRow& r : report.rows) {
        if (!r.ok) continue;
        if (r.key == a) pa[r.seed] = r.pcc;
        if (r.key == b) pb[r.seed] = r.pcc;
    }
    if (pa.empty() || pb.empty())
        throw ConfigError("compare_conditions: no successful rows for '" +
                          (pa.empty() ? a.label() : b.label()) + "'");
    if (pa.size() != pb.size())
        throw ConfigError("compare_conditions: seed sets differ between '" + a.label() +
                          "' and '" + b.label() + "'");
    PairedComparison cmp;
    for (const auto& [seed, va] : pa) {
        auto it = pb.find(seed);
        if (it == pb.end())
            throw ConfigError("compare_conditions: seed " + std::to_string(seed) +
                              " present only in '" + a.label() + "'");
        const double d = va - it->second;
        cmp.deltas.emplace_back(seed, d);
        cmp.mean_delta += d;
        if (d > 0.0) ++cmp.n_positive;
    }
    cmp.mean_delta /= static_cast<double>(cmp.deltas.size());
    return cmp;
}

// ---------------------------------------------------------------------------
// Experiment configuration and data preparation
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    // Either all five corpus paths, or a synthetic world generated on the fly.
    std::string pretrain_corpus_path;
    std::string pretrain_dev_path;
    std::string labeled_pool_path;
    std::string labeled_dev_path;
    std::string test_path;

    SynthConfig synth;              // world parameters; n_utterances ignored
    std::size_t n_pretrain = 2000;
    std::size_t n_pretrain_dev = 200;
    std::size_t n_labeled_pool = 500;
    std::size_t n_labeled_dev = 200;
    std::size_t n_test = 500;

    EncoderKind encoder = EncoderKind::Blstm;
    ModelDims dims; // vocab_size/feature_dim are filled from the data

    std::vector<bool> pretrain_axis{true, false};
    std::vector<std::string> loss_axis{"phn+dur"};
    std::vector<std::size_t> size_axis;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

    PretrainConfig pretrain;  // per-row: seed and components are overridden
    FinetuneConfig finetune;  // per-row: seed and init are overridden

    std::string out_dir;
    bool reuse_cached_pretrains = true;
};

inline void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.size_axis.empty()) throw ConfigError("experiment: empty train-size sweep");
    if (cfg.loss_axis.empty()) throw ConfigError("experiment: empty loss sweep");
    if (cfg.pretrain_axis.empty()) throw ConfigError("experiment: empty pretrain on/off sweep");
    if (cfg.seeds.empty()) throw ConfigError("experiment: empty seed list");
    if (cfg.out_dir.empty()) throw ConfigError("experiment: out_dir required");
    for (const std::string& l : cfg.loss_axis) parse_loss_components(l); // validates
}

struct ExperimentData {
    Corpus pretrain_train;
    Corpus pretrain_dev;
    Corpus labeled_pool;
    Corpus labeled_dev;
    Corpus test;
};

namespace detail {

inline Corpus slice_corpus(const Corpus& c, std::size_t lo, std::size_t hi) {
    Corpus out;
    out.vocab_size = c.vocab_size;
    out.feature_dim = c.feature_dim;
    out.metadata = c.metadata;
    out.utterances.assign(c.utterances.begin() + static_cast<std::ptrdiff_t>(lo),
                          c.utterances.begin() + static_cast<std::ptrdiff_t>(hi));
    return out;
}

inline void check_compatible(const Corpus& a, const Corpus& b, const std::string& what) {
    if (a.vocab_size != b.vocab_size || a.feature_dim != b.feature_dim)
        throw SchemaError("experiment: " + what + " corpus has vocab/feature dims " +
                          std::to_string(b.vocab_size) + "/" + std::to_string(b.feature_dim) +
                          " vs " + std::to_string(a.vocab_size) + "/" +
                          std::to_string(a.feature_dim));
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace detail

// All splits come from one generated world (shared phone inventory, Markov
// chain, and canonical features) sliced into disjoint index ranges, so
// pre-train and fine-tune data are i.i.d. from the same distribution.
inline ExperimentData prepare_experiment_data(const ExperimentConfig& cfg) {
    ExperimentData d;
    if (!cfg.pretrain_corpus_path.empty() || !cfg.labeled_pool_path.empty()) {
        if (cfg.pretrain_corpus_path.empty() || cfg.pretrain_dev_path.empty() ||
            cfg.labeled_pool_path.empty() || cfg.labeled_dev_path.empty() ||
            cfg.test_path.empty())
            throw ConfigError("experiment: corpus paths must name all five splits");
        d.pretrain_train = load_corpus(cfg.pretrain_corpus_path);
        d.pretrain_dev = load_corpus(cfg.pretrain_dev_path);
        d.labeled_pool = load_corpus(cfg.labeled_pool_path);
        d.labeled_dev = load_corpus(cfg.labeled_dev_path);
        d.test = load_corpus(cfg.test_path);
    } else {
        SynthConfig sc = cfg.synth;
        sc.n_utterances = cfg.n_pretrain + cfg.n_pretrain_dev + cfg.n_labeled_pool +
                          cfg.n_labeled_dev + cfg.n_test;
        const Corpus world = generate_synthetic_corpus(sc);
        std::size_t at = 0;
        auto take = [&](std::size_t n) {
            const Corpus s = detail::slice_corpus(world, at, at + n);
            at += n;
            return s;
        };
        d.pretrain_train = take(cfg.n_pretrain);
        d.pretrain_dev = take(cfg.n_pretrain_dev);
        d.labeled_pool = take(cfg.n_labeled_pool);
        d.labeled_dev = take(cfg.n_labeled_dev);
        d.test = take(cfg.n_test);
    }
    detail::check_compatible(d.pretrain_train, d.pretrain_dev, "pretrain-dev");
    detail::check_compatible(d.pretrain_train, d.labeled_pool, "labeled-pool");
    detail::check_compatible(d.pretrain_train, d.labeled_dev, "labeled-dev");
    detail::check_compatible(d.pretrain_train, d.test, "test");
    return d;
}

// Identity of a pre-training run, for checkpoint reuse across sweep rows.
// Any knob that changes the produced weights is part of the tag.
inline std::string pretrain_cache_tag(const ExperimentConfig& cfg, const std::string& loss,
                                      std::uint64_t seed) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "enc=" << encoder_kind_name(cfg.encoder) << ";loss=" << loss << ";seed=" << seed
       << ";epochs=" << cfg.pretrain.epochs << ";lr=" << cfg.pretrain.lr
       << ";batch=" << cfg.pretrain.batch_size << ";mask=" << cfg.pretrain.mask_rate
       << ";replace=" << cfg.pretrain.replace_prob << ";force=" << cfg.pretrain.force_select
       << ";norm=" << (cfg.pretrain.normalization == LossNorm::Sum ? "sum" : "mean")
       << ";embed=" << cfg.dims.embed_dim << ";dscale=" << cfg.dims.duration_scale
       << ";bl=" << cfg.dims.blstm_layers << ";bh=" << cfg.dims.blstm_hidden
       << ";tl=" << cfg.dims.tf_layers << ";dm=" << cfg.dims.d_model
       << ";heads=" << cfg.dims.heads;
    if (!cfg.pretrain_corpus_path.empty()) {
        os << ";data=" << cfg.pretrain_corpus_path << "|" << cfg.pretrain_dev_path;
    } else {
        os << ";world=" << cfg.synth.seed << "|" << cfg.synth.vocab_size << "|"
           << cfg.synth.feature_dim << "|" << cfg.synth.min_len << "|" << cfg.synth.max_len
           << "|" << cfg.synth.duration_stretch << "|" << cfg.synth.pause_prob_scale << "|"
           << cfg.synth.feature_noise_scale << "|" << cfg.synth.score_noise_std << "|"
           << cfg.n_pretrain << "|" << cfg.n_pretrain_dev;
    }
    return os.str();
}

inline std::string pretrain_checkpoint_path(const ExperimentConfig& cfg,
                                            const std::string& loss, std::uint64_t seed) {
    std::ostringstream os;
    os << cfg.out_dir << "/cache/pre_" << std::hex << std::setw(16) << std::setfill('0')
       << detail::fnv1a(pretrain_cache_tag(cfg, loss, seed)) << std::dec << "_s" << seed
       << ".ck";
    return os.str();
}

// Runs (or reuses) one pre-training leg and returns its checkpoint path.
template <typename T>
inline std::string ensure_pretrained(const ExperimentConfig& cfg, const ExperimentData& data,
                                     const ModelDims& dims, const std::string& loss,
                                     std::uint64_t seed) {
    const std::string path = pretrain_checkpoint_path(cfg, loss, seed);
    if (cfg.reuse_cached_pretrains && std::filesystem::exists(path) &&
        std::filesystem::exists(checkpoint_meta_path(path)))
        return path;
    EncoderModel<T> model = make_model<T>(cfg.encoder, dims, mix_seed(seed, 0x9e7a41));
    PretrainConfig pcfg = cfg.pretrain;
    pcfg.seed = seed;
    pcfg.components = parse_loss_components(loss);
    run_pretraining(model, data.pretrain_train, &data.pretrain_dev, pcfg, path,
                    path + ".curve.csv");
    return path;
}

// The full sweep: pre-train once per (loss, seed), then fine-tune and score
// every (pretrain, loss, size, seed) cell. Failures are recorded per row and
// the sweep keeps going.
template <typename T>
inline EvalReport run_experiment(const ExperimentConfig& cfg) {
    validate_experiment_config(cfg);
    const ExperimentData data = prepare_experiment_data(cfg);

    ModelDims dims = cfg.dims;
    dims.vocab_size = data.labeled_pool.vocab_size;
    dims.feature_dim = data.labeled_pool.feature_dim;

    std::filesystem::create_directories(cfg.out_dir + "/cache");

    const bool any_pretrain = std::find(cfg.pretrain_axis.begin(), cfg.pretrain_axis.end(),
                                        true) != cfg.pretrain_axis.end();
    std::map<std::string, std::string> checkpoints; // (loss|seed) -> path or "" on failure
    std::map<std::string, std::string> pretrain_errors;
    if (any_pretrain) {
        for (const std::string& loss : cfg.loss_axis)
            for (const std::uint64_t seed : cfg.seeds) {
                const std::string k = loss + "|" + std::to_string(seed);
                try {
                    checkpoints[k] = ensure_pretrained<T>(cfg, data, dims, loss, seed);
                } catch (const Error& e) {
                    checkpoints[k] = "";
                    pretrain_errors[k] = e.what();
                }
            }
    }

    const std::vector<double> test_refs = human_scores(data.test);
    EvalReport report;
    for (const bool pre : cfg.pretrain_axis) {
        const std::vector<std::string> losses =
            pre ? cfg.loss_axis : std::vector<std::string>{"-"};
        for (const std::string& loss : losses)
            for (const std::size_t size : cfg.size_axis)
                for (const std::uint64_t seed : cfg.seeds) {
                    EvalRow row;
                    row.key = ConditionKey{cfg.encoder, pre, loss, size};
                    row.seed = seed;
                    try {
                        FinetuneConfig fcfg = cfg.finetune;
                        fcfg.seed = seed;
                        if (pre) {
                            const std::string k = loss + "|" + std::to_string(seed);
                            if (checkpoints.at(k).empty())
                                throw ConfigError("pre-training failed: " +
                                                  pretrain_errors.at(k));
                            fcfg.init_checkpoint = checkpoints.at(k);
                        } else {
                            fcfg.init_checkpoint.clear();
                        }
                        if (size > data.labeled_pool.utterances.size())
                            throw ConfigError("train size " + std::to_string(size) +
                                              " exceeds labeled pool of " +
                                              std::to_string(
                                                  data.labeled_pool.utterances.size()));
                        const Corpus train = subsample_corpus(data.labeled_pool, size, seed);
                        EncoderModel<T> model = make_finetune_model<T>(cfg.encoder, dims, fcfg);
                        run_finetune(model, train, &data.labeled_dev, fcfg);
                        row.pcc = pcc(predict_scores(model, data.test, fcfg.pooling),
                                      test_refs);
                        row.ok = true;
                    } catch (const Error& e) {
                        row.ok = false;
                        row.error = e.what();
                    }
                    report.rows.push_back(row);
                }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report output: aligned text table plus line-delimited JSON-ish records.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_pcc(double v) {
    if (!std::isfinite(v)) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

inline std::string json_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out;
}

} // namespace detail

inline void write_report_text(const EvalReport& report, std::ostream& out) {
    const auto sums = report.summaries();
    std::vector<std::vector<std::string>> table;
    table.push_back({"encoder", "pretrain", "loss", "n_train", "runs", "mean_pcc", "std_pcc"});
    for (const ConditionSummary& s : sums) {
        std::ostringstream runs;
        runs << s.n_ok << "/" << (s.n_ok + s.n_failed);
        table.push_back({encoder_kind_name(s.key.encoder), s.key.pretrained ? "on" : "off",
                         s.key.loss, std::to_string(s.key.train_size), runs.str(),
                         detail::fmt_pcc(s.mean_pcc),
                         s.n_ok >= 2 ? detail::fmt_pcc(s.std_pcc) : "-"});
    }
    std::vector<std::size_t> width(table[0].size(), 0);
    for (const auto& r : table)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    for (const auto& r : table) {
        for (std::size_t c = 0; c < r.size(); ++c)
            out << std::left << std::setw(static_cast<int>(width[c]) + 2) << r[c];
        out << "\n";
    }

    // Size-sweep shape, logged for eyeballing (soft trend, never asserted).
    for (const ConditionSummary& s : sums) {
        bool first_of_group = true;
        for (const ConditionSummary& t : sums)
            if (t.key.encoder == s.key.encoder && t.key.pretrained == s.key.pretrained &&
                t.key.loss == s.key.loss && t.key.train_size < s.key.train_size)
                first_of_group = false;
        if (!first_of_group) continue;
        std::ostringstream line;
        std::size_t n = 0;
        for (const ConditionSummary& t : sums)
            if (t.key.encoder == s.key.encoder && t.key.pretrained == s.key.pretrained &&
                t.key.loss == s.key.loss) {
                line << (n++ ? ", " : "") << t.key.train_size << "->"
                     << detail::fmt_pcc(t.mean_pcc);
            }
        if (n >= 2)
            out << "# mean PCC by train size [" << encoder_kind_name(s.key.encoder)
                << " pre=" << (s.key.pretrained ? "on" : "off") << " loss=" << s.key.loss
                << "]: " << line.str() << "\n";
    }

    for (const EvalRow& r : report.rows)
        if (!r.ok)
            out << "# FAILED " << r.key.label() << " seed=" << r.seed << ": " << r.error
                << "\n";
}

inline void write_report_jsonl(const EvalReport& report, std::ostream& out) {
    out << std::setprecision(17);
    for (const EvalRow& r : report.rows) {
        out << "{\"encoder\":\"" << encoder_kind_name(r.key.encoder) << "\""
            << ",\"pretrain\":" << (r.key.pretrained ? "true" : "false") << ",\"loss\":\""
            << r.key.loss << "\"" << ",\"train_size\":" << r.key.train_size
            << ",\"seed\":" << r.seed << ",\"ok\":" << (r.ok ? "true" : "false");
        if (r.ok)
            out << ",\"pcc\":" << r.pcc;
        else
            out << ",\"error\":\"" << detail::json_escape(r.error) << "\"";
        out << "}\n";
    }
}

inline void write_report_files(const EvalReport& report, const std::string& txt_path,
                               const std::string& jsonl_path) {
    std::ofstream t(txt_path);
    if (!t) throw ParseError("cannot open '" + txt_path + "' for writing");
    write_report_text(report, t);
    std::ofstream j(jsonl_path);
    if (!j) throw ParseError("cannot open '" + jsonl_path + "' for writing");
    write_report_jsonl(report, j);
}

} // namespace flupre
