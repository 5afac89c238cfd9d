// Command-line surface over the library: corpus generation, pre-training,
// fine-tuning, scoring, evaluation, and the sweep runner. All run-control
// comes from a flat key=value config file; a few common flags override the
// corresponding keys. Numeric work runs in float32.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "flupre/flupre.hpp"

namespace {

using Scalar = float;

struct CommonFlags {
    std::string config_path;
    std::string out_dir = ".";
    std::string encoder;
    std::string loss;
    std::string seed; // kept as text so "absent" is distinguishable
    bool no_pretrain_init = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_loss, bool with_encoder,
                bool with_no_init) {
    cmd->add_option("--config", f.config_path, "key=value config file")->required();
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--seed", f.seed, "override the config seed");
    if (with_encoder)
        cmd->add_option("--encoder", f.encoder, "encoder kind: blstm or transformer");
    if (with_loss)
        cmd->add_option("--loss", f.loss, "pre-train loss components: phn, dur, or phn+dur");
    if (with_no_init)
        cmd->add_flag("--no-pretrain-init", f.no_pretrain_init,
                      "ignore init_checkpoint and fine-tune from scratch");
}

flupre::ConfigReader open_config(const CommonFlags& f) {
    flupre::ConfigReader cfg = flupre::ConfigReader::from_file(f.config_path);
    if (!f.seed.empty()) cfg.set("seed", f.seed);
    if (!f.encoder.empty()) cfg.set("encoder", f.encoder);
    if (!f.loss.empty()) cfg.set("loss", f.loss);
    return cfg;
}

std::string out_path(const CommonFlags& f, const std::string& name) {
    std::filesystem::create_directories(f.out_dir);
    return f.out_dir + "/" + name;
}

flupre::ModelDims read_dims(flupre::ConfigReader& cfg) {
    flupre::ModelDims d;
    d.embed_dim = cfg.get_size("embed_dim", d.embed_dim);
    d.duration_scale = cfg.get_double("duration_scale", d.duration_scale);
    d.blstm_layers = cfg.get_size("blstm_layers", d.blstm_layers);
    d.blstm_hidden = cfg.get_size("blstm_hidden", d.blstm_hidden);
    d.tf_layers = cfg.get_size("tf_layers", d.tf_layers);
    d.d_model = cfg.get_size("d_model", d.d_model);
    d.heads = cfg.get_size("heads", d.heads);
    d.max_positions = cfg.get_size("max_positions", d.max_positions);
    return d;
}

flupre::SynthConfig read_synth(flupre::ConfigReader& cfg, const std::string& seed_key) {
    flupre::SynthConfig s;
    s.vocab_size = static_cast<int>(cfg.get_size("vocab_size", 40));
    s.feature_dim = cfg.get_size("feature_dim", 64);
    s.min_len = cfg.get_size("min_len", s.min_len);
    s.max_len = cfg.get_size("max_len", s.max_len);
    s.fluency_min = cfg.get_double("fluency_min", s.fluency_min);
    s.fluency_max = cfg.get_double("fluency_max", s.fluency_max);
    s.duration_stretch = cfg.get_double("duration_stretch", s.duration_stretch);
    s.pause_prob_scale = cfg.get_double("pause_prob_scale", s.pause_prob_scale);
    s.feature_noise_scale = cfg.get_double("feature_noise_scale", s.feature_noise_scale);
    s.score_noise_std = cfg.get_double("score_noise_std", s.score_noise_std);
    s.seed = cfg.get_u64(seed_key, s.seed);
    return s;
}

int cmd_gen(const CommonFlags& f) {
    flupre::ConfigReader cfg = open_config(f);
    flupre::SynthConfig s = read_synth(cfg, "seed");
    s.n_utterances = cfg.get_size("n_utterances", 0);
    cfg.finish();
    if (s.n_utterances == 0) throw flupre::ConfigError("gen: n_utterances required");
    const flupre::Corpus corpus = flupre::generate_synthetic_corpus(s);
    const std::string path = out_path(f, "corpus.jsonl");
    flupre::save_corpus(corpus, path);
    std::cout << "wrote " << corpus.utterances.size() << " utterances to " << path << "\n";
    return 0;
}

flupre::PretrainConfig read_pretrain_cfg(flupre::ConfigReader& cfg, const std::string& prefix) {
    flupre::PretrainConfig p;
    p.mask_rate = cfg.get_double(prefix.empty() ? "mask_rate" : prefix + "mask_rate",
                                 p.mask_rate);
    p.replace_prob = cfg.get_double(prefix.empty() ? "replace_prob" : prefix + "replace_prob",
                                    p.replace_prob);
    p.force_select = cfg.get_bool(prefix.empty() ? "force_select" : prefix + "force_select",
                                  p.force_select);
    p.batch_size = cfg.get_size(prefix + "batch_size", p.batch_size);
    p.lr = cfg.get_double(prefix + "lr", p.lr);
    p.epochs = cfg.get_size(prefix + "epochs", p.epochs);
    p.normalization = flupre::parse_loss_norm(
        cfg.get_string(prefix.empty() ? "normalization" : prefix + "normalization",
                       "mean-over-masked"));
    return p;
}

int cmd_pretrain(const CommonFlags& f) {
    flupre::ConfigReader cfg = open_config(f);
    const flupre::Corpus train = flupre::load_corpus(cfg.require_string("train_corpus"));
    const std::string dev_path = cfg.get_string("dev_corpus", "");
    flupre::Corpus dev;
    if (!dev_path.empty()) dev = flupre::load_corpus(dev_path);

    flupre::PretrainConfig pcfg = read_pretrain_cfg(cfg, "");
    pcfg.seed = cfg.get_u64("seed", 1);
    pcfg.components = flupre::parse_loss_components(cfg.get_string("loss", "phn+dur"));
    const flupre::EncoderKind kind =
        flupre::parse_encoder_kind(cfg.get_string("encoder", "blstm"));
    flupre::ModelDims dims = read_dims(cfg);
    cfg.finish();

    dims.vocab_size = train.vocab_size;
    dims.feature_dim = train.feature_dim;
    flupre::EncoderModel<Scalar> model =
        flupre::make_model<Scalar>(kind, dims, flupre::mix_seed(pcfg.seed, 0x9e7a41));

    const std::string ck = out_path(f, "pretrain.ck");
    const flupre::PretrainResult res =
        flupre::run_pretraining(model, train, dev_path.empty() ? nullptr : &dev, pcfg, ck,
                                out_path(f, "pretrain_loss.csv"));
    std::cout << std::setprecision(17);
    std::cout << "pretrain done: epochs=" << res.train_loss.size();
    if (!res.train_loss.empty())
        std::cout << " first_loss=" << res.train_loss.front()
                  << " last_loss=" << res.train_loss.back();
    if (!res.dev_loss.empty())
        std::cout << " best_epoch=" << res.best_epoch << " best_dev_loss=" << res.best_dev_loss;
    std::cout << "\ncheckpoint: " << ck << "\n";
    return 0;
}

int cmd_finetune(const CommonFlags& f) {
    flupre::ConfigReader cfg = open_config(f);
    const flupre::Corpus train = flupre::load_corpus(cfg.require_string("train_corpus"));
    const std::string dev_path = cfg.get_string("dev_corpus", "");
    const std::string test_path = cfg.get_string("test_corpus", "");
    flupre::Corpus dev, test;
    if (!dev_path.empty()) dev = flupre::load_corpus(dev_path);
    if (!test_path.empty()) test = flupre::load_corpus(test_path);

    flupre::FinetuneConfig fcfg;
    fcfg.batch_size = cfg.get_size("batch_size", fcfg.batch_size);
    fcfg.lr = cfg.get_double("lr", fcfg.lr);
    fcfg.epochs = cfg.get_size("epochs", fcfg.epochs);
    fcfg.seed = cfg.get_u64("seed", 1);
    fcfg.pooling = flupre::parse_pooling(cfg.get_string("pooling", "auto"));
    fcfg.init_checkpoint = cfg.get_string("init_checkpoint", "");
    if (f.no_pretrain_init) fcfg.init_checkpoint.clear();

    const std::string enc_str = cfg.get_string("encoder", "");
    flupre::ModelDims dims = read_dims(cfg);
    cfg.finish();

    flupre::EncoderKind kind;
    if (!fcfg.init_checkpoint.empty()) {
        const auto meta = flupre::read_checkpoint_meta(fcfg.init_checkpoint);
        kind = flupre::parse_encoder_kind(enc_str.empty() ? meta.at("encoder") : enc_str);
    } else {
        kind = flupre::parse_encoder_kind(enc_str.empty() ? "blstm" : enc_str);
    }
    dims.vocab_size = train.vocab_size;
    dims.feature_dim = train.feature_dim;

    flupre::EncoderModel<Scalar> model =
        flupre::make_finetune_model<Scalar>(kind, dims, fcfg);
    const std::string ck = out_path(f, "finetune.ck");
    const flupre::FinetuneResult res =
        flupre::run_finetune(model, train, dev_path.empty() ? nullptr : &dev, fcfg, ck,
                             out_path(f, "finetune_curve.csv"));

    std::ostringstream report;
    report << std::setprecision(17);
    report << "epochs=" << res.train_loss.size() << "\n";
    if (!res.train_loss.empty()) report << "final_train_mse=" << res.train_loss.back() << "\n";
    if (!dev_path.empty()) {
        report << "best_epoch=" << res.best_epoch << "\n";
        report << "best_dev_pcc=" << res.best_dev_pcc << "\n";
    }
    if (!test_path.empty())
        report << "test_pcc=" << flupre::evaluate_pcc(model, test, fcfg.pooling) << "\n";
    std::ofstream rf(out_path(f, "finetune_report.txt"));
    rf << report.str();
    std::cout << report.str() << "checkpoint: " << ck << "\n";
    return 0;
}

int cmd_score(const CommonFlags& f, bool clamp) {
    flupre::ConfigReader cfg = open_config(f);
    const std::string ck = cfg.require_string("checkpoint");
    const flupre::Corpus corpus = flupre::load_corpus(cfg.require_string("corpus"));
    const flupre::Pooling pooling = flupre::parse_pooling(cfg.get_string("pooling", "auto"));
    cfg.finish();

    flupre::EncoderModel<Scalar> model = flupre::load_model_checkpoint<Scalar>(ck);
    std::vector<double> scores = flupre::predict_scores(model, corpus, pooling);
    if (clamp)
        for (double& s : scores) s = flupre::clamped_score(s);
    const std::string path = out_path(f, "scores.tsv");
    flupre::write_scores(path, corpus, scores);
    std::cout << "scored " << scores.size() << " utterances -> " << path << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& f) {
    flupre::ConfigReader cfg = open_config(f);
    const std::string ck = cfg.require_string("checkpoint");
    const flupre::Corpus corpus = flupre::load_corpus(cfg.require_string("corpus"));
    const flupre::Pooling pooling = flupre::parse_pooling(cfg.get_string("pooling", "auto"));
    cfg.finish();

    flupre::EncoderModel<Scalar> model = flupre::load_model_checkpoint<Scalar>(ck);
    const double r = flupre::evaluate_pcc(model, corpus, pooling);
    std::ostringstream line;
    line << std::setprecision(17) << "pcc=" << r << "\n";
    std::ofstream out(out_path(f, "eval.txt"));
    out << line.str();
    std::cout << line.str();
    return 0;
}

int cmd_sweep(const CommonFlags& f) {
    flupre::ConfigReader cfg = open_config(f);
    flupre::ExperimentConfig ec;
    ec.pretrain_corpus_path = cfg.get_string("pretrain_corpus", "");
    ec.pretrain_dev_path = cfg.get_string("pretrain_dev_corpus", "");
    ec.labeled_pool_path = cfg.get_string("labeled_pool_corpus", "");
    ec.labeled_dev_path = cfg.get_string("labeled_dev_corpus", "");
    ec.test_path = cfg.get_string("test_corpus", "");
    ec.synth = read_synth(cfg, "world_seed");
    ec.n_pretrain = cfg.get_size("n_pretrain", ec.n_pretrain);
    ec.n_pretrain_dev = cfg.get_size("n_pretrain_dev", ec.n_pretrain_dev);
    ec.n_labeled_pool = cfg.get_size("n_labeled_pool", ec.n_labeled_pool);
    ec.n_labeled_dev = cfg.get_size("n_labeled_dev", ec.n_labeled_dev);
    ec.n_test = cfg.get_size("n_test", ec.n_test);

    ec.encoder = flupre::parse_encoder_kind(cfg.get_string("encoder", "blstm"));
    ec.dims = read_dims(cfg);

    ec.size_axis = cfg.get_size_list("train_sizes", {});
    ec.loss_axis = cfg.get_list("losses", {"phn+dur"});
    ec.seeds = cfg.get_u64_list("seeds", {1, 2, 3, 4, 5});
    ec.pretrain_axis.clear();
    for (const std::string& v : cfg.get_list("pretrain", {"on", "off"})) {
        if (v == "on")
            ec.pretrain_axis.push_back(true);
        else if (v == "off")
            ec.pretrain_axis.push_back(false);
        else
            throw flupre::ConfigError("sweep: pretrain list entries must be on/off, got '" +
                                      v + "'");
    }

    ec.pretrain = read_pretrain_cfg(cfg, "pretrain_");
    ec.finetune.batch_size = cfg.get_size("finetune_batch_size", ec.finetune.batch_size);
    ec.finetune.lr = cfg.get_double("finetune_lr", ec.finetune.lr);
    ec.finetune.epochs = cfg.get_size("finetune_epochs", ec.finetune.epochs);
    ec.finetune.pooling = flupre::parse_pooling(cfg.get_string("pooling", "auto"));
    ec.reuse_cached_pretrains = cfg.get_bool("reuse_cache", true);
    // sweep rows use the seed list; the single-seed override applies when given
    if (cfg.has("seed")) ec.seeds = {cfg.get_u64("seed", 1)};
    cfg.finish();

    ec.out_dir = f.out_dir;
    const flupre::EvalReport report = flupre::run_experiment<Scalar>(ec);
    flupre::write_report_files(report, out_path(f, "report.txt"),
                               out_path(f, "report.jsonl"));
    std::ifstream back(out_path(f, "report.txt"));
    std::cout << back.rdbuf();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"masked phonetic/prosody pre-training and fluency scoring"};
    app.require_subcommand(1);

    CommonFlags gen_f, pre_f, fin_f, score_f, eval_f, sweep_f;
    bool clamp = false;

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic corpus");
    add_common(gen, gen_f, false, false, false);
    CLI::App* pre = app.add_subcommand("pretrain", "masked-reconstruction pre-training");
    add_common(pre, pre_f, true, true, false);
    CLI::App* fin = app.add_subcommand("finetune", "fine-tune a fluency scorer");
    add_common(fin, fin_f, false, true, true);
    CLI::App* sco = app.add_subcommand("score", "score a corpus with a checkpoint");
    add_common(sco, score_f, false, false, false);
    sco->add_flag("--clamp", clamp, "clamp displayed scores to [0, 10]");
    CLI::App* eva = app.add_subcommand("eval", "PCC of a checkpoint on a labeled corpus");
    add_common(eva, eval_f, false, false, false);
    CLI::App* swe = app.add_subcommand("sweep", "run an experiment grid");
    add_common(swe, sweep_f, false, true, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_f);
        if (pre->parsed()) return cmd_pretrain(pre_f);
        if (fin->parsed()) return cmd_finetune(fin_f);
        if (sco->parsed()) return cmd_score(score_f, clamp);
        if (eva->parsed()) return cmd_eval(eval_f);
        if (swe->parsed()) return cmd_sweep(sweep_f);
    } catch (const flupre::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
