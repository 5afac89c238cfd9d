#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "flupre/corpus.hpp"
#include "flupre/errors.hpp"

namespace flupre {

// On-disk corpus: UTF-8, one JSON object per line. The first line is a
// header carrying vocab_size, feature_dim and free-form metadata; every
// following line is one utterance record. Features are float32; their JSON
// decimal form round-trips bit-exactly.
inline void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");

    nlohmann::json header;
    header["vocab_size"] = corpus.vocab_size;
    header["feature_dim"] = corpus.feature_dim;
    header["metadata"] = corpus.metadata;
    out << header.dump() << '\n';

    for (const Utterance& u : corpus.utterances) {
        nlohmann::json rec;
        rec["id"] = u.id;
        rec["phones"] = u.phones;
        rec["durations"] = u.durations;
        rec["feature_dim"] = u.feature_dim;
        rec["features"] = u.features;
        if (u.has_score) rec["score"] = u.score;
        out << rec.dump() << '\n';
    }
    if (!out) throw ParseError("write failure on '" + path + "'");
}

inline Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "' for reading");

    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;

    auto parse_line = [&](const std::string& text) {
        nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded())
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed record");
        return j;
    };

    if (!std::getline(in, line))
        throw ParseError(path + ": empty file, expected corpus header");
    ++line_no;
    try {
        nlohmann::json header = parse_line(line);
        corpus.vocab_size = header.at("vocab_size").get<int>();
        corpus.feature_dim = header.at("feature_dim").get<std::size_t>();
        if (header.contains("metadata"))
            corpus.metadata = header.at("metadata").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ":1: bad corpus header: " + e.what());
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Utterance u;
        try {
            nlohmann::json rec = parse_line(line);
            u.id = rec.at("id").get<std::string>();
            u.phones = rec.at("phones").get<std::vector<int>>();
            u.durations = rec.at("durations").get<std::vector<int>>();
            u.feature_dim = rec.at("feature_dim").get<std::size_t>();
            u.features = rec.at("features").get<std::vector<float>>();
            if (rec.contains("score")) {
                u.has_score = true;
                u.score = rec.at("score").get<float>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad record: " + e.what());
        }
        if (u.feature_dim != corpus.feature_dim)
            throw SchemaError("utterance '" + u.id + "': feature_dim " +
                              std::to_string(u.feature_dim) + " != corpus feature_dim " +
                              std::to_string(corpus.feature_dim));
        validate_utterance(u, corpus.vocab_size);
        corpus.utterances.push_back(std::move(u));
    }
    return corpus;
}

inline bool corpora_equal(const Corpus& a, const Corpus& b) {
    if (a.vocab_size != b.vocab_size || a.feature_dim != b.feature_dim ||
        a.metadata != b.metadata || a.size() != b.size())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Utterance& x = a.utterances[i];
        const Utterance& y = b.utterances[i];
        if (x.id != y.id || x.phones != y.phones || x.durations != y.durations ||
            x.feature_dim != y.feature_dim || x.has_score != y.has_score)
            return false;
        if (x.has_score && x.score != y.score) return false;
        if (x.features.size() != y.features.size()) return false;
        for (std::size_t k = 0; k < x.features.size(); ++k)
            if (x.features[k] != y.features[k]) return false;
    }
    return true;
}

} // namespace flupre
