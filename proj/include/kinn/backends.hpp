// Pluggable backends: text encoder, commonsense inference, UMLS lookup, and
// the LLM used for explanation text.
//
// Every backend has a fully offline implementation (hash stub or file-backed
// fixture) so the complete pipeline runs and is tested without any network.
// HTTP implementations exist as ports for real services; nothing in the test
// suite talks to a live endpoint. Credentials are read from an environment
// variable only, never from configuration files.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinn/common.hpp"
#include "kinn/pos.hpp"

namespace kinn {

// --- commonsense aspect data -------------------------------------------------

/// The five if-then aspects kept from the nine ATOMIC-style relations:
/// intent/effect/reaction of the writer, effect/reaction of listeners.
/// A field that could not be inferred holds the sentinel "none".
struct AspectSet {
    std::string intent_w = "none";
    std::string effect_w = "none";
    std::string reaction_w = "none";
    std::string effect_l = "none";
    std::string reaction_l = "none";
};

inline bool operator==(const AspectSet& a, const AspectSet& b) {
    return a.intent_w == b.intent_w && a.effect_w == b.effect_w &&
           a.reaction_w == b.reaction_w && a.effect_l == b.effect_l &&
           a.reaction_l == b.reaction_l;
}

/// The nine ATOMIC-style relation names a commonsense backend is queried for.
inline const std::vector<std::string>& atomic_relations() {
    static const std::vector<std::string> r = {"xIntent", "xNeed", "xAttr",
                                               "xEffect", "xReact", "xWant",
                                               "oEffect", "oReact", "oWant"};
    return r;
}

// --- UMLS entry ---------------------------------------------------------------

struct UmlsEntry {
    std::string cui;  // "C" followed by digits
    std::string name;
    std::string definition;
};

inline bool operator==(const UmlsEntry& a, const UmlsEntry& b) {
    return a.cui == b.cui && a.name == b.name && a.definition == b.definition;
}

inline bool valid_cui(const std::string& cui) {
    if (cui.size() < 2 || cui[0] != 'C') return false;
    for (std::size_t i = 1; i < cui.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(cui[i]))) return false;
    }
    return true;
}

// --- encoder ------------------------------------------------------------------

class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;
    virtual std::string name() const = 0;
    virtual int dim() const = 0;
    /// Whether calls must be serialized (no concurrent use).
    virtual bool serial_only() const { return false; }
    /// The tokenizer paired with this encoder (marker-aware by default).
    virtual std::vector<Token> tokenize_text(const std::string& text) const {
        return kinn::tokenize(text);
    }
    /// One vector for a standalone phrase. Throws InputError on empty phrase.
    virtual Eigen::VectorXd embed_phrase(const std::string& phrase) = 0;
    /// One vector per token text, stacked as rows.
    virtual Eigen::MatrixXd embed_tokens(const std::vector<std::string>& tokens) = 0;
};

/// Deterministic offline encoder: each distinct normalized string maps to a
/// fixed pseudo-random unit vector (seeded by a 64-bit hash of the string).
/// Context-free by construction: a token embeds the same way everywhere.
class HashEncoder : public EncoderBackend {
public:
    explicit HashEncoder(int dim = 128) : dim_(dim) {
        if (dim <= 0) throw ConfigError("encoder dim must be positive");
    }

    std::string name() const override { return "hash"; }
    int dim() const override { return dim_; }

    Eigen::VectorXd embed_phrase(const std::string& phrase) override {
        if (phrase.empty()) throw InputError("embed_phrase: empty phrase");
        return vector_for_key(key_for(phrase));
    }

    Eigen::MatrixXd embed_tokens(const std::vector<std::string>& tokens) override {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(tokens.size()), dim_);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            X.row(static_cast<Eigen::Index>(i)) = vector_for_key(key_for(tokens[i]));
        }
        return X;
    }

private:
    static std::string key_for(const std::string& s) {
        std::string k = normalize_phrase(s);
        return k.empty() ? s : k;
    }

    Eigen::VectorXd vector_for_key(const std::string& key) const {
        Rng rng(fnv1a64(key));
        Eigen::VectorXd v(dim_);
        for (int i = 0; i < dim_; ++i) v[i] = rng.uniform(-1.0, 1.0);
        double n = v.norm();
        if (n == 0.0) {
            v.setZero();
            v[0] = 1.0;
        } else {
            v /= n;
        }
        return v;
    }

    int dim_;
};

// --- commonsense --------------------------------------------------------------

class CommonsenseBackend {
public:
    virtual ~CommonsenseBackend() = default;
    virtual std::string name() const = 0;
    /// Inference string for one relation; empty string when unavailable.
    virtual std::string infer(const std::string& text, const std::string& relation) = 0;
};

/// Offline stub: templated strings built from the first five tokens of the
/// text, one template per relation. Deterministic and always non-empty.
class StubCommonsense : public CommonsenseBackend {
public:
    std::string name() const override { return "stub"; }

    std::string infer(const std::string& text, const std::string& relation) override {
        static const std::map<std::string, std::string> prefixes = {
            {"xIntent", "intent"},        {"xNeed", "need"},
            {"xAttr", "attribute"},       {"xEffect", "effect"},
            {"xReact", "reaction"},       {"xWant", "want"},
            {"oEffect", "others effect"}, {"oReact", "others reaction"},
            {"oWant", "others want"}};
        auto it = prefixes.find(relation);
        if (it == prefixes.end()) return "";
        std::vector<Token> toks = tokenize(text);
        std::string head;
        for (std::size_t i = 0; i < toks.size() && i < 5; ++i) {
            if (!head.empty()) head += ' ';
            head += toks[i].text;
        }
        return it->second + ": " + head;
    }
};

/// File-backed commonsense fixture. Record fields: text, relation, inference.
/// Unknown (text, relation) pairs yield "" (the caller substitutes "none").
class FixtureCommonsense : public CommonsenseBackend {
public:
    FixtureCommonsense() = default;

    explicit FixtureCommonsense(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open commonsense fixture: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError(std::string("bad commonsense fixture record: ") + e.what(),
                                lineno);
            }
            if (!j.contains("text") || !j.contains("relation") || !j.contains("inference")) {
                throw DataError("commonsense fixture record missing field", lineno);
            }
            table_[{j["text"].get<std::string>(), j["relation"].get<std::string>()}] =
                j["inference"].get<std::string>();
        }
    }

    std::string name() const override { return "fixture"; }

    std::string infer(const std::string& text, const std::string& relation) override {
        auto it = table_.find({text, relation});
        return it == table_.end() ? "" : it->second;
    }

private:
    std::map<std::pair<std::string, std::string>, std::string> table_;
};

// --- UMLS ----------------------------------------------------------------------

class UmlsBackend {
public:
    virtual ~UmlsBackend() = default;
    virtual std::string name() const = 0;
    /// Top-k entries for a term in backend ranking order; empty when the term
    /// is unknown. Backend failure throws BackendError (retriable).
    virtual std::vector<UmlsEntry> top_concepts(const std::string& term, int k) = 0;
};

/// File-backed UMLS fixture. Record fields: term, cui, name, definition, rank.
/// A default-constructed fixture is an empty table (every term unknown).
class FixtureUmls : public UmlsBackend {
public:
    FixtureUmls() = default;

    explicit FixtureUmls(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open UMLS fixture: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError(std::string("bad UMLS fixture record: ") + e.what(), lineno);
            }
            for (const char* field : {"term", "cui", "name", "definition", "rank"}) {
                if (!j.contains(field)) {
                    throw DataError(std::string("UMLS fixture record missing '") + field + "'",
                                    lineno);
                }
            }
            UmlsEntry e{j["cui"].get<std::string>(), j["name"].get<std::string>(),
                        j["definition"].get<std::string>()};
            if (!valid_cui(e.cui)) {
                throw DataError("UMLS fixture cui must be 'C' followed by digits", lineno);
            }
            table_[normalize_phrase(j["term"].get<std::string>())].push_back(
                {j["rank"].get<int>(), e});
        }
        for (auto& [term, entries] : table_) {
            std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first < b.first : a.second.cui < b.second.cui;
            });
        }
    }

    std::string name() const override { return "fixture"; }

    std::vector<UmlsEntry> top_concepts(const std::string& term, int k) override {
        std::vector<UmlsEntry> out;
        auto it = table_.find(normalize_phrase(term));
        if (it == table_.end()) return out;
        for (const auto& [rank, entry] : it->second) {
            if (static_cast<int>(out.size()) >= k) break;
            out.push_back(entry);
        }
        return out;
    }

private:
    std::map<std::string, std::vector<std::pair<int, UmlsEntry>>> table_;
};

// --- LLM ------------------------------------------------------------------------

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string name() const = 0;
    /// Generated text for a prompt. Failure throws BackendError.
    virtual std::string generate(const std::string& prompt) = 0;
};

/// Offline stub: echoes the concept list parsed from the prompt's
/// "concepts: ..." line, so downstream checks can verify plumbing.
class StubLlm : public LlmBackend {
public:
    std::string name() const override { return "stub"; }

    std::string generate(const std::string& prompt) override {
        static const std::string key = "concepts: ";
        std::size_t pos = prompt.find(key);
        std::string concepts = "(none)";
        if (pos != std::string::npos) {
            std::size_t end = prompt.find('\n', pos);
            concepts = prompt.substr(pos + key.size(),
                                     end == std::string::npos ? std::string::npos
                                                              : end - pos - key.size());
        }
        return "EXPLANATION STUB: " + concepts;
    }
};

/// Replays recorded (prompt, response) pairs byte-exactly.
/// Record fields: prompt, response.
class FixtureLlm : public LlmBackend {
public:
    FixtureLlm() = default;

    explicit FixtureLlm(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open LLM fixture: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError(std::string("bad LLM fixture record: ") + e.what(), lineno);
            }
            if (!j.contains("prompt") || !j.contains("response")) {
                throw DataError("LLM fixture record missing field", lineno);
            }
            table_[j["prompt"].get<std::string>()] = j["response"].get<std::string>();
        }
    }

    /// Append one recorded exchange to a fixture file.
    static void record_to(const std::string& path, const std::string& prompt,
                          const std::string& response) {
        std::ofstream out(path, std::ios::app);
        if (!out) throw IoError("cannot write LLM fixture: " + path);
        nlohmann::json j;
        j["prompt"] = prompt;
        j["response"] = response;
        out << j.dump() << '\n';
    }

    std::string name() const override { return "fixture"; }

    std::string generate(const std::string& prompt) override {
        auto it = table_.find(prompt);
        if (it == table_.end()) {
            throw BackendError("LLM fixture has no response for this prompt",
                               /*retriable=*/false);
        }
        return it->second;
    }

private:
    std::map<std::string, std::string> table_;
};

}  // namespace kinn
