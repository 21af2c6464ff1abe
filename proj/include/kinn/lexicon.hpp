// The concept ontology: flat concepts with synonyms and PHQ-9 categories,
// a normalized phrase index, embedding-similarity expansion, and the UMLS
// lookup wrapper.
//
// File format (one JSON record per line):
//   {"id": ..., "label": ..., "synonyms": [...],
//    "phq9": int|null, "definition": string|null, "source": "DFO"|"UMLS"|"EXPANDED"}
// Phrases are normalized (lowercase, single-spaced, edge punctuation stripped)
// at load time; normalization is idempotent, so load -> save -> load is the
// identity.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinn/backends.hpp"
#include "kinn/common.hpp"

namespace kinn {

enum class ConceptSource { DFO, UMLS, EXPANDED };

inline std::string to_string(ConceptSource s) {
    switch (s) {
        case ConceptSource::DFO: return "DFO";
        case ConceptSource::UMLS: return "UMLS";
        case ConceptSource::EXPANDED: return "EXPANDED";
    }
    return "DFO";
}

inline ConceptSource concept_source_from(const std::string& s) {
    if (s == "DFO") return ConceptSource::DFO;
    if (s == "UMLS") return ConceptSource::UMLS;
    if (s == "EXPANDED") return ConceptSource::EXPANDED;
    throw DataError("unknown concept source '" + s + "'");
}

struct Concept {
    std::string id;
    std::string preferred_label;        // normalized, non-empty
    std::vector<std::string> synonyms;  // normalized, no duplicates, != label
    std::optional<int> phq9;            // 1..9 when present
    std::optional<std::string> definition;
    ConceptSource source = ConceptSource::DFO;
};

inline bool operator==(const Concept& a, const Concept& b) {
    return a.id == b.id && a.preferred_label == b.preferred_label &&
           a.synonyms == b.synonyms && a.phq9 == b.phq9 && a.definition == b.definition &&
           a.source == b.source;
}

class Lexicon {
public:
    /// Add a concept, enforcing the type invariants. Synonyms are normalized;
    /// a synonym equal to the label or to another synonym is an error, as is
    /// a duplicate concept id.
    void add(Concept c) {
        c.preferred_label = normalize_phrase(c.preferred_label);
        if (c.id.empty()) throw DataError("concept id must be non-empty");
        if (c.preferred_label.empty()) {
            throw DataError("concept '" + c.id + "': label empty after normalization");
        }
        if (c.phq9 && (*c.phq9 < 1 || *c.phq9 > 9)) {
            throw DataError("concept '" + c.id + "': phq9 must be in [1,9]");
        }
        if (concepts_.count(c.id)) throw DataError("duplicate concept id '" + c.id + "'");
        std::set<std::string> seen;
        for (std::string& syn : c.synonyms) {
            syn = normalize_phrase(syn);
            if (syn.empty()) {
                throw DataError("concept '" + c.id + "': synonym empty after normalization");
            }
            if (syn == c.preferred_label) {
                throw DataError("concept '" + c.id + "': synonym duplicates label");
            }
            if (!seen.insert(syn).second) {
                throw DataError("concept '" + c.id + "': duplicate synonym '" + syn + "'");
            }
        }
        phrase_index_[c.preferred_label].insert(c.id);
        for (const std::string& syn : c.synonyms) phrase_index_[syn].insert(c.id);
        concepts_.emplace(c.id, std::move(c));
    }

    const std::map<std::string, Concept>& concepts() const { return concepts_; }

    const std::map<std::string, std::set<std::string>>& phrase_index() const {
        return phrase_index_;
    }

    const Concept* find(const std::string& id) const {
        auto it = concepts_.find(id);
        return it == concepts_.end() ? nullptr : &it->second;
    }

    /// Ids of concepts whose label or synonym equals the phrase (normalized
    /// before lookup); empty set when nothing matches.
    std::set<std::string> lookup_phrase(const std::string& phrase) const {
        auto it = phrase_index_.find(normalize_phrase(phrase));
        return it == phrase_index_.end() ? std::set<std::string>{} : it->second;
    }

    bool empty() const { return concepts_.empty(); }
    std::size_t size() const { return concepts_.size(); }

private:
    std::map<std::string, Concept> concepts_;
    std::map<std::string, std::set<std::string>> phrase_index_;
};

inline bool operator==(const Lexicon& a, const Lexicon& b) {
    return a.concepts() == b.concepts();
}

// --- (de)serialization ---------------------------------------------------------

inline Lexicon load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open lexicon file: " + path);
    Lexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed concept record: ") + e.what(), lineno);
        }
        try {
            Concept c;
            if (!j.contains("id") || !j.contains("label")) {
                throw DataError("concept record needs 'id' and 'label'");
            }
            c.id = j["id"].get<std::string>();
            c.preferred_label = j["label"].get<std::string>();
            if (j.contains("synonyms") && !j["synonyms"].is_null()) {
                c.synonyms = j["synonyms"].get<std::vector<std::string>>();
            }
            if (j.contains("phq9") && !j["phq9"].is_null()) c.phq9 = j["phq9"].get<int>();
            if (j.contains("definition") && !j["definition"].is_null()) {
                c.definition = j["definition"].get<std::string>();
            }
            if (j.contains("source") && !j["source"].is_null()) {
                c.source = concept_source_from(j["source"].get<std::string>());
            }
            lex.add(std::move(c));
        } catch (const DataError& e) {
            throw DataError(e.what(), e.line() ? e.line() : lineno);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed concept record: ") + e.what(), lineno);
        }
    }
    return lex;
}

inline void save_lexicon(const std::string& path, const Lexicon& lex) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write lexicon file: " + path);
    for (const auto& [id, c] : lex.concepts()) {
        nlohmann::json j;
        j["id"] = c.id;
        j["label"] = c.preferred_label;
        j["synonyms"] = c.synonyms;
        j["phq9"] = c.phq9 ? nlohmann::json(*c.phq9) : nlohmann::json(nullptr);
        j["definition"] =
            c.definition ? nlohmann::json(*c.definition) : nlohmann::json(nullptr);
        j["source"] = to_string(c.source);
        out << j.dump() << '\n';
    }
}

// --- lookups --------------------------------------------------------------------

/// Concept ids whose label or a synonym equals the normalized phrase.
inline std::set<std::string> lookup_phrase(const Lexicon& lex, const std::string& phrase) {
    auto it = lex.phrase_index().find(normalize_phrase(phrase));
    if (it == lex.phrase_index().end()) return {};
    return it->second;
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw InputError("cosine: dimension mismatch");
    double na = a.norm();
    double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

struct SimilarConcept {
    std::string concept_id;
    double similarity;
};

inline bool operator==(const SimilarConcept& a, const SimilarConcept& b) {
    return a.concept_id == b.concept_id && a.similarity == b.similarity;
}

/// Every concept with a lexicon phrase at cosine >= threshold to the query
/// (boundary inclusive), best phrase per concept, sorted by similarity
/// descending, ties by concept id ascending.
inline std::vector<SimilarConcept> expand_similar(const Lexicon& lex,
                                                  const std::string& phrase,
                                                  EncoderBackend& embedder,
                                                  double threshold = 0.80) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw InputError("expand_similar: threshold must be in (0, 1]");
    }
    Eigen::VectorXd q = embedder.embed_phrase(phrase);
    std::map<std::string, double> best;  // concept id -> max similarity
    for (const auto& [lex_phrase, ids] : lex.phrase_index()) {
        double sim = cosine(q, embedder.embed_phrase(lex_phrase));
        if (sim >= threshold) {
            for (const std::string& id : ids) {
                auto it = best.find(id);
                if (it == best.end() || sim > it->second) best[id] = sim;
            }
        }
    }
    std::vector<SimilarConcept> out;
    out.reserve(best.size());
    for (const auto& [id, sim] : best) out.push_back({id, sim});
    std::sort(out.begin(), out.end(), [](const SimilarConcept& a, const SimilarConcept& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.concept_id < b.concept_id;
    });
    return out;
}

/// Top-k UMLS entries for a term (k defaults to 3). Empty result means the
/// term is unknown; backend failures throw BackendError.
inline std::vector<UmlsEntry> umls_top_concepts(UmlsBackend& client, const std::string& term,
                                                int k = 3) {
    if (term.empty()) throw InputError("umls_top_concepts: term must be non-empty");
    if (k < 0) throw InputError("umls_top_concepts: k must be non-negative");
    std::vector<UmlsEntry> entries = client.top_concepts(term, k);
    if (static_cast<int>(entries.size()) > k) entries.resize(static_cast<std::size_t>(k));
    return entries;
}

}  // namespace kinn
