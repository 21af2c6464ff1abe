// Phrase tagging: tokenize + POS, extract noun n-gram candidates, resolve
// each candidate against the lexicon (direct match -> embedding-similar
// synonym -> UMLS), and render the phrase-tagged text.
//
// Overlap policy: candidates are attempted longest-first (by token count),
// leftmost-first among equal lengths. A candidate overlapping an already
// TAGGED span is discarded; a candidate that merely fails to resolve blocks
// nothing.

#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinn/backends.hpp"
#include "kinn/common.hpp"
#include "kinn/lexicon.hpp"
#include "kinn/pos.hpp"

namespace kinn {

enum class MatchKind { DIRECT, SYNONYM_SIMILAR, UMLS };

inline std::string to_string(MatchKind k) {
    switch (k) {
        case MatchKind::DIRECT: return "DIRECT";
        case MatchKind::SYNONYM_SIMILAR: return "SYNONYM_SIMILAR";
        case MatchKind::UMLS: return "UMLS";
    }
    return "DIRECT";
}

inline MatchKind match_kind_from(const std::string& s) {
    if (s == "DIRECT") return MatchKind::DIRECT;
    if (s == "SYNONYM_SIMILAR") return MatchKind::SYNONYM_SIMILAR;
    if (s == "UMLS") return MatchKind::UMLS;
    throw DataError("unknown match kind '" + s + "'");
}

struct ConceptSpan {
    std::size_t char_start = 0;
    std::size_t char_end = 0;
    std::string concept_id;
    MatchKind match_kind = MatchKind::DIRECT;
    double similarity = 1.0;             // 1.0 for DIRECT and UMLS
    std::vector<std::string> umls_cuis;  // non-empty iff match_kind == UMLS
};

inline bool operator==(const ConceptSpan& a, const ConceptSpan& b) {
    return a.char_start == b.char_start && a.char_end == b.char_end &&
           a.concept_id == b.concept_id && a.match_kind == b.match_kind &&
           a.similarity == b.similarity && a.umls_cuis == b.umls_cuis;
}

struct TaggedDocument {
    std::string doc_id;
    std::string text;
    std::vector<Token> tokens;      // tokenize_and_pos(text)
    std::vector<ConceptSpan> spans; // sorted by char_start, non-overlapping
    std::string tagged_text;        // text with [[phrase|concept_id]] markers
};

// --- candidates -------------------------------------------------------------

struct CandidateSpan {
    std::size_t tok_start = 0;  // index into the token list
    std::size_t tok_len = 0;    // number of tokens (1..max_gram)
    std::size_t char_start = 0;
    std::size_t char_end = 0;
};

inline bool operator==(const CandidateSpan& a, const CandidateSpan& b) {
    return a.tok_start == b.tok_start && a.tok_len == b.tok_len &&
           a.char_start == b.char_start && a.char_end == b.char_end;
}

/// All contiguous n-grams (1 <= n <= max_gram) whose tokens are all
/// noun-tagged, ordered by start position, longest first at each start.
inline std::vector<CandidateSpan> noun_candidates(const std::vector<Token>& tokens,
                                                  std::size_t max_gram = 4) {
    if (max_gram == 0) throw InputError("noun_candidates: max_gram must be >= 1");
    std::vector<CandidateSpan> out;
    const std::size_t n = tokens.size();
    for (std::size_t s = 0; s < n; ++s) {
        if (tokens[s].pos != "NOUN") continue;
        std::size_t run = 0;  // longest all-noun run starting at s, capped
        while (run < max_gram && s + run < n && tokens[s + run].pos == "NOUN") ++run;
        for (std::size_t len = run; len >= 1; --len) {
            out.push_back({s, len, tokens[s].char_start, tokens[s + len - 1].char_end});
        }
    }
    return out;
}

// --- resolution ---------------------------------------------------------------

struct Resolution {
    std::string concept_id;
    MatchKind kind = MatchKind::DIRECT;
    double similarity = 1.0;
    std::vector<std::string> umls_cuis;
};

/// Resolve one candidate phrase through the three-stage cascade. Returns
/// nothing when all stages miss. Ties inside a stage break toward the
/// lexicographically smallest concept id.
inline std::optional<Resolution> resolve_phrase(const std::string& phrase,
                                                const Lexicon& lex,
                                                EncoderBackend& embedder,
                                                UmlsBackend& umls,
                                                double threshold = 0.80) {
    const std::string norm = normalize_phrase(phrase);
    if (norm.empty()) return std::nullopt;

    std::set<std::string> direct = lookup_phrase(lex, norm);
    if (!direct.empty()) {
        return Resolution{*direct.begin(), MatchKind::DIRECT, 1.0, {}};
    }

    std::vector<SimilarConcept> similar = expand_similar(lex, norm, embedder, threshold);
    if (!similar.empty()) {
        return Resolution{similar.front().concept_id, MatchKind::SYNONYM_SIMILAR,
                          similar.front().similarity, {}};
    }

    std::vector<UmlsEntry> entries = umls_top_concepts(umls, norm, 3);
    if (!entries.empty()) {
        Resolution r{entries.front().cui, MatchKind::UMLS, 1.0, {}};
        for (const UmlsEntry& e : entries) r.umls_cuis.push_back(e.cui);
        return r;
    }
    return std::nullopt;
}

// --- rendering ----------------------------------------------------------------

/// Insert `[[phrase|concept_id]]` markers around each span. Spans must be
/// sorted by char_start and non-overlapping.
inline std::string render_tagged(const std::string& text,
                                 const std::vector<ConceptSpan>& spans) {
    std::string out;
    out.reserve(text.size() + spans.size() * 8);
    std::size_t pos = 0;
    for (const ConceptSpan& s : spans) {
        if (s.char_start < pos || s.char_end > text.size() || s.char_start >= s.char_end) {
            throw InputError("render_tagged: spans must be sorted, in bounds, non-empty");
        }
        out.append(text, pos, s.char_start - pos);
        out += "[[";
        out.append(text, s.char_start, s.char_end - s.char_start);
        out += '|';
        out += s.concept_id;
        out += "]]";
        pos = s.char_end;
    }
    out.append(text, pos, text.size() - pos);
    return out;
}

/// Remove all well-formed `[[phrase|id]]` markers, keeping the phrases.
/// Inverse of render_tagged for text that contains no marker-shaped syntax of
/// its own.
inline std::string strip_markers(const std::string& tagged) {
    std::string out;
    out.reserve(tagged.size());
    std::size_t i = 0;
    while (i < tagged.size()) {
        if (tagged[i] == '[') {
            if (auto m = parse_marker(tagged, i)) {
                out.append(tagged, m->phrase_begin, m->phrase_end - m->phrase_begin);
                i = m->marker_end;
                continue;
            }
        }
        out.push_back(tagged[i]);
        ++i;
    }
    return out;
}

// --- the full Algorithm -------------------------------------------------------

inline TaggedDocument tag_document(const std::string& doc_id, const std::string& text,
                                   const Lexicon& lex, EncoderBackend& embedder,
                                   UmlsBackend& umls, std::size_t max_gram = 4,
                                   double threshold = 0.80) {
    TaggedDocument doc;
    doc.doc_id = doc_id;
    doc.text = text;
    doc.tokens = tokenize_and_pos(text);

    std::vector<CandidateSpan> candidates = noun_candidates(doc.tokens, max_gram);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const CandidateSpan& a, const CandidateSpan& b) {
                         if (a.tok_len != b.tok_len) return a.tok_len > b.tok_len;
                         return a.char_start < b.char_start;
                     });

    std::vector<bool> taken(doc.tokens.size(), false);
    for (const CandidateSpan& c : candidates) {
        bool overlaps = false;
        for (std::size_t t = c.tok_start; t < c.tok_start + c.tok_len; ++t) {
            if (taken[t]) {
                overlaps = true;
                break;
            }
        }
        if (overlaps) continue;
        const std::string phrase = text.substr(c.char_start, c.char_end - c.char_start);
        std::optional<Resolution> r = resolve_phrase(phrase, lex, embedder, umls, threshold);
        if (!r) continue;
        for (std::size_t t = c.tok_start; t < c.tok_start + c.tok_len; ++t) taken[t] = true;
        doc.spans.push_back({c.char_start, c.char_end, r->concept_id, r->kind,
                             r->similarity, r->umls_cuis});
    }

    std::sort(doc.spans.begin(), doc.spans.end(),
              [](const ConceptSpan& a, const ConceptSpan& b) {
                  return a.char_start < b.char_start;
              });
    doc.tagged_text = render_tagged(text, doc.spans);
    return doc;
}

// --- (de)serialization -----------------------------------------------------------

inline nlohmann::json to_json(const Token& t) {
    return nlohmann::json{{"text", t.text},
                          {"pos", t.pos},
                          {"char_start", t.char_start},
                          {"char_end", t.char_end}};
}

inline nlohmann::json to_json(const ConceptSpan& s) {
    return nlohmann::json{{"char_start", s.char_start},
                          {"char_end", s.char_end},
                          {"concept_id", s.concept_id},
                          {"match_kind", to_string(s.match_kind)},
                          {"similarity", s.similarity},
                          {"umls_cuis", s.umls_cuis}};
}

inline nlohmann::json to_json(const TaggedDocument& d) {
    nlohmann::json j;
    j["doc_id"] = d.doc_id;
    j["text"] = d.text;
    j["tagged_text"] = d.tagged_text;
    j["tokens"] = nlohmann::json::array();
    for (const Token& t : d.tokens) j["tokens"].push_back(to_json(t));
    j["spans"] = nlohmann::json::array();
    for (const ConceptSpan& s : d.spans) j["spans"].push_back(to_json(s));
    return j;
}

inline TaggedDocument tagged_document_from_json(const nlohmann::json& j) {
    TaggedDocument d;
    d.doc_id = j.at("doc_id").get<std::string>();
    d.text = j.at("text").get<std::string>();
    d.tagged_text = j.at("tagged_text").get<std::string>();
    for (const auto& t : j.at("tokens")) {
        d.tokens.push_back({t.at("text").get<std::string>(), t.at("pos").get<std::string>(),
                            t.at("char_start").get<std::size_t>(),
                            t.at("char_end").get<std::size_t>()});
    }
    for (const auto& s : j.at("spans")) {
        ConceptSpan cs;
        cs.char_start = s.at("char_start").get<std::size_t>();
        cs.char_end = s.at("char_end").get<std::size_t>();
        cs.concept_id = s.at("concept_id").get<std::string>();
        cs.match_kind = match_kind_from(s.at("match_kind").get<std::string>());
        cs.similarity = s.at("similarity").get<double>();
        cs.umls_cuis = s.at("umls_cuis").get<std::vector<std::string>>();
        d.spans.push_back(std::move(cs));
    }
    return d;
}

}  // namespace kinn
