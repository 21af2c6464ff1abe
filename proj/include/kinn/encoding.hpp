// Embedding layer and commonsense layer: sequence/phrase embedding through a
// backend, five-aspect extraction, and the aspect concatenation that forms
// the commonsense-branch input string.
//
// Concatenation uses the reserved separator "[SEP]" with single spaces around
// it. Segments are escaped ("%" -> "%25", "[SEP]" -> "%5BSEP%5D") before
// joining, which makes the concatenation injective and exactly splittable.

#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinn/backends.hpp"
#include "kinn/common.hpp"
#include "kinn/pos.hpp"

namespace kinn {

struct EmbeddedSequence {
    Eigen::MatrixXd X;          // length x dim, one row per input unit
    std::vector<Token> tokens;  // the units behind the rows (post-truncation)
};

/// One vector for a standalone phrase.
inline Eigen::VectorXd embed_phrase(EncoderBackend& backend, const std::string& phrase) {
    if (phrase.empty()) throw InputError("embed_phrase: empty phrase");
    Eigen::VectorXd v = backend.embed_phrase(phrase);
    if (!v.allFinite()) throw NumericError("embed_phrase");
    return v;
}

/// Tokenize with the backend's tokenizer, truncate to the first max_len
/// units, embed each unit. No padding here; masking is the network's job.
inline EmbeddedSequence embed_sequence(EncoderBackend& backend, const std::string& text,
                                       std::size_t max_len) {
    if (max_len == 0) throw InputError("embed_sequence: max_len must be positive");
    EmbeddedSequence seq;
    seq.tokens = backend.tokenize_text(text);
    if (seq.tokens.size() > max_len) seq.tokens.resize(max_len);
    std::vector<std::string> texts;
    texts.reserve(seq.tokens.size());
    for (const Token& t : seq.tokens) texts.push_back(t.text);
    seq.X = backend.embed_tokens(texts);
    if (!seq.X.allFinite()) throw NumericError("embed_sequence");
    return seq;
}

// --- aspects ---------------------------------------------------------------------

/// Query the backend for all nine ATOMIC-style relations and keep the five
/// mental-health aspects. Unavailable inferences become "none".
inline AspectSet extract_aspects(CommonsenseBackend& backend, const std::string& text) {
    if (text.empty()) throw InputError("extract_aspects: empty text");
    std::map<std::string, std::string> results;
    for (const std::string& rel : atomic_relations()) {
        std::string inferred = backend.infer(text, rel);
        results[rel] = inferred.empty() ? "none" : inferred;
    }
    AspectSet a;
    a.intent_w = results["xIntent"];
    a.effect_w = results["xEffect"];
    a.reaction_w = results["xReact"];
    a.effect_l = results["oEffect"];
    a.reaction_l = results["oReact"];
    return a;
}

// --- concatenation -----------------------------------------------------------------

inline const std::string& aspect_separator() {
    static const std::string sep = "[SEP]";
    return sep;
}

/// Escape a segment so that neither "%" nor the separator literal survives.
inline std::string escape_segment(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%') {
            out += "%25";
        } else if (s.compare(i, aspect_separator().size(), aspect_separator()) == 0) {
            out += "%5BSEP%5D";
            i += aspect_separator().size() - 1;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

inline std::string unescape_segment(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.compare(i, 9, "%5BSEP%5D") == 0) {
            out += aspect_separator();
            i += 8;
        } else if (s.compare(i, 3, "%25") == 0) {
            out.push_back('%');
            i += 2;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

/// text ⊕ the five aspects, in fixed order, " [SEP] "-joined, each segment
/// escaped. Splitting on " [SEP] " recovers exactly six segments.
inline std::string concat_with_aspects(const std::string& text, const AspectSet& a) {
    const std::string joiner = " " + aspect_separator() + " ";
    std::string out = escape_segment(text);
    for (const std::string* seg :
         {&a.intent_w, &a.effect_w, &a.reaction_w, &a.effect_l, &a.reaction_l}) {
        out += joiner;
        out += escape_segment(*seg);
    }
    return out;
}

/// Split a concatenation back into its unescaped segments.
inline std::vector<std::string> split_aspect_concat(const std::string& s) {
    const std::string joiner = " " + aspect_separator() + " ";
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = s.find(joiner, pos);
        if (next == std::string::npos) {
            out.push_back(unescape_segment(s.substr(pos)));
            break;
        }
        out.push_back(unescape_segment(s.substr(pos, next - pos)));
        pos = next + joiner.size();
    }
    return out;
}

/// For each character offset in escape_segment(text), the originating offset
/// in text. Length = escaped length + 1 (the end maps to text.size()).
inline std::vector<std::size_t> escaped_to_raw_offsets(const std::string& text) {
    std::vector<std::size_t> map;
    for (std::size_t i = 0; i < text.size(); ++i) {
        std::size_t emitted;
        if (text[i] == '%') {
            emitted = 3;
        } else if (text.compare(i, aspect_separator().size(), aspect_separator()) == 0) {
            emitted = 9;
            for (std::size_t k = 0; k < emitted; ++k) map.push_back(i);
            i += aspect_separator().size() - 1;
            continue;
        } else {
            emitted = 1;
        }
        for (std::size_t k = 0; k < emitted; ++k) map.push_back(i);
    }
    map.push_back(text.size());
    return map;
}

// --- AspectSet (de)serialization -----------------------------------------------------

inline nlohmann::json to_json(const AspectSet& a) {
    return nlohmann::json{{"intent_w", a.intent_w},
                          {"effect_w", a.effect_w},
                          {"reaction_w", a.reaction_w},
                          {"effect_l", a.effect_l},
                          {"reaction_l", a.reaction_l}};
}

inline AspectSet aspect_set_from_json(const nlohmann::json& j) {
    AspectSet a;
    a.intent_w = j.at("intent_w").get<std::string>();
    a.effect_w = j.at("effect_w").get<std::string>();
    a.reaction_w = j.at("reaction_w").get<std::string>();
    a.effect_l = j.at("effect_l").get<std::string>();
    a.reaction_l = j.at("reaction_l").get<std::string>();
    return a;
}

}  // namespace kinn
