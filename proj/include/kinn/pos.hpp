// Tokenizer and rule-based part-of-speech tagger.
//
// The tagger is a small deterministic rule system over a universal-style
// tagset (NOUN, VERB, ADJ, ADV, PRON, DET, ADP, NUM, CONJ, PRT, PUNCT, X).
// It is the project's frozen reference tagger: its outputs on a fixture set
// of sentences are pinned in tests, so behavior cannot drift silently.
//
// The tokenizer understands inline concept markers `[[phrase|id]]` and keeps
// each marker as a single token (markers may contain spaces).

#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kinn/common.hpp"

namespace kinn {

struct Token {
    std::string text;
    std::string pos;  // empty until tagged
    std::size_t char_start = 0;
    std::size_t char_end = 0;
};

inline bool operator==(const Token& a, const Token& b) {
    return a.text == b.text && a.pos == b.pos && a.char_start == b.char_start &&
           a.char_end == b.char_end;
}

// --- concept markers --------------------------------------------------------

struct MarkerParts {
    std::size_t phrase_begin = 0;  // offsets into the containing string
    std::size_t phrase_end = 0;
    std::size_t id_begin = 0;
    std::size_t id_end = 0;
    std::size_t marker_end = 0;  // one past the closing "]]"
};

inline bool is_marker_id_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == ':' || c == '.' || c == '-';
}

/// Parse a `[[phrase|id]]` marker starting at `pos` (which must point at
/// "[["). Returns nothing when the text at `pos` is not a well-formed marker.
/// The id must be a non-empty run of [A-Za-z0-9_:.-] and the phrase part must
/// be non-empty; the phrase may contain '|' (the id is delimited by the last
/// '|' before the closing "]]").
inline std::optional<MarkerParts> parse_marker(const std::string& s, std::size_t pos) {
    if (pos + 4 > s.size() || s[pos] != '[' || s[pos + 1] != '[') return std::nullopt;
    std::size_t close = s.find("]]", pos + 2);
    if (close == std::string::npos) return std::nullopt;
    std::size_t bar = s.rfind('|', close);
    if (bar == std::string::npos || bar < pos + 2) return std::nullopt;
    if (bar == pos + 2) return std::nullopt;  // empty phrase
    if (bar + 1 == close) return std::nullopt;  // empty id
    for (std::size_t i = bar + 1; i < close; ++i) {
        if (!is_marker_id_char(s[i])) return std::nullopt;
    }
    MarkerParts m;
    m.phrase_begin = pos + 2;
    m.phrase_end = bar;
    m.id_begin = bar + 1;
    m.id_end = close;
    m.marker_end = close + 2;
    return m;
}

// --- tokenizer ---------------------------------------------------------------

inline bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

/// Whitespace/punctuation tokenizer. Rules:
///  - `[[phrase|id]]` markers are single tokens (even with internal spaces);
///  - maximal alnum runs are word tokens; an internal ' or - joins two alnum
///    runs into one token ("don't", "self-harm");
///  - any other punctuation forms maximal punctuation-run tokens.
inline std::vector<Token> tokenize(const std::string& text) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_space_byte(c)) {
            ++i;
            continue;
        }
        if (c == '[') {
            if (auto m = parse_marker(text, i)) {
                out.push_back({text.substr(i, m->marker_end - i), "", i, m->marker_end});
                i = m->marker_end;
                continue;
            }
        }
        std::size_t start = i;
        if (is_word_char(c)) {
            while (i < n) {
                unsigned char cur = static_cast<unsigned char>(text[i]);
                if (is_word_char(cur)) {
                    ++i;
                } else if ((cur == '\'' || cur == '-') && i + 1 < n && i > start &&
                           is_word_char(static_cast<unsigned char>(text[i + 1]))) {
                    ++i;
                } else {
                    break;
                }
            }
        } else {
            // punctuation run; stop at whitespace, word chars, or a marker start
            while (i < n) {
                unsigned char cur = static_cast<unsigned char>(text[i]);
                if (is_space_byte(cur) || is_word_char(cur)) break;
                if (cur == '[' && parse_marker(text, i)) break;
                ++i;
            }
        }
        out.push_back({text.substr(start, i - start), "", start, i});
    }
    return out;
}

// --- POS rules ---------------------------------------------------------------

namespace detail {

inline const std::unordered_set<std::string>& pron_set() {
    static const std::unordered_set<std::string> s = {
        "i", "me", "you", "he", "him", "she", "it", "we", "us", "they", "them", "mine",
        "yours", "hers", "ours", "theirs", "myself", "yourself", "himself", "herself",
        "itself", "ourselves", "yourselves", "themselves", "who", "whom", "whose",
        "someone", "somebody", "anyone", "anybody", "everyone", "everybody", "nobody",
        "what", "which"};
    return s;
}

inline const std::unordered_set<std::string>& det_set() {
    static const std::unordered_set<std::string> s = {
        "a", "an", "the", "my", "your", "his", "her", "its", "our", "their", "this",
        "that", "these", "those", "some", "any", "no", "every", "each", "all", "both",
        "few", "many", "much", "several"};
    return s;
}

inline const std::unordered_set<std::string>& adp_set() {
    static const std::unordered_set<std::string> s = {
        "in", "on", "at", "by", "for", "with", "about", "against", "between", "into",
        "through", "during", "before", "after", "above", "below", "from", "up", "down",
        "of", "off", "over", "under", "near", "since", "until", "toward", "towards",
        "upon", "within", "without"};
    return s;
}

inline const std::unordered_set<std::string>& conj_set() {
    static const std::unordered_set<std::string> s = {
        "and", "or", "but", "nor", "so", "yet", "because", "although", "though",
        "while", "if", "when", "than", "as", "unless", "whereas"};
    return s;
}

inline const std::unordered_set<std::string>& verb_set() {
    static const std::unordered_set<std::string> s = {
        "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had",
        "do", "does", "did", "will", "would", "shall", "should", "can", "could", "may",
        "might", "must", "let", "keep", "kept", "get", "got", "gets", "make", "made",
        "makes", "go", "goes", "went", "gone", "come", "came", "feel", "felt", "feels",
        "think", "thought", "know", "knew", "want", "wants", "say", "said", "see",
        "saw", "take", "took", "give", "gave", "find", "found", "tell", "told", "try",
        "seem", "seemed", "put", "run", "ran", "eat", "ate", "write", "wrote", "read"};
    return s;
}

inline const std::unordered_set<std::string>& adj_set() {
    static const std::unordered_set<std::string> s = {
        "happy", "sad", "angry", "anxious", "numb", "good", "bad", "big", "small",
        "new", "old", "long", "short", "high", "low", "alone", "empty"};
    return s;
}

/// Words readable as noun or verb; disambiguated by the left context.
inline const std::unordered_set<std::string>& ambiguous_set() {
    static const std::unordered_set<std::string> s = {
        "cut", "work", "sleep", "cry", "help", "harm", "hurt", "love", "hate", "fear",
        "worry", "care", "talk", "walk", "smile", "fight", "call", "change", "end",
        "rest", "break", "pain"};
    return s;
}

inline const std::unordered_map<std::string, std::string>& suffix_exceptions() {
    static const std::unordered_map<std::string, std::string> m = {
        // -ing nouns
        {"morning", "NOUN"}, {"evening", "NOUN"}, {"nothing", "NOUN"},
        {"something", "NOUN"}, {"anything", "NOUN"}, {"everything", "NOUN"},
        {"thing", "NOUN"}, {"things", "NOUN"}, {"feeling", "NOUN"},
        {"feelings", "NOUN"}, {"building", "NOUN"}, {"buildings", "NOUN"},
        {"wedding", "NOUN"}, {"king", "NOUN"}, {"ring", "NOUN"}, {"wing", "NOUN"},
        {"spring", "NOUN"}, {"string", "NOUN"}, {"sibling", "NOUN"},
        {"siblings", "NOUN"}, {"ceiling", "NOUN"}, {"darling", "NOUN"},
        // -ed / -ly oddments
        {"bed", "NOUN"}, {"red", "ADJ"}, {"hundred", "NUM"}, {"seed", "NOUN"},
        {"weed", "NOUN"}, {"speed", "NOUN"}, {"creed", "NOUN"}, {"shed", "NOUN"},
        {"indeed", "ADV"}, {"family", "NOUN"}, {"lonely", "ADJ"}, {"ugly", "ADJ"},
        {"holy", "ADJ"}, {"belly", "NOUN"}, {"bully", "NOUN"}, {"jelly", "NOUN"},
        {"rally", "NOUN"}, {"lily", "NOUN"}, {"silly", "ADJ"}};
    return m;
}

inline bool all_punct(const std::string& t) {
    if (t.empty()) return false;
    for (unsigned char c : t) {
        if (!is_punct_byte(c)) return false;
    }
    return true;
}

inline bool is_number_token(const std::string& t) {
    bool digit_seen = false;
    for (std::size_t i = 0; i < t.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(t[i]);
        if (std::isdigit(c)) {
            digit_seen = true;
        } else if (c == '.' || c == ',' || c == '-') {
            if (i == 0 && c != '-') return false;
        } else {
            return false;
        }
    }
    return digit_seen && std::isdigit(static_cast<unsigned char>(t[0]));
}

}  // namespace detail

/// Tag one token given the POS already assigned to the previous token
/// ("" at sentence start). Deterministic; see the rule order in the body.
inline std::string pos_tag_word(const std::string& token, const std::string& prev_pos) {
    using namespace detail;
    if (parse_marker(token, 0) && token.size() >= 4 && token[0] == '[') return "NOUN";
    if (all_punct(token)) return "PUNCT";
    if (is_number_token(token)) return "NUM";
    const std::string w = to_lower(token);
    if (w == "to" || w == "not") return "PRT";
    if (pron_set().count(w)) return "PRON";
    if (det_set().count(w)) return "DET";
    if (adp_set().count(w)) return "ADP";
    if (conj_set().count(w)) return "CONJ";
    if (verb_set().count(w)) return "VERB";
    if (adj_set().count(w)) return "ADJ";
    if (auto it = suffix_exceptions().find(w); it != suffix_exceptions().end()) {
        return it->second;
    }
    if (ambiguous_set().count(w)) {
        if (prev_pos == "DET" || prev_pos == "NOUN" || prev_pos == "ADJ" ||
            prev_pos == "NUM" || prev_pos == "ADP") {
            return "NOUN";
        }
        return "VERB";
    }
    if (w.size() > 4 && w.rfind("ing") == w.size() - 3) return "VERB";
    if (w.size() > 3 && w.rfind("ed") == w.size() - 2) return "VERB";
    if (w.size() > 3 && w.rfind("ly") == w.size() - 2) return "ADV";
    if (w.size() > 4 && w.rfind("less") == w.size() - 4) return "ADJ";
    return "NOUN";
}

/// Tokenize and POS-tag a document. Empty text yields an empty list.
inline std::vector<Token> tokenize_and_pos(const std::string& text) {
    std::vector<Token> toks = tokenize(text);
    std::string prev;
    for (Token& t : toks) {
        t.pos = pos_tag_word(t.text, prev);
        prev = t.pos;
    }
    return toks;
}

}  // namespace kinn
