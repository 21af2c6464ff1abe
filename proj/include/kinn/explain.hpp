// Attention-to-concept explanations: per-position saliency from an attention
// block, contiguous-run span merging, concept attribution at the similarity
// threshold, a deterministic LLM prompt, and JSON/HTML report emission.
//
// Saliency is the column mean of the selected attention matrix (how much
// attention a position RECEIVES), restricted to positions that map back to
// the original text. Positions strictly above the 75th percentile
// (nearest-rank) merge with adjacent ones into multi-token spans; everything
// else stays a single-token span. A merged span's score is the max of its
// members.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinn/backends.hpp"
#include "kinn/common.hpp"
#include "kinn/encoding.hpp"
#include "kinn/lexicon.hpp"
#include "kinn/network.hpp"
#include "kinn/tagging.hpp"

namespace kinn {

enum class AttentionBlock { DOMAIN, COMMONSENSE, FUSED };

inline std::string to_string(AttentionBlock b) {
    switch (b) {
        case AttentionBlock::DOMAIN: return "DOMAIN";
        case AttentionBlock::COMMONSENSE: return "COMMONSENSE";
        case AttentionBlock::FUSED: return "FUSED";
    }
    return "FUSED";
}

inline AttentionBlock attention_block_from(const std::string& s) {
    if (s == "DOMAIN") return AttentionBlock::DOMAIN;
    if (s == "COMMONSENSE") return AttentionBlock::COMMONSENSE;
    if (s == "FUSED") return AttentionBlock::FUSED;
    throw DataError("unknown attention block '" + s + "'");
}

struct SalientSpan {
    std::size_t char_start = 0;  // into the original (untagged) text
    std::size_t char_end = 0;
    double score = 0.0;
    AttentionBlock block = AttentionBlock::FUSED;
};

inline bool operator==(const SalientSpan& a, const SalientSpan& b) {
    return a.char_start == b.char_start && a.char_end == b.char_end &&
           a.score == b.score && a.block == b.block;
}

struct ConceptAttribution {
    SalientSpan span;
    std::string concept_id;
    std::string label;  // the concept's preferred label
    std::optional<int> phq9;
    double similarity = 0.0;
};

struct ExplanationReport {
    std::string doc_id;
    std::string text;
    std::vector<SalientSpan> spans;
    std::vector<ConceptAttribution> attributions;
    std::string prompt;
    std::optional<std::string> llm_explanation;
    std::string model_decision;
    std::vector<double> probs;
};

// --- token -> original-text mapping ------------------------------------------------

namespace detail {

struct MarkerRange {
    std::size_t tagged_begin = 0;
    std::size_t tagged_end = 0;
    std::size_t src_begin = 0;
    std::size_t src_end = 0;
};

/// Where each concept span's marker lands in tagged_text, plus the cumulative
/// length overhead markers introduce. Derived purely from the span list, so
/// it stays exact for any render_tagged output.
inline std::vector<MarkerRange> marker_ranges(const TaggedDocument& doc) {
    std::vector<MarkerRange> out;
    std::size_t delta = 0;  // tagged length minus source length so far
    for (const ConceptSpan& s : doc.spans) {
        MarkerRange m;
        m.src_begin = s.char_start;
        m.src_end = s.char_end;
        m.tagged_begin = s.char_start + delta;
        const std::size_t overhead = 5 + s.concept_id.size();  // "[[", "|", id, "]]"
        m.tagged_end = m.tagged_begin + (s.char_end - s.char_start) + overhead;
        delta += overhead;
        out.push_back(m);
    }
    return out;
}

/// Map a token's [begin, end) range in tagged_text to a range in the original
/// text. Marker tokens map to their phrase's source span.
inline std::pair<std::size_t, std::size_t> map_to_source(
    const std::vector<MarkerRange>& markers, std::size_t begin, std::size_t end) {
    std::size_t delta = 0;
    for (const MarkerRange& m : markers) {
        if (begin == m.tagged_begin && end == m.tagged_end) return {m.src_begin, m.src_end};
        if (m.tagged_end <= begin) {
            delta += (m.tagged_end - m.tagged_begin) - (m.src_end - m.src_begin);
        }
    }
    return {begin - delta, end - delta};
}

/// Nearest-rank percentile (p in [0,1]) of a non-empty vector.
inline double percentile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(n)));
    if (rank == 0) rank = 1;
    if (rank > n) rank = n;
    return values[rank - 1];
}

}  // namespace detail

// --- saliency ---------------------------------------------------------------------------

/// Extract the top_k salient spans for one document from a forward trace.
/// `block` picks the attention matrix; for COMMONSENSE the caller must pass
/// the commonsense-branch input string (`cs_text`) so positions can be mapped
/// back to the original text.
inline std::vector<SalientSpan> salient_spans(const ForwardTrace& trace,
                                              const TaggedDocument& tagged,
                                              std::size_t top_k,
                                              AttentionBlock block = AttentionBlock::FUSED,
                                              const std::string& cs_text = "") {
    if (top_k == 0) return {};

    // Positions considered, their saliency, and their source char ranges.
    std::vector<double> sal;
    std::vector<std::pair<std::size_t, std::size_t>> src;

    if (block == AttentionBlock::DOMAIN || block == AttentionBlock::FUSED) {
        const Matrix& A = block == AttentionBlock::DOMAIN ? trace.A_domain : trace.A_fused;
        const int n = trace.len_domain;
        std::vector<Token> toks = tokenize(tagged.tagged_text);
        if (static_cast<int>(toks.size()) < n) {
            throw InputError("salient_spans: trace does not match this document");
        }
        toks.resize(static_cast<std::size_t>(n));
        std::vector<detail::MarkerRange> markers = detail::marker_ranges(tagged);
        for (int j = 0; j < n; ++j) {
            sal.push_back(A.col(j).mean());
            src.push_back(detail::map_to_source(markers, toks[static_cast<std::size_t>(j)].char_start,
                                                toks[static_cast<std::size_t>(j)].char_end));
        }
    } else {
        if (cs_text.empty()) {
            throw InputError("salient_spans: COMMONSENSE block needs the cs input text");
        }
        std::vector<Token> toks = tokenize(cs_text);
        if (static_cast<int>(toks.size()) < trace.len_cs) {
            throw InputError("salient_spans: trace does not match this document");
        }
        toks.resize(static_cast<std::size_t>(trace.len_cs));
        // Only positions inside the leading text segment map to the original
        // text; aspect and separator tokens are skipped.
        const std::string escaped = escape_segment(tagged.text);
        std::vector<std::size_t> offsets = escaped_to_raw_offsets(tagged.text);
        for (int j = 0; j < trace.len_cs; ++j) {
            const Token& t = toks[static_cast<std::size_t>(j)];
            if (t.char_end > escaped.size()) break;
            sal.push_back(trace.A_cs.col(j).mean());
            src.push_back({offsets[t.char_start], offsets[t.char_end]});
        }
    }

    if (sal.empty()) return {};

    const double tau = detail::percentile(sal, 0.75);

    // Merge adjacent strictly-above-threshold positions; the rest stay single.
    std::vector<SalientSpan> spans;
    std::size_t i = 0;
    while (i < sal.size()) {
        if (sal[i] > tau) {
            std::size_t j = i;
            double score = sal[i];
            while (j + 1 < sal.size() && sal[j + 1] > tau) {
                ++j;
                score = std::max(score, sal[j]);
            }
            spans.push_back({src[i].first, src[j].second, score, block});
            i = j + 1;
        } else {
            spans.push_back({src[i].first, src[i].second, sal[i], block});
            ++i;
        }
    }

    std::stable_sort(spans.begin(), spans.end(), [](const SalientSpan& a, const SalientSpan& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.char_start < b.char_start;
    });
    if (spans.size() > top_k) spans.resize(top_k);
    return spans;
}

// --- concept attribution -----------------------------------------------------------------

/// Attribute each span to the lexicon concepts whose phrases reach the cosine
/// threshold (inclusive). Spans matching nothing simply produce no
/// attribution. Per span, matches are ordered best-first.
inline std::vector<ConceptAttribution> map_to_concepts(const std::vector<SalientSpan>& spans,
                                                       const std::string& text,
                                                       const Lexicon& lex,
                                                       EncoderBackend& embedder,
                                                       double threshold = 0.80) {
    std::vector<ConceptAttribution> out;
    for (const SalientSpan& s : spans) {
        if (s.char_start >= s.char_end || s.char_end > text.size()) {
            throw InputError("map_to_concepts: span out of bounds");
        }
        const std::string phrase = text.substr(s.char_start, s.char_end - s.char_start);
        if (normalize_phrase(phrase).empty()) continue;
        for (const SimilarConcept& match : expand_similar(lex, phrase, embedder, threshold)) {
            const Concept* c = lex.find(match.concept_id);
            if (!c) continue;
            ConceptAttribution a;
            a.span = s;
            a.concept_id = match.concept_id;
            a.label = c->preferred_label;
            a.phq9 = c->phq9;
            a.similarity = match.similarity;
            out.push_back(std::move(a));
        }
    }
    return out;
}

// --- prompt + LLM ---------------------------------------------------------------------------

inline std::string decision_to_string(const KinnConfig& cfg, const Label& y) {
    if (cfg.task != Task::MULTILABEL) return std::to_string(y.cls);
    std::string out;
    for (std::size_t k = 0; k < y.bits.size(); ++k) {
        if (y.bits[k] == 1) {
            if (!out.empty()) out += ',';
            out += std::to_string(k);
        }
    }
    return out.empty() ? "none" : out;
}

/// Deterministic four-line prompt: instruction, the post verbatim, the
/// de-duplicated concept list (with PHQ-9 category when known), the decision.
inline std::string build_prompt(const std::string& text,
                                const std::vector<ConceptAttribution>& attributions,
                                const std::string& decision) {
    std::string concepts;
    std::vector<std::string> seen;
    for (const ConceptAttribution& a : attributions) {
        if (std::find(seen.begin(), seen.end(), a.concept_id) != seen.end()) continue;
        seen.push_back(a.concept_id);
        if (!concepts.empty()) concepts += "; ";
        concepts += a.label;
        if (a.phq9) concepts += " (PHQ-9 category " + std::to_string(*a.phq9) + ")";
    }
    if (concepts.empty()) concepts = "(none)";
    std::string prompt;
    prompt += "Explain the model's decision for the post below in plain language, ";
    prompt += "using only the listed concepts as evidence.\n";
    prompt += "post: " + text + "\n";
    prompt += "concepts: " + concepts + "\n";
    prompt += "decision: " + decision + "\n";
    return prompt;
}

/// Ask the LLM backend for the explanation text. Backend failures propagate
/// as BackendError; callers that must not block report emission catch it and
/// leave the report's llm_explanation absent.
inline std::string generate_explanation(LlmBackend& client, const std::string& prompt) {
    return client.generate(prompt);
}

/// generate_explanation with the degradation contract applied: on backend
/// failure the report keeps llm_explanation absent instead of failing.
inline void attach_explanation(ExplanationReport& report, LlmBackend& client) {
    try {
        report.llm_explanation = generate_explanation(client, report.prompt);
    } catch (const BackendError&) {
        report.llm_explanation.reset();
    }
}

// --- emission --------------------------------------------------------------------------------

inline nlohmann::json to_json(const SalientSpan& s) {
    return nlohmann::json{{"char_start", s.char_start},
                          {"char_end", s.char_end},
                          {"score", s.score},
                          {"block", to_string(s.block)}};
}

inline nlohmann::json to_json(const ConceptAttribution& a) {
    return nlohmann::json{{"span", to_json(a.span)},
                          {"concept_id", a.concept_id},
                          {"label", a.label},
                          {"phq9", a.phq9 ? nlohmann::json(*a.phq9) : nlohmann::json(nullptr)},
                          {"similarity", a.similarity}};
}

inline nlohmann::json to_json(const ExplanationReport& r) {
    nlohmann::json j;
    j["schema"] = 1;
    j["doc_id"] = r.doc_id;
    j["text"] = r.text;
    j["spans"] = nlohmann::json::array();
    for (const SalientSpan& s : r.spans) j["spans"].push_back(to_json(s));
    j["attributions"] = nlohmann::json::array();
    for (const ConceptAttribution& a : r.attributions) j["attributions"].push_back(to_json(a));
    j["prompt"] = r.prompt;
    j["llm_explanation"] =
        r.llm_explanation ? nlohmann::json(*r.llm_explanation) : nlohmann::json(nullptr);
    j["model_decision"] = r.model_decision;
    j["probs"] = r.probs;
    return j;
}

inline ExplanationReport explanation_report_from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j["schema"].get<int>() != 1) {
        throw DataError("unsupported explanation report schema");
    }
    ExplanationReport r;
    r.doc_id = j.at("doc_id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    for (const auto& s : j.at("spans")) {
        r.spans.push_back({s.at("char_start").get<std::size_t>(),
                           s.at("char_end").get<std::size_t>(),
                           s.at("score").get<double>(),
                           attention_block_from(s.at("block").get<std::string>())});
    }
    for (const auto& a : j.at("attributions")) {
        ConceptAttribution attr;
        const auto& s = a.at("span");
        attr.span = {s.at("char_start").get<std::size_t>(),
                     s.at("char_end").get<std::size_t>(), s.at("score").get<double>(),
                     attention_block_from(s.at("block").get<std::string>())};
        attr.concept_id = a.at("concept_id").get<std::string>();
        attr.label = a.at("label").get<std::string>();
        if (!a.at("phq9").is_null()) attr.phq9 = a.at("phq9").get<int>();
        attr.similarity = a.at("similarity").get<double>();
        r.attributions.push_back(std::move(attr));
    }
    r.prompt = j.at("prompt").get<std::string>();
    if (!j.at("llm_explanation").is_null()) {
        r.llm_explanation = j.at("llm_explanation").get<std::string>();
    }
    r.model_decision = j.at("model_decision").get<std::string>();
    r.probs = j.at("probs").get<std::vector<double>>();
    return r;
}

inline std::string escape_html(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

/// Single-file HTML report: the post with highlight marks whose opacity
/// scales with span score, plus a concept sidebar and the prompt/explanation.
inline std::string render_html(const ExplanationReport& r) {
    std::vector<SalientSpan> ordered = r.spans;
    std::sort(ordered.begin(), ordered.end(), [](const SalientSpan& a, const SalientSpan& b) {
        return a.char_start < b.char_start;
    });
    double max_score = 0.0;
    for (const SalientSpan& s : ordered) max_score = std::max(max_score, s.score);

    std::string body;
    std::size_t pos = 0;
    for (const SalientSpan& s : ordered) {
        if (s.char_start < pos || s.char_end > r.text.size()) continue;  // overlap-safe
        body += escape_html(r.text.substr(pos, s.char_start - pos));
        const double opacity =
            max_score > 0.0 ? 0.25 + 0.75 * (s.score / max_score) : 0.25;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", opacity);
        body += "<mark style=\"background: rgba(255,165,0," + std::string(buf) +
                ")\" title=\"score=" + std::to_string(s.score) + "\">";
        body += escape_html(r.text.substr(s.char_start, s.char_end - s.char_start));
        body += "</mark>";
        pos = s.char_end;
    }
    body += escape_html(r.text.substr(pos));

    std::string concepts;
    for (const ConceptAttribution& a : r.attributions) {
        concepts += "<li>" + escape_html(a.label);
        if (a.phq9) concepts += " (PHQ-9 category " + std::to_string(*a.phq9) + ")";
        concepts += " — similarity " + std::to_string(a.similarity) + "</li>";
    }
    if (concepts.empty()) concepts = "<li>(none)</li>";

    std::string html;
    html += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n";
    html += "<title>Explanation " + escape_html(r.doc_id) + "</title>\n";
    html += "<style>body{font-family:sans-serif;max-width:60em;margin:2em auto;}"
            ".post{border:1px solid #ccc;padding:1em;white-space:pre-wrap;}"
            "mark{padding:0 2px;}</style>\n</head>\n<body>\n";
    html += "<h1>Document " + escape_html(r.doc_id) + "</h1>\n";
    html += "<p>Decision: <strong>" + escape_html(r.model_decision) + "</strong></p>\n";
    html += "<div class=\"post\">" + body + "</div>\n";
    html += "<h2>Concepts</h2>\n<ul>" + concepts + "</ul>\n";
    if (r.llm_explanation) {
        html += "<h2>Explanation</h2>\n<p>" + escape_html(*r.llm_explanation) + "</p>\n";
    }
    html += "<h2>Prompt</h2>\n<pre>" + escape_html(r.prompt) + "</pre>\n";
    html += "</body>\n</html>\n";
    return html;
}

enum class ReportFormat { JSON, HTML };

/// Write a report. JSON output is byte-deterministic for a given report.
inline void emit_report(const ExplanationReport& r, ReportFormat format,
                        const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report: " + path);
    if (format == ReportFormat::JSON) {
        out << to_json(r).dump(2) << '\n';
    } else {
        out << render_html(r);
    }
}

}  // namespace kinn
