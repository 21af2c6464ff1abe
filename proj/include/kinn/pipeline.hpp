// Command implementations: tag / train / eval / explain / synth. Each takes a
// validated RunConfig, works purely from files + seed, and writes
// deterministic outputs (no timestamps, sorted JSON keys), so re-running a
// command reproduces its outputs byte-for-byte with offline backends.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinn/backends.hpp"
#include "kinn/common.hpp"
#include "kinn/config.hpp"
#include "kinn/dataset.hpp"
#include "kinn/encoding.hpp"
#include "kinn/explain.hpp"
#include "kinn/http_backends.hpp"
#include "kinn/lexicon.hpp"
#include "kinn/metrics.hpp"
#include "kinn/network.hpp"
#include "kinn/tagging.hpp"
#include "kinn/train.hpp"

namespace kinn {

struct Backends {
    std::unique_ptr<EncoderBackend> encoder;
    std::unique_ptr<CommonsenseBackend> commonsense;
    std::unique_ptr<UmlsBackend> umls;
    std::unique_ptr<LlmBackend> llm;
};

inline Backends build_backends(const RunConfig& rc) {
    Backends b;
    if (rc.backends.encoder == "hash") {
        b.encoder = std::make_unique<HashEncoder>(rc.backends.encoder_dim);
    } else {
        b.encoder = std::make_unique<HttpEncoder>(rc.backends.encoder_endpoint,
                                                  rc.backends.encoder_dim);
    }
    if (rc.backends.commonsense == "stub") {
        b.commonsense = std::make_unique<StubCommonsense>();
    } else {
        b.commonsense = std::make_unique<FixtureCommonsense>(rc.backends.commonsense_fixture);
    }
    b.umls = rc.backends.umls_fixture.empty()
                 ? std::make_unique<FixtureUmls>()
                 : std::make_unique<FixtureUmls>(rc.backends.umls_fixture);
    if (rc.backends.llm == "stub") {
        b.llm = std::make_unique<StubLlm>();
    } else if (rc.backends.llm == "fixture") {
        b.llm = std::make_unique<FixtureLlm>(rc.backends.llm_fixture);
    } else {
        b.llm = std::make_unique<HttpLlm>(rc.backends.llm_endpoint, rc.backends.llm_model,
                                          rc.backends.llm_timeout_s,
                                          rc.backends.llm_max_tokens,
                                          rc.backends.llm_api_key_env);
    }
    return b;
}

// --- feature preparation -----------------------------------------------------------------

struct DocFeatures {
    TaggedDocument tagged;
    AspectSet aspects;
    std::string cs_text;
    Matrix x_domain;
    Matrix x_cs;
};

/// Turn one document into the two branch inputs. With knowledge disabled
/// (ablation) both branches embed the raw text: no tags, no aspects.
inline DocFeatures prepare_features(const std::string& doc_id, const std::string& text,
                                    const Lexicon& lex, Backends& backends,
                                    const RunConfig& rc) {
    DocFeatures f;
    if (rc.knowledge) {
        f.tagged = tag_document(doc_id, text, lex, *backends.encoder, *backends.umls);
        f.aspects = extract_aspects(*backends.commonsense, text);
        f.cs_text = concat_with_aspects(text, f.aspects);
    } else {
        f.tagged.doc_id = doc_id;
        f.tagged.text = text;
        f.tagged.tokens = tokenize_and_pos(text);
        f.tagged.tagged_text = text;
        f.cs_text = text;
    }
    f.x_domain = embed_sequence(*backends.encoder, f.tagged.tagged_text,
                                static_cast<std::size_t>(rc.kinn.max_len))
                     .X;
    f.x_cs = embed_sequence(*backends.encoder, f.cs_text,
                            static_cast<std::size_t>(rc.kinn.max_len))
                 .X;
    return f;
}

inline std::vector<Sample> prepare_samples(const std::vector<DatasetRecord>& records,
                                           const Lexicon& lex, Backends& backends,
                                           const RunConfig& rc) {
    std::vector<Sample> out;
    out.reserve(records.size());
    for (const DatasetRecord& r : records) {
        DocFeatures f = prepare_features(r.doc_id, r.text, lex, backends, rc);
        out.push_back({std::move(f.x_domain), std::move(f.x_cs), r.label});
    }
    return out;
}

// --- path helpers ---------------------------------------------------------------------------

namespace detail {

inline std::string default_path(const RunConfig& rc, const std::string& configured,
                                const std::string& filename) {
    if (!configured.empty()) return configured;
    return (std::filesystem::path(rc.out_dir) / filename).string();
}

inline void ensure_out_dir(const RunConfig& rc) {
    std::filesystem::create_directories(rc.out_dir);
}

}  // namespace detail

// --- commands --------------------------------------------------------------------------------

/// `tag`: lexicon + dataset -> tagged JSONL. Returns the output path.
inline std::string run_tag(const RunConfig& rc) {
    rc.validate();
    detail::ensure_out_dir(rc);
    Lexicon lex = load_lexicon(rc.lexicon_path);
    std::vector<DatasetRecord> records =
        load_dataset(rc.dataset_path, rc.kinn.task, rc.kinn.num_classes);
    Backends backends = build_backends(rc);
    const std::string out_path = detail::default_path(rc, rc.tagged_path, "tagged.jsonl");
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write tagged corpus: " + out_path);
    for (const DatasetRecord& r : records) {
        TaggedDocument doc =
            tag_document(r.doc_id, r.text, lex, *backends.encoder, *backends.umls);
        out << to_json(doc).dump() << '\n';
    }
    return out_path;
}

struct TrainOutput {
    std::string checkpoint_path;
    std::string log_path;
    TrainResult result;
};

/// `train`: dataset -> checkpoint + per-epoch training log.
inline TrainOutput run_train(const RunConfig& rc) {
    rc.validate();
    detail::ensure_out_dir(rc);
    Lexicon lex = load_lexicon(rc.lexicon_path);
    std::vector<DatasetRecord> records =
        load_dataset(rc.dataset_path, rc.kinn.task, rc.kinn.num_classes);
    Backends backends = build_backends(rc);

    std::vector<Sample> train_samples =
        prepare_samples(filter_split(records, Split::TRAIN), lex, backends, rc);
    std::vector<Sample> dev_samples =
        prepare_samples(filter_split(records, Split::DEV), lex, backends, rc);

    TrainOutput out;
    out.result = train(rc.kinn, train_samples, dev_samples);
    out.checkpoint_path = detail::default_path(rc, rc.checkpoint_path, "checkpoint.json");
    save_checkpoint(out.checkpoint_path, rc.kinn, out.result.params);
    out.log_path =
        (std::filesystem::path(rc.out_dir) / "training_log.jsonl").string();
    std::ofstream log(out.log_path);
    if (!log) throw IoError("cannot write training log: " + out.log_path);
    for (const TrainRecord& r : out.result.log) log << to_json(r).dump() << '\n';
    return out;
}

struct EvalOutput {
    std::string metrics_path;
    double loss = 0.0;
    MetricReport metrics;
};

/// `eval`: checkpoint + dataset split -> MetricReport file.
inline EvalOutput run_eval(const RunConfig& rc, Split split = Split::TEST) {
    rc.validate();
    detail::ensure_out_dir(rc);
    const std::string ckpt = detail::default_path(rc, rc.checkpoint_path, "checkpoint.json");
    auto [cfg, params] = load_checkpoint(ckpt);
    Lexicon lex = load_lexicon(rc.lexicon_path);
    std::vector<DatasetRecord> records =
        load_dataset(rc.dataset_path, cfg.task, cfg.num_classes);
    Backends backends = build_backends(rc);

    std::vector<Sample> samples =
        prepare_samples(filter_split(records, split), lex, backends, rc);
    SplitEval ev = eval_split(cfg, params, samples);

    EvalOutput out;
    out.loss = ev.loss;
    out.metrics = ev.metrics;
    out.metrics_path = (std::filesystem::path(rc.out_dir) /
                        ("metrics_" + to_string(split) + ".json"))
                           .string();
    nlohmann::json j = to_json(ev.metrics);
    j["loss"] = ev.loss;
    j["split"] = to_string(split);
    std::ofstream f(out.metrics_path);
    if (!f) throw IoError("cannot write metrics: " + out.metrics_path);
    f << j.dump(2) << '\n';
    return out;
}

/// `explain`: tagged corpus + checkpoint -> JSON + HTML reports for the given
/// documents. Returns the written JSON paths.
inline std::vector<std::string> run_explain(const RunConfig& rc,
                                            const std::vector<std::string>& doc_ids) {
    rc.validate();
    detail::ensure_out_dir(rc);
    const std::string tagged_path = detail::default_path(rc, rc.tagged_path, "tagged.jsonl");
    std::ifstream tin(tagged_path);
    if (!tin) throw IoError("cannot open tagged corpus: " + tagged_path);
    std::map<std::string, TaggedDocument> tagged;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(tin, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            TaggedDocument d = tagged_document_from_json(nlohmann::json::parse(line));
            tagged[d.doc_id] = std::move(d);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed tagged record: ") + e.what(), lineno);
        }
    }

    const std::string ckpt = detail::default_path(rc, rc.checkpoint_path, "checkpoint.json");
    auto [cfg, params] = load_checkpoint(ckpt);
    Lexicon lex = load_lexicon(rc.lexicon_path);
    Backends backends = build_backends(rc);

    std::vector<std::string> written;
    for (const std::string& doc_id : doc_ids) {
        auto it = tagged.find(doc_id);
        if (it == tagged.end()) {
            throw DataError("document not in tagged corpus: " + doc_id);
        }
        const TaggedDocument& doc = it->second;

        AspectSet aspects = extract_aspects(*backends.commonsense, doc.text);
        const std::string cs_text =
            rc.knowledge ? concat_with_aspects(doc.text, aspects) : doc.text;
        const std::string domain_text = rc.knowledge ? doc.tagged_text : doc.text;
        Matrix x_domain = embed_sequence(*backends.encoder, domain_text,
                                         static_cast<std::size_t>(cfg.max_len))
                              .X;
        Matrix x_cs = embed_sequence(*backends.encoder, cs_text,
                                     static_cast<std::size_t>(cfg.max_len))
                          .X;
        ForwardTrace trace = forward(cfg, params, x_domain, x_cs);

        ExplanationReport report;
        report.doc_id = doc_id;
        report.text = doc.text;
        report.spans = salient_spans(trace, doc, static_cast<std::size_t>(rc.explain.top_k),
                                     rc.explain.block, cs_text);
        report.attributions = map_to_concepts(report.spans, doc.text, lex,
                                              *backends.encoder, rc.explain.threshold);
        Label decision = predict(cfg, trace.probs);
        report.model_decision = decision_to_string(cfg, decision);
        report.probs.assign(trace.probs.data(), trace.probs.data() + trace.probs.size());
        report.prompt = build_prompt(doc.text, report.attributions, report.model_decision);
        attach_explanation(report, *backends.llm);

        const std::string json_path =
            (std::filesystem::path(rc.out_dir) / (doc_id + ".explanation.json")).string();
        const std::string html_path =
            (std::filesystem::path(rc.out_dir) / (doc_id + ".explanation.html")).string();
        emit_report(report, ReportFormat::JSON, json_path);
        emit_report(report, ReportFormat::HTML, html_path);
        written.push_back(json_path);
    }
    return written;
}

struct SynthOutput {
    std::string dataset_path;
    std::string lexicon_path;
    std::size_t num_docs = 0;
};

/// `synth`: write a deterministic synthetic dataset + matching lexicon.
inline SynthOutput run_synth(const std::string& out_dir, Task task, int num_classes,
                             std::size_t num_docs, std::uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    SyntheticData data = make_synthetic(task, num_classes, num_docs, seed);
    SynthOutput out;
    out.dataset_path = (std::filesystem::path(out_dir) / "dataset.jsonl").string();
    out.lexicon_path = (std::filesystem::path(out_dir) / "lexicon.jsonl").string();
    out.num_docs = data.records.size();
    save_dataset(out.dataset_path, data.records, task);
    save_lexicon(out.lexicon_path, data.lexicon);
    return out;
}

}  // namespace kinn
