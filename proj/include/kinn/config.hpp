// Run configuration: one JSON file describing the task, network, backends,
// and paths. Task presets fill in the conventional defaults (sequence length,
// batch size, epoch count per task shape); explicit keys override them.
// Credentials are NEVER read from this file — only the NAME of an
// environment variable may be configured.

#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "kinn/common.hpp"
#include "kinn/explain.hpp"
#include "kinn/network.hpp"

namespace kinn {

struct BackendConfig {
    std::string encoder = "hash";  // hash | http
    int encoder_dim = 128;
    std::string encoder_endpoint;
    std::string commonsense = "stub";  // stub | fixture
    std::string commonsense_fixture;
    std::string umls = "fixture";  // fixture
    std::string umls_fixture;      // empty = empty table
    std::string llm = "stub";      // stub | fixture | http
    std::string llm_fixture;
    std::string llm_endpoint;
    std::string llm_model = "text-davinci-003";
    double llm_timeout_s = 30.0;
    int llm_max_tokens = 256;
    std::string llm_api_key_env = "KINN_LLM_API_KEY";
};

struct ExplainConfig {
    AttentionBlock block = AttentionBlock::FUSED;
    int top_k = 5;
    double threshold = 0.80;
};

struct RunConfig {
    KinnConfig kinn;
    bool knowledge = true;  // false = ablation: no tagging, no aspects
    std::string lexicon_path;
    std::string dataset_path;
    std::string tagged_path;      // output of `tag`, input of `explain`
    std::string checkpoint_path;  // output of `train`, input of `eval`/`explain`
    std::string out_dir = ".";
    BackendConfig backends;
    ExplainConfig explain;

    void validate() const {
        kinn.validate();
        static const std::set<std::string> encoders = {"hash", "http"};
        static const std::set<std::string> commonsenses = {"stub", "fixture"};
        static const std::set<std::string> umlses = {"fixture"};
        static const std::set<std::string> llms = {"stub", "fixture", "http"};
        if (!encoders.count(backends.encoder)) {
            throw ConfigError("unknown encoder backend '" + backends.encoder + "'");
        }
        if (!commonsenses.count(backends.commonsense)) {
            throw ConfigError("unknown commonsense backend '" + backends.commonsense + "'");
        }
        if (!umlses.count(backends.umls)) {
            throw ConfigError("unknown umls backend '" + backends.umls + "'");
        }
        if (!llms.count(backends.llm)) {
            throw ConfigError("unknown llm backend '" + backends.llm + "'");
        }
        if (backends.encoder == "http" && backends.encoder_endpoint.empty()) {
            throw ConfigError("http encoder requires encoder_endpoint");
        }
        if (backends.llm == "http" && backends.llm_endpoint.empty()) {
            throw ConfigError("http llm requires llm_endpoint");
        }
        if (backends.encoder_dim != kinn.dim) {
            throw ConfigError("encoder_dim must equal the network dim");
        }
        if (explain.top_k < 0) throw ConfigError("explain top_k must be non-negative");
        if (!(explain.threshold > 0.0 && explain.threshold <= 1.0)) {
            throw ConfigError("explain threshold must be in (0, 1]");
        }
    }
};

namespace detail {

/// Conventional per-task defaults (sequence length / batch size / epochs /
/// class count); lr is 1e-3 everywhere.
inline void apply_task_preset(KinnConfig& cfg) {
    switch (cfg.task) {
        case Task::BINARY:
            cfg.num_classes = 2;
            cfg.max_len = 2000;
            cfg.batch_size = 16;
            cfg.epochs = 15;
            break;
        case Task::MULTILABEL:
            cfg.num_classes = 9;
            cfg.max_len = 150;
            cfg.batch_size = 16;
            cfg.epochs = 25;
            break;
        case Task::MULTICLASS:
            cfg.num_classes = 6;
            cfg.max_len = 50;
            cfg.batch_size = 128;
            cfg.epochs = 25;
            break;
    }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& target) {
    if (j.contains(key) && !j[key].is_null()) target = j[key].get<T>();
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig rc;
    if (!j.contains("task")) throw ConfigError("config requires 'task'");
    rc.kinn.task = task_from(j["task"].get<std::string>());
    detail::apply_task_preset(rc.kinn);

    if (j.contains("variant")) rc.kinn.variant = variant_from(j["variant"].get<std::string>());
    detail::read_if(j, "dim", rc.kinn.dim);
    detail::read_if(j, "heads", rc.kinn.heads);
    detail::read_if(j, "max_len", rc.kinn.max_len);
    detail::read_if(j, "num_classes", rc.kinn.num_classes);
    detail::read_if(j, "lr", rc.kinn.lr);
    detail::read_if(j, "epochs", rc.kinn.epochs);
    detail::read_if(j, "batch_size", rc.kinn.batch_size);
    detail::read_if(j, "epsilon", rc.kinn.epsilon);
    detail::read_if(j, "seed", rc.kinn.seed);
    detail::read_if(j, "class_weights", rc.kinn.class_weights);
    detail::read_if(j, "knowledge", rc.knowledge);
    detail::read_if(j, "lexicon", rc.lexicon_path);
    detail::read_if(j, "dataset", rc.dataset_path);
    detail::read_if(j, "tagged", rc.tagged_path);
    detail::read_if(j, "checkpoint", rc.checkpoint_path);
    detail::read_if(j, "out_dir", rc.out_dir);

    rc.backends.encoder_dim = rc.kinn.dim;
    if (j.contains("backends")) {
        const nlohmann::json& b = j["backends"];
        detail::read_if(b, "encoder", rc.backends.encoder);
        detail::read_if(b, "encoder_dim", rc.backends.encoder_dim);
        detail::read_if(b, "encoder_endpoint", rc.backends.encoder_endpoint);
        detail::read_if(b, "commonsense", rc.backends.commonsense);
        detail::read_if(b, "commonsense_fixture", rc.backends.commonsense_fixture);
        detail::read_if(b, "umls", rc.backends.umls);
        detail::read_if(b, "umls_fixture", rc.backends.umls_fixture);
        detail::read_if(b, "llm", rc.backends.llm);
        detail::read_if(b, "llm_fixture", rc.backends.llm_fixture);
        detail::read_if(b, "llm_endpoint", rc.backends.llm_endpoint);
        detail::read_if(b, "llm_model", rc.backends.llm_model);
        detail::read_if(b, "llm_timeout_s", rc.backends.llm_timeout_s);
        detail::read_if(b, "llm_max_tokens", rc.backends.llm_max_tokens);
        detail::read_if(b, "llm_api_key_env", rc.backends.llm_api_key_env);
        if (b.contains("llm_api_key") || b.contains("api_key") ||
            b.contains("encoder_api_key")) {
            throw ConfigError(
                "credentials must come from an environment variable, not the config file");
        }
    }

    if (j.contains("explain")) {
        const nlohmann::json& e = j["explain"];
        if (e.contains("block")) {
            std::string b = e["block"].get<std::string>();
            for (char& c : b) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            rc.explain.block = attention_block_from(b);
        }
        detail::read_if(e, "top_k", rc.explain.top_k);
        detail::read_if(e, "threshold", rc.explain.threshold);
    }

    rc.validate();
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config file: ") + e.what());
    }
    return run_config_from_json(j);
}

/// The fully resolved configuration, echoed by every command so runs are
/// reproducible from their logs alone.
inline nlohmann::json to_json(const RunConfig& rc) {
    nlohmann::json j;
    j["task"] = to_string(rc.kinn.task);
    j["variant"] = to_string(rc.kinn.variant);
    j["dim"] = rc.kinn.dim;
    j["heads"] = rc.kinn.heads;
    j["max_len"] = rc.kinn.max_len;
    j["num_classes"] = rc.kinn.num_classes;
    j["lr"] = rc.kinn.lr;
    j["epochs"] = rc.kinn.epochs;
    j["batch_size"] = rc.kinn.batch_size;
    j["epsilon"] = rc.kinn.epsilon;
    j["seed"] = rc.kinn.seed;
    j["class_weights"] = rc.kinn.class_weights;
    j["knowledge"] = rc.knowledge;
    j["lexicon"] = rc.lexicon_path;
    j["dataset"] = rc.dataset_path;
    j["tagged"] = rc.tagged_path;
    j["checkpoint"] = rc.checkpoint_path;
    j["out_dir"] = rc.out_dir;
    j["backends"] = nlohmann::json{{"encoder", rc.backends.encoder},
                                   {"encoder_dim", rc.backends.encoder_dim},
                                   {"encoder_endpoint", rc.backends.encoder_endpoint},
                                   {"commonsense", rc.backends.commonsense},
                                   {"commonsense_fixture", rc.backends.commonsense_fixture},
                                   {"umls", rc.backends.umls},
                                   {"umls_fixture", rc.backends.umls_fixture},
                                   {"llm", rc.backends.llm},
                                   {"llm_fixture", rc.backends.llm_fixture},
                                   {"llm_endpoint", rc.backends.llm_endpoint},
                                   {"llm_model", rc.backends.llm_model},
                                   {"llm_timeout_s", rc.backends.llm_timeout_s},
                                   {"llm_max_tokens", rc.backends.llm_max_tokens},
                                   {"llm_api_key_env", rc.backends.llm_api_key_env}};
    j["explain"] = nlohmann::json{{"block", to_string(rc.explain.block)},
                                  {"top_k", rc.explain.top_k},
                                  {"threshold", rc.explain.threshold}};
    return j;
}

}  // namespace kinn
