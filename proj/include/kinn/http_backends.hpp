// HTTP ports for real backend services (transformer encoder, hosted LLM).
//
// These exist so the pipeline can be pointed at live services; no test in
// this repository depends on one. API credentials come exclusively from an
// environment variable whose NAME is configured — the value never appears in
// config files, logs, or reports.

#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "kinn/backends.hpp"
#include "kinn/common.hpp"

namespace kinn {

namespace detail {

/// Split "http://host:port" into (host:port, ok). httplib::Client accepts the
/// full scheme-prefixed URL, so we only validate non-emptiness here.
inline void check_endpoint(const std::string& endpoint) {
    if (endpoint.empty()) throw ConfigError("backend endpoint must be non-empty");
}

inline std::string env_credential(const std::string& env_name) {
    if (env_name.empty()) return "";
    const char* v = std::getenv(env_name.c_str());
    return v ? std::string(v) : std::string();
}

}  // namespace detail

/// Encoder served over HTTP. POST {endpoint}/embed with {"texts": [...]}
/// expecting {"vectors": [[...], ...]} of width `dim`.
class HttpEncoder : public EncoderBackend {
public:
    HttpEncoder(std::string endpoint, int dim, double timeout_s = 30.0)
        : endpoint_(std::move(endpoint)), dim_(dim), timeout_s_(timeout_s) {
        detail::check_endpoint(endpoint_);
        if (dim_ <= 0) throw ConfigError("encoder dim must be positive");
    }

    std::string name() const override { return "http"; }
    int dim() const override { return dim_; }
    bool serial_only() const override { return true; }

    Eigen::VectorXd embed_phrase(const std::string& phrase) override {
        if (phrase.empty()) throw InputError("embed_phrase: empty phrase");
        Eigen::MatrixXd X = embed_tokens({phrase});
        return X.row(0);
    }

    Eigen::MatrixXd embed_tokens(const std::vector<std::string>& tokens) override {
        nlohmann::json body;
        body["texts"] = tokens;
        nlohmann::json reply = post_json("/embed", body);
        if (!reply.contains("vectors") || !reply["vectors"].is_array() ||
            reply["vectors"].size() != tokens.size()) {
            throw BackendError("encoder service returned malformed vectors",
                               /*retriable=*/false);
        }
        Eigen::MatrixXd X(static_cast<Eigen::Index>(tokens.size()), dim_);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const auto& row = reply["vectors"][i];
            if (!row.is_array() || static_cast<int>(row.size()) != dim_) {
                throw BackendError("encoder service returned wrong vector width",
                                   /*retriable=*/false);
            }
            for (int d = 0; d < dim_; ++d) {
                X(static_cast<Eigen::Index>(i), d) = row[d].get<double>();
            }
        }
        return X;
    }

private:
    nlohmann::json post_json(const std::string& route, const nlohmann::json& body) {
        httplib::Client client(endpoint_);
        client.set_connection_timeout(static_cast<time_t>(timeout_s_), 0);
        client.set_read_timeout(static_cast<time_t>(timeout_s_), 0);
        auto res = client.Post(route, body.dump(), "application/json");
        if (!res) {
            throw BackendError("encoder service unreachable: " + endpoint_,
                               /*retriable=*/true);
        }
        if (res->status != 200) {
            throw BackendError("encoder service error status " + std::to_string(res->status),
                               res->status >= 500);
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("encoder service returned bad payload: ") +
                                   e.what(),
                               /*retriable=*/false);
        }
    }

    std::string endpoint_;
    int dim_;
    double timeout_s_;
};

/// Completion-style LLM over HTTP. POST {endpoint}/v1/completions with
/// {"model", "prompt", "max_tokens"}; reads choices[0].text. The bearer token
/// is taken from the environment variable named by `api_key_env`.
class HttpLlm : public LlmBackend {
public:
    HttpLlm(std::string endpoint, std::string model, double timeout_s, int max_tokens,
            std::string api_key_env)
        : endpoint_(std::move(endpoint)),
          model_(std::move(model)),
          timeout_s_(timeout_s),
          max_tokens_(max_tokens),
          api_key_env_(std::move(api_key_env)) {
        detail::check_endpoint(endpoint_);
        if (max_tokens_ <= 0) throw ConfigError("llm max_tokens must be positive");
    }

    std::string name() const override { return "http"; }

    std::string generate(const std::string& prompt) override {
        httplib::Client client(endpoint_);
        client.set_connection_timeout(static_cast<time_t>(timeout_s_), 0);
        client.set_read_timeout(static_cast<time_t>(timeout_s_), 0);
        httplib::Headers headers;
        std::string key = detail::env_credential(api_key_env_);
        if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
        nlohmann::json body;
        body["model"] = model_;
        body["prompt"] = prompt;
        body["max_tokens"] = max_tokens_;
        auto res = client.Post("/v1/completions", headers, body.dump(), "application/json");
        if (!res) {
            throw BackendError("LLM service unreachable: " + endpoint_, /*retriable=*/true);
        }
        if (res->status != 200) {
            throw BackendError("LLM service error status " + std::to_string(res->status),
                               res->status >= 500 || res->status == 429);
        }
        try {
            nlohmann::json reply = nlohmann::json::parse(res->body);
            return reply.at("choices").at(0).at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("LLM service returned bad payload: ") + e.what(),
                               /*retriable=*/false);
        }
    }

private:
    std::string endpoint_;
    std::string model_;
    double timeout_s_;
    int max_tokens_;
    std::string api_key_env_;
};

}  // namespace kinn
