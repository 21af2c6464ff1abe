// Shared helpers for the unit-test suites.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kinn/backends.hpp"
#include "kinn/common.hpp"

namespace kinn_test {

inline Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

inline std::string data_dir() {
    if (const char* p = std::getenv("KINN_TEST_DATA")) return p;
    return "tests/data";
}

inline std::string data_file(const std::string& name) {
    return (std::filesystem::path(data_dir()) / name).string();
}

/// Fresh scratch directory per test case.
inline std::string tmp_dir(const std::string& tag) {
    static int counter = 0;
    auto p = std::filesystem::temp_directory_path() /
             ("kinn_test_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Encoder whose vectors can be pinned per phrase (normalized-key lookup);
/// unpinned phrases fall back to the hash encoder. Lets tests engineer exact
/// cosine similarities (e.g. a pair at exactly 0.80).
class PinnedEncoder : public kinn::HashEncoder {
public:
    explicit PinnedEncoder(int dim) : kinn::HashEncoder(dim) {}

    void pin(const std::string& phrase, std::initializer_list<double> v) {
        std::string key = kinn::normalize_phrase(phrase);
        if (key.empty()) key = phrase;
        pinned_[key] = vec(v);
    }

    Eigen::VectorXd embed_phrase(const std::string& phrase) override {
        std::string key = kinn::normalize_phrase(phrase);
        if (key.empty()) key = phrase;
        auto it = pinned_.find(key);
        if (it != pinned_.end()) return it->second;
        return kinn::HashEncoder::embed_phrase(phrase);
    }

    Eigen::MatrixXd embed_tokens(const std::vector<std::string>& tokens) override {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(tokens.size()), dim());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            X.row(static_cast<Eigen::Index>(i)) = embed_phrase(tokens[i]);
        }
        return X;
    }

private:
    std::map<std::string, Eigen::VectorXd> pinned_;
};

/// Commonsense backend that always fails, for degradation tests.
class FailingCommonsense : public kinn::CommonsenseBackend {
public:
    std::string name() const override { return "failing"; }
    std::string infer(const std::string&, const std::string&) override {
        throw kinn::BackendError("commonsense backend unreachable", true);
    }
};

/// LLM backend that always fails, for degradation tests.
class FailingLlm : public kinn::LlmBackend {
public:
    std::string name() const override { return "failing"; }
    std::string generate(const std::string&) override {
        throw kinn::BackendError("llm timeout", true);
    }
};

}  // namespace kinn_test
