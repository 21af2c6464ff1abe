// The fusion network: a domain-branch attention block over the tagged text, a
// commonsense-branch block over the aspect-augmented text (self-attention in
// variant 2, cross-attention with domain queries in variant 1), row-wise
// concatenation + layer norm, a fused attention block, mean pooling, a dense
// projection, and the classifier head.
//
// Output squashing: element-wise sigmoid for BINARY and MULTILABEL probs,
// softmax for MULTICLASS. Losses: softmax cross-entropy for BINARY and
// MULTICLASS (optionally class-weighted), mean per-label binary cross-entropy
// for MULTILABEL. All computed in stable logit form.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinn/attention.hpp"
#include "kinn/common.hpp"

namespace kinn {

enum class Variant { KINN1, KINN2 };
enum class Task { BINARY, MULTILABEL, MULTICLASS };

inline std::string to_string(Variant v) { return v == Variant::KINN1 ? "kinn1" : "kinn2"; }

inline Variant variant_from(const std::string& s) {
    if (s == "kinn1") return Variant::KINN1;
    if (s == "kinn2") return Variant::KINN2;
    throw ConfigError("unknown variant '" + s + "' (expected kinn1 or kinn2)");
}

inline std::string to_string(Task t) {
    switch (t) {
        case Task::BINARY: return "binary";
        case Task::MULTILABEL: return "multilabel";
        case Task::MULTICLASS: return "multiclass";
    }
    return "binary";
}

inline Task task_from(const std::string& s) {
    if (s == "binary") return Task::BINARY;
    if (s == "multilabel") return Task::MULTILABEL;
    if (s == "multiclass") return Task::MULTICLASS;
    throw ConfigError("unknown task '" + s + "'");
}

struct KinnConfig {
    Variant variant = Variant::KINN2;
    int dim = 128;
    int heads = 4;
    int max_len = 2000;
    int num_classes = 2;
    Task task = Task::BINARY;
    double lr = 1e-3;
    int epochs = 15;
    int batch_size = 16;
    double epsilon = 1e-3;  // convergence threshold on batch loss
    std::uint64_t seed = 42;
    bool class_weights = false;  // inverse-frequency weighting (single-label tasks)

    void validate() const {
        if (dim <= 0) throw ConfigError("dim must be positive");
        if (heads <= 0) throw ConfigError("heads must be positive");
        if (dim % heads != 0) throw ConfigError("dim must be divisible by heads");
        if (max_len <= 0) throw ConfigError("max_len must be positive");
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        if (task == Task::BINARY && num_classes != 2) {
            throw ConfigError("binary task requires num_classes == 2");
        }
        if (!(lr > 0.0)) throw ConfigError("lr must be positive");
        if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
        if (epochs < 0) throw ConfigError("epochs must be non-negative");
        if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    }
};

// --- labels -----------------------------------------------------------------------

/// Task-shaped label: a class index for BINARY/MULTICLASS, a 0/1 vector of
/// length num_classes for MULTILABEL.
struct Label {
    int cls = -1;
    std::vector<int> bits;
};

inline bool operator==(const Label& a, const Label& b) {
    return a.cls == b.cls && a.bits == b.bits;
}

inline void validate_label(const KinnConfig& cfg, const Label& y) {
    if (cfg.task == Task::MULTILABEL) {
        if (static_cast<int>(y.bits.size()) != cfg.num_classes) {
            throw InputError("label vector length must equal num_classes");
        }
        for (int b : y.bits) {
            if (b != 0 && b != 1) throw InputError("label vector entries must be 0 or 1");
        }
    } else {
        if (y.cls < 0 || y.cls >= cfg.num_classes) {
            throw InputError("label out of range [0, num_classes)");
        }
    }
}

// --- parameters ---------------------------------------------------------------------

struct KinnParams {
    AttentionWeights attn_domain;
    AttentionWeights attn_cs;
    AttentionWeights attn_fused;
    LayerNormWeights layernorm;
    LinearWeights dense;  // dim -> dim
    LinearWeights head;   // dim -> num_classes
};

struct KinnGrads {
    AttentionGrads attn_domain;
    AttentionGrads attn_cs;
    AttentionGrads attn_fused;
    LayerNormGrads layernorm;
    LinearGrads dense;
    LinearGrads head;

    explicit KinnGrads(const KinnParams& p)
        : attn_domain(p.attn_domain),
          attn_cs(p.attn_cs),
          attn_fused(p.attn_fused),
          layernorm(p.layernorm),
          dense(p.dense),
          head(p.head) {}
};

namespace detail {

inline Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix W(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) W(i, j) = rng.uniform(-limit, limit);
    }
    return W;
}

inline AttentionWeights init_attention(int dim, Rng& rng) {
    AttentionWeights w;
    w.Wq = glorot(dim, dim, rng);
    w.Wk = glorot(dim, dim, rng);
    w.Wv = glorot(dim, dim, rng);
    w.Wo = glorot(dim, dim, rng);
    w.bq = Vector::Zero(dim);
    w.bk = Vector::Zero(dim);
    w.bv = Vector::Zero(dim);
    w.bo = Vector::Zero(dim);
    return w;
}

}  // namespace detail

inline KinnParams init_params(const KinnConfig& cfg, Rng& rng) {
    cfg.validate();
    KinnParams p;
    p.attn_domain = detail::init_attention(cfg.dim, rng);
    p.attn_cs = detail::init_attention(cfg.dim, rng);
    p.attn_fused = detail::init_attention(cfg.dim, rng);
    p.layernorm.gamma = Vector::Ones(cfg.dim);
    p.layernorm.beta = Vector::Zero(cfg.dim);
    p.dense.W = detail::glorot(cfg.dim, cfg.dim, rng);
    p.dense.b = Vector::Zero(cfg.dim);
    p.head.W = detail::glorot(cfg.num_classes, cfg.dim, rng);
    p.head.b = Vector::Zero(cfg.num_classes);
    return p;
}

/// Named views over every parameter block (same order for params and grads),
/// used by the optimizer, finite-difference checks, and serialization.
struct ParamView {
    std::string name;
    double* data;
    Eigen::Index rows;
    Eigen::Index cols;  // 1 for vectors

    Eigen::Index size() const { return rows * cols; }
};

namespace detail {

template <typename Attn>
inline void attn_views(const std::string& prefix, Attn& a, std::vector<ParamView>& out) {
    out.push_back({prefix + ".Wq", a.Wq.data(), a.Wq.rows(), a.Wq.cols()});
    out.push_back({prefix + ".Wk", a.Wk.data(), a.Wk.rows(), a.Wk.cols()});
    out.push_back({prefix + ".Wv", a.Wv.data(), a.Wv.rows(), a.Wv.cols()});
    out.push_back({prefix + ".Wo", a.Wo.data(), a.Wo.rows(), a.Wo.cols()});
    out.push_back({prefix + ".bq", a.bq.data(), a.bq.size(), 1});
    out.push_back({prefix + ".bk", a.bk.data(), a.bk.size(), 1});
    out.push_back({prefix + ".bv", a.bv.data(), a.bv.size(), 1});
    out.push_back({prefix + ".bo", a.bo.data(), a.bo.size(), 1});
}

}  // namespace detail

inline std::vector<ParamView> param_views(KinnParams& p) {
    std::vector<ParamView> out;
    detail::attn_views("attn_domain", p.attn_domain, out);
    detail::attn_views("attn_cs", p.attn_cs, out);
    detail::attn_views("attn_fused", p.attn_fused, out);
    out.push_back({"layernorm.gamma", p.layernorm.gamma.data(), p.layernorm.gamma.size(), 1});
    out.push_back({"layernorm.beta", p.layernorm.beta.data(), p.layernorm.beta.size(), 1});
    out.push_back({"dense.W", p.dense.W.data(), p.dense.W.rows(), p.dense.W.cols()});
    out.push_back({"dense.b", p.dense.b.data(), p.dense.b.size(), 1});
    out.push_back({"head.W", p.head.W.data(), p.head.W.rows(), p.head.W.cols()});
    out.push_back({"head.b", p.head.b.data(), p.head.b.size(), 1});
    return out;
}

inline std::vector<ParamView> grad_views(KinnGrads& g) {
    std::vector<ParamView> out;
    detail::attn_views("attn_domain", g.attn_domain, out);
    detail::attn_views("attn_cs", g.attn_cs, out);
    detail::attn_views("attn_fused", g.attn_fused, out);
    out.push_back({"layernorm.gamma", g.layernorm.gamma.data(), g.layernorm.gamma.size(), 1});
    out.push_back({"layernorm.beta", g.layernorm.beta.data(), g.layernorm.beta.size(), 1});
    out.push_back({"dense.W", g.dense.W.data(), g.dense.W.rows(), g.dense.W.cols()});
    out.push_back({"dense.b", g.dense.b.data(), g.dense.b.size(), 1});
    out.push_back({"head.W", g.head.W.data(), g.head.W.rows(), g.head.W.cols()});
    out.push_back({"head.b", g.head.b.data(), g.head.b.size(), 1});
    return out;
}

// --- forward -----------------------------------------------------------------------

struct ForwardTrace {
    Matrix A_domain;  // Td x Td
    Matrix A_cs;      // Tcs x Tcs (variant 2) or Td x Tcs (variant 1)
    Matrix A_fused;   // Th x Th
    Matrix h;         // fused, normalized hidden sequence (Th x dim)
    Vector z;         // pooled representation (dim)
    Vector logits;    // num_classes
    Vector probs;     // num_classes
    int len_domain = 0;
    int len_cs = 0;
};

struct ForwardCache {
    AttentionCache attn_domain;
    AttentionCache attn_cs;
    AttentionCache attn_fused;
    LayerNormCache layernorm;
    Matrix S_h;      // output of the fused block
    Vector pooled;   // mean over S_h rows
    Vector z;
    Vector logits;
    int len_domain = 0;
    int len_cs = 0;
};

inline Vector softmax(const Vector& logits) {
    const double mx = logits.maxCoeff();
    Eigen::ArrayXd e = (logits.array() - mx).exp();
    return (e / e.sum()).matrix();
}

inline Vector probs_from_logits(const KinnConfig& cfg, const Vector& logits) {
    if (cfg.task == Task::MULTICLASS) return softmax(logits);
    return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
}

inline ForwardTrace forward(const KinnConfig& cfg, const KinnParams& params,
                            const Matrix& x_domain, const Matrix& x_cs,
                            ForwardCache* cache = nullptr, const Mask* mask_domain = nullptr,
                            const Mask* mask_cs = nullptr) {
    if (x_domain.rows() < 1 || x_cs.rows() < 1) {
        throw InputError("forward: input sequences must be non-empty");
    }
    if (x_domain.cols() != cfg.dim || x_cs.cols() != cfg.dim) {
        throw InputError("forward: input dim must equal cfg.dim");
    }
    Mask md = mask_domain ? *mask_domain : no_mask(x_domain.rows());
    Mask mc = mask_cs ? *mask_cs : no_mask(x_cs.rows());

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.len_domain = static_cast<int>(x_domain.rows());
    c.len_cs = static_cast<int>(x_cs.rows());

    AttentionResult dom = self_attention(x_domain, params.attn_domain, cfg.heads, md,
                                         &c.attn_domain, "domain_attention");

    AttentionResult cs =
        cfg.variant == Variant::KINN2
            ? self_attention(x_cs, params.attn_cs, cfg.heads, mc, &c.attn_cs,
                             "commonsense_attention")
            : cross_attention(x_domain, x_cs, params.attn_cs, cfg.heads, md, mc, &c.attn_cs,
                              "commonsense_attention");

    Matrix h_cat(dom.Y.rows() + cs.Y.rows(), cfg.dim);
    h_cat << dom.Y, cs.Y;
    Matrix h = layernorm_forward(h_cat, params.layernorm, &c.layernorm);
    ensure_finite(h, "layernorm");

    Mask mh(static_cast<std::size_t>(h.rows()), false);
    for (Eigen::Index i = 0; i < dom.Y.rows(); ++i) mh[static_cast<std::size_t>(i)] = md[i];
    if (cfg.variant == Variant::KINN2) {
        for (Eigen::Index i = 0; i < cs.Y.rows(); ++i) {
            mh[static_cast<std::size_t>(dom.Y.rows() + i)] = mc[i];
        }
    } else {
        for (Eigen::Index i = 0; i < cs.Y.rows(); ++i) {
            mh[static_cast<std::size_t>(dom.Y.rows() + i)] = md[i];
        }
    }

    AttentionResult fused =
        self_attention(h, params.attn_fused, cfg.heads, mh, &c.attn_fused, "fused_attention");
    c.S_h = fused.Y;

    c.pooled = c.S_h.colwise().mean().transpose();
    c.z = linear_forward(params.dense, c.pooled);
    ensure_finite(c.z, "dense");
    c.logits = linear_forward(params.head, c.z);
    ensure_finite(c.logits, "head");

    ForwardTrace t;
    t.A_domain = std::move(dom.A);
    t.A_cs = std::move(cs.A);
    t.A_fused = std::move(fused.A);
    t.h = std::move(h);
    t.z = c.z;
    t.logits = c.logits;
    t.probs = probs_from_logits(cfg, c.logits);
    ensure_finite(t.probs, "output");
    t.len_domain = c.len_domain;
    t.len_cs = c.len_cs;
    return t;
}

// --- loss ---------------------------------------------------------------------------

inline double log_sum_exp(const Vector& v) {
    const double mx = v.maxCoeff();
    return mx + std::log((v.array() - mx).exp().sum());
}

/// Loss and d(loss)/d(logits) for one sample. `weight` scales both (used for
/// inverse-frequency class weighting on single-label tasks).
inline double loss_from_logits(const KinnConfig& cfg, const Vector& logits, const Label& y,
                               Vector* dlogits = nullptr, double weight = 1.0) {
    validate_label(cfg, y);
    if (logits.size() != cfg.num_classes) {
        throw InputError("loss: logits length must equal num_classes");
    }
    if (cfg.task == Task::MULTILABEL) {
        const double C = static_cast<double>(cfg.num_classes);
        double total = 0.0;
        if (dlogits) *dlogits = Vector::Zero(cfg.num_classes);
        for (int j = 0; j < cfg.num_classes; ++j) {
            const double x = logits[j];
            const double t = static_cast<double>(y.bits[static_cast<std::size_t>(j)]);
            // Stable BCE-with-logits: max(x,0) - x t + log(1 + exp(-|x|)).
            total += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
            if (dlogits) {
                const double sig = 1.0 / (1.0 + std::exp(-x));
                (*dlogits)[j] = weight * (sig - t) / C;
            }
        }
        return weight * total / C;
    }
    const double lse = log_sum_exp(logits);
    const double loss = weight * (lse - logits[y.cls]);
    if (dlogits) {
        Vector p = softmax(logits);
        p[y.cls] -= 1.0;
        *dlogits = weight * p;
    }
    return loss;
}

// --- backward ------------------------------------------------------------------------

/// Backpropagate d(loss)/d(logits) through the whole network, accumulating
/// into g. Input-side gradients are discarded (embeddings are fixed).
inline void backward(const KinnConfig& cfg, const KinnParams& params, const ForwardCache& c,
                     const Vector& dlogits, KinnGrads& g) {
    Vector dz = linear_backward(params.head, c.z, dlogits, g.head);
    Vector dpooled = linear_backward(params.dense, c.pooled, dz, g.dense);

    const Eigen::Index Th = c.S_h.rows();
    Matrix dS_h(Th, cfg.dim);
    for (Eigen::Index i = 0; i < Th; ++i) {
        dS_h.row(i) = dpooled.transpose() / static_cast<double>(Th);
    }

    AttentionInputGrads fused =
        cross_attention_backward(c.attn_fused, params.attn_fused, dS_h, g.attn_fused);
    Matrix dh = fused.dXq + fused.dXkv;

    Matrix dh_cat = layernorm_backward(dh, params.layernorm, c.layernorm, g.layernorm);

    const Eigen::Index Td = c.len_domain;
    Matrix dS_dom = dh_cat.topRows(Td);
    Matrix dS_cs = dh_cat.bottomRows(dh_cat.rows() - Td);

    // Input-side gradients of both branches land on fixed embeddings and are
    // discarded; only the parameter gradients accumulated into g matter.
    cross_attention_backward(c.attn_cs, params.attn_cs, dS_cs, g.attn_cs);
    cross_attention_backward(c.attn_domain, params.attn_domain, dS_dom, g.attn_domain);
}

// --- predict -------------------------------------------------------------------------

/// Decision rule: argmax (ties toward the lower index) for single-label
/// tasks; per-label threshold at 0.5 (inclusive) for MULTILABEL.
inline Label predict(const KinnConfig& cfg, const Vector& probs) {
    Label y;
    if (cfg.task == Task::MULTILABEL) {
        y.bits.resize(static_cast<std::size_t>(cfg.num_classes), 0);
        for (int j = 0; j < cfg.num_classes; ++j) {
            y.bits[static_cast<std::size_t>(j)] = probs[j] >= 0.5 ? 1 : 0;
        }
    } else {
        int best = 0;
        for (int j = 1; j < cfg.num_classes; ++j) {
            if (probs[j] > probs[best]) best = j;
        }
        y.cls = best;
    }
    return y;
}

// --- checkpoint ------------------------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) throw DataError("checkpoint: bad matrix");
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j[i].size()) != cols) {
            throw DataError("checkpoint: ragged matrix");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

inline Vector vector_from_json(const nlohmann::json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

inline nlohmann::json attn_to_json(const AttentionWeights& a) {
    return nlohmann::json{{"Wq", matrix_to_json(a.Wq)}, {"Wk", matrix_to_json(a.Wk)},
                          {"Wv", matrix_to_json(a.Wv)}, {"Wo", matrix_to_json(a.Wo)},
                          {"bq", vector_to_json(a.bq)}, {"bk", vector_to_json(a.bk)},
                          {"bv", vector_to_json(a.bv)}, {"bo", vector_to_json(a.bo)}};
}

inline AttentionWeights attn_from_json(const nlohmann::json& j) {
    AttentionWeights a;
    a.Wq = matrix_from_json(j.at("Wq"));
    a.Wk = matrix_from_json(j.at("Wk"));
    a.Wv = matrix_from_json(j.at("Wv"));
    a.Wo = matrix_from_json(j.at("Wo"));
    a.bq = vector_from_json(j.at("bq"));
    a.bk = vector_from_json(j.at("bk"));
    a.bv = vector_from_json(j.at("bv"));
    a.bo = vector_from_json(j.at("bo"));
    return a;
}

}  // namespace detail

inline nlohmann::json to_json(const KinnConfig& cfg) {
    return nlohmann::json{{"variant", to_string(cfg.variant)},
                          {"dim", cfg.dim},
                          {"heads", cfg.heads},
                          {"max_len", cfg.max_len},
                          {"num_classes", cfg.num_classes},
                          {"task", to_string(cfg.task)},
                          {"lr", cfg.lr},
                          {"epochs", cfg.epochs},
                          {"batch_size", cfg.batch_size},
                          {"epsilon", cfg.epsilon},
                          {"seed", cfg.seed},
                          {"class_weights", cfg.class_weights}};
}

inline KinnConfig kinn_config_from_json(const nlohmann::json& j) {
    KinnConfig cfg;
    cfg.variant = variant_from(j.at("variant").get<std::string>());
    cfg.dim = j.at("dim").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.max_len = j.at("max_len").get<int>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.task = task_from(j.at("task").get<std::string>());
    cfg.lr = j.at("lr").get<double>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.epsilon = j.at("epsilon").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.class_weights = j.at("class_weights").get<bool>();
    cfg.validate();
    return cfg;
}

inline nlohmann::json to_json(const KinnParams& p) {
    return nlohmann::json{
        {"attn_domain", detail::attn_to_json(p.attn_domain)},
        {"attn_cs", detail::attn_to_json(p.attn_cs)},
        {"attn_fused", detail::attn_to_json(p.attn_fused)},
        {"layernorm",
         nlohmann::json{{"gamma", detail::vector_to_json(p.layernorm.gamma)},
                        {"beta", detail::vector_to_json(p.layernorm.beta)}}},
        {"dense", nlohmann::json{{"W", detail::matrix_to_json(p.dense.W)},
                                 {"b", detail::vector_to_json(p.dense.b)}}},
        {"head", nlohmann::json{{"W", detail::matrix_to_json(p.head.W)},
                                {"b", detail::vector_to_json(p.head.b)}}}};
}

inline KinnParams kinn_params_from_json(const nlohmann::json& j) {
    KinnParams p;
    p.attn_domain = detail::attn_from_json(j.at("attn_domain"));
    p.attn_cs = detail::attn_from_json(j.at("attn_cs"));
    p.attn_fused = detail::attn_from_json(j.at("attn_fused"));
    p.layernorm.gamma = detail::vector_from_json(j.at("layernorm").at("gamma"));
    p.layernorm.beta = detail::vector_from_json(j.at("layernorm").at("beta"));
    p.dense.W = detail::matrix_from_json(j.at("dense").at("W"));
    p.dense.b = detail::vector_from_json(j.at("dense").at("b"));
    p.head.W = detail::matrix_from_json(j.at("head").at("W"));
    p.head.b = detail::vector_from_json(j.at("head").at("b"));
    return p;
}

/// Versioned checkpoint: config + parameters. Doubles serialize in
/// shortest-round-trip form, so load restores them bit-exactly.
inline void save_checkpoint(const std::string& path, const KinnConfig& cfg,
                            const KinnParams& params) {
    nlohmann::json j;
    j["schema"] = 1;
    j["config"] = to_json(cfg);
    j["params"] = to_json(params);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out << j.dump(2) << '\n';
}

inline std::pair<KinnConfig, KinnParams> load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
    if (!j.contains("schema") || j["schema"].get<int>() != 1) {
        throw DataError("unsupported checkpoint schema");
    }
    return {kinn_config_from_json(j.at("config")), kinn_params_from_json(j.at("params"))};
}

}  // namespace kinn
