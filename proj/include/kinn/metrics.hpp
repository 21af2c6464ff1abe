// Evaluation suite: macro precision / recall / F1 and the Matthews
// correlation coefficient for binary, multi-class, and multi-label tasks.
//
// Conventions (documented, tested):
//  - any metric with a zero denominator is 0;
//  - macro F1 averages per-class F1 values (not the harmonic mean of the
//    macro P and macro R);
//  - multi-label MCC is the unweighted mean of per-label binary MCCs;
//  - multi-class MCC is the R_k statistic on the full confusion matrix, which
//    reduces exactly to the binary formula for 2x2 matrices.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinn/common.hpp"
#include "kinn/network.hpp"

namespace kinn {

struct ConfusionCounts {
    int num_classes = 0;
    std::vector<std::int64_t> tp, fp, fn, tn;            // per class / per label
    std::vector<std::vector<std::int64_t>> matrix;       // rows = true, cols = predicted
                                                         // (single-label tasks only)
};

struct MetricReport {
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
    double mcc = 0.0;
};

inline nlohmann::json to_json(const MetricReport& m) {
    return nlohmann::json{{"precision_macro", m.precision_macro},
                          {"recall_macro", m.recall_macro},
                          {"f1_macro", m.f1_macro},
                          {"mcc", m.mcc}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
    MetricReport m;
    m.precision_macro = j.at("precision_macro").get<double>();
    m.recall_macro = j.at("recall_macro").get<double>();
    m.f1_macro = j.at("f1_macro").get<double>();
    m.mcc = j.at("mcc").get<double>();
    return m;
}

// --- confusion ---------------------------------------------------------------------

/// One-vs-rest counts plus the full confusion matrix for single-label tasks.
inline ConfusionCounts confusion_single(const std::vector<int>& y_true,
                                        const std::vector<int>& y_pred, int num_classes) {
    if (y_true.size() != y_pred.size()) throw InputError("confusion: length mismatch");
    if (num_classes < 2) throw InputError("confusion: num_classes must be >= 2");
    ConfusionCounts c;
    c.num_classes = num_classes;
    c.tp.assign(num_classes, 0);
    c.fp.assign(num_classes, 0);
    c.fn.assign(num_classes, 0);
    c.tn.assign(num_classes, 0);
    c.matrix.assign(num_classes, std::vector<std::int64_t>(num_classes, 0));
    const std::int64_t n = static_cast<std::int64_t>(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
            throw InputError("confusion: label out of range");
        }
        ++c.matrix[t][p];
    }
    for (int k = 0; k < num_classes; ++k) {
        std::int64_t row = 0, col = 0;
        for (int j = 0; j < num_classes; ++j) {
            row += c.matrix[k][j];
            col += c.matrix[j][k];
        }
        c.tp[k] = c.matrix[k][k];
        c.fn[k] = row - c.matrix[k][k];
        c.fp[k] = col - c.matrix[k][k];
        c.tn[k] = n - row - col + c.matrix[k][k];
    }
    return c;
}

/// Per-label 2x2 counts for multi-label tasks.
inline ConfusionCounts confusion_multilabel(const std::vector<std::vector<int>>& y_true,
                                            const std::vector<std::vector<int>>& y_pred,
                                            int num_labels) {
    if (y_true.size() != y_pred.size()) throw InputError("confusion: length mismatch");
    if (num_labels < 1) throw InputError("confusion: num_labels must be >= 1");
    ConfusionCounts c;
    c.num_classes = num_labels;
    c.tp.assign(num_labels, 0);
    c.fp.assign(num_labels, 0);
    c.fn.assign(num_labels, 0);
    c.tn.assign(num_labels, 0);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (static_cast<int>(y_true[i].size()) != num_labels ||
            static_cast<int>(y_pred[i].size()) != num_labels) {
            throw InputError("confusion: label vector length mismatch");
        }
        for (int k = 0; k < num_labels; ++k) {
            const int t = y_true[i][static_cast<std::size_t>(k)];
            const int p = y_pred[i][static_cast<std::size_t>(k)];
            if ((t != 0 && t != 1) || (p != 0 && p != 1)) {
                throw InputError("confusion: multilabel entries must be 0 or 1");
            }
            if (t == 1 && p == 1) ++c.tp[k];
            else if (t == 0 && p == 1) ++c.fp[k];
            else if (t == 1 && p == 0) ++c.fn[k];
            else ++c.tn[k];
        }
    }
    return c;
}

// --- macro P/R/F1 -------------------------------------------------------------------

struct MacroPrf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline MacroPrf macro_prf(const ConfusionCounts& c) {
    MacroPrf m;
    for (int k = 0; k < c.num_classes; ++k) {
        const double tp = static_cast<double>(c.tp[k]);
        const double fp = static_cast<double>(c.fp[k]);
        const double fn = static_cast<double>(c.fn[k]);
        const double p = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
        const double r = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
        const double f1 = (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
        m.precision += p;
        m.recall += r;
        m.f1 += f1;
    }
    const double K = static_cast<double>(c.num_classes);
    m.precision /= K;
    m.recall /= K;
    m.f1 /= K;
    return m;
}

// --- MCC -----------------------------------------------------------------------------

inline double mcc_binary_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                std::int64_t tn) {
    const double num = static_cast<double>(tp) * static_cast<double>(tn) -
                       static_cast<double>(fp) * static_cast<double>(fn);
    const double d1 = static_cast<double>(tp + fp);
    const double d2 = static_cast<double>(tp + fn);
    const double d3 = static_cast<double>(tn + fp);
    const double d4 = static_cast<double>(tn + fn);
    const double denom = d1 * d2 * d3 * d4;
    if (denom <= 0.0) return 0.0;
    return num / std::sqrt(denom);
}

/// Multi-class generalization (R_k statistic) on a full confusion matrix.
inline double mcc_multiclass_matrix(const std::vector<std::vector<std::int64_t>>& m) {
    const std::size_t K = m.size();
    double s = 0.0, c = 0.0;
    std::vector<double> t(K, 0.0), p(K, 0.0);
    for (std::size_t i = 0; i < K; ++i) {
        if (m[i].size() != K) throw InputError("mcc: confusion matrix must be square");
        c += static_cast<double>(m[i][i]);
        for (std::size_t j = 0; j < K; ++j) {
            const double v = static_cast<double>(m[i][j]);
            s += v;
            t[i] += v;
            p[j] += v;
        }
    }
    double tp_sum = 0.0, pp_sum = 0.0, tt_sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        tp_sum += t[k] * p[k];
        pp_sum += p[k] * p[k];
        tt_sum += t[k] * t[k];
    }
    const double num = c * s - tp_sum;
    const double denom = (s * s - pp_sum) * (s * s - tt_sum);
    if (denom <= 0.0) return 0.0;
    return num / std::sqrt(denom);
}

/// Task-shaped MCC. Binary uses the classic 2x2 formula with class 1 as the
/// positive class; multi-class uses R_k; multi-label averages per-label
/// binary MCCs.
inline double mcc(const ConfusionCounts& c, Task task) {
    switch (task) {
        case Task::BINARY:
            if (c.num_classes != 2) throw InputError("mcc: binary requires 2 classes");
            return mcc_binary_counts(c.tp[1], c.fp[1], c.fn[1], c.tn[1]);
        case Task::MULTICLASS:
            if (c.matrix.empty()) throw InputError("mcc: multiclass needs a full matrix");
            return mcc_multiclass_matrix(c.matrix);
        case Task::MULTILABEL: {
            double sum = 0.0;
            for (int k = 0; k < c.num_classes; ++k) {
                sum += mcc_binary_counts(c.tp[k], c.fp[k], c.fn[k], c.tn[k]);
            }
            return sum / static_cast<double>(c.num_classes);
        }
    }
    return 0.0;
}

// --- top-level report ------------------------------------------------------------------

inline MetricReport evaluate_labels(const KinnConfig& cfg, const std::vector<Label>& y_true,
                                    const std::vector<Label>& y_pred) {
    if (y_true.size() != y_pred.size()) throw InputError("evaluate: length mismatch");
    ConfusionCounts counts;
    if (cfg.task == Task::MULTILABEL) {
        std::vector<std::vector<int>> t, p;
        t.reserve(y_true.size());
        p.reserve(y_pred.size());
        for (const Label& y : y_true) t.push_back(y.bits);
        for (const Label& y : y_pred) p.push_back(y.bits);
        counts = confusion_multilabel(t, p, cfg.num_classes);
    } else {
        std::vector<int> t, p;
        t.reserve(y_true.size());
        p.reserve(y_pred.size());
        for (const Label& y : y_true) t.push_back(y.cls);
        for (const Label& y : y_pred) p.push_back(y.cls);
        counts = confusion_single(t, p, cfg.num_classes);
    }
    MacroPrf prf = macro_prf(counts);
    MetricReport r;
    r.precision_macro = prf.precision;
    r.recall_macro = prf.recall;
    r.f1_macro = prf.f1;
    r.mcc = mcc(counts, cfg.task);
    return r;
}

}  // namespace kinn
