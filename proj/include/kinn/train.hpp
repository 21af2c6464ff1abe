// Mini-batch training loop: seeded shuffling, adaptive moment estimation,
// a convergence check on the pre-update batch loss, divergence recovery
// (restore the last good parameter snapshot and stop), and per-epoch loss +
// metric logging for the train and dev splits.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinn/common.hpp"
#include "kinn/metrics.hpp"
#include "kinn/network.hpp"

namespace kinn {

struct Sample {
    Matrix x_domain;
    Matrix x_cs;
    Label y;
};

struct TrainRecord {
    int epoch = 0;
    std::string split;  // "train" or "dev"
    double loss = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mcc = 0.0;
};

inline nlohmann::json to_json(const TrainRecord& r) {
    return nlohmann::json{{"epoch", r.epoch}, {"split", r.split},   {"loss", r.loss},
                          {"P", r.precision}, {"R", r.recall},      {"F1", r.f1},
                          {"MCC", r.mcc}};
}

struct TrainResult {
    KinnParams params;
    std::vector<TrainRecord> log;
    bool converged = false;  // batch loss reached epsilon
    bool diverged = false;   // non-finite loss; params are the last good snapshot
};

// --- optimizer ----------------------------------------------------------------------

/// Adaptive moment estimation over the flattened parameter blocks.
class AdamOptimizer {
public:
    AdamOptimizer(double lr, std::size_t total_size, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
          m_(total_size, 0.0), v_(total_size, 0.0) {}

    void step(std::vector<ParamView>& params, std::vector<ParamView>& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        std::size_t off = 0;
        for (std::size_t b = 0; b < params.size(); ++b) {
            double* p = params[b].data;
            const double* g = grads[b].data;
            const std::size_t n = static_cast<std::size_t>(params[b].size());
            for (std::size_t i = 0; i < n; ++i) {
                m_[off + i] = beta1_ * m_[off + i] + (1.0 - beta1_) * g[i];
                v_[off + i] = beta2_ * v_[off + i] + (1.0 - beta2_) * g[i] * g[i];
                const double mhat = m_[off + i] / bc1;
                const double vhat = v_[off + i] / bc2;
                p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
            off += n;
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<double> m_, v_;
};

inline std::size_t total_param_size(std::vector<ParamView>& views) {
    std::size_t n = 0;
    for (const ParamView& v : views) n += static_cast<std::size_t>(v.size());
    return n;
}

// --- evaluation over a split -----------------------------------------------------------

struct SplitEval {
    double loss = 0.0;
    MetricReport metrics;
};

inline SplitEval eval_split(const KinnConfig& cfg, const KinnParams& params,
                            const std::vector<Sample>& samples) {
    SplitEval out;
    if (samples.empty()) return out;
    std::vector<Label> y_true, y_pred;
    y_true.reserve(samples.size());
    y_pred.reserve(samples.size());
    double total = 0.0;
    for (const Sample& s : samples) {
        ForwardTrace t = forward(cfg, params, s.x_domain, s.x_cs);
        total += loss_from_logits(cfg, t.logits, s.y);
        y_true.push_back(s.y);
        y_pred.push_back(predict(cfg, t.probs));
    }
    out.loss = total / static_cast<double>(samples.size());
    out.metrics = evaluate_labels(cfg, y_true, y_pred);
    return out;
}

// --- class weights -----------------------------------------------------------------------

/// Inverse-frequency weights w_k = n / (K * count_k); absent classes get 1.
inline std::vector<double> inverse_frequency_weights(const KinnConfig& cfg,
                                                     const std::vector<Sample>& samples) {
    std::vector<double> w(static_cast<std::size_t>(cfg.num_classes), 1.0);
    if (cfg.task == Task::MULTILABEL) return w;  // weighting applies to single-label only
    std::vector<std::int64_t> counts(static_cast<std::size_t>(cfg.num_classes), 0);
    for (const Sample& s : samples) ++counts[static_cast<std::size_t>(s.y.cls)];
    const double n = static_cast<double>(samples.size());
    const double K = static_cast<double>(cfg.num_classes);
    for (int k = 0; k < cfg.num_classes; ++k) {
        if (counts[static_cast<std::size_t>(k)] > 0) {
            w[static_cast<std::size_t>(k)] =
                n / (K * static_cast<double>(counts[static_cast<std::size_t>(k)]));
        }
    }
    return w;
}

// --- the loop ------------------------------------------------------------------------------

/// Weighted batch loss and parameter gradients. Loss and gradients are
/// normalized by the sum of sample weights.
inline double batch_loss_and_grads(const KinnConfig& cfg, const KinnParams& params,
                                   const std::vector<Sample>& samples,
                                   const std::vector<std::size_t>& batch,
                                   const std::vector<double>& class_w, KinnGrads& grads) {
    double loss_sum = 0.0;
    double weight_sum = 0.0;
    for (std::size_t idx : batch) {
        const Sample& s = samples[idx];
        const double w =
            cfg.task == Task::MULTILABEL ? 1.0 : class_w[static_cast<std::size_t>(s.y.cls)];
        ForwardCache cache;
        forward(cfg, params, s.x_domain, s.x_cs, &cache);
        Vector dlogits;
        loss_sum += loss_from_logits(cfg, cache.logits, s.y, &dlogits, w);
        backward(cfg, params, cache, dlogits, grads);
        weight_sum += w;
    }
    if (weight_sum > 0.0) {
        KinnGrads* g = &grads;
        std::vector<ParamView> views = grad_views(*g);
        for (ParamView& v : views) {
            double* data = v.data;
            for (Eigen::Index i = 0; i < v.size(); ++i) data[i] /= weight_sum;
        }
        loss_sum /= weight_sum;
    }
    return loss_sum;
}

inline TrainResult train(const KinnConfig& cfg, const std::vector<Sample>& train_samples,
                         const std::vector<Sample>& dev_samples = {}) {
    cfg.validate();
    if (train_samples.empty()) throw InputError("train: dataset must be non-empty");
    for (const Sample& s : train_samples) validate_label(cfg, s.y);

    Rng rng(cfg.seed);
    TrainResult result;
    result.params = init_params(cfg, rng);

    std::vector<ParamView> pviews = param_views(result.params);
    AdamOptimizer opt(cfg.lr, total_param_size(pviews));

    const std::vector<double> class_w = cfg.class_weights
                                            ? inverse_frequency_weights(cfg, train_samples)
                                            : std::vector<double>(
                                                  static_cast<std::size_t>(cfg.num_classes),
                                                  1.0);

    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);

    // Last parameter state known to produce a finite batch loss; restored on
    // divergence so callers always get usable weights back.
    KinnParams last_good = result.params;

    bool stop = false;
    for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);

            KinnGrads grads(result.params);
            double batch_loss;
            try {
                batch_loss =
                    batch_loss_and_grads(cfg, result.params, train_samples, batch, class_w,
                                         grads);
            } catch (const NumericError&) {
                result.params = last_good;
                result.diverged = true;
                stop = true;
                break;
            }
            if (!std::isfinite(batch_loss)) {
                result.params = last_good;
                result.diverged = true;
                stop = true;
                break;
            }
            last_good = result.params;
            if (batch_loss <= cfg.epsilon) {
                result.converged = true;
                stop = true;
                break;
            }
            std::vector<ParamView> pv = param_views(result.params);
            std::vector<ParamView> gv = grad_views(grads);
            opt.step(pv, gv);
        }
        // A diverged run cannot be evaluated (the offending sample would throw
        // again); return immediately with the restored parameters.
        if (result.diverged) break;

        SplitEval tr = eval_split(cfg, result.params, train_samples);
        result.log.push_back({epoch, "train", tr.loss, tr.metrics.precision_macro,
                              tr.metrics.recall_macro, tr.metrics.f1_macro, tr.metrics.mcc});
        if (!dev_samples.empty()) {
            SplitEval dv = eval_split(cfg, result.params, dev_samples);
            result.log.push_back({epoch, "dev", dv.loss, dv.metrics.precision_macro,
                                  dv.metrics.recall_macro, dv.metrics.f1_macro,
                                  dv.metrics.mcc});
        }
    }
    return result;
}

}  // namespace kinn
