#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "kinn/train.hpp"
#include "test_util.hpp"

using namespace kinn;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

KinnConfig tiny_config() {
    KinnConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.max_len = 8;
    cfg.task = Task::BINARY;
    cfg.num_classes = 2;
    cfg.batch_size = 4;
    return cfg;
}

std::vector<Sample> separable_samples(const KinnConfig& cfg, Rng& rng, int n) {
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
        Sample s;
        s.x_domain = random_matrix(rng, 2 + static_cast<Eigen::Index>(rng.index(2)), cfg.dim);
        s.x_cs = random_matrix(rng, 2, cfg.dim);
        s.y.cls = i % 2;
        // Plant a strong class-dependent direction so memorization is easy.
        s.x_domain.col(0).array() += s.y.cls == 0 ? 2.0 : -2.0;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("a handful of separable samples are memorized") {
    KinnConfig cfg = tiny_config();
    cfg.lr = 0.02;
    cfg.epochs = 300;
    cfg.epsilon = 1e-4;
    Rng rng(101);
    std::vector<Sample> samples = separable_samples(cfg, rng, 4);
    TrainResult r = train(cfg, samples);
    CHECK(r.converged);
    CHECK_FALSE(r.diverged);
    REQUIRE_FALSE(r.log.empty());
    // The final logged training loss is tiny and below the first epoch's.
    const TrainRecord& last = r.log.back();
    CHECK(last.split == "train");
    CHECK(last.loss <= 1e-3);
    CHECK(last.loss < r.log.front().loss);
    CHECK(last.f1 == doctest::Approx(1.0));
}

TEST_CASE("a single sample is driven to near-zero loss") {
    KinnConfig cfg = tiny_config();
    cfg.batch_size = 1;
    cfg.lr = 0.05;
    cfg.epochs = 200;
    cfg.epsilon = 1e-5;
    Rng rng(103);
    std::vector<Sample> samples = separable_samples(cfg, rng, 1);
    TrainResult r = train(cfg, samples);
    CHECK(r.converged);
    CHECK(r.log.back().loss <= 1e-3);
}

TEST_CASE("zero epochs returns untouched initial parameters and an empty log") {
    KinnConfig cfg = tiny_config();
    cfg.epochs = 0;
    Rng rng(107);
    std::vector<Sample> samples = separable_samples(cfg, rng, 4);
    TrainResult r = train(cfg, samples);
    CHECK(r.log.empty());
    CHECK_FALSE(r.converged);
    CHECK_FALSE(r.diverged);
    Rng init_rng(cfg.seed);
    KinnParams fresh = init_params(cfg, init_rng);
    CHECK((r.params.head.W - fresh.head.W).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.params.attn_domain.Wq - fresh.attn_domain.Wq).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.params.dense.b - fresh.dense.b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
    KinnConfig cfg = tiny_config();
    cfg.lr = 0.01;
    cfg.epochs = 5;
    cfg.epsilon = 1e-9;
    Rng rng(109);
    std::vector<Sample> samples = separable_samples(cfg, rng, 6);
    TrainResult a = train(cfg, samples);
    TrainResult b = train(cfg, samples);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].loss == b.log[i].loss);
        CHECK(a.log[i].mcc == b.log[i].mcc);
    }
    CHECK((a.params.head.W - b.params.head.W).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.params.attn_fused.Wo - b.params.attn_fused.Wo).cwiseAbs().maxCoeff() == 0.0);

    KinnConfig other = cfg;
    other.seed = 999;
    TrainResult c = train(other, samples);
    CHECK((a.params.head.W - c.params.head.W).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("a numerically toxic sample triggers divergence recovery") {
    KinnConfig cfg = tiny_config();
    cfg.batch_size = 1;
    cfg.lr = 0.01;
    cfg.epochs = 3;
    cfg.epsilon = 1e-12;
    Rng rng(113);
    std::vector<Sample> samples = separable_samples(cfg, rng, 3);
    Sample toxic;
    toxic.x_domain = Matrix::Constant(2, cfg.dim, std::numeric_limits<double>::quiet_NaN());
    toxic.x_cs = random_matrix(rng, 2, cfg.dim);
    toxic.y.cls = 1;
    samples.push_back(toxic);

    TrainResult r = train(cfg, samples);
    CHECK(r.diverged);
    CHECK_FALSE(r.converged);
    // Restored parameters are finite and usable on clean data.
    CHECK(r.params.head.W.allFinite());
    CHECK(r.params.attn_domain.Wq.allFinite());
    ForwardTrace t = forward(cfg, r.params, samples[0].x_domain, samples[0].x_cs);
    CHECK(t.probs.allFinite());
    // Divergence struck inside the first epoch, so nothing was logged.
    CHECK(r.log.empty());
}

TEST_CASE("convergence is checked before the update is applied") {
    KinnConfig cfg = tiny_config();
    cfg.epsilon = 100.0;  // any finite first batch loss qualifies
    cfg.epochs = 10;
    Rng rng(127);
    std::vector<Sample> samples = separable_samples(cfg, rng, 4);
    TrainResult r = train(cfg, samples);
    CHECK(r.converged);
    Rng init_rng(cfg.seed);
    KinnParams fresh = init_params(cfg, init_rng);
    CHECK((r.params.head.W - fresh.head.W).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.params.layernorm.gamma - fresh.layernorm.gamma).cwiseAbs().maxCoeff() == 0.0);
    // The epoch that stopped is still evaluated and logged.
    REQUIRE(r.log.size() == 1);
    CHECK(r.log[0].epoch == 1);
    CHECK(r.log[0].split == "train");
}

TEST_CASE("log holds one train and one dev record per epoch, in order") {
    KinnConfig cfg = tiny_config();
    cfg.lr = 1e-4;
    cfg.epochs = 3;
    cfg.epsilon = 1e-12;
    Rng rng(131);
    std::vector<Sample> train_s = separable_samples(cfg, rng, 4);
    std::vector<Sample> dev_s = separable_samples(cfg, rng, 2);
    TrainResult r = train(cfg, train_s, dev_s);
    REQUIRE(r.log.size() == 6);
    for (int e = 0; e < 3; ++e) {
        CHECK(r.log[2 * e].epoch == e + 1);
        CHECK(r.log[2 * e].split == "train");
        CHECK(r.log[2 * e + 1].epoch == e + 1);
        CHECK(r.log[2 * e + 1].split == "dev");
    }
    nlohmann::json j = to_json(r.log[0]);
    CHECK(j.at("epoch") == 1);
    CHECK(j.contains("loss"));
    CHECK(j.contains("F1"));
    CHECK(j.contains("MCC"));
}

TEST_CASE("inverse-frequency class weights") {
    KinnConfig cfg = tiny_config();
    Rng rng(137);
    std::vector<Sample> samples;
    for (int i = 0; i < 4; ++i) {
        Sample s;
        s.x_domain = random_matrix(rng, 2, cfg.dim);
        s.x_cs = random_matrix(rng, 2, cfg.dim);
        s.y.cls = i < 3 ? 0 : 1;  // 3:1 imbalance
        samples.push_back(std::move(s));
    }
    std::vector<double> w = inverse_frequency_weights(cfg, samples);
    CHECK(w[0] == doctest::Approx(4.0 / (2.0 * 3.0)).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(4.0 / (2.0 * 1.0)).epsilon(1e-12));

    KinnConfig three = cfg;
    three.task = Task::MULTICLASS;
    three.num_classes = 3;  // class 2 absent -> weight defaults to 1
    std::vector<double> w3 = inverse_frequency_weights(three, samples);
    CHECK(w3[2] == 1.0);

    KinnConfig ml = cfg;
    ml.task = Task::MULTILABEL;
    ml.num_classes = 4;
    std::vector<Sample> ml_samples(1);
    ml_samples[0].y.bits = {1, 0, 0, 0};
    std::vector<double> wml = inverse_frequency_weights(ml, ml_samples);
    for (double v : wml) CHECK(v == 1.0);
}

TEST_CASE("optimizer first step moves each weight by about lr against the gradient") {
    double value = 1.0;
    double grad = 4.0;  // constant gradient; bias-corrected first step is -lr * sign
    std::vector<ParamView> pv{{"w", &value, 1, 1}};
    std::vector<ParamView> gv{{"w", &grad, 1, 1}};
    AdamOptimizer opt(0.1, 1);
    opt.step(pv, gv);
    CHECK(value == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
    // Repeated identical gradients keep stepping in the same direction.
    for (int i = 0; i < 9; ++i) opt.step(pv, gv);
    CHECK(value == doctest::Approx(1.0 - 10 * 0.1).epsilon(1e-4));
}

TEST_CASE("eval_split averages sample losses and scores predictions") {
    KinnConfig cfg = tiny_config();
    Rng rng(139);
    KinnParams params = init_params(cfg, rng);
    std::vector<Sample> samples = separable_samples(cfg, rng, 4);
    SplitEval ev = eval_split(cfg, params, samples);
    double manual = 0.0;
    for (const Sample& s : samples) {
        ForwardTrace t = forward(cfg, params, s.x_domain, s.x_cs);
        manual += loss_from_logits(cfg, t.logits, s.y);
    }
    CHECK(ev.loss == doctest::Approx(manual / 4.0).epsilon(1e-12));
    CHECK(ev.metrics.f1_macro >= 0.0);
    CHECK(ev.metrics.f1_macro <= 1.0);

    SplitEval empty = eval_split(cfg, params, {});
    CHECK(empty.loss == 0.0);
    CHECK(empty.metrics.f1_macro == 0.0);
}

TEST_CASE("training validates its inputs") {
    KinnConfig cfg = tiny_config();
    CHECK_THROWS_AS(train(cfg, {}), InputError);
    Rng rng(149);
    std::vector<Sample> samples = separable_samples(cfg, rng, 2);
    samples[0].y.cls = 5;
    CHECK_THROWS_AS(train(cfg, samples), InputError);
    KinnConfig bad = cfg;
    bad.lr = -1.0;
    CHECK_THROWS_AS(train(bad, separable_samples(cfg, rng, 2)), ConfigError);
}

TEST_CASE("class weighting changes the learned parameters") {
    KinnConfig cfg = tiny_config();
    cfg.lr = 0.01;
    cfg.epochs = 2;
    cfg.epsilon = 1e-12;
    Rng rng(151);
    std::vector<Sample> samples;
    for (int i = 0; i < 6; ++i) {
        Sample s;
        s.x_domain = random_matrix(rng, 2, cfg.dim);
        s.x_cs = random_matrix(rng, 2, cfg.dim);
        s.y.cls = i < 5 ? 0 : 1;
        samples.push_back(std::move(s));
    }
    KinnConfig weighted = cfg;
    weighted.class_weights = true;
    TrainResult plain = train(cfg, samples);
    TrainResult with_w = train(weighted, samples);
    CHECK((plain.params.head.W - with_w.params.head.W).cwiseAbs().maxCoeff() > 0.0);
}

}  // TEST_SUITE
