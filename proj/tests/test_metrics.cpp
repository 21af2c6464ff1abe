#include <doctest.h>

#include <cmath>
#include <vector>

#include "kinn/metrics.hpp"
#include "test_util.hpp"

using namespace kinn;

namespace {

// Expand a confusion matrix (rows = true, cols = predicted) into label lists.
void expand(const std::vector<std::vector<int>>& m, std::vector<int>& yt,
            std::vector<int>& yp) {
    for (std::size_t t = 0; t < m.size(); ++t) {
        for (std::size_t p = 0; p < m[t].size(); ++p) {
            for (int n = 0; n < m[t][p]; ++n) {
                yt.push_back(static_cast<int>(t));
                yp.push_back(static_cast<int>(p));
            }
        }
    }
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("worked example: two-class macro precision/recall/F1") {
    // Confusion matrix [[3,2],[1,4]]: class 0 has TP=3 FP=1 FN=2,
    // class 1 has TP=4 FP=2 FN=1.
    std::vector<int> yt, yp;
    expand({{3, 2}, {1, 4}}, yt, yp);
    ConfusionCounts c = confusion_single(yt, yp, 2);
    CHECK(c.tp[0] == 3);
    CHECK(c.fp[0] == 1);
    CHECK(c.fn[0] == 2);
    CHECK(c.tp[1] == 4);
    CHECK(c.fp[1] == 2);
    CHECK(c.fn[1] == 1);
    MacroPrf m = macro_prf(c);
    CHECK(m.precision == doctest::Approx((3.0 / 4.0 + 4.0 / 6.0) / 2.0).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx((3.0 / 5.0 + 4.0 / 5.0) / 2.0).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(0.696969696969697).epsilon(1e-9));
}

TEST_CASE("worked example: binary MCC = 10 / sqrt(600)") {
    // Positive class 1: TP=3 FP=1 FN=2 TN=4.
    CHECK(mcc_binary_counts(3, 1, 2, 4) ==
          doctest::Approx(10.0 / std::sqrt(600.0)).epsilon(1e-12));
    std::vector<int> yt, yp;
    expand({{4, 1}, {2, 3}}, yt, yp);
    ConfusionCounts c = confusion_single(yt, yp, 2);
    CHECK(mcc(c, Task::BINARY) == doctest::Approx(0.408248290463863).epsilon(1e-9));
}

TEST_CASE("perfect predictor scores 1 everywhere") {
    std::vector<int> yt, yp;
    expand({{5, 0, 0}, {0, 7, 0}, {0, 0, 3}}, yt, yp);
    ConfusionCounts c = confusion_single(yt, yp, 3);
    MacroPrf m = macro_prf(c);
    CHECK(m.precision == doctest::Approx(1.0));
    CHECK(m.recall == doctest::Approx(1.0));
    CHECK(m.f1 == doctest::Approx(1.0));
    CHECK(mcc(c, Task::MULTICLASS) == doctest::Approx(1.0));
}

TEST_CASE("perfectly inverted binary predictor scores -1 on MCC") {
    std::vector<int> yt, yp;
    expand({{0, 6}, {4, 0}}, yt, yp);
    ConfusionCounts c = confusion_single(yt, yp, 2);
    CHECK(mcc(c, Task::BINARY) == doctest::Approx(-1.0));
}

TEST_CASE("constant predictor: zero denominators collapse to 0") {
    std::vector<int> yt{0, 0, 1, 1, 1}, yp{1, 1, 1, 1, 1};
    ConfusionCounts c = confusion_single(yt, yp, 2);
    // Class 0 is never predicted: precision denominator 0 -> 0.
    MacroPrf m = macro_prf(c);
    CHECK(m.precision == doctest::Approx((0.0 + 3.0 / 5.0) / 2.0));
    CHECK(m.recall == doctest::Approx((0.0 + 1.0) / 2.0));
    CHECK(mcc(c, Task::BINARY) == 0.0);
    CHECK(mcc(c, Task::MULTICLASS) == 0.0);
}

TEST_CASE("class absent from both truth and prediction contributes 0") {
    // 3 classes declared, class 2 never appears.
    std::vector<int> yt{0, 0, 1, 1}, yp{0, 1, 1, 1};
    ConfusionCounts c = confusion_single(yt, yp, 3);
    CHECK(c.tp[2] == 0);
    CHECK(c.fp[2] == 0);
    CHECK(c.fn[2] == 0);
    MacroPrf m = macro_prf(c);
    const double p0 = 1.0, r0 = 0.5, p1 = 2.0 / 3.0, r1 = 1.0;
    CHECK(m.precision == doctest::Approx((p0 + p1 + 0.0) / 3.0).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx((r0 + r1 + 0.0) / 3.0).epsilon(1e-12));
}

TEST_CASE("confusion counts agree with a brute-force oracle on random 3-class data") {
    Rng rng(20240613);
    for (int trial = 0; trial < 25; ++trial) {
        const int K = 3;
        std::vector<int> yt, yp;
        const std::size_t n = 20 + rng.index(40);
        for (std::size_t i = 0; i < n; ++i) {
            yt.push_back(static_cast<int>(rng.index(K)));
            yp.push_back(static_cast<int>(rng.index(K)));
        }
        ConfusionCounts c = confusion_single(yt, yp, K);
        for (int k = 0; k < K; ++k) {
            std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const bool t = yt[i] == k, p = yp[i] == k;
                if (t && p) ++tp;
                else if (!t && p) ++fp;
                else if (t && !p) ++fn;
                else ++tn;
            }
            CHECK(c.tp[k] == tp);
            CHECK(c.fp[k] == fp);
            CHECK(c.fn[k] == fn);
            CHECK(c.tn[k] == tn);
        }
        std::int64_t total = 0;
        for (const auto& row : c.matrix)
            for (std::int64_t v : row) total += v;
        CHECK(total == static_cast<std::int64_t>(n));
    }
}

TEST_CASE("multiclass MCC reduces exactly to the binary formula on 2x2 matrices") {
    Rng rng(20240617);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::int64_t tp = static_cast<std::int64_t>(rng.index(25));
        const std::int64_t fp = static_cast<std::int64_t>(rng.index(25));
        const std::int64_t fn = static_cast<std::int64_t>(rng.index(25));
        const std::int64_t tn = static_cast<std::int64_t>(rng.index(25));
        // Confusion matrix with class 1 as positive: rows = true, cols = pred.
        std::vector<std::vector<std::int64_t>> m{{tn, fp}, {fn, tp}};
        const double rk = mcc_multiclass_matrix(m);
        const double bin = mcc_binary_counts(tp, fp, fn, tn);
        CHECK(std::abs(rk - bin) <= 1e-12);
    }
}

TEST_CASE("binary MCC is symmetric under swapping the class labels") {
    Rng rng(20240619);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> yt, yp, yt_sw, yp_sw;
        const std::size_t n = 10 + rng.index(30);
        for (std::size_t i = 0; i < n; ++i) {
            yt.push_back(static_cast<int>(rng.index(2)));
            yp.push_back(static_cast<int>(rng.index(2)));
            yt_sw.push_back(1 - yt.back());
            yp_sw.push_back(1 - yp.back());
        }
        const double a = mcc(confusion_single(yt, yp, 2), Task::BINARY);
        const double b = mcc(confusion_single(yt_sw, yp_sw, 2), Task::BINARY);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
}

TEST_CASE("metrics are invariant to sample order") {
    Rng rng(20240623);
    std::vector<int> yt, yp;
    for (int i = 0; i < 60; ++i) {
        yt.push_back(static_cast<int>(rng.index(3)));
        yp.push_back(static_cast<int>(rng.index(3)));
    }
    ConfusionCounts before = confusion_single(yt, yp, 3);
    std::vector<std::size_t> order(yt.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<int> yt2, yp2;
    for (std::size_t i : order) {
        yt2.push_back(yt[i]);
        yp2.push_back(yp[i]);
    }
    ConfusionCounts after = confusion_single(yt2, yp2, 3);
    CHECK(macro_prf(before).f1 == doctest::Approx(macro_prf(after).f1).epsilon(1e-15));
    CHECK(mcc(before, Task::MULTICLASS) ==
          doctest::Approx(mcc(after, Task::MULTICLASS)).epsilon(1e-15));
}

TEST_CASE("all metrics stay in range on random inputs") {
    Rng rng(20240629);
    for (int trial = 0; trial < 100; ++trial) {
        const int K = 2 + static_cast<int>(rng.index(5));
        std::vector<int> yt, yp;
        const std::size_t n = 5 + rng.index(50);
        for (std::size_t i = 0; i < n; ++i) {
            yt.push_back(static_cast<int>(rng.index(K)));
            yp.push_back(static_cast<int>(rng.index(K)));
        }
        ConfusionCounts c = confusion_single(yt, yp, K);
        MacroPrf m = macro_prf(c);
        CHECK(m.precision >= 0.0);
        CHECK(m.precision <= 1.0);
        CHECK(m.recall >= 0.0);
        CHECK(m.recall <= 1.0);
        CHECK(m.f1 >= 0.0);
        CHECK(m.f1 <= 1.0);
        const double r = mcc(c, Task::MULTICLASS);
        CHECK(r >= -1.0 - 1e-12);
        CHECK(r <= 1.0 + 1e-12);
    }
}

TEST_CASE("multilabel MCC is the unweighted mean of per-label binary MCCs") {
    // Label 0 predicted perfectly (MCC 1), label 1 predicted constantly (MCC 0).
    std::vector<std::vector<int>> yt{{1, 1}, {0, 0}, {1, 1}, {0, 0}};
    std::vector<std::vector<int>> yp{{1, 1}, {0, 1}, {1, 1}, {0, 1}};
    ConfusionCounts c = confusion_multilabel(yt, yp, 2);
    CHECK(mcc_binary_counts(c.tp[0], c.fp[0], c.fn[0], c.tn[0]) == doctest::Approx(1.0));
    CHECK(mcc_binary_counts(c.tp[1], c.fp[1], c.fn[1], c.tn[1]) == 0.0);
    CHECK(mcc(c, Task::MULTILABEL) == doctest::Approx(0.5));

    // And against an explicit mean over independently computed labels.
    Rng rng(20240631);
    for (int trial = 0; trial < 20; ++trial) {
        const int L = 3;
        std::vector<std::vector<int>> t, p;
        for (int i = 0; i < 30; ++i) {
            std::vector<int> ti, pi;
            for (int k = 0; k < L; ++k) {
                ti.push_back(static_cast<int>(rng.index(2)));
                pi.push_back(static_cast<int>(rng.index(2)));
            }
            t.push_back(ti);
            p.push_back(pi);
        }
        ConfusionCounts cm = confusion_multilabel(t, p, L);
        double mean = 0.0;
        for (int k = 0; k < L; ++k) {
            mean += mcc_binary_counts(cm.tp[k], cm.fp[k], cm.fn[k], cm.tn[k]);
        }
        mean /= L;
        CHECK(mcc(cm, Task::MULTILABEL) == doctest::Approx(mean).epsilon(1e-15));
    }
}

TEST_CASE("evaluate_labels wires counts to the task-shaped report") {
    KinnConfig cfg;
    cfg.task = Task::BINARY;
    cfg.num_classes = 2;
    std::vector<Label> yt, yp;
    std::vector<int> t, p;
    expand({{4, 1}, {2, 3}}, t, p);
    for (std::size_t i = 0; i < t.size(); ++i) {
        Label a, b;
        a.cls = t[i];
        b.cls = p[i];
        yt.push_back(a);
        yp.push_back(b);
    }
    MetricReport r = evaluate_labels(cfg, yt, yp);
    CHECK(r.mcc == doctest::Approx(10.0 / std::sqrt(600.0)).epsilon(1e-12));
    CHECK(r.f1_macro > 0.0);

    // Round-trip through JSON.
    MetricReport back = metric_report_from_json(to_json(r));
    CHECK(back.mcc == r.mcc);
    CHECK(back.f1_macro == r.f1_macro);
    CHECK(back.precision_macro == r.precision_macro);
    CHECK(back.recall_macro == r.recall_macro);

    KinnConfig ml;
    ml.task = Task::MULTILABEL;
    ml.num_classes = 2;
    std::vector<Label> mt(3), mp(3);
    mt[0].bits = {1, 0};
    mt[1].bits = {0, 1};
    mt[2].bits = {1, 1};
    mp[0].bits = {1, 0};
    mp[1].bits = {0, 1};
    mp[2].bits = {1, 1};
    MetricReport rm = evaluate_labels(ml, mt, mp);
    CHECK(rm.f1_macro == doctest::Approx(1.0));
    CHECK(rm.mcc == doctest::Approx(1.0));
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(confusion_single({0, 1}, {0}, 2), InputError);
    CHECK_THROWS_AS(confusion_single({0, 2}, {0, 1}, 2), InputError);
    CHECK_THROWS_AS(confusion_single({0, -1}, {0, 1}, 2), InputError);
    CHECK_THROWS_AS(confusion_single({0, 1}, {0, 1}, 1), InputError);
    CHECK_THROWS_AS(confusion_multilabel({{1, 0}}, {{1}}, 2), InputError);
    CHECK_THROWS_AS(confusion_multilabel({{1, 2}}, {{1, 0}}, 2), InputError);
    CHECK_THROWS_AS(mcc_multiclass_matrix({{1, 2}, {3}}), InputError);
    KinnConfig cfg;
    CHECK_THROWS_AS(evaluate_labels(cfg, std::vector<Label>(2), std::vector<Label>(1)),
                    InputError);
}

}  // TEST_SUITE
