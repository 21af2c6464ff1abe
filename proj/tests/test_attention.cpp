#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "kinn/attention.hpp"
#include "kinn/common.hpp"

using namespace kinn;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                     double hi = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

AttentionWeights random_attention_weights(Rng& rng, Eigen::Index d) {
    AttentionWeights w;
    w.Wq = random_matrix(rng, d, d, -0.5, 0.5);
    w.Wk = random_matrix(rng, d, d, -0.5, 0.5);
    w.Wv = random_matrix(rng, d, d, -0.5, 0.5);
    w.Wo = random_matrix(rng, d, d, -0.5, 0.5);
    w.bq = random_matrix(rng, d, 1, -0.1, 0.1).col(0);
    w.bk = random_matrix(rng, d, 1, -0.1, 0.1).col(0);
    w.bv = random_matrix(rng, d, 1, -0.1, 0.1).col(0);
    w.bo = random_matrix(rng, d, 1, -0.1, 0.1).col(0);
    return w;
}

void check_rows_sum_to_one(const Matrix& A, const Mask& mask_q) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        if (mask_q[static_cast<std::size_t>(i)]) continue;
        CHECK(A.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(A.row(i).minCoeff() >= 0.0);
    }
}

// Central finite difference of a scalar function w.r.t. one coefficient.
double fd_grad(double* coeff, const std::function<double()>& f, double h = 1e-5) {
    const double orig = *coeff;
    *coeff = orig + h;
    const double up = f();
    *coeff = orig - h;
    const double down = f();
    *coeff = orig;
    return (up - down) / (2.0 * h);
}

void check_close(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    CHECK(std::abs(analytic - numeric) / denom < 1e-4);
}

}  // namespace

TEST_SUITE("attention") {

TEST_CASE("single-position self-attention gives A=[[1.0]]") {
    Rng rng(1);
    const Eigen::Index d = 4;
    auto w = random_attention_weights(rng, d);
    Matrix X = random_matrix(rng, 1, d);
    auto r = self_attention(X, w, 2, no_mask(1));
    REQUIRE(r.A.rows() == 1);
    REQUIRE(r.A.cols() == 1);
    CHECK(r.A(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cross-attention Q len 1, KV len 1 gives A=[[1.0]]") {
    Rng rng(2);
    const Eigen::Index d = 4;
    auto w = random_attention_weights(rng, d);
    Matrix Xq = random_matrix(rng, 1, d);
    Matrix Xkv = random_matrix(rng, 1, d);
    auto r = cross_attention(Xq, Xkv, w, 2, no_mask(1), no_mask(1));
    CHECK(r.A(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cross-attention Q len 2, KV len 3 gives a 2x3 attention matrix") {
    Rng rng(3);
    const Eigen::Index d = 6;
    auto w = random_attention_weights(rng, d);
    auto r = cross_attention(random_matrix(rng, 2, d), random_matrix(rng, 3, d), w, 3,
                             no_mask(2), no_mask(3));
    CHECK(r.A.rows() == 2);
    CHECK(r.A.cols() == 3);
    CHECK(r.Y.rows() == 2);
    CHECK(r.Y.cols() == d);
    check_rows_sum_to_one(r.A, no_mask(2));
}

TEST_CASE("attention rows over unmasked keys sum to 1 (random fuzz)") {
    Rng rng(4);
    for (int it = 0; it < 50; ++it) {
        const Eigen::Index d = 4 * (1 + static_cast<Eigen::Index>(rng.index(3)));
        const int heads = 1 + static_cast<int>(rng.index(2));
        const Eigen::Index Tq = 1 + static_cast<Eigen::Index>(rng.index(5));
        const Eigen::Index Tkv = 1 + static_cast<Eigen::Index>(rng.index(5));
        auto w = random_attention_weights(rng, d);
        Mask mq(static_cast<std::size_t>(Tq), false);
        Mask mkv(static_cast<std::size_t>(Tkv), false);
        for (std::size_t i = 0; i < mq.size(); ++i) mq[i] = rng.next_unit() < 0.2;
        for (std::size_t j = 0; j + 1 < mkv.size(); ++j) mkv[j] = rng.next_unit() < 0.2;
        auto r = cross_attention(random_matrix(rng, Tq, d), random_matrix(rng, Tkv, d), w,
                                 heads, mq, mkv);
        check_rows_sum_to_one(r.A, mq);
        for (Eigen::Index j = 0; j < Tkv; ++j) {
            if (mkv[static_cast<std::size_t>(j)]) CHECK(r.A.col(j).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("all keys masked but one puts weight 1.0 on the unmasked key") {
    Rng rng(5);
    const Eigen::Index d = 8;
    auto w = random_attention_weights(rng, d);
    Matrix X = random_matrix(rng, 4, d);
    Mask mask(4, true);
    mask[2] = false;
    auto r = cross_attention(X, X, w, 2, no_mask(4), mask);
    for (Eigen::Index i = 0; i < 4; ++i) {
        CHECK(r.A(i, 2) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("fully masked keys raise an input error") {
    Rng rng(6);
    const Eigen::Index d = 4;
    auto w = random_attention_weights(rng, d);
    Matrix X = random_matrix(rng, 2, d);
    CHECK_THROWS_AS(cross_attention(X, X, w, 2, no_mask(2), Mask(2, true)), InputError);
}

TEST_CASE("masked query rows pass through the residual unchanged") {
    Rng rng(7);
    const Eigen::Index d = 4;
    auto w = random_attention_weights(rng, d);
    Matrix X = random_matrix(rng, 3, d);
    Mask mq(3, false);
    mq[1] = true;
    auto r = cross_attention(X, X, w, 2, mq, no_mask(3));
    CHECK((r.Y.row(1) - X.row(1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.A.row(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("self-attention equals cross-attention on the same sequence") {
    Rng rng(8);
    const Eigen::Index d = 8;
    auto w = random_attention_weights(rng, d);
    Matrix X = random_matrix(rng, 5, d);
    auto s = self_attention(X, w, 4, no_mask(5));
    auto c = cross_attention(X, X, w, 4, no_mask(5), no_mask(5));
    CHECK((s.Y - c.Y).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((s.A - c.A).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("shape and mask validation") {
    Rng rng(9);
    const Eigen::Index d = 4;
    auto w = random_attention_weights(rng, d);
    Matrix X = random_matrix(rng, 2, d);
    CHECK_THROWS_AS(cross_attention(Matrix(0, d), X, w, 2, Mask{}, no_mask(2)), InputError);
    CHECK_THROWS_AS(cross_attention(X, random_matrix(rng, 2, d + 2), w, 2, no_mask(2),
                                    no_mask(2)),
                    InputError);
    CHECK_THROWS_AS(cross_attention(X, X, w, 3, no_mask(2), no_mask(2)), InputError);
    CHECK_THROWS_AS(cross_attention(X, X, w, 2, no_mask(1), no_mask(2)), InputError);
}

TEST_CASE("non-finite inputs raise a numeric error naming the block") {
    Rng rng(10);
    const Eigen::Index d = 4;
    auto w = random_attention_weights(rng, d);
    Matrix X = random_matrix(rng, 2, d);
    X(1, 2) = std::numeric_limits<double>::quiet_NaN();
    try {
        cross_attention(X, X, w, 2, no_mask(2), no_mask(2), nullptr, "domain_attention");
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.block() == "domain_attention");
    }
}

TEST_CASE("layernorm standardizes each row") {
    Rng rng(11);
    LayerNormWeights w;
    w.gamma = Vector::Ones(6);
    w.beta = Vector::Zero(6);
    Matrix X = random_matrix(rng, 4, 6, -3.0, 3.0);
    Matrix Y = layernorm_forward(X, w);
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        CHECK(Y.row(i).mean() == doctest::Approx(0.0).epsilon(1e-9));
        const double var = (Y.row(i).array() - Y.row(i).mean()).square().sum() / 6.0;
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("cross-attention backward matches finite differences") {
    Rng rng(12);
    const Eigen::Index d = 4;
    const int heads = 2;
    const Eigen::Index Tq = 3, Tkv = 2;
    auto w = random_attention_weights(rng, d);
    Matrix Xq = random_matrix(rng, Tq, d);
    Matrix Xkv = random_matrix(rng, Tkv, d);
    Matrix R = random_matrix(rng, Tq, d);  // random projection for a scalar loss

    auto loss = [&]() {
        auto r = cross_attention(Xq, Xkv, w, heads, no_mask(Tq), no_mask(Tkv));
        return (r.Y.array() * R.array()).sum();
    };

    AttentionCache cache;
    cross_attention(Xq, Xkv, w, heads, no_mask(Tq), no_mask(Tkv), &cache);
    AttentionGrads g(w);
    auto input_grads = cross_attention_backward(cache, w, R, g);

    for (auto [analytic, param] : {std::pair{&g.Wq, &w.Wq}, std::pair{&g.Wk, &w.Wk},
                                   std::pair{&g.Wv, &w.Wv}, std::pair{&g.Wo, &w.Wo}}) {
        for (Eigen::Index i = 0; i < param->rows(); ++i) {
            for (Eigen::Index j = 0; j < param->cols(); ++j) {
                check_close((*analytic)(i, j), fd_grad(&(*param)(i, j), loss));
            }
        }
    }
    for (auto [analytic, param] : {std::pair{&g.bq, &w.bq}, std::pair{&g.bk, &w.bk},
                                   std::pair{&g.bv, &w.bv}, std::pair{&g.bo, &w.bo}}) {
        for (Eigen::Index i = 0; i < param->size(); ++i) {
            check_close((*analytic)(i), fd_grad(&(*param)(i), loss));
        }
    }
    for (Eigen::Index i = 0; i < Tq; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            check_close(input_grads.dXq(i, j), fd_grad(&Xq(i, j), loss));
        }
    }
    for (Eigen::Index i = 0; i < Tkv; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            check_close(input_grads.dXkv(i, j), fd_grad(&Xkv(i, j), loss));
        }
    }
}

TEST_CASE("layernorm backward matches finite differences") {
    Rng rng(13);
    const Eigen::Index d = 5;
    LayerNormWeights w;
    w.gamma = random_matrix(rng, d, 1, 0.5, 1.5).col(0);
    w.beta = random_matrix(rng, d, 1, -0.5, 0.5).col(0);
    Matrix X = random_matrix(rng, 3, d);
    Matrix R = random_matrix(rng, 3, d);

    auto loss = [&]() { return (layernorm_forward(X, w).array() * R.array()).sum(); };

    LayerNormCache cache;
    layernorm_forward(X, w, &cache);
    LayerNormGrads g(w);
    Matrix dX = layernorm_backward(R, w, cache, g);

    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            check_close(dX(i, j), fd_grad(&X(i, j), loss));
        }
    }
    for (Eigen::Index j = 0; j < d; ++j) {
        check_close(g.gamma(j), fd_grad(&w.gamma(j), loss));
        check_close(g.beta(j), fd_grad(&w.beta(j), loss));
    }
}

TEST_CASE("linear layer backward matches finite differences") {
    Rng rng(14);
    LinearWeights w;
    w.W = random_matrix(rng, 3, 5);
    w.b = random_matrix(rng, 3, 1).col(0);
    Vector x = random_matrix(rng, 5, 1).col(0);
    Vector r = random_matrix(rng, 3, 1).col(0);

    auto loss = [&]() { return linear_forward(w, x).dot(r); };

    LinearGrads g(w);
    Vector dx = linear_backward(w, x, r, g);
    for (Eigen::Index i = 0; i < 3; ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) check_close(g.W(i, j), fd_grad(&w.W(i, j), loss));
        check_close(g.b(i), fd_grad(&w.b(i), loss));
    }
    for (Eigen::Index j = 0; j < 5; ++j) check_close(dx(j), fd_grad(&x(j), loss));
}

}  // TEST_SUITE
