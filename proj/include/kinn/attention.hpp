// Numeric building blocks: multi-head scaled dot-product attention (cross and
// self) with residual connection, per-position layer normalization, and a
// linear layer. Each block has a hand-written backward pass; analytic
// gradients are verified against central finite differences in the tests.
//
// Conventions: sequences are row-major (T x d) matrices; weight matrices act
// as Y = X * W^T + b with W shaped (out x in). Attention masks are boolean
// vectors (true = masked / padding). Masked key positions receive exactly
// zero attention weight; masked query rows pass through as pure residual.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "kinn/common.hpp"

namespace kinn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = std::vector<bool>;  // true = masked out

inline void ensure_finite(const Matrix& m, const std::string& block) {
    if (!m.allFinite()) throw NumericError(block);
}

inline void ensure_finite(const Vector& v, const std::string& block) {
    if (!v.allFinite()) throw NumericError(block);
}

inline Mask no_mask(Eigen::Index len) { return Mask(static_cast<std::size_t>(len), false); }

// --- linear -------------------------------------------------------------------

struct LinearWeights {
    Matrix W;  // out x in
    Vector b;  // out
};

struct LinearGrads {
    Matrix W;
    Vector b;

    explicit LinearGrads(const LinearWeights& w)
        : W(Matrix::Zero(w.W.rows(), w.W.cols())), b(Vector::Zero(w.b.size())) {}
};

/// y = W x + b for a single vector.
inline Vector linear_forward(const LinearWeights& w, const Vector& x) {
    if (x.size() != w.W.cols()) throw InputError("linear_forward: dimension mismatch");
    return w.W * x + w.b;
}

/// Backward for a single-vector linear layer. Returns dx; accumulates into g.
inline Vector linear_backward(const LinearWeights& w, const Vector& x, const Vector& dy,
                              LinearGrads& g) {
    g.W += dy * x.transpose();
    g.b += dy;
    return w.W.transpose() * dy;
}

// --- layer normalization ---------------------------------------------------------

struct LayerNormWeights {
    Vector gamma;  // scale, length d
    Vector beta;   // shift, length d
};

struct LayerNormGrads {
    Vector gamma;
    Vector beta;

    explicit LayerNormGrads(const LayerNormWeights& w)
        : gamma(Vector::Zero(w.gamma.size())), beta(Vector::Zero(w.beta.size())) {}
};

struct LayerNormCache {
    Matrix x_hat;     // normalized rows
    Vector inv_std;   // one per row
};

constexpr double kLayerNormEps = 1e-5;

/// Row-wise (per-position) layer norm: each row is standardized over the
/// feature dimension, then scaled and shifted.
inline Matrix layernorm_forward(const Matrix& X, const LayerNormWeights& w,
                                LayerNormCache* cache = nullptr) {
    if (X.cols() != w.gamma.size()) throw InputError("layernorm: dimension mismatch");
    const double d = static_cast<double>(X.cols());
    Matrix x_hat(X.rows(), X.cols());
    Vector inv_std(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double mu = X.row(i).mean();
        const double var = (X.row(i).array() - mu).square().sum() / d;
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        x_hat.row(i) = (X.row(i).array() - mu) * is;
        inv_std[i] = is;
    }
    Matrix Y = (x_hat.array().rowwise() * w.gamma.transpose().array()).rowwise() +
               w.beta.transpose().array();
    if (cache) {
        cache->x_hat = x_hat;
        cache->inv_std = inv_std;
    }
    return Y;
}

inline Matrix layernorm_backward(const Matrix& dY, const LayerNormWeights& w,
                                 const LayerNormCache& cache, LayerNormGrads& g) {
    const double d = static_cast<double>(dY.cols());
    Matrix dX(dY.rows(), dY.cols());
    for (Eigen::Index i = 0; i < dY.rows(); ++i) {
        Eigen::ArrayXd dy = dY.row(i).transpose().array();
        Eigen::ArrayXd xh = cache.x_hat.row(i).transpose().array();
        Eigen::ArrayXd dxhat = dy * w.gamma.array();
        const double m1 = dxhat.mean();
        const double m2 = (dxhat * xh).mean();
        dX.row(i) = (cache.inv_std[i] * (dxhat - m1 - xh * m2)).matrix().transpose();
        g.gamma += (dy * xh).matrix();
        g.beta += dy.matrix();
    }
    return dX;
}

// --- attention --------------------------------------------------------------------

struct AttentionWeights {
    Matrix Wq, Wk, Wv, Wo;  // each d x d
    Vector bq, bk, bv, bo;  // each d
};

struct AttentionGrads {
    Matrix Wq, Wk, Wv, Wo;
    Vector bq, bk, bv, bo;

    explicit AttentionGrads(const AttentionWeights& w)
        : Wq(Matrix::Zero(w.Wq.rows(), w.Wq.cols())),
          Wk(Matrix::Zero(w.Wk.rows(), w.Wk.cols())),
          Wv(Matrix::Zero(w.Wv.rows(), w.Wv.cols())),
          Wo(Matrix::Zero(w.Wo.rows(), w.Wo.cols())),
          bq(Vector::Zero(w.bq.size())),
          bk(Vector::Zero(w.bk.size())),
          bv(Vector::Zero(w.bv.size())),
          bo(Vector::Zero(w.bo.size())) {}
};

struct AttentionCache {
    Matrix Xq, Xkv;
    Matrix Q, K, V;                 // projected, full width
    std::vector<Matrix> A_heads;    // per-head Tq x Tkv softmax matrices
    Matrix O_cat;                   // concatenated head outputs, Tq x d
    Mask mask_q, mask_kv;
    int heads = 1;
};

struct AttentionResult {
    Matrix Y;  // Tq x d, with residual added
    Matrix A;  // head-averaged attention, Tq x Tkv
};

/// Multi-head cross-attention: queries from Xq, keys/values from Xkv, plus a
/// residual connection from Xq. Rows of A over unmasked keys sum to 1;
/// masked query rows get a zero attention row and Y row = Xq row.
inline AttentionResult cross_attention(const Matrix& Xq, const Matrix& Xkv,
                                       const AttentionWeights& w, int heads,
                                       const Mask& mask_q, const Mask& mask_kv,
                                       AttentionCache* cache = nullptr,
                                       const std::string& block_name = "attention") {
    const Eigen::Index Tq = Xq.rows();
    const Eigen::Index Tkv = Xkv.rows();
    const Eigen::Index d = Xq.cols();
    if (Tq < 1 || Tkv < 1) throw InputError(block_name + ": empty sequence");
    if (Xkv.cols() != d) throw InputError(block_name + ": query/key dim mismatch");
    if (w.Wq.rows() != d || w.Wq.cols() != d) {
        throw InputError(block_name + ": weight shape mismatch");
    }
    if (heads < 1 || d % heads != 0) {
        throw InputError(block_name + ": dim must be divisible by heads");
    }
    if (static_cast<Eigen::Index>(mask_q.size()) != Tq ||
        static_cast<Eigen::Index>(mask_kv.size()) != Tkv) {
        throw InputError(block_name + ": mask length mismatch");
    }
    bool any_kv_unmasked = false;
    for (bool m : mask_kv) any_kv_unmasked |= !m;
    if (!any_kv_unmasked) throw InputError(block_name + ": all key positions masked");

    const Eigen::Index dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix Q = Xq * w.Wq.transpose();
    Q.rowwise() += w.bq.transpose();
    Matrix K = Xkv * w.Wk.transpose();
    K.rowwise() += w.bk.transpose();
    Matrix V = Xkv * w.Wv.transpose();
    V.rowwise() += w.bv.transpose();

    std::vector<Matrix> A_heads(static_cast<std::size_t>(heads));
    Matrix O_cat = Matrix::Zero(Tq, d);
    Matrix A_avg = Matrix::Zero(Tq, Tkv);
    for (int h = 0; h < heads; ++h) {
        auto Qh = Q.middleCols(h * dh, dh);
        auto Kh = K.middleCols(h * dh, dh);
        auto Vh = V.middleCols(h * dh, dh);
        Matrix S = scale * (Qh * Kh.transpose());
        for (Eigen::Index j = 0; j < Tkv; ++j) {
            if (mask_kv[static_cast<std::size_t>(j)]) S.col(j).setConstant(-1e30);
        }
        Matrix A(Tq, Tkv);
        for (Eigen::Index i = 0; i < Tq; ++i) {
            if (mask_q[static_cast<std::size_t>(i)]) {
                A.row(i).setZero();
                continue;
            }
            const double mx = S.row(i).maxCoeff();
            Eigen::ArrayXd e = (S.row(i).array() - mx).exp();
            for (Eigen::Index j = 0; j < Tkv; ++j) {
                if (mask_kv[static_cast<std::size_t>(j)]) e[j] = 0.0;
            }
            const double z = e.sum();
            A.row(i) = (e / z).matrix().transpose();
        }
        O_cat.middleCols(h * dh, dh) = A * Vh;
        A_avg += A;
        A_heads[static_cast<std::size_t>(h)] = std::move(A);
    }
    A_avg /= static_cast<double>(heads);

    Matrix Y_attn = O_cat * w.Wo.transpose();
    Y_attn.rowwise() += w.bo.transpose();
    for (Eigen::Index i = 0; i < Tq; ++i) {
        if (mask_q[static_cast<std::size_t>(i)]) Y_attn.row(i).setZero();
    }
    Matrix Y = Y_attn + Xq;
    ensure_finite(Y, block_name);

    if (cache) {
        cache->Xq = Xq;
        cache->Xkv = Xkv;
        cache->Q = std::move(Q);
        cache->K = std::move(K);
        cache->V = std::move(V);
        cache->A_heads = std::move(A_heads);
        cache->O_cat = std::move(O_cat);
        cache->mask_q = mask_q;
        cache->mask_kv = mask_kv;
        cache->heads = heads;
    }
    return {std::move(Y), std::move(A_avg)};
}

/// Self-attention is cross-attention with Xq == Xkv and a shared mask.
inline AttentionResult self_attention(const Matrix& X, const AttentionWeights& w, int heads,
                                      const Mask& mask, AttentionCache* cache = nullptr,
                                      const std::string& block_name = "self_attention") {
    return cross_attention(X, X, w, heads, mask, mask, cache, block_name);
}

struct AttentionInputGrads {
    Matrix dXq;
    Matrix dXkv;
};

/// Backward through cross-attention. Returns gradients w.r.t. both inputs;
/// for self-attention, add them (dX = dXq + dXkv).
inline AttentionInputGrads cross_attention_backward(const AttentionCache& c,
                                                    const AttentionWeights& w,
                                                    const Matrix& dY, AttentionGrads& g) {
    const Eigen::Index Tq = c.Xq.rows();
    const Eigen::Index Tkv = c.Xkv.rows();
    const Eigen::Index d = c.Xq.cols();
    const int heads = c.heads;
    const Eigen::Index dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // Residual path.
    Matrix dXq = dY;

    // Attention path: masked query rows contributed nothing.
    Matrix dY_attn = dY;
    for (Eigen::Index i = 0; i < Tq; ++i) {
        if (c.mask_q[static_cast<std::size_t>(i)]) dY_attn.row(i).setZero();
    }

    g.Wo += dY_attn.transpose() * c.O_cat;
    g.bo += dY_attn.colwise().sum().transpose();
    Matrix dO_cat = dY_attn * w.Wo;

    Matrix dQ = Matrix::Zero(Tq, d);
    Matrix dK = Matrix::Zero(Tkv, d);
    Matrix dV = Matrix::Zero(Tkv, d);
    for (int h = 0; h < heads; ++h) {
        const Matrix& A = c.A_heads[static_cast<std::size_t>(h)];
        auto Qh = c.Q.middleCols(h * dh, dh);
        auto Kh = c.K.middleCols(h * dh, dh);
        auto Vh = c.V.middleCols(h * dh, dh);
        auto dOh = dO_cat.middleCols(h * dh, dh);

        Matrix dA = dOh * Vh.transpose();
        dV.middleCols(h * dh, dh) += A.transpose() * dOh;

        // Softmax backward per row: dS = A ∘ (dA − rowsum(dA ∘ A)).
        Matrix dS(Tq, Tkv);
        for (Eigen::Index i = 0; i < Tq; ++i) {
            const double dot = dA.row(i).cwiseProduct(A.row(i)).sum();
            dS.row(i) = A.row(i).cwiseProduct((dA.row(i).array() - dot).matrix());
        }
        dQ.middleCols(h * dh, dh) += scale * (dS * Kh);
        dK.middleCols(h * dh, dh) += scale * (dS.transpose() * Qh);
    }

    g.Wq += dQ.transpose() * c.Xq;
    g.bq += dQ.colwise().sum().transpose();
    g.Wk += dK.transpose() * c.Xkv;
    g.bk += dK.colwise().sum().transpose();
    g.Wv += dV.transpose() * c.Xkv;
    g.bv += dV.colwise().sum().transpose();

    dXq += dQ * w.Wq;
    Matrix dXkv = dK * w.Wk + dV * w.Wv;
    return {std::move(dXq), std::move(dXkv)};
}

}  // namespace kinn
