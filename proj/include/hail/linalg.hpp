#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace hail {

using real = double;

// Dense row-major matrix. Batched B x N x d tensors are stored as (B*N) x d.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<real> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    void resize(int r, int c) {
        rows = r;
        cols = c;
        a.assign(static_cast<std::size_t>(r) * c, 0.0);
    }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }

    real* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
    const real* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }
    real& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    real at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return a.size(); }
};

// c[m x n] (+)= a[m x k] * b[k x n]
inline void mm_nn(const real* a, int m, int k, const real* b, int n, real* c,
                  bool accumulate) {
    for (int i = 0; i < m; ++i) {
        real* ci = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(ci, ci + n, 0.0);
        const real* ai = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const real av = ai[p];
            if (av == 0.0) continue;
            const real* bp = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// c[k x n] (+)= a[m x k]^T * b[m x n]
inline void mm_tn(const real* a, int m, int k, const real* b, int n, real* c,
                  bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(k) * n, 0.0);
    for (int p = 0; p < m; ++p) {
        const real* ap = a + static_cast<std::size_t>(p) * k;
        const real* bp = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < k; ++i) {
            const real av = ap[i];
            if (av == 0.0) continue;
            real* ci = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// c[m x n] (+)= a[m x k] * b[n x k]^T, via a scratch transpose of b so the
// inner loop stays contiguous
inline void mm_nt(const real* a, int m, int k, const real* b, int n, real* c,
                  bool accumulate) {
    thread_local std::vector<real> scratch;
    scratch.resize(static_cast<std::size_t>(k) * n);
    for (int j = 0; j < n; ++j)
        for (int p = 0; p < k; ++p)
            scratch[static_cast<std::size_t>(p) * n + j] =
                b[static_cast<std::size_t>(j) * k + p];
    mm_nn(a, m, k, scratch.data(), n, c, accumulate);
}

// in-place softmax with max subtraction; returns the row sum check value
inline void softmax_row(real* x, int n) {
    real mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    real sum = 0.0;
    for (int i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    const real inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) x[i] *= inv;
}

// out (+)= scale * J_softmax(p)^T g, where p is a softmax row and g = dL/dp
inline void softmax_backward_row(const real* p, const real* g, int n, real scale,
                                 real* out) {
    real dot = 0.0;
    for (int i = 0; i < n; ++i) dot += g[i] * p[i];
    for (int i = 0; i < n; ++i) out[i] += scale * p[i] * (g[i] - dot);
}

inline real gelu(real x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

inline real gelu_grad(real x) {
    const real cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
    const real pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    return cdf + x * pdf;
}

}  // namespace hail
