#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace opsd::kernels {

// Shared low-level kernels. The graph forward pass and the incremental
// sampler both route through these, so re-scoring a sampled trajectory
// reproduces the sampling-time values bit for bit.

template <class T>
inline T dot(const T* a, const T* b, int n) {
    T acc = T(0);
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// C[m,n] = A[m,k] * B[k,n].  ikj order: each C element accumulates over
// ascending k, matching a plain dot over the same operands.
template <class T>
inline void matmul(const T* A, const T* B, T* C, int m, int k, int n) {
    std::fill(C, C + static_cast<std::size_t>(m) * n, T(0));
    for (int i = 0; i < m; ++i) {
        const T* arow = A + static_cast<std::size_t>(i) * k;
        T* crow = C + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T a = arow[p];
            const T* brow = B + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[m,n] = A[m,k] * B[n,k]^T
template <class T>
inline void matmul_nt(const T* A, const T* B, T* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = A + static_cast<std::size_t>(i) * k;
        T* crow = C + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] = dot(arow, B + static_cast<std::size_t>(j) * k, k);
    }
}

// C[k,n] = A[m,k]^T * B[m,n]  (backward helper, no bit-consistency constraint)
template <class T>
inline void matmul_tn(const T* A, const T* B, T* C, int m, int k, int n) {
    std::fill(C, C + static_cast<std::size_t>(k) * n, T(0));
    for (int i = 0; i < m; ++i) {
        const T* arow = A + static_cast<std::size_t>(i) * k;
        const T* brow = B + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) axpy(arow[p], brow, C + static_cast<std::size_t>(p) * n, n);
    }
}

template <class T>
inline T gelu(T x) {
    const T c = T(0.7978845608028654);  // sqrt(2/pi)
    T u = c * (x + T(0.044715) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(u));
}

template <class T>
inline T gelu_grad(T x) {
    const T c = T(0.7978845608028654);
    T u = c * (x + T(0.044715) * x * x * x);
    T t = std::tanh(u);
    T du = c * (T(1) + T(3) * T(0.044715) * x * x);
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
inline void layer_norm_row(const T* x, const T* gain, const T* bias, T* out, int d) {
    T mean = T(0);
    for (int i = 0; i < d; ++i) mean += x[i];
    mean /= T(d);
    T var = T(0);
    for (int i = 0; i < d; ++i) {
        T c = x[i] - mean;
        var += c * c;
    }
    var /= T(d);
    T inv = T(1) / std::sqrt(var + T(kLayerNormEps));
    for (int i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
}

// In-place softmax over row[0..len), max-subtracted.
template <class T>
inline void softmax_prefix(T* row, int len) {
    T mx = row[0];
    for (int i = 1; i < len; ++i) mx = std::max(mx, row[i]);
    T sum = T(0);
    for (int i = 0; i < len; ++i) {
        row[i] = std::exp(row[i] - mx);
        sum += row[i];
    }
    T inv = T(1) / sum;
    for (int i = 0; i < len; ++i) row[i] *= inv;
}

// out = log_softmax(row) via log-sum-exp; out may alias row.
template <class T>
inline void log_softmax_row(const T* row, T* out, int len) {
    T mx = row[0];
    for (int i = 1; i < len; ++i) mx = std::max(mx, row[i]);
    T sum = T(0);
    for (int i = 0; i < len; ++i) sum += std::exp(row[i] - mx);
    T lse = mx + std::log(sum);
    for (int i = 0; i < len; ++i) out[i] = row[i] - lse;
}

// Attention for one query over a prefix of keys/values laid out row-major
// [len, hd].  scratch must hold len floats.  Used by graph forward (row by
// row) and by the incremental sampler, with identical loop bounds.
template <class T>
inline void attend_prefix(const T* q, const T* keys, const T* values, int len, int hd, T inv_sqrt_hd,
                          T* scratch, T* out) {
    for (int j = 0; j < len; ++j)
        scratch[j] = dot(q, keys + static_cast<std::size_t>(j) * hd, hd) * inv_sqrt_hd;
    softmax_prefix(scratch, len);
    std::fill(out, out + hd, T(0));
    for (int j = 0; j < len; ++j) axpy(scratch[j], values + static_cast<std::size_t>(j) * hd, out, hd);
}

}  // namespace opsd::kernels
