#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "lcr/error.hpp"

namespace lcr::nn {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 as convenient;
// scalars are 1x1. All training-path arithmetic runs in 64-bit.
struct Tensor2 {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Tensor2() = default;
    Tensor2(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
    Tensor2(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
        if (v.size() != static_cast<size_t>(r) * c)
            throw ConfigError("tensor data length does not match shape");
    }

    static Tensor2 zeros(int r, int c) { return Tensor2(r, c); }
    static Tensor2 row(std::vector<double> data) {
        const int n = static_cast<int>(data.size());
        return Tensor2(1, n, std::move(data));
    }
    static Tensor2 scalar(double x) { return Tensor2(1, 1, {x}); }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    double* rowptr(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* rowptr(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }
    bool empty() const { return rows == 0 || cols == 0; }
    bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }

    double item() const {
        if (rows != 1 || cols != 1) throw ConfigError("item() on non-scalar tensor");
        return v[0];
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

// Boolean attention mask, query rows x key rows; true = may attend.
struct Mask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> m;

    Mask() = default;
    Mask(int r, int c, bool value = true)
        : rows(r), cols(c), m(static_cast<size_t>(r) * c, value ? 1 : 0) {}

    static Mask all(int r, int c) { return Mask(r, c, true); }
    // Row t may attend to columns <= t (plus an optional column offset).
    static Mask causal(int r, int c) {
        Mask mk(r, c, false);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j <= i && j < c; ++j) mk.set(i, j, true);
        return mk;
    }

    void set(int r, int c, bool value) { m[static_cast<size_t>(r) * cols + c] = value ? 1 : 0; }
    bool at(int r, int c) const { return m[static_cast<size_t>(r) * cols + c] != 0; }
};

// ---- plain kernels (no autodiff) ----------------------------------------
// The tape ops in graph.hpp call these same kernels for their forward pass,
// so a no-grad forward is bitwise identical to a taped forward.

Tensor2 matmul(const Tensor2& a, const Tensor2& b);      // a . b
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);   // a . b^T
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);   // a^T . b

Tensor2 add(const Tensor2& a, const Tensor2& b);
Tensor2 sub(const Tensor2& a, const Tensor2& b);
Tensor2 hadamard(const Tensor2& a, const Tensor2& b);
Tensor2 affine(const Tensor2& a, double k, double b);    // k*a + b elementwise
Tensor2 add_rowvec(const Tensor2& a, const Tensor2& b);  // b is 1 x cols
Tensor2 colsum(const Tensor2& a);                        // 1 x cols
Tensor2 concat_rows(const Tensor2& a, const Tensor2& b);
Tensor2 slice_rows(const Tensor2& a, int r0, int r1);
Tensor2 concat_cols(const std::vector<Tensor2>& parts);
Tensor2 slice_cols(const Tensor2& a, int c0, int c1);
Tensor2 broadcast_rows(const Tensor2& rowvec, int n);    // repeat a 1 x c row n times
Tensor2 select_rows(const Tensor2& a, const std::vector<int>& idx);
Tensor2 mean_rows(const Tensor2& a);                     // 1 x cols; zero vector when a has 0 rows
Tensor2 transpose(const Tensor2& a);

// Row-wise softmax restricted to unmasked entries; masked entries are exactly 0.
// Throws MaskError if any row is fully masked.
Tensor2 softmax_rows(const Tensor2& scores, const Mask& mask);

Tensor2 gelu(const Tensor2& a);
Tensor2 gelu_grad(const Tensor2& a);  // d gelu / dx, elementwise
Tensor2 sigmoid(const Tensor2& a);
Tensor2 relu(const Tensor2& a);
Tensor2 log_el(const Tensor2& a);
Tensor2 reciprocal(const Tensor2& a);
Tensor2 clamp(const Tensor2& a, double lo, double hi);
Tensor2 layernorm_rows(const Tensor2& a, double eps = 1e-5);

double sum(const Tensor2& a);
double sum_sq(const Tensor2& a);
double l2_distance(const Tensor2& a, const Tensor2& b);
double cosine_similarity(const Tensor2& a, const Tensor2& b);  // 0 if either vector is zero
double dot(const Tensor2& a, const Tensor2& b);

bool all_finite(const Tensor2& a);

}  // namespace lcr::nn
