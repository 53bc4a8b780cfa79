#include "lcr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lcr::nn {

namespace {
void check_same_shape(const Tensor2& a, const Tensor2& b, const char* op) {
    if (!a.same_shape(b))
        throw ConfigError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                          std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                          std::to_string(b.cols) + ")");
}
}  // namespace

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols != b.rows) throw ConfigError("matmul: inner dimensions differ");
    Tensor2 out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.rowptr(i);
        double* oi = out.rowptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.rowptr(k);
            for (int j = 0; j < b.cols; ++j) oi[j] += aik * bk[j];
        }
    }
    return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
    if (a.cols != b.cols) throw ConfigError("matmul_nt: inner dimensions differ");
    Tensor2 out(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.rowptr(i);
        double* oi = out.rowptr(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* bj = b.rowptr(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
            oi[j] = s;
        }
    }
    return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
    if (a.rows != b.rows) throw ConfigError("matmul_tn: inner dimensions differ");
    Tensor2 out(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* ak = a.rowptr(k);
        const double* bk = b.rowptr(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* oi = out.rowptr(i);
            for (int j = 0; j < b.cols; ++j) oi[j] += aki * bk[j];
        }
    }
    return out;
}

Tensor2 add(const Tensor2& a, const Tensor2& b) {
    check_same_shape(a, b, "add");
    Tensor2 out = a;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] += b.v[i];
    return out;
}

Tensor2 sub(const Tensor2& a, const Tensor2& b) {
    check_same_shape(a, b, "sub");
    Tensor2 out = a;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] -= b.v[i];
    return out;
}

Tensor2 hadamard(const Tensor2& a, const Tensor2& b) {
    check_same_shape(a, b, "hadamard");
    Tensor2 out = a;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= b.v[i];
    return out;
}

Tensor2 affine(const Tensor2& a, double k, double b) {
    Tensor2 out = a;
    for (double& x : out.v) x = k * x + b;
    return out;
}

Tensor2 add_rowvec(const Tensor2& a, const Tensor2& b) {
    if (b.rows != 1 || b.cols != a.cols) throw ConfigError("add_rowvec: bias shape mismatch");
    Tensor2 out = a;
    for (int i = 0; i < a.rows; ++i) {
        double* oi = out.rowptr(i);
        for (int j = 0; j < a.cols; ++j) oi[j] += b.v[j];
    }
    return out;
}

Tensor2 colsum(const Tensor2& a) {
    Tensor2 out(1, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.rowptr(i);
        for (int j = 0; j < a.cols; ++j) out.v[j] += ai[j];
    }
    return out;
}

Tensor2 concat_rows(const Tensor2& a, const Tensor2& b) {
    if (a.rows == 0) return b;
    if (b.rows == 0) return a;
    if (a.cols != b.cols) throw ConfigError("concat_rows: column widths differ");
    Tensor2 out(a.rows + b.rows, a.cols);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

Tensor2 slice_rows(const Tensor2& a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows || r0 > r1) throw ConfigError("slice_rows: range out of bounds");
    Tensor2 out(r1 - r0, a.cols);
    std::copy(a.rowptr(r0), a.rowptr(r0) + out.size(), out.v.begin());
    return out;
}

Tensor2 concat_cols(const std::vector<Tensor2>& parts) {
    if (parts.empty()) throw ConfigError("concat_cols: no inputs");
    int total = 0;
    for (const Tensor2& p : parts) {
        if (p.rows != parts[0].rows) throw ConfigError("concat_cols: row counts differ");
        total += p.cols;
    }
    Tensor2 out(parts[0].rows, total);
    for (int i = 0; i < out.rows; ++i) {
        double* oi = out.rowptr(i);
        for (const Tensor2& p : parts) {
            std::copy(p.rowptr(i), p.rowptr(i) + p.cols, oi);
            oi += p.cols;
        }
    }
    return out;
}

Tensor2 slice_cols(const Tensor2& a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols || c0 > c1) throw ConfigError("slice_cols: range out of bounds");
    Tensor2 out(a.rows, c1 - c0);
    for (int i = 0; i < a.rows; ++i)
        std::copy(a.rowptr(i) + c0, a.rowptr(i) + c1, out.rowptr(i));
    return out;
}

Tensor2 broadcast_rows(const Tensor2& rowvec, int n) {
    if (rowvec.rows != 1) throw ConfigError("broadcast_rows: input must have one row");
    Tensor2 out(n, rowvec.cols);
    for (int i = 0; i < n; ++i)
        std::copy(rowvec.v.begin(), rowvec.v.end(), out.rowptr(i));
    return out;
}

Tensor2 select_rows(const Tensor2& a, const std::vector<int>& idx) {
    Tensor2 out(static_cast<int>(idx.size()), a.cols);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= a.rows) throw ValidationError("select_rows: index out of range");
        std::copy(a.rowptr(idx[i]), a.rowptr(idx[i]) + a.cols, out.rowptr(static_cast<int>(i)));
    }
    return out;
}

Tensor2 mean_rows(const Tensor2& a) {
    Tensor2 out(1, a.cols);
    if (a.rows == 0) return out;
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.rowptr(i);
        for (int j = 0; j < a.cols; ++j) out.v[j] += ai[j];
    }
    const double inv = 1.0 / a.rows;
    for (double& x : out.v) x *= inv;
    return out;
}

Tensor2 transpose(const Tensor2& a) {
    Tensor2 out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor2 softmax_rows(const Tensor2& scores, const Mask& mask) {
    if (mask.rows != scores.rows || mask.cols != scores.cols)
        throw ConfigError("softmax_rows: mask shape mismatch");
    Tensor2 out(scores.rows, scores.cols);
    for (int i = 0; i < scores.rows; ++i) {
        const double* si = scores.rowptr(i);
        double* oi = out.rowptr(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < scores.cols; ++j)
            if (mask.at(i, j) && si[j] > mx) mx = si[j];
        if (mx == -std::numeric_limits<double>::infinity())
            throw MaskError("softmax_rows: fully masked row " + std::to_string(i));
        double denom = 0.0;
        for (int j = 0; j < scores.cols; ++j) {
            if (mask.at(i, j)) {
                oi[j] = std::exp(si[j] - mx);
                denom += oi[j];
            }
        }
        const double inv = 1.0 / denom;
        for (int j = 0; j < scores.cols; ++j) oi[j] *= inv;
    }
    return out;
}

// Exact erf-based GELU; smooth enough for finite-difference checks.
Tensor2 gelu(const Tensor2& a) {
    Tensor2 out = a;
    for (double& x : out.v) x = 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
    return out;
}

Tensor2 gelu_grad(const Tensor2& a) {
    Tensor2 out = a;
    for (double& x : out.v) {
        const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
        const double pdf = 0.3989422804014326779 * std::exp(-0.5 * x * x);
        x = cdf + x * pdf;
    }
    return out;
}

Tensor2 sigmoid(const Tensor2& a) {
    Tensor2 out = a;
    for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    return out;
}

Tensor2 relu(const Tensor2& a) {
    Tensor2 out = a;
    for (double& x : out.v) x = x > 0.0 ? x : 0.0;
    return out;
}

Tensor2 log_el(const Tensor2& a) {
    Tensor2 out = a;
    for (double& x : out.v) x = std::log(x);
    return out;
}

Tensor2 reciprocal(const Tensor2& a) {
    Tensor2 out = a;
    for (double& x : out.v) x = 1.0 / x;
    return out;
}

Tensor2 clamp(const Tensor2& a, double lo, double hi) {
    Tensor2 out = a;
    for (double& x : out.v) x = std::min(hi, std::max(lo, x));
    return out;
}

Tensor2 layernorm_rows(const Tensor2& a, double eps) {
    Tensor2 out(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.rowptr(i);
        double* oi = out.rowptr(i);
        double mean = 0.0;
        for (int j = 0; j < a.cols; ++j) mean += ai[j];
        mean /= a.cols;
        double var = 0.0;
        for (int j = 0; j < a.cols; ++j) var += (ai[j] - mean) * (ai[j] - mean);
        var /= a.cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < a.cols; ++j) oi[j] = (ai[j] - mean) * inv;
    }
    return out;
}

double sum(const Tensor2& a) {
    double s = 0.0;
    for (double x : a.v) s += x;
    return s;
}

double sum_sq(const Tensor2& a) {
    double s = 0.0;
    for (double x : a.v) s += x * x;
    return s;
}

double dot(const Tensor2& a, const Tensor2& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
    return s;
}

double l2_distance(const Tensor2& a, const Tensor2& b) {
    check_same_shape(a, b, "l2_distance");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double cosine_similarity(const Tensor2& a, const Tensor2& b) {
    check_same_shape(a, b, "cosine_similarity");
    const double na = std::sqrt(sum_sq(a));
    const double nb = std::sqrt(sum_sq(b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

bool all_finite(const Tensor2& a) {
    for (double x : a.v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace lcr::nn
