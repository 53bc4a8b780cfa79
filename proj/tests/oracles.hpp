#pragma once

// Naive reference implementations used to cross-check the library. Everything
// here is written as direct loops over element indices, independent of the
// kernels under test; keep it that way.

#include <cmath>
#include <vector>

#include "lcr/tensor.hpp"

namespace oracle {

using lcr::nn::Tensor2;

inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    Tensor2 out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

inline Tensor2 transpose(const Tensor2& a) {
    Tensor2 out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

inline std::vector<double> softmax(const std::vector<double>& xs) {
    double mx = xs[0];
    for (double x : xs) mx = std::max(mx, x);
    double z = 0.0;
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out[i] = std::exp(xs[i] - mx);
        z += out[i];
    }
    for (double& x : out) x /= z;
    return out;
}

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

// Multi-head attention, one query row at a time, with a boolean mask telling
// which key columns each query row may see.
inline Tensor2 multi_head_attention(const Tensor2& q, const Tensor2& k, const Tensor2& v,
                                    const std::vector<std::vector<bool>>& mask,
                                    const Tensor2& wq, const Tensor2& wk, const Tensor2& wv,
                                    const Tensor2& wo, int heads) {
    const int d = wq.cols;
    const int dh = d / heads;
    const Tensor2 Q = oracle::matmul(q, wq), K = oracle::matmul(k, wk), V = oracle::matmul(v, wv);
    Tensor2 concat(q.rows, d);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < q.rows; ++i) {
            std::vector<double> scores;
            std::vector<int> cols;
            for (int j = 0; j < k.rows; ++j) {
                if (!mask[i][j]) continue;
                double s = 0.0;
                for (int c = 0; c < dh; ++c) s += Q.at(i, h * dh + c) * K.at(j, h * dh + c);
                scores.push_back(s / std::sqrt(static_cast<double>(dh)));
                cols.push_back(j);
            }
            const auto p = oracle::softmax(scores);
            for (int c = 0; c < dh; ++c) {
                double s = 0.0;
                for (std::size_t jj = 0; jj < cols.size(); ++jj)
                    s += p[jj] * V.at(cols[jj], h * dh + c);
                concat.at(i, h * dh + c) = s;
            }
        }
    }
    return oracle::matmul(concat, wo);
}

inline Tensor2 feed_forward(const Tensor2& x, const Tensor2& w1, const Tensor2& b1,
                            const Tensor2& w2, const Tensor2& b2) {
    Tensor2 h = oracle::matmul(x, w1);
    for (int i = 0; i < h.rows; ++i)
        for (int j = 0; j < h.cols; ++j) h.at(i, j) = gelu(h.at(i, j) + b1.at(0, j));
    Tensor2 out = oracle::matmul(h, w2);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += b2.at(0, j);
    return out;
}

// Mean of selected embedding rows.
inline std::vector<double> mean_rows_of(const Tensor2& table, const std::vector<int>& ids) {
    std::vector<double> out(table.cols, 0.0);
    for (int id : ids)
        for (int j = 0; j < table.cols; ++j) out[j] += table.at(id, j);
    for (double& x : out) x /= static_cast<double>(ids.size());
    return out;
}

// Target-attentive summary: softmax(H e_t / sqrt(d))^T H for one target.
inline std::vector<double> target_aggregate(const Tensor2& H, const std::vector<double>& e_t) {
    const int d = H.cols;
    std::vector<double> scores(H.rows);
    for (int i = 0; i < H.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += H.at(i, j) * e_t[j];
        scores[i] = s / std::sqrt(static_cast<double>(d));
    }
    const auto p = oracle::softmax(scores);
    std::vector<double> out(d, 0.0);
    for (int i = 0; i < H.rows; ++i)
        for (int j = 0; j < d; ++j) out[j] += p[i] * H.at(i, j);
    return out;
}

inline double bce(const std::vector<std::pair<double, int>>& prob_label, double eps) {
    double s = 0.0;
    for (const auto& [p, y] : prob_label) {
        double pc = p;
        if (pc < eps) pc = eps;
        if (pc > 1.0 - eps) pc = 1.0 - eps;
        s += y ? -std::log(pc) : -std::log(1.0 - pc);
    }
    return s / static_cast<double>(prob_label.size());
}

inline double euclid(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline double tcl(const std::vector<double>& e_t, const std::vector<double>& h_s,
                  const std::vector<double>& hs_nc, const std::vector<double>& h_r,
                  const std::vector<double>& hr_nc, double m) {
    const double ls = std::max(euclid(e_t, h_s) - euclid(e_t, hs_nc) + m, 0.0);
    const double lr = std::max(euclid(e_t, h_r) - euclid(e_t, hr_nc) + m, 0.0);
    return ls + lr;
}

inline std::vector<double> advantages(const std::vector<double>& r) {
    const double n = static_cast<double>(r.size());
    double mean = 0.0;
    for (double x : r) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : r) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(r.size(), 0.0);
    if (sd < 1e-8) return out;
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = (r[i] - mean) / sd;
    return out;
}

inline double kl(double p_ref, double p_cur) {
    const double r = p_ref / p_cur;
    return r - std::log(r) - 1.0;
}

// Rank of the target among scored candidates: higher score first, then
// smaller id.
inline int rank_of_target(const std::vector<int>& pool, const std::vector<double>& scores,
                          int target) {
    int ti = -1;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i] == target) ti = static_cast<int>(i);
    int rank = 1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (static_cast<int>(i) == ti) continue;
        if (scores[i] > scores[ti] || (scores[i] == scores[ti] && pool[i] < pool[ti])) ++rank;
    }
    return rank;
}

// One Adam step for a single scalar parameter.
inline double adam_scalar(double x, double g, double& m, double& v, int t, double lr,
                          double b1, double b2, double eps) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mh = m / (1.0 - std::pow(b1, t));
    const double vh = v / (1.0 - std::pow(b2, t));
    return x - lr * mh / (std::sqrt(vh) + eps);
}

}  // namespace oracle
