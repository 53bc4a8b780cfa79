#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "lcr/error.hpp"
#include "lcr/graph.hpp"
#include "lcr/nn.hpp"
#include "lcr/params.hpp"
#include "lcr/rng.hpp"
#include "lcr/tensor.hpp"
#include "oracles.hpp"

using namespace lcr;
using nn::Mask;
using nn::ParamStore;
using nn::Tensor2;

namespace {

Tensor2 random_tensor(int r, int c, Rng& rng, double scale = 1.0) {
    Tensor2 t(r, c);
    for (double& x : t.v) x = scale * rng.normal();
    return t;
}

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
    REQUIRE(a.rows == b.rows);
    REQUIRE(a.cols == b.cols);
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
    return m;
}

}  // namespace

TEST_CASE("rng streams are deterministic and well scaled") {
    Rng a(42), b(42), c(43);
    bool all_equal = true;
    bool any_differ = false;
    for (int i = 0; i < 1000; ++i) {
        const double x = a.uniform();
        if (x != b.uniform()) all_equal = false;
        if (x != c.uniform()) any_differ = true;
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    CHECK(all_equal);
    CHECK(any_differ);

    Rng r(7);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sum += z;
        sum_sq += z * z;
    }
    CHECK(std::fabs(sum / n) < 0.01);
    CHECK(std::fabs(sum_sq / n - 1.0) < 0.02);

    for (int i = 0; i < 1000; ++i) CHECK(r.below(13) < 13);
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    CHECK(mix_seed(1, 2, 3) != mix_seed(1, 2, 4));
}

TEST_CASE("matmul variants match the naive oracle") {
    Rng rng(11);
    for (int rep = 0; rep < 30; ++rep) {
        const int m = 1 + static_cast<int>(rng.below(6));
        const int k = 1 + static_cast<int>(rng.below(6));
        const int n = 1 + static_cast<int>(rng.below(6));
        const Tensor2 a = random_tensor(m, k, rng);
        const Tensor2 b = random_tensor(k, n, rng);
        CHECK(max_abs_diff(nn::matmul(a, b), oracle::matmul(a, b)) < 1e-12);
        const Tensor2 bt = random_tensor(n, k, rng);
        CHECK(max_abs_diff(nn::matmul_nt(a, bt), oracle::matmul(a, oracle::transpose(bt))) <
              1e-12);
        const Tensor2 at = random_tensor(k, m, rng);
        CHECK(max_abs_diff(nn::matmul_tn(at, b), oracle::matmul(oracle::transpose(at), b)) <
              1e-12);
    }
}

TEST_CASE("softmax rows: sums, masking, and errors") {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        const int r = 1 + static_cast<int>(rng.below(5));
        const int c = 2 + static_cast<int>(rng.below(6));
        const Tensor2 scores = random_tensor(r, c, rng, 3.0);
        Mask mask = Mask::all(r, c);
        // Knock out random entries but keep at least one per row.
        for (int i = 0; i < r; ++i)
            for (int j = 1; j < c; ++j)
                if (rng.uniform() < 0.4) mask.set(i, j, false);
        const Tensor2 p = nn::softmax_rows(scores, mask);
        for (int i = 0; i < r; ++i) {
            double sum = 0.0;
            for (int j = 0; j < c; ++j) {
                if (!mask.at(i, j)) CHECK(p.at(i, j) == 0.0);
                sum += p.at(i, j);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-9);
        }
    }

    Tensor2 s(1, 3);
    Mask dead = Mask::all(1, 3);
    dead.set(0, 0, false);
    dead.set(0, 1, false);
    dead.set(0, 2, false);
    CHECK_THROWS_AS((void)nn::softmax_rows(s, dead), MaskError);
}

TEST_CASE("gelu matches erf form and its derivative matches finite differences") {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        const double x = 4.0 * rng.normal();
        Tensor2 t(1, 1);
        t.at(0, 0) = x;
        CHECK(nn::gelu(t).at(0, 0) == doctest::Approx(oracle::gelu(x)).epsilon(1e-12));
        const double h = 1e-6;
        const double num = (oracle::gelu(x + h) - oracle::gelu(x - h)) / (2.0 * h);
        CHECK(nn::gelu_grad(t).at(0, 0) == doctest::Approx(num).epsilon(1e-5));
    }
}

TEST_CASE("layernorm rows have zero mean and unit variance") {
    Rng rng(9);
    const Tensor2 x = random_tensor(4, 8, rng, 5.0);
    const Tensor2 y = nn::layernorm_rows(x, 1e-5);
    for (int i = 0; i < y.rows; ++i) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < y.cols; ++j) mean += y.at(i, j);
        mean /= y.cols;
        for (int j = 0; j < y.cols; ++j) var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
        var /= y.cols;
        CHECK(std::fabs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("cosine similarity and l2 distance behave at the edges") {
    Tensor2 a(1, 3), b(1, 3);
    a.at(0, 0) = 1.0;
    b.at(0, 0) = -2.0;
    CHECK(nn::cosine_similarity(a, b) == doctest::Approx(-1.0));
    CHECK(nn::l2_distance(a, a) == 0.0);
    Tensor2 zero(1, 3);
    CHECK(nn::cosine_similarity(a, zero) == 0.0);
}

TEST_CASE("param store: creation, duplicates, adam oracle, checksum") {
    ParamStore ps;
    Rng rng(123);
    ps.create("w", 2, 3, rng, 0.5);
    CHECK_THROWS_AS(ps.create("w", 2, 3, rng, 0.5), StateError);
    CHECK_THROWS_AS(ps.value("missing"), StateError);

    // Drive three Adam steps with fixed synthetic gradients and compare every
    // coordinate against the scalar reference update.
    nn::AdamConfig cfg;
    cfg.lr = 0.1;
    Tensor2 x0 = ps.value("w");
    std::vector<double> m(x0.v.size(), 0.0), v(x0.v.size(), 0.0), expect = x0.v;
    Rng grng(77);
    for (int t = 1; t <= 3; ++t) {
        Tensor2 g = random_tensor(2, 3, grng);
        for (std::size_t i = 0; i < g.v.size(); ++i) {
            ps.grad("w").v[i] = g.v[i];
            expect[i] =
                oracle::adam_scalar(expect[i], g.v[i], m[i], v[i], t, cfg.lr, cfg.beta1,
                                    cfg.beta2, cfg.eps);
        }
        ps.adam_step(cfg);
        ps.zero_grads();
    }
    for (std::size_t i = 0; i < expect.size(); ++i)
        CHECK(ps.value("w").v[i] == doctest::Approx(expect[i]).epsilon(1e-12));

    const auto sum_before = ps.checksum();
    ps.value("w").v[0] += 1.0;
    CHECK(ps.checksum() != sum_before);

    ps.zero_grads();
    ps.add_l2_penalty_grad(0.25);
    for (std::size_t i = 0; i < ps.value("w").v.size(); ++i)
        CHECK(ps.grad("w").v[i] == doctest::Approx(0.5 * ps.value("w").v[i]));

    const ParamStore copy = ps.clone_values();
    CHECK(copy.checksum() == ps.checksum());
}

namespace {

// Shared fixture: a small parameter set and a loss that exercises most tape
// ops at once. with_grad runs the taped version and backpropagates; without,
// it recomputes the same value through the plain kernels with matching
// accumulation order, so the two paths can be compared bitwise.
double composite_loss(ParamStore& ps, bool with_grad) {
    if (!with_grad) {
        const Tensor2& a = ps.value("a");  // 3x4
        const Tensor2& b = ps.value("b");  // 4x4
        const Tensor2& c = ps.value("c");  // 1x4
        Tensor2 h = nn::gelu(nn::add_rowvec(nn::matmul(a, b), c));
        const Tensor2 att = nn::softmax_rows(nn::affine(nn::matmul_nt(h, h), 0.5, 0.1),
                                             Mask::causal(3, 3));
        const Tensor2 mixed = nn::matmul(att, h);
        const Tensor2 picked = nn::concat_rows(
            nn::slice_rows(mixed, 0, 2), nn::mean_rows(nn::layernorm_rows(mixed, 1e-5)));
        const Tensor2 flat = nn::transpose(nn::hadamard(picked, picked));
        const Tensor2 sig = nn::sigmoid(nn::affine(flat, 0.3, 0.0));
        const Tensor2 lg = nn::log_el(nn::clamp(sig, 1e-6, 1.0 - 1e-6));
        const Tensor2 rec = nn::reciprocal(nn::affine(sig, 1.0, 1.5));
        const double d1 =
            nn::l2_distance(nn::slice_rows(mixed, 0, 1), nn::slice_rows(mixed, 2, 3));
        const double d2 = nn::cosine_similarity(nn::slice_rows(mixed, 0, 1),
                                                nn::slice_rows(mixed, 1, 2));
        // Grouping mirrors the taped expression below exactly.
        return ((0.25 * nn::sum(lg) + 0.0) + nn::sum(rec)) +
               (std::max(d1, 0.0) + (2.0 * d2 + 0.0)) + mixed.at(1, 2);
    }
    nn::Tape tape(ps);
    auto a = tape.param("a");
    auto b = tape.param("b");
    auto c = tape.param("c");
    auto h = nn::matmul(a, b);
    h = nn::add_rowvec(h, c);
    h = nn::gelu(h);
    auto att =
        nn::softmax_rows(nn::affine(nn::matmul_nt(h, h), 0.5, 0.1), Mask::causal(3, 3));
    auto mixed = nn::matmul(att, h);
    auto picked = nn::concat_rows(nn::slice_rows(mixed, 0, 2),
                                  nn::mean_rows(nn::layernorm_rows(mixed, 1e-5)));
    auto flat = nn::transpose(nn::hadamard(picked, picked));
    auto sig = nn::sigmoid(nn::mul(flat, 0.3));
    auto lg = nn::log_el(nn::clamp(sig, 1e-6, 1.0 - 1e-6));
    auto rec = nn::reciprocal(nn::affine(sig, 1.0, 1.5));
    auto d1 = nn::l2_dist(nn::slice_rows(mixed, 0, 1), nn::slice_rows(mixed, 2, 3));
    auto d2 = nn::cos_sim(nn::slice_rows(mixed, 0, 1), nn::slice_rows(mixed, 1, 2));
    auto loss = nn::add(
        nn::add(nn::add(nn::mul(nn::sum(lg), 0.25), nn::sum(rec)),
                nn::add(nn::relu(d1), nn::mul(d2, 2.0))),
        nn::pick(mixed, 1, 2));
    tape.backward(loss);
    return loss.item();
}

}  // namespace

TEST_CASE("tape gradients on a composite graph pass finite differences") {
    ParamStore ps;
    Rng rng(2024);
    ps.create("a", 3, 4, rng, 0.6);
    ps.create("b", 4, 4, rng, 0.6);
    ps.create("c", 1, 4, rng, 0.6);
    Rng pick_rng(5);
    const auto report = nn::finite_diff_grad_check(ps, composite_loss, 1e-5, 12, pick_rng);
    INFO("worst: ", report.worst_param, " err: ", report.max_rel_err);
    CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("taped and plain composite values agree bitwise") {
    ParamStore ps;
    Rng rng(88);
    ps.create("a", 3, 4, rng, 0.6);
    ps.create("b", 4, 4, rng, 0.6);
    ps.create("c", 1, 4, rng, 0.6);
    const double plain = composite_loss(ps, false);
    ParamStore ps2 = ps.clone_values();
    const double taped = composite_loss(ps2, true);
    CHECK(plain == taped);
}

TEST_CASE("shared parameter leaves accumulate gradients from every use") {
    ParamStore ps;
    Rng rng(9);
    ps.create("w", 2, 2, rng, 1.0);
    nn::Tape tape(ps);
    auto w = tape.param("w");
    // loss = sum(w @ w): dL/dw gets contributions from both operand slots.
    auto loss = nn::sum(nn::matmul(w, w));
    tape.backward(loss);
    const Tensor2& W = ps.value("w");
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double expect = 0.0;
            for (int k = 0; k < 2; ++k) expect += W.at(j, k) + W.at(k, i);
            CHECK(ps.grad("w").at(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("tape misuse is rejected") {
    ParamStore ps;
    Rng rng(1);
    ps.create("w", 2, 2, rng, 1.0);
    nn::Tape tape(ps);
    auto w = tape.param("w");
    auto loss = nn::sum(w);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), StateError);

    nn::Tape t2(ps);
    auto v2 = t2.param("w");
    CHECK_THROWS_AS((void)t2.backward(v2), StateError);  // non-scalar

    nn::Tape t3(ps);
    auto v3 = t3.param("w");
    CHECK_THROWS_AS((void)nn::add(v2, v3), StateError);  // different tapes
}

TEST_CASE("multi-head attention matches the naive oracle across shapes") {
    Rng rng(31337);
    for (int rep = 0; rep < 100; ++rep) {
        const int heads = 1 << rng.below(3);  // 1, 2, 4
        const int dh = 2 + static_cast<int>(rng.below(3));
        const int d = heads * dh;
        const int lq = 1 + static_cast<int>(rng.below(5));
        const int lk = 1 + static_cast<int>(rng.below(5));
        ParamStore ps;
        const auto w = nn::make_attention(ps, "att", d, heads, rng);
        const Tensor2 q = random_tensor(lq, d, rng);
        const Tensor2 k = random_tensor(lk, d, rng);

        const bool causal = lq == lk && rng.uniform() < 0.5;
        const Mask mask = causal ? Mask::causal(lq, lk) : Mask::all(lq, lk);
        std::vector<std::vector<bool>> omask(lq, std::vector<bool>(lk, true));
        if (causal)
            for (int i = 0; i < lq; ++i)
                for (int j = i + 1; j < lk; ++j) omask[i][j] = false;

        nn::PlainFabric f{ps};
        const Tensor2 got = nn::multi_head_attention(f, q, k, k, mask, w);
        const Tensor2 want = oracle::multi_head_attention(
            q, k, k, omask, ps.value(w.wq), ps.value(w.wk), ps.value(w.wv), ps.value(w.wo),
            heads);
        CHECK(max_abs_diff(got, want) < 1e-9);
    }
}

TEST_CASE("feed forward matches the naive oracle") {
    Rng rng(2718);
    for (int rep = 0; rep < 100; ++rep) {
        const int d = 2 + static_cast<int>(rng.below(6));
        const int hidden = 1 + static_cast<int>(rng.below(12));
        const int n = 1 + static_cast<int>(rng.below(4));
        ParamStore ps;
        const auto w = nn::make_ffn(ps, "ffn", d, hidden, rng);
        const Tensor2 x = random_tensor(n, d, rng);
        nn::PlainFabric f{ps};
        const Tensor2 got = nn::feed_forward(f, x, w);
        const Tensor2 want = oracle::feed_forward(x, ps.value(w.w1), ps.value(w.b1),
                                                  ps.value(w.w2), ps.value(w.b2));
        CHECK(max_abs_diff(got, want) < 1e-9);
    }
}

TEST_CASE("attention with a full mask is invariant to key/value permutation") {
    Rng rng(404);
    const int d = 8, lk = 5;
    ParamStore ps;
    const auto w = nn::make_attention(ps, "att", d, 2, rng);
    const Tensor2 q = random_tensor(2, d, rng);
    const Tensor2 k = random_tensor(lk, d, rng);
    nn::PlainFabric f{ps};
    const Tensor2 base = nn::multi_head_attention(f, q, k, k, Mask::all(2, lk), w);

    std::vector<int> perm = {4, 2, 0, 1, 3};
    Tensor2 kp(lk, d);
    for (int i = 0; i < lk; ++i)
        for (int j = 0; j < d; ++j) kp.at(i, j) = k.at(perm[i], j);
    const Tensor2 permuted = nn::multi_head_attention(f, q, kp, kp, Mask::all(2, lk), w);
    CHECK(max_abs_diff(base, permuted) < 1e-9);
}

TEST_CASE("causal attention ignores future rows") {
    Rng rng(505);
    const int d = 8, n = 4;
    ParamStore ps;
    const auto w = nn::make_attention(ps, "att", d, 2, rng);
    Tensor2 x = random_tensor(n, d, rng);
    nn::PlainFabric f{ps};
    const Tensor2 base = nn::multi_head_attention(f, x, x, x, Mask::causal(n, n), w);
    // Perturbing the last row must leave all earlier outputs untouched.
    Tensor2 x2 = x;
    for (int j = 0; j < d; ++j) x2.at(n - 1, j) += 10.0 * rng.normal();
    const Tensor2 bumped = nn::multi_head_attention(f, x2, x2, x2, Mask::causal(n, n), w);
    for (int i = 0; i < n - 1; ++i)
        for (int j = 0; j < d; ++j) CHECK(base.at(i, j) == bumped.at(i, j));
}

TEST_CASE("attention weight creation validates and attaches") {
    ParamStore ps;
    Rng rng(6);
    CHECK_THROWS_AS((void)nn::make_attention(ps, "a", 6, 4, rng), ConfigError);
    (void)nn::make_attention(ps, "a", 8, 2, rng);
    (void)nn::attach_attention(ps, "a", 8, 2);
    CHECK_THROWS_AS((void)nn::attach_attention(ps, "missing", 8, 2), StateError);
    CHECK_THROWS_AS((void)nn::attach_attention(ps, "a", 16, 2), ConfigError);
}
