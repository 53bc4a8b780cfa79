#include "lcr/graph.hpp"

#include <cmath>

namespace lcr::nn {

const Tensor2& Var::val() const {
    if (!tape) throw StateError("Var is not bound to a tape");
    return tape->val(idx);
}

Var Tape::push(Tensor2 val, bool needs_grad, std::function<void(Tape&)> back) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor2 v) {
    Var out = push(std::move(v), false, nullptr);
    nodes_[out.idx].kind = Node::CONSTANT;
    return out;
}

Var Tape::param(const std::string& name) {
    auto it = param_leaves_.find(name);
    if (it != param_leaves_.end()) return Var{this, it->second};
    Var out = push(store_->value(name), true, nullptr);
    nodes_[out.idx].kind = Node::PARAM;
    nodes_[out.idx].param_name = name;
    param_leaves_[name] = out.idx;
    return out;
}

Var Tape::rows_of(const std::string& name, std::vector<int> rows) {
    const Tensor2& table = store_->value(name);
    Var out = push(select_rows(table, rows), true, nullptr);
    nodes_[out.idx].kind = Node::PARAM_ROWS;
    nodes_[out.idx].param_name = name;
    nodes_[out.idx].param_rows = std::move(rows);
    return out;
}

Tensor2& Tape::grad(int idx) {
    Node& n = nodes_[idx];
    if (n.grad.rows != n.val.rows || n.grad.cols != n.val.cols)
        n.grad = Tensor2(n.val.rows, n.val.cols);
    return n.grad;
}

void Tape::acc(int idx, const Tensor2& g) {
    Node& n = nodes_[idx];
    if (!n.needs_grad) return;
    Tensor2& dst = grad(idx);
    if (!dst.same_shape(g)) throw StateError("gradient shape mismatch during backward");
    for (size_t i = 0; i < dst.size(); ++i) dst.v[i] += g.v[i];
}

void Tape::backward(Var loss, double seed) {
    if (loss.tape != this) throw StateError("backward on a Var from another tape");
    if (backward_done_) throw StateError("backward already ran on this tape");
    backward_done_ = true;
    if (loss.val().rows != 1 || loss.val().cols != 1)
        throw StateError("backward expects a scalar loss");

    grad(loss.idx).v[0] = seed;
    for (int i = loss.idx; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || !n.back) continue;
        if (n.grad.rows != n.val.rows || n.grad.cols != n.val.cols) continue;  // off-path
        n.back(*this);
    }

    for (int i = 0; i <= loss.idx; ++i) {
        Node& n = nodes_[i];
        if (n.grad.rows != n.val.rows || n.grad.cols != n.val.cols) continue;
        if (n.kind == Node::PARAM) {
            Tensor2& dst = store_->grad(n.param_name);
            for (size_t k = 0; k < dst.size(); ++k) dst.v[k] += n.grad.v[k];
        } else if (n.kind == Node::PARAM_ROWS) {
            Tensor2& dst = store_->grad(n.param_name);
            for (size_t r = 0; r < n.param_rows.size(); ++r) {
                double* drow = dst.rowptr(n.param_rows[r]);
                const double* grow = n.grad.rowptr(static_cast<int>(r));
                for (int c = 0; c < n.grad.cols; ++c) drow[c] += grow[c];
            }
        }
    }
}

namespace {
Tape& same_tape(Var a, Var b) {
    if (!a.tape || a.tape != b.tape) throw StateError("op mixes Vars from different tapes");
    return *a.tape;
}
}  // namespace

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    Var out = t.push(matmul(a.val(), b.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, ib = b.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, ib, io](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            if (tp.needs_grad(ia)) tp.acc(ia, matmul_nt(g, tp.val(ib)));
            if (tp.needs_grad(ib)) tp.acc(ib, matmul_tn(tp.val(ia), g));
        };
    }
    return out;
}

Var matmul_nt(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    Var out = t.push(matmul_nt(a.val(), b.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, ib = b.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, ib, io](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            if (tp.needs_grad(ia)) tp.acc(ia, matmul(g, tp.val(ib)));
            if (tp.needs_grad(ib)) tp.acc(ib, matmul_tn(g, tp.val(ia)));
        };
    }
    return out;
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    Var out = t.push(add(a.val(), b.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, ib = b.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, ib, io](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            tp.acc(ia, g);
            tp.acc(ib, g);
        };
    }
    return out;
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    Var out = t.push(sub(a.val(), b.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, ib = b.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, ib, io](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            tp.acc(ia, g);
            if (tp.needs_grad(ib)) tp.acc(ib, affine(g, -1.0, 0.0));
        };
    }
    return out;
}

Var hadamard(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    Var out = t.push(hadamard(a.val(), b.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, ib = b.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, ib, io](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            if (tp.needs_grad(ia)) tp.acc(ia, hadamard(g, tp.val(ib)));
            if (tp.needs_grad(ib)) tp.acc(ib, hadamard(g, tp.val(ia)));
        };
    }
    return out;
}

Var affine(Var a, double k, double b) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(affine(a.val(), k, b), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io, k](Tape& tp) { tp.acc(ia, affine(tp.grad(io), k, 0.0)); };
    }
    return out;
}

Var add_rowvec(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    Var out = t.push(add_rowvec(a.val(), b.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, ib = b.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, ib, io](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            tp.acc(ia, g);
            if (tp.needs_grad(ib)) tp.acc(ib, colsum(g));
        };
    }
    return out;
}

Var concat_rows(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    const int ra = a.val().rows;
    Var out = t.push(concat_rows(a.val(), b.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, ib = b.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, ib, io, ra](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            if (tp.needs_grad(ia) && ra > 0) tp.acc(ia, slice_rows(g, 0, ra));
            if (tp.needs_grad(ib) && g.rows > ra) tp.acc(ib, slice_rows(g, ra, g.rows));
        };
    }
    return out;
}

Var slice_rows(Var a, int r0, int r1) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(slice_rows(a.val(), r0, r1), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io, r0](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            Tensor2 da(tp.val(ia).rows, tp.val(ia).cols);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) da.at(r0 + i, j) = g.at(i, j);
            tp.acc(ia, da);
        };
    }
    return out;
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw StateError("concat_cols: no inputs");
    Tape& t = *parts[0].tape;
    std::vector<Tensor2> vals;
    std::vector<int> idxs;
    bool ng = false;
    for (Var p : parts) {
        same_tape(parts[0], p);
        vals.push_back(p.val());
        idxs.push_back(p.idx);
        ng = ng || t.needs_grad(p.idx);
    }
    Var out = t.push(concat_cols(vals), ng, nullptr);
    if (ng) {
        std::vector<int> widths;
        for (const Tensor2& v : vals) widths.push_back(v.cols);
        const int io = out.idx;
        t.nodes_ref(io).back = [idxs, widths, io](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            int c0 = 0;
            for (size_t p = 0; p < idxs.size(); ++p) {
                if (tp.needs_grad(idxs[p])) tp.acc(idxs[p], slice_cols(g, c0, c0 + widths[p]));
                c0 += widths[p];
            }
        };
    }
    return out;
}

Var slice_cols(Var a, int c0, int c1) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(slice_cols(a.val(), c0, c1), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io, c0](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            Tensor2 da(tp.val(ia).rows, tp.val(ia).cols);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) da.at(i, c0 + j) = g.at(i, j);
            tp.acc(ia, da);
        };
    }
    return out;
}

Var broadcast_rows(Var a, int n) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(broadcast_rows(a.val(), n), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io](Tape& tp) { tp.acc(ia, colsum(tp.grad(io))); };
    }
    return out;
}

Var mean_rows(Var a) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    const int n = a.val().rows;
    Var out = t.push(mean_rows(a.val()), ng && n > 0, nullptr);
    if (ng && n > 0) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io, n](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            Tensor2 da(n, g.cols);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < g.cols; ++j) da.at(i, j) = g.v[j] / n;
            tp.acc(ia, da);
        };
    }
    return out;
}

Var transpose(Var a) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(transpose(a.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io](Tape& tp) {
            tp.acc(ia, transpose(tp.grad(io)));
        };
    }
    return out;
}

Var softmax_rows(Var scores, const Mask& mask) {
    Tape& t = *scores.tape;
    const bool ng = t.needs_grad(scores.idx);
    Var out = t.push(softmax_rows(scores.val(), mask), ng, nullptr);
    if (ng) {
        const int ia = scores.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io](Tape& tp) {
            const Tensor2& g = tp.grad(io);
            const Tensor2& p = tp.val(io);
            Tensor2 da(p.rows, p.cols);
            for (int i = 0; i < p.rows; ++i) {
                double s = 0.0;
                for (int j = 0; j < p.cols; ++j) s += g.at(i, j) * p.at(i, j);
                for (int j = 0; j < p.cols; ++j) da.at(i, j) = p.at(i, j) * (g.at(i, j) - s);
            }
            tp.acc(ia, da);
        };
    }
    return out;
}

Var gelu(Var a) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(gelu(a.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io](Tape& tp) {
            tp.acc(ia, hadamard(tp.grad(io), gelu_grad(tp.val(ia))));
        };
    }
    return out;
}

Var sigmoid(Var a) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(sigmoid(a.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io](Tape& tp) {
            const Tensor2& y = tp.val(io);
            const Tensor2& g = tp.grad(io);
            Tensor2 da(y.rows, y.cols);
            for (size_t k = 0; k < y.size(); ++k) da.v[k] = g.v[k] * y.v[k] * (1.0 - y.v[k]);
            tp.acc(ia, da);
        };
    }
    return out;
}

Var relu(Var a) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(relu(a.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io](Tape& tp) {
            const Tensor2& x = tp.val(ia);
            const Tensor2& g = tp.grad(io);
            Tensor2 da(x.rows, x.cols);
            for (size_t k = 0; k < x.size(); ++k) da.v[k] = x.v[k] > 0.0 ? g.v[k] : 0.0;
            tp.acc(ia, da);
        };
    }
    return out;
}

Var log_el(Var a) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(log_el(a.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io](Tape& tp) {
            tp.acc(ia, hadamard(tp.grad(io), reciprocal(tp.val(ia))));
        };
    }
    return out;
}

Var reciprocal(Var a) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(reciprocal(a.val()), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io](Tape& tp) {
            const Tensor2& y = tp.val(io);
            const Tensor2& g = tp.grad(io);
            Tensor2 da(y.rows, y.cols);
            for (size_t k = 0; k < y.size(); ++k) da.v[k] = -g.v[k] * y.v[k] * y.v[k];
            tp.acc(ia, da);
        };
    }
    return out;
}

Var clamp(Var a, double lo, double hi) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(clamp(a.val(), lo, hi), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io, lo, hi](Tape& tp) {
            const Tensor2& x = tp.val(ia);
            const Tensor2& g = tp.grad(io);
            Tensor2 da(x.rows, x.cols);
            for (size_t k = 0; k < x.size(); ++k)
                da.v[k] = (x.v[k] >= lo && x.v[k] <= hi) ? g.v[k] : 0.0;
            tp.acc(ia, da);
        };
    }
    return out;
}

Var layernorm_rows(Var a, double eps) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(layernorm_rows(a.val(), eps), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io, eps](Tape& tp) {
            const Tensor2& x = tp.val(ia);
            const Tensor2& y = tp.val(io);
            const Tensor2& g = tp.grad(io);
            Tensor2 da(x.rows, x.cols);
            const int c = x.cols;
            for (int i = 0; i < x.rows; ++i) {
                double mean = 0.0, var = 0.0;
                for (int j = 0; j < c; ++j) mean += x.at(i, j);
                mean /= c;
                for (int j = 0; j < c; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
                var /= c;
                const double inv = 1.0 / std::sqrt(var + eps);
                double gmean = 0.0, gymean = 0.0;
                for (int j = 0; j < c; ++j) {
                    gmean += g.at(i, j);
                    gymean += g.at(i, j) * y.at(i, j);
                }
                gmean /= c;
                gymean /= c;
                for (int j = 0; j < c; ++j)
                    da.at(i, j) = inv * (g.at(i, j) - gmean - y.at(i, j) * gymean);
            }
            tp.acc(ia, da);
        };
    }
    return out;
}

Var sum(Var a) {
    Tape& t = *a.tape;
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(Tensor2::scalar(sum(a.val())), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io](Tape& tp) {
            const double g = tp.grad(io).v[0];
            Tensor2 da(tp.val(ia).rows, tp.val(ia).cols);
            da.fill(g);
            tp.acc(ia, da);
        };
    }
    return out;
}

Var pick(Var a, int r, int c) {
    Tape& t = *a.tape;
    if (r < 0 || r >= a.val().rows || c < 0 || c >= a.val().cols)
        throw StateError("pick: index out of range");
    const bool ng = t.needs_grad(a.idx);
    Var out = t.push(Tensor2::scalar(a.val().at(r, c)), ng, nullptr);
    if (ng) {
        const int ia = a.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, io, r, c](Tape& tp) {
            Tensor2 da(tp.val(ia).rows, tp.val(ia).cols);
            da.at(r, c) = tp.grad(io).v[0];
            tp.acc(ia, da);
        };
    }
    return out;
}

Var l2_dist(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    const double d = l2_distance(a.val(), b.val());
    Var out = t.push(Tensor2::scalar(d), ng, nullptr);
    if (ng) {
        const int ia = a.idx, ib = b.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, ib, io](Tape& tp) {
            const double g = tp.grad(io).v[0];
            const double d = tp.val(io).v[0];
            if (d == 0.0) return;  // subgradient 0 at the kink
            Tensor2 diff = sub(tp.val(ia), tp.val(ib));
            Tensor2 da = affine(diff, g / d, 0.0);
            tp.acc(ia, da);
            if (tp.needs_grad(ib)) tp.acc(ib, affine(da, -1.0, 0.0));
        };
    }
    return out;
}

Var cos_sim(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
    const double c = cosine_similarity(a.val(), b.val());
    Var out = t.push(Tensor2::scalar(c), ng, nullptr);
    if (ng) {
        const int ia = a.idx, ib = b.idx, io = out.idx;
        t.nodes_ref(io).back = [ia, ib, io](Tape& tp) {
            const Tensor2& av = tp.val(ia);
            const Tensor2& bv = tp.val(ib);
            const double na = std::sqrt(sum_sq(av));
            const double nb = std::sqrt(sum_sq(bv));
            if (na == 0.0 || nb == 0.0) return;
            const double g = tp.grad(io).v[0];
            const double c = tp.val(io).v[0];
            Tensor2 da(av.rows, av.cols), db(bv.rows, bv.cols);
            for (size_t k = 0; k < av.size(); ++k) {
                da.v[k] = g * (bv.v[k] / (na * nb) - c * av.v[k] / (na * na));
                db.v[k] = g * (av.v[k] / (na * nb) - c * bv.v[k] / (nb * nb));
            }
            tp.acc(ia, da);
            if (tp.needs_grad(ib)) tp.acc(ib, db);
        };
    }
    return out;
}

}  // namespace lcr::nn
