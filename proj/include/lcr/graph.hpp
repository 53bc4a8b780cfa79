#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lcr/params.hpp"
#include "lcr/tensor.hpp"

namespace lcr::nn {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    int idx = -1;

    const Tensor2& val() const;
    int rows() const { return val().rows; }
    int cols() const { return val().cols; }
    double item() const { return val().item(); }
};

// Append-only record of the forward computation. Each op pushes a node whose
// value comes from the plain kernels in tensor.hpp and whose backward closure
// accumulates into the gradients of its inputs. Reverse iteration over the
// tape is a topological order, so backward() is a single sweep.
//
// Parameter leaves read from (and on backward() scatter gradients into) the
// bound ParamStore. Requesting the same full parameter twice returns the same
// leaf, so shared weights accumulate gradients from every use site.
class Tape {
public:
    explicit Tape(ParamStore& store) : store_(&store) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor2 v);
    Var scalar(double x) { return constant(Tensor2::scalar(x)); }
    Var param(const std::string& name);
    // Embedding-style leaf: copies the requested rows of a parameter table.
    // Backward scatters row gradients back instead of touching the full table.
    Var rows_of(const std::string& name, std::vector<int> rows);

    // Seeds d(loss)/d(loss) = seed, sweeps the tape in reverse, then adds the
    // leaf gradients into the bound ParamStore. loss must be 1x1.
    void backward(Var loss, double seed = 1.0);

    ParamStore& store() { return *store_; }
    size_t node_count() const { return nodes_.size(); }

    // ---- internals used by the op free functions -------------------------
    struct Node {
        Tensor2 val;
        Tensor2 grad;  // allocated on first accumulation during backward
        bool needs_grad = false;
        std::function<void(Tape&)> back;
        enum Kind { INTERMEDIATE, CONSTANT, PARAM, PARAM_ROWS } kind = INTERMEDIATE;
        std::string param_name;
        std::vector<int> param_rows;
    };

    Var push(Tensor2 val, bool needs_grad, std::function<void(Tape&)> back);
    Node& nodes_ref(int idx) { return nodes_[idx]; }
    const Tensor2& val(int idx) const { return nodes_[idx].val; }
    Tensor2& grad(int idx);
    bool needs_grad(int idx) const { return nodes_[idx].needs_grad; }
    // Adds g into the node's gradient unless the node is grad-free.
    void acc(int idx, const Tensor2& g);

private:
    ParamStore* store_;
    std::vector<Node> nodes_;
    std::map<std::string, int> param_leaves_;
    bool backward_done_ = false;
};

// ---- taped ops ------------------------------------------------------------
// Same names and semantics as the plain kernels; overloads on Var record the
// backward step. Mixing Vars from different tapes throws StateError.

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var affine(Var a, double k, double b);
inline Var mul(Var a, double k) { return affine(a, k, 0.0); }
Var add_rowvec(Var a, Var b);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, int r0, int r1);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, int c0, int c1);
Var broadcast_rows(Var a, int n);
Var mean_rows(Var a);
Var transpose(Var a);
Var softmax_rows(Var scores, const Mask& mask);
Var gelu(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var log_el(Var a);
Var reciprocal(Var a);
Var clamp(Var a, double lo, double hi);
Var layernorm_rows(Var a, double eps = 1e-5);
Var sum(Var a);                 // 1x1
Var pick(Var a, int r, int c);  // 1x1 view of one element
Var l2_dist(Var a, Var b);      // 1x1 Euclidean distance between same-shape tensors
Var cos_sim(Var a, Var b);      // 1x1 cosine similarity; 0 when either input is zero

}  // namespace lcr::nn
