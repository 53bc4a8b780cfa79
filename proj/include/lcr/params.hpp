#pragma once

#include <map>
#include <string>
#include <vector>

#include "lcr/rng.hpp"
#include "lcr/tensor.hpp"

namespace lcr::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named parameter tensors plus their gradient accumulators and Adam moments.
// std::map keeps iteration in name order, which makes every walk over the
// store (init, step, checksum, serialization) deterministic.
class ParamStore {
public:
    struct Entry {
        Tensor2 value;
        Tensor2 grad;
        Tensor2 m;  // Adam first moment
        Tensor2 v;  // Adam second moment
    };

    // Registers a parameter initialized from N(0, init_std^2), or to zero
    // when init_std == 0 (biases). Throws StateError on duplicate names.
    Tensor2& create(const std::string& name, int rows, int cols, Rng& rng, double init_std);

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    Tensor2& value(const std::string& name);
    const Tensor2& value(const std::string& name) const;
    Tensor2& grad(const std::string& name);

    void zero_grads();

    // One Adam update over every parameter; increments the shared step count.
    void adam_step(const AdamConfig& cfg);

    // L2 norm over all gradient entries, for logging and divergence checks.
    double grad_norm() const;

    // Adds 2*lambda*value to each parameter's gradient (the analytic gradient
    // of lambda * sum of squared parameters).
    void add_l2_penalty_grad(double lambda);

    // Sum of squared parameter values across the whole store.
    double l2_norm_sq() const;

    // Order-sensitive FNV-1a hash over names and raw value bytes. Two stores
    // compare equal iff every named tensor is bitwise identical.
    std::uint64_t checksum() const;

    std::vector<std::string> names() const;
    size_t count() const { return entries_.size(); }
    std::int64_t total_values() const;
    std::int64_t step_count() const { return step_; }

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    // Deep copy of values only (fresh grads and moments, step reset). Used for
    // the frozen reference and rollout policies.
    ParamStore clone_values() const;

private:
    Entry& lookup(const std::string& name);
    const Entry& lookup(const std::string& name) const;

    std::map<std::string, Entry> entries_;
    std::int64_t step_ = 0;
};

}  // namespace lcr::nn
