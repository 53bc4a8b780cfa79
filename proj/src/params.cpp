#include "lcr/params.hpp"

#include <cmath>

namespace lcr::nn {

Tensor2& ParamStore::create(const std::string& name, int rows, int cols, Rng& rng,
                            double init_std) {
    if (entries_.count(name)) throw StateError("parameter already exists: " + name);
    Entry e;
    e.value = Tensor2(rows, cols);
    if (init_std > 0.0)
        for (double& x : e.value.v) x = rng.normal(0.0, init_std);
    e.grad = Tensor2(rows, cols);
    e.m = Tensor2(rows, cols);
    e.v = Tensor2(rows, cols);
    auto [it, ok] = entries_.emplace(name, std::move(e));
    (void)ok;
    return it->second.value;
}

ParamStore::Entry& ParamStore::lookup(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw StateError("unknown parameter: " + name);
    return it->second;
}

const ParamStore::Entry& ParamStore::lookup(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw StateError("unknown parameter: " + name);
    return it->second;
}

Tensor2& ParamStore::value(const std::string& name) { return lookup(name).value; }
const Tensor2& ParamStore::value(const std::string& name) const { return lookup(name).value; }
Tensor2& ParamStore::grad(const std::string& name) { return lookup(name).grad; }

void ParamStore::zero_grads() {
    for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

void ParamStore::adam_step(const AdamConfig& cfg) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& [name, e] : entries_) {
        for (size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad.v[i];
            e.m.v[i] = cfg.beta1 * e.m.v[i] + (1.0 - cfg.beta1) * g;
            e.v.v[i] = cfg.beta2 * e.v.v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = e.m.v[i] / bc1;
            const double vhat = e.v.v[i] / bc2;
            e.value.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

double ParamStore::grad_norm() const {
    double s = 0.0;
    for (const auto& [name, e] : entries_) s += sum_sq(e.grad);
    return std::sqrt(s);
}

void ParamStore::add_l2_penalty_grad(double lambda) {
    if (lambda == 0.0) return;
    for (auto& [name, e] : entries_)
        for (size_t i = 0; i < e.value.size(); ++i) e.grad.v[i] += 2.0 * lambda * e.value.v[i];
}

double ParamStore::l2_norm_sq() const {
    double s = 0.0;
    for (const auto& [name, e] : entries_) s += sum_sq(e.value);
    return s;
}

std::uint64_t ParamStore::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* p, size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, e] : entries_) {
        mix_bytes(name.data(), name.size());
        mix_bytes(e.value.v.data(), e.value.size() * sizeof(double));
    }
    return h;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
}

std::int64_t ParamStore::total_values() const {
    std::int64_t n = 0;
    for (const auto& [name, e] : entries_) n += static_cast<std::int64_t>(e.value.size());
    return n;
}

ParamStore ParamStore::clone_values() const {
    ParamStore out;
    for (const auto& [name, e] : entries_) {
        Entry ne;
        ne.value = e.value;
        ne.grad = Tensor2(e.value.rows, e.value.cols);
        ne.m = Tensor2(e.value.rows, e.value.cols);
        ne.v = Tensor2(e.value.rows, e.value.cols);
        out.entries_.emplace(name, std::move(ne));
    }
    return out;
}

}  // namespace lcr::nn
