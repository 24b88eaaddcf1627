#pragma once

#include <string>
#include <vector>

#include "rxpp/tape.hpp"
#include "rxpp/tensor.hpp"
#include "rxpp/util.hpp"

namespace rxpp {

// Named trainable tensors with persistent gradient accumulators. EMA shadow
// buffers live outside this store on purpose: they are never optimized.
class ParamStore {
  public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
        bool decay;  // decoupled weight decay applies (weight matrices only)
    };

    int add(std::string name, Tensor init, bool decay) {
        Entry e;
        e.name = std::move(name);
        e.grad = init;
        e.grad.zero();
        e.value = std::move(init);
        e.decay = decay;
        entries_.push_back(std::move(e));
        return static_cast<int>(entries_.size()) - 1;
    }

    Entry& operator[](int idx) { return entries_[idx]; }
    const Entry& operator[](int idx) const { return entries_[idx]; }
    size_t count() const { return entries_.size(); }

    size_t total_scalars() const {
        size_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

    void zero_grads() {
        for (auto& e : entries_) e.grad.zero();
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

  private:
    std::vector<Entry> entries_;
};

// Per-tape view of the store: lazily creates one leaf per parameter so a
// micro-batch shares parameter nodes, then flushes tape grads back.
class ParamBinding {
  public:
    ParamBinding(Tape& tape, ParamStore& store)
        : tape_(tape), store_(store), vars_(store.count(), Var{}) {}

    Var operator()(int idx) {
        if (idx < 0) throw std::invalid_argument("ParamBinding: unset parameter");
        if (static_cast<size_t>(idx) >= vars_.size()) vars_.resize(store_.count(), Var{});
        if (!vars_[idx].ok()) vars_[idx] = tape_.leaf(store_[idx].value, true);
        return vars_[idx];
    }

    // grad_accum += scale * tape_grad for every bound parameter
    void accumulate_grads(double scale = 1.0) {
        for (size_t i = 0; i < vars_.size(); ++i) {
            if (!vars_[i].ok()) continue;
            const Tensor& tg = tape_.grad(vars_[i]);
            Tensor& dst = store_[static_cast<int>(i)].grad;
            for (size_t j = 0; j < dst.size(); ++j) dst.data[j] += scale * tg.data[j];
        }
    }

    Tape& tape() { return tape_; }

  private:
    Tape& tape_;
    ParamStore& store_;
    std::vector<Var> vars_;
};

// Seeded Gaussian init scaled by 1/sqrt(fan_in).
inline Tensor init_matrix(size_t rows, size_t cols, uint64_t seed) {
    Tensor t = Tensor::mat(rows, cols);
    Rng rng(seed);
    double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& d : t.data) d = rng.gaussian() * s;
    return t;
}

inline Tensor init_vector(size_t n, uint64_t seed, double scale) {
    Tensor t = Tensor::vec(n);
    Rng rng(seed);
    for (double& d : t.data) d = rng.gaussian() * scale;
    return t;
}

inline Tensor ones(size_t n) {
    Tensor t = Tensor::vec(n);
    for (double& d : t.data) d = 1.0;
    return t;
}

}  // namespace rxpp
