#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace rxpp {

// Dense rank-1/rank-2 tensor of doubles, row-major.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor vec(size_t n) {
        Tensor t;
        t.shape = {n};
        t.data.assign(n, 0.0);
        return t;
    }
    static Tensor mat(size_t rows, size_t cols) {
        Tensor t;
        t.shape = {rows, cols};
        t.data.assign(rows * cols, 0.0);
        return t;
    }
    static Tensor scalar(double v) {
        Tensor t = vec(1);
        t.data[0] = v;
        return t;
    }
    static Tensor from(std::initializer_list<double> vals) {
        Tensor t;
        t.shape = {vals.size()};
        t.data.assign(vals.begin(), vals.end());
        return t;
    }

    size_t rank() const { return shape.size(); }
    size_t size() const { return data.size(); }
    size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(size_t i) { return data[i]; }
    double at(size_t i) const { return data[i]; }
    double& at(size_t r, size_t c) { return data[r * shape[1] + c]; }
    double at(size_t r, size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor& zero() {
        data.assign(data.size(), 0.0);
        return *this;
    }
};

inline void check_vec(const Tensor& t, const char* where) {
    if (t.rank() != 1) throw std::invalid_argument(std::string(where) + ": expected vector");
}
inline void check_mat(const Tensor& t, const char* where) {
    if (t.rank() != 2) throw std::invalid_argument(std::string(where) + ": expected matrix");
}

}  // namespace rxpp
