#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "sgs/common.hpp"
#include "sgs/rng.hpp"

namespace sgs {

// Dense multidimensional array of doubles, row-major. All network math
// runs at 64-bit precision so analytic gradients can be checked against
// finite differences at tight tolerance.
struct Tensor {
    std::vector<i64> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<i64> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }
    Tensor(std::vector<i64> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != static_cast<size_t>(numel_of(shape)))
            throw ConfigError("tensor shape/data mismatch");
    }

    static i64 numel_of(const std::vector<i64>& s) {
        i64 n = 1;
        for (i64 d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<i64> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<i64> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor randn(std::vector<i64> s, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(s));
        for (double& x : t.data) x = rng.normal(0.0, stddev);
        return t;
    }

    i64 numel() const { return static_cast<i64>(data.size()); }
    i64 dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    double& operator[](i64 i) { return data[static_cast<size_t>(i)]; }
    double operator[](i64 i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void add_(const Tensor& o) {
        for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    }
    void scale_(double s) {
        for (double& x : data) x *= s;
    }
    void zero_() { std::fill(data.begin(), data.end(), 0.0); }

    double norm2() const {
        double s = 0;
        for (double x : data) s += x * x;
        return std::sqrt(s);
    }

    bool all_finite() const {
        for (double x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + "]";
    }
};

}  // namespace sgs
