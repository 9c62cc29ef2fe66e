#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "feddah/errors.hpp"

namespace feddah {

// Dense row-major f64 array. The universal value type of the kernel.
struct Array {
    std::vector<int> shape;
    std::vector<double> data;

    Array() = default;
    explicit Array(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0) {}
    Array(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape)) {
            throw DimensionError("array data length does not match shape");
        }
    }

    static size_t count(const std::vector<int>& shape) {
        size_t n = 1;
        for (int e : shape) {
            if (e <= 0) throw DimensionError("non-positive shape extent");
            n *= static_cast<size_t>(e);
        }
        return n;
    }

    static Array scalar(double v) { return Array({1}, {v}); }
    static Array zeros_like(const Array& a) { return Array(a.shape); }

    size_t size() const { return data.size(); }
    bool same_shape(const Array& o) const { return shape == o.shape; }
    bool is_scalar() const { return data.size() == 1; }

    double& at(size_t i) { return data[i]; }
    double at(size_t i) const { return data[i]; }
};

std::string shape_str(const std::vector<int>& shape);
void require_same_shape(const Array& a, const Array& b, const char* op);

// ---- Pure kernels (no autodiff involvement). Fixed reduction orders. ----

// (m x k) * (k x n) -> (m x n)
Array matmul(const Array& a, const Array& b);
// Gradients of matmul: da = g * b^T, db = a^T * g.
Array matmul_grad_a(const Array& g, const Array& b);
Array matmul_grad_b(const Array& a, const Array& g);

// input (C_in x H x W), kernel (C_out x C_in x 3 x 3), bias (C_out);
// stride 1, zero padding 1, so the spatial size is preserved.
Array conv2d(const Array& input, const Array& kernel, const Array& bias);
Array conv2d_grad_input(const Array& g, const Array& kernel, int h, int w);
Array conv2d_grad_kernel(const Array& g, const Array& input, int c_out);
Array conv2d_grad_bias(const Array& g);

Array relu(const Array& a);
Array relu_grad(const Array& g, const Array& input);
Array sigmoid(const Array& a);
Array sigmoid_grad(const Array& g, const Array& output);
Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array square(const Array& a);
Array scale(const Array& a, double c);
double sum(const Array& a);

// Sum over all entries of (a - b)^2.
double l2_squared(const Array& a, const Array& b);

}  // namespace feddah
