#include "feddah/array.hpp"

#include <sstream>

#include "feddah/detmath.hpp"

namespace feddah {

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

void require_same_shape(const Array& a, const Array& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                             " vs " + shape_str(b.shape));
    }
}

Array matmul(const Array& a, const Array& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2) {
        throw DimensionError("matmul: operands must be 2-D");
    }
    int m = a.shape[0], k = a.shape[1], k2 = b.shape[0], n = b.shape[1];
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape) +
                             " vs " + shape_str(b.shape));
    }
    Array out({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data.data() + static_cast<size_t>(i) * k;
        double* orow = out.data.data() + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = b.data.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Array matmul_grad_a(const Array& g, const Array& b) {
    // da[i][p] = sum_j g[i][j] * b[p][j]
    int m = g.shape[0], n = g.shape[1], k = b.shape[0];
    Array da({m, k});
    for (int i = 0; i < m; ++i) {
        const double* grow = g.data.data() + static_cast<size_t>(i) * n;
        double* drow = da.data.data() + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double* brow = b.data.data() + static_cast<size_t>(p) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            drow[p] = acc;
        }
    }
    return da;
}

Array matmul_grad_b(const Array& a, const Array& g) {
    // db[p][j] = sum_i a[i][p] * g[i][j]
    int m = a.shape[0], k = a.shape[1], n = g.shape[1];
    Array db({k, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data.data() + static_cast<size_t>(i) * k;
        const double* grow = g.data.data() + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            double* drow = db.data.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
    }
    return db;
}

namespace {

void check_conv_shapes(const Array& input, const Array& kernel, const Array& bias) {
    if (input.shape.size() != 3) throw DimensionError("conv2d: input must be C x H x W");
    if (kernel.shape.size() != 4 || kernel.shape[2] != 3 || kernel.shape[3] != 3) {
        throw DimensionError("conv2d: kernel must be C_out x C_in x 3 x 3");
    }
    if (kernel.shape[1] != input.shape[0]) {
        throw DimensionError("conv2d: input channels " + std::to_string(input.shape[0]) +
                             " do not match kernel " + std::to_string(kernel.shape[1]));
    }
    if (bias.shape.size() != 1 || bias.shape[0] != kernel.shape[0]) {
        throw DimensionError("conv2d: bias length must equal C_out");
    }
}

// Copies a H x W plane into a (H+2) x (W+2) zero-padded buffer.
void pad_plane(const double* src, int h, int w, std::vector<double>& dst) {
    int pw = w + 2;
    std::fill(dst.begin(), dst.end(), 0.0);
    for (int y = 0; y < h; ++y) {
        double* drow = dst.data() + static_cast<size_t>(y + 1) * pw + 1;
        const double* srow = src + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) drow[x] = srow[x];
    }
}

}  // namespace

Array conv2d(const Array& input, const Array& kernel, const Array& bias) {
    check_conv_shapes(input, kernel, bias);
    int ci = input.shape[0], h = input.shape[1], w = input.shape[2];
    int co = kernel.shape[0];
    Array out({co, h, w});
    int pw = w + 2;
    std::vector<std::vector<double>> planes(ci, std::vector<double>(static_cast<size_t>(h + 2) * pw));
    for (int c = 0; c < ci; ++c) {
        pad_plane(input.data.data() + static_cast<size_t>(c) * h * w, h, w, planes[c]);
    }
    for (int o = 0; o < co; ++o) {
        double* oplane = out.data.data() + static_cast<size_t>(o) * h * w;
        double b = bias.data[o];
        for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) oplane[i] = b;
        for (int c = 0; c < ci; ++c) {
            const double* pin = planes[c].data();
            const double* kslice = kernel.data.data() + (static_cast<size_t>(o) * ci + c) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    double kv = kslice[ky * 3 + kx];
                    for (int y = 0; y < h; ++y) {
                        const double* irow = pin + static_cast<size_t>(y + ky) * pw + kx;
                        double* orow = oplane + static_cast<size_t>(y) * w;
                        for (int x = 0; x < w; ++x) orow[x] += kv * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

Array conv2d_grad_input(const Array& g, const Array& kernel, int h, int w) {
    // Full correlation of g with the flipped kernel == conv transpose.
    int co = kernel.shape[0], ci = kernel.shape[1];
    Array din({ci, h, w});
    int pw = w + 2;
    std::vector<std::vector<double>> gpad(co, std::vector<double>(static_cast<size_t>(h + 2) * pw));
    for (int o = 0; o < co; ++o) {
        pad_plane(g.data.data() + static_cast<size_t>(o) * h * w, h, w, gpad[o]);
    }
    for (int c = 0; c < ci; ++c) {
        double* dplane = din.data.data() + static_cast<size_t>(c) * h * w;
        for (int o = 0; o < co; ++o) {
            const double* gp = gpad[o].data();
            const double* kslice = kernel.data.data() + (static_cast<size_t>(o) * ci + c) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    // din[y][x] accumulates g[y + 1 - ky][x + 1 - kx] * k[ky][kx];
                    // with the padded g plane this is gp[(y + 2 - ky)][(x + 2 - kx)].
                    double kv = kslice[ky * 3 + kx];
                    for (int y = 0; y < h; ++y) {
                        const double* grow = gp + static_cast<size_t>(y + 2 - ky) * pw + (2 - kx);
                        double* drow = dplane + static_cast<size_t>(y) * w;
                        for (int x = 0; x < w; ++x) drow[x] += kv * grow[x];
                    }
                }
            }
        }
    }
    return din;
}

Array conv2d_grad_kernel(const Array& g, const Array& input, int c_out) {
    int ci = input.shape[0], h = input.shape[1], w = input.shape[2];
    Array dk({c_out, ci, 3, 3});
    int pw = w + 2;
    std::vector<std::vector<double>> planes(ci, std::vector<double>(static_cast<size_t>(h + 2) * pw));
    for (int c = 0; c < ci; ++c) {
        pad_plane(input.data.data() + static_cast<size_t>(c) * h * w, h, w, planes[c]);
    }
    for (int o = 0; o < c_out; ++o) {
        const double* gplane = g.data.data() + static_cast<size_t>(o) * h * w;
        for (int c = 0; c < ci; ++c) {
            const double* pin = planes[c].data();
            double* kslice = dk.data.data() + (static_cast<size_t>(o) * ci + c) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    double acc = 0.0;
                    for (int y = 0; y < h; ++y) {
                        const double* irow = pin + static_cast<size_t>(y + ky) * pw + kx;
                        const double* grow = gplane + static_cast<size_t>(y) * w;
                        for (int x = 0; x < w; ++x) acc += irow[x] * grow[x];
                    }
                    kslice[ky * 3 + kx] = acc;
                }
            }
        }
    }
    return dk;
}

Array conv2d_grad_bias(const Array& g) {
    int co = g.shape[0], h = g.shape[1], w = g.shape[2];
    Array db({co});
    for (int o = 0; o < co; ++o) {
        const double* gplane = g.data.data() + static_cast<size_t>(o) * h * w;
        double acc = 0.0;
        for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) acc += gplane[i];
        db.data[o] = acc;
    }
    return db;
}

Array relu(const Array& a) {
    Array out(a.shape);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] > 0.0 ? a.data[i] : 0.0;
    return out;
}

Array relu_grad(const Array& g, const Array& input) {
    Array out(g.shape);
    for (size_t i = 0; i < g.size(); ++i) out.data[i] = input.data[i] > 0.0 ? g.data[i] : 0.0;
    return out;
}

Array sigmoid(const Array& a) {
    Array out(a.shape);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = det_sigmoid(a.data[i]);
    return out;
}

Array sigmoid_grad(const Array& g, const Array& output) {
    Array out(g.shape);
    for (size_t i = 0; i < g.size(); ++i) {
        out.data[i] = g.data[i] * output.data[i] * (1.0 - output.data[i]);
    }
    return out;
}

namespace {

// Scalar operands broadcast against any shape; otherwise shapes must match.
template <typename F>
Array zip(const Array& a, const Array& b, const char* op, F f) {
    if (a.is_scalar() && !b.is_scalar()) {
        Array out(b.shape);
        for (size_t i = 0; i < b.size(); ++i) out.data[i] = f(a.data[0], b.data[i]);
        return out;
    }
    if (b.is_scalar() && !a.is_scalar()) {
        Array out(a.shape);
        for (size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i], b.data[0]);
        return out;
    }
    require_same_shape(a, b, op);
    Array out(a.shape);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
    return out;
}

}  // namespace

Array add(const Array& a, const Array& b) {
    return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Array sub(const Array& a, const Array& b) {
    return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Array mul(const Array& a, const Array& b) {
    return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Array square(const Array& a) {
    Array out(a.shape);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * a.data[i];
    return out;
}

Array scale(const Array& a, double c) {
    Array out(a.shape);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * c;
    return out;
}

double sum(const Array& a) {
    double acc = 0.0;
    for (double v : a.data) acc += v;
    return acc;
}

double l2_squared(const Array& a, const Array& b) {
    require_same_shape(a, b, "l2_squared");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace feddah
