#include "feddah/tape.hpp"

#include <algorithm>

namespace feddah {

NodeId Tape::push(Array value, bool requires_grad,
                  std::function<void(Tape&, const Array&)> backprop) {
    nodes_.push_back(Node{std::move(value), requires_grad, std::move(backprop)});
    grads_.emplace_back();
    return static_cast<NodeId>(nodes_.size()) - 1;
}

NodeId Tape::leaf(Array v) { return push(std::move(v), true, nullptr); }

NodeId Tape::constant(Array v) { return push(std::move(v), false, nullptr); }

const Array& Tape::grad(NodeId id) {
    if (grads_[id].data.empty()) grads_[id] = Array::zeros_like(nodes_[id].value);
    return grads_[id];
}

void Tape::accumulate(NodeId id, const Array& g) {
    if (!nodes_[id].requires_grad) return;
    Array& acc = grads_[id];
    if (acc.data.empty()) acc = Array::zeros_like(nodes_[id].value);
    for (size_t i = 0; i < g.size(); ++i) acc.data[i] += g.data[i];
}

void Tape::accumulate_scaled(NodeId id, const Array& g, double c) {
    if (!nodes_[id].requires_grad) return;
    Array& acc = grads_[id];
    if (acc.data.empty()) acc = Array::zeros_like(nodes_[id].value);
    for (size_t i = 0; i < g.size(); ++i) acc.data[i] += c * g.data[i];
}

void Tape::zero_grads() {
    for (auto& g : grads_) {
        std::fill(g.data.begin(), g.data.end(), 0.0);
    }
}

void Tape::backward(NodeId root) {
    if (!nodes_[root].value.is_scalar()) {
        throw ContractError("backward: loss must be a scalar node");
    }
    Array seed = Array::zeros_like(nodes_[root].value);
    seed.data[0] = 1.0;
    if (grads_[root].data.empty()) grads_[root] = std::move(seed);
    else grads_[root].data[0] += 1.0;
    for (NodeId id = root; id >= 0; --id) {
        const Node& n = nodes_[id];
        if (!n.backprop || grads_[id].data.empty()) continue;
        bool all_zero = true;
        for (double v : grads_[id].data) {
            if (v != 0.0) { all_zero = false; break; }
        }
        if (all_zero) continue;
        n.backprop(*this, grads_[id]);
    }
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    Array out = feddah::matmul(value(a), value(b));
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Array& g) {
        if (t.requires_grad(a)) t.accumulate(a, matmul_grad_a(g, t.value(b)));
        if (t.requires_grad(b)) t.accumulate(b, matmul_grad_b(t.value(a), g));
    });
}

NodeId Tape::conv2d(NodeId input, NodeId kernel, NodeId bias) {
    Array out = feddah::conv2d(value(input), value(kernel), value(bias));
    bool rg = requires_grad(input) || requires_grad(kernel) || requires_grad(bias);
    return push(std::move(out), rg, [input, kernel, bias](Tape& t, const Array& g) {
        if (t.requires_grad(input)) {
            const Array& in = t.value(input);
            t.accumulate(input, conv2d_grad_input(g, t.value(kernel), in.shape[1], in.shape[2]));
        }
        if (t.requires_grad(kernel)) {
            t.accumulate(kernel, conv2d_grad_kernel(g, t.value(input), t.value(kernel).shape[0]));
        }
        if (t.requires_grad(bias)) t.accumulate(bias, conv2d_grad_bias(g));
    });
}

NodeId Tape::relu(NodeId x) {
    Array out = feddah::relu(value(x));
    return push(std::move(out), requires_grad(x), [x](Tape& t, const Array& g) {
        t.accumulate(x, relu_grad(g, t.value(x)));
    });
}

NodeId Tape::sigmoid(NodeId x) {
    Array out = feddah::sigmoid(value(x));
    NodeId id = push(std::move(out), requires_grad(x), nullptr);
    nodes_[id].backprop = [x, id](Tape& t, const Array& g) {
        t.accumulate(x, sigmoid_grad(g, t.value(id)));
    };
    return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
    Array out = feddah::add(value(a), value(b));
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Array& g) {
        auto reduce_to = [&](NodeId in) {
            if (!t.requires_grad(in)) return;
            const Array& v = t.value(in);
            if (v.is_scalar() && g.size() > 1) {
                t.accumulate(in, Array::scalar(feddah::sum(g)));
            } else {
                t.accumulate(in, g);
            }
        };
        reduce_to(a);
        reduce_to(b);
    });
}

NodeId Tape::sub(NodeId a, NodeId b) {
    Array out = feddah::sub(value(a), value(b));
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Array& g) {
        if (t.requires_grad(a)) {
            const Array& v = t.value(a);
            if (v.is_scalar() && g.size() > 1) t.accumulate(a, Array::scalar(feddah::sum(g)));
            else t.accumulate(a, g);
        }
        if (t.requires_grad(b)) {
            const Array& v = t.value(b);
            if (v.is_scalar() && g.size() > 1) t.accumulate(b, Array::scalar(-feddah::sum(g)));
            else t.accumulate_scaled(b, g, -1.0);
        }
    });
}

NodeId Tape::mul(NodeId a, NodeId b) {
    Array out = feddah::mul(value(a), value(b));
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Array& g) {
        auto side = [&](NodeId target, NodeId other) {
            if (!t.requires_grad(target)) return;
            const Array& tv = t.value(target);
            const Array& ov = t.value(other);
            if (tv.is_scalar() && g.size() > 1) {
                double acc = 0.0;
                for (size_t i = 0; i < g.size(); ++i) acc += g.data[i] * ov.data[i];
                t.accumulate(target, Array::scalar(acc));
            } else if (ov.is_scalar() && g.size() > 1) {
                t.accumulate_scaled(target, g, ov.data[0]);
            } else {
                t.accumulate(target, feddah::mul(g, ov));
            }
        };
        side(a, b);
        side(b, a);
    });
}

NodeId Tape::square(NodeId x) {
    Array out = feddah::square(value(x));
    return push(std::move(out), requires_grad(x), [x](Tape& t, const Array& g) {
        const Array& v = t.value(x);
        Array dx(v.shape);
        for (size_t i = 0; i < v.size(); ++i) dx.data[i] = 2.0 * v.data[i] * g.data[i];
        t.accumulate(x, dx);
    });
}

NodeId Tape::scale(NodeId x, double c) {
    Array out = feddah::scale(value(x), c);
    return push(std::move(out), requires_grad(x), [x, c](Tape& t, const Array& g) {
        t.accumulate_scaled(x, g, c);
    });
}

NodeId Tape::add_scalar(NodeId x, double c) {
    Array out = value(x);
    for (double& v : out.data) v += c;
    return push(std::move(out), requires_grad(x), [x](Tape& t, const Array& g) {
        t.accumulate(x, g);
    });
}

NodeId Tape::sum(NodeId x) {
    Array out = Array::scalar(feddah::sum(value(x)));
    return push(std::move(out), requires_grad(x), [x](Tape& t, const Array& g) {
        Array dx(t.value(x).shape);
        std::fill(dx.data.begin(), dx.data.end(), g.data[0]);
        t.accumulate(x, dx);
    });
}

NodeId Tape::div(NodeId a, NodeId b) {
    const Array& av = value(a);
    const Array& bv = value(b);
    if (!av.is_scalar() || !bv.is_scalar()) {
        throw DimensionError("div: only scalar operands are supported");
    }
    Array out = Array::scalar(av.data[0] / bv.data[0]);
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Array& g) {
        double num = t.value(a).data[0];
        double den = t.value(b).data[0];
        if (t.requires_grad(a)) t.accumulate(a, Array::scalar(g.data[0] / den));
        if (t.requires_grad(b)) t.accumulate(b, Array::scalar(-g.data[0] * num / (den * den)));
    });
}

NodeId Tape::concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ContractError("concat: no parts");
    size_t total = 0;
    bool rg = false;
    for (NodeId p : parts) {
        if (value(p).shape.size() != 1) throw DimensionError("concat: parts must be 1-D");
        total += value(p).size();
        rg = rg || requires_grad(p);
    }
    Array out({static_cast<int>(total)});
    size_t off = 0;
    for (NodeId p : parts) {
        const Array& v = value(p);
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
        off += v.size();
    }
    return push(std::move(out), rg, [parts](Tape& t, const Array& g) {
        size_t off = 0;
        for (NodeId p : parts) {
            const Array& v = t.value(p);
            if (t.requires_grad(p)) {
                Array dp(v.shape);
                std::copy(g.data.begin() + off, g.data.begin() + off + v.size(), dp.data.begin());
                t.accumulate(p, dp);
            }
            off += v.size();
        }
    });
}

NodeId Tape::reshape(NodeId x, std::vector<int> shape) {
    if (Array::count(shape) != value(x).size()) {
        throw DimensionError("reshape: element count mismatch");
    }
    Array out(shape, value(x).data);
    return push(std::move(out), requires_grad(x), [x](Tape& t, const Array& g) {
        Array dx(t.value(x).shape, g.data);
        t.accumulate(x, dx);
    });
}

NodeId Tape::select_channel(NodeId x, int c) {
    const Array& v = value(x);
    if (v.shape.size() != 3) throw DimensionError("select_channel: expected C x H x W");
    if (c < 0 || c >= v.shape[0]) throw ContractError("select_channel: channel out of range");
    int h = v.shape[1], w = v.shape[2];
    size_t plane = static_cast<size_t>(h) * w;
    Array out({h, w});
    std::copy(v.data.begin() + c * plane, v.data.begin() + (c + 1) * plane, out.data.begin());
    return push(std::move(out), requires_grad(x), [x, c, plane](Tape& t, const Array& g) {
        Array dx = Array::zeros_like(t.value(x));
        std::copy(g.data.begin(), g.data.end(), dx.data.begin() + c * plane);
        t.accumulate(x, dx);
    });
}

NodeId Tape::assemble_kernel(const std::vector<NodeId>& slices, int n_out, int f) {
    int n_in = static_cast<int>(slices.size());
    if (n_in == 0) throw ContractError("assemble_kernel: no slices");
    size_t slice_len = static_cast<size_t>(f) * n_out * f;
    bool rg = false;
    for (NodeId s : slices) {
        if (value(s).size() != slice_len) {
            throw DimensionError("assemble_kernel: slice length mismatch");
        }
        rg = rg || requires_grad(s);
    }
    Array out({n_out, n_in, f, f});
    for (int i = 0; i < n_in; ++i) {
        const Array& sv = value(slices[i]);
        for (int r = 0; r < f; ++r) {
            for (int co = 0; co < n_out; ++co) {
                for (int c = 0; c < f; ++c) {
                    out.data[((static_cast<size_t>(co) * n_in + i) * f + r) * f + c] =
                        sv.data[(static_cast<size_t>(r) * n_out + co) * f + c];
                }
            }
        }
    }
    return push(std::move(out), rg, [slices, n_out, f, n_in](Tape& t, const Array& g) {
        for (int i = 0; i < n_in; ++i) {
            if (!t.requires_grad(slices[i])) continue;
            Array ds({f * n_out * f});
            for (int r = 0; r < f; ++r) {
                for (int co = 0; co < n_out; ++co) {
                    for (int c = 0; c < f; ++c) {
                        ds.data[(static_cast<size_t>(r) * n_out + co) * f + c] =
                            g.data[((static_cast<size_t>(co) * n_in + i) * f + r) * f + c];
                    }
                }
            }
            t.accumulate(slices[i], ds);
        }
    });
}

NodeId Tape::l2s(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "l2_squared");
    return sum(square(sub(a, b)));
}

}  // namespace feddah
