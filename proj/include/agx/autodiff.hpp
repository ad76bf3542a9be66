#pragma once
// Reverse-mode automatic differentiation over Tensor values.
//
// Define-by-run: every op allocates a Node that remembers its parents and a
// pull function that routes the node's gradient into them. backward() does an
// iterative topological sort from the loss node and runs the pulls in reverse.
// The op set is exactly what the two-branch classifier needs: stride-2 3x3
// convolution, ReLU, global average pooling, dot products, sigmoid, clamped
// log terms, CAM aggregation, min-max normalization and the residual gate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "agx/error.hpp"
#include "agx/tensor.hpp"

namespace agx::ad {

struct Node;
using Value = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;  // allocated by backward()
    std::vector<Value> parents;
    std::function<void(Node&)> pull;  // scatter this->grad into parents
    bool needs_grad = false;
};

inline Value constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    return n;
}

// Leaf with gradient tracking (model parameter or probed input).
inline Value param(Tensor v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->needs_grad = true;
    return n;
}

inline Value make_op(Tensor val, std::vector<Value> parents, std::function<void(Node&)> pull) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->needs_grad) n->needs_grad = true;
    if (n->needs_grad) n->pull = std::move(pull);
    return n;
}

inline double scalar(const Value& v) {
    if (v->val.size() != 1) throw Error("autodiff: node is not a scalar");
    return v->val[0];
}

// ---------------------------------------------------------------------------
// elementwise and reduction ops
// ---------------------------------------------------------------------------

inline Value add(const Value& a, const Value& b) {
    if (!a->val.same_shape(b->val)) throw Error("add: shape mismatch");
    Tensor out = a->val;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->val[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            if (n.parents[0]->needs_grad) n.parents[0]->grad[i] += n.grad[i];
            if (n.parents[1]->needs_grad) n.parents[1]->grad[i] += n.grad[i];
        }
    });
}

inline Value add_n(std::vector<Value> terms) {
    if (terms.empty()) throw Error("add_n: empty term list");
    Tensor out = terms[0]->val;
    for (std::size_t t = 1; t < terms.size(); ++t) {
        if (!terms[t]->val.same_shape(out)) throw Error("add_n: shape mismatch");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += terms[t]->val[i];
    }
    return make_op(std::move(out), std::move(terms), [](Node& n) {
        for (auto& p : n.parents) {
            if (!p->needs_grad) continue;
            for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        }
    });
}

inline Value scale(const Value& a, double c) {
    Tensor out = a->val;
    for (auto& v : out.raw()) v *= c;
    return make_op(std::move(out), {a}, [c](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += c * n.grad[i];
    });
}

inline Value relu(const Value& a) {
    Tensor out = a->val;
    for (auto& v : out.raw()) v = v > 0.0 ? v : 0.0;
    return make_op(std::move(out), {a}, [](Node& n) {
        const Tensor& x = n.parents[0]->val;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (x[i] > 0.0) n.parents[0]->grad[i] += n.grad[i];
    });
}

inline double sigmoid_scalar(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline Value sigmoid(const Value& a) {
    Tensor out = a->val;
    for (auto& v : out.raw()) v = sigmoid_scalar(v);
    return make_op(std::move(out), {a}, [](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            double s = n.val[i];
            n.parents[0]->grad[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

inline Value dot(const Value& a, const Value& b) {
    if (a->val.size() != b->val.size()) throw Error("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a->val.size(); ++i) s += a->val[i] * b->val[i];
    return make_op(Tensor::scalar(s), {a, b}, [](Node& n) {
        double g = n.grad[0];
        const Tensor& av = n.parents[0]->val;
        const Tensor& bv = n.parents[1]->val;
        for (std::size_t i = 0; i < av.size(); ++i) {
            if (n.parents[0]->needs_grad) n.parents[0]->grad[i] += g * bv[i];
            if (n.parents[1]->needs_grad) n.parents[1]->grad[i] += g * av[i];
        }
    });
}

// -ln(p) with p clamped to [eps, 1-eps]; gradient passes through the clamp.
inline Value neg_log(const Value& p, double eps) {
    Tensor out = p->val;
    for (auto& v : out.raw()) v = -std::log(std::clamp(v, eps, 1.0 - eps));
    return make_op(std::move(out), {p}, [eps](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            double pc = std::clamp(n.parents[0]->val[i], eps, 1.0 - eps);
            n.parents[0]->grad[i] += n.grad[i] * (-1.0 / pc);
        }
    });
}

// -ln(1-p), same clamping convention.
inline Value neg_log1m(const Value& p, double eps) {
    Tensor out = p->val;
    for (auto& v : out.raw()) v = -std::log(std::clamp(1.0 - v, eps, 1.0 - eps));
    return make_op(std::move(out), {p}, [eps](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            double qc = std::clamp(1.0 - n.parents[0]->val[i], eps, 1.0 - eps);
            n.parents[0]->grad[i] += n.grad[i] * (1.0 / qc);
        }
    });
}

// ---------------------------------------------------------------------------
// network-shaped ops
// ---------------------------------------------------------------------------

namespace detail {
// Flat index into a 3 x 3 x Cin x Cout kernel tensor.
inline std::size_t widx(std::size_t u, std::size_t v, std::size_t ci, std::size_t co,
                        std::size_t cin, std::size_t cout) {
    return ((u * 3 + v) * cin + ci) * cout + co;
}
}  // namespace detail

// 3x3 convolution, stride 2, zero padding 1. Input H x W x Cin, kernel
// 3 x 3 x Cin x Cout, bias Cout, output ceil(H/2) x ceil(W/2) x Cout.
inline Value conv3x3s2(const Value& x, const Value& w, const Value& b) {
    const Tensor& xv = x->val;
    const Tensor& wv = w->val;
    if (xv.rank() != 3 || wv.rank() != 4 || wv.dim(0) != 3 || wv.dim(1) != 3)
        throw Error("conv3x3s2: bad ranks");
    const std::size_t H = xv.dim(0), W = xv.dim(1), Cin = xv.dim(2), Cout = wv.dim(3);
    if (wv.dim(2) != Cin) throw Error("conv3x3s2: channel mismatch");
    if (b->val.size() != Cout) throw Error("conv3x3s2: bias length mismatch");
    const std::size_t Ho = (H + 1) / 2, Wo = (W + 1) / 2;

    Tensor out({Ho, Wo, Cout});
    for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
            for (std::size_t co = 0; co < Cout; ++co) out.at(i, j, co) = b->val[co];
            for (std::size_t u = 0; u < 3; ++u) {
                std::ptrdiff_t p = 2 * static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(u) - 1;
                if (p < 0 || p >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t v = 0; v < 3; ++v) {
                    std::ptrdiff_t q = 2 * static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(v) - 1;
                    if (q < 0 || q >= static_cast<std::ptrdiff_t>(W)) continue;
                    for (std::size_t ci = 0; ci < Cin; ++ci) {
                        double xval = xv.at(static_cast<std::size_t>(p), static_cast<std::size_t>(q), ci);
                        for (std::size_t co = 0; co < Cout; ++co)
                            out.at(i, j, co) += xval * wv[detail::widx(u, v, ci, co, Cin, Cout)];
                    }
                }
            }
        }
    return make_op(std::move(out), {x, w, b}, [H, W, Cin, Cout, Ho, Wo](Node& n) {
        const Tensor& xv = n.parents[0]->val;
        const Tensor& wv = n.parents[1]->val;
        const bool gx = n.parents[0]->needs_grad;
        const bool gw = n.parents[1]->needs_grad;
        const bool gb = n.parents[2]->needs_grad;
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j)
                for (std::size_t co = 0; co < Cout; ++co) {
                    double g = n.grad.at(i, j, co);
                    if (g == 0.0) continue;
                    if (gb) n.parents[2]->grad[co] += g;
                    for (std::size_t u = 0; u < 3; ++u) {
                        std::ptrdiff_t p = 2 * static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(u) - 1;
                        if (p < 0 || p >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t v = 0; v < 3; ++v) {
                            std::ptrdiff_t q = 2 * static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(v) - 1;
                            if (q < 0 || q >= static_cast<std::ptrdiff_t>(W)) continue;
                            std::size_t pi = static_cast<std::size_t>(p), qi = static_cast<std::size_t>(q);
                            for (std::size_t ci = 0; ci < Cin; ++ci) {
                                std::size_t k = detail::widx(u, v, ci, co, Cin, Cout);
                                if (gw) n.parents[1]->grad[k] += g * xv.at(pi, qi, ci);
                                if (gx) n.parents[0]->grad[(pi * W + qi) * Cin + ci] += g * wv[k];
                            }
                        }
                    }
                }
    });
}

// Global average pooling: H x W x C -> C.
inline Value gap(const Value& x) {
    const Tensor& xv = x->val;
    if (xv.rank() != 3) throw Error("gap: expected rank-3 tensor");
    const std::size_t H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
    const double inv = 1.0 / static_cast<double>(H * W);
    Tensor out({C});
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
            for (std::size_t c = 0; c < C; ++c) out[c] += xv.at(i, j, c) * inv;
    return make_op(std::move(out), {x}, [H, W, C, inv](Node& n) {
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
                for (std::size_t c = 0; c < C; ++c)
                    n.parents[0]->grad[(i * W + j) * C + c] += n.grad[c] * inv;
    });
}

// Class activation map: sum_c w[c] * f(:,:,c). Output S1 x S2.
inline Value cam(const Value& f, const Value& w) {
    const Tensor& fv = f->val;
    if (fv.rank() != 3) throw Error("cam: expected rank-3 feature map");
    const std::size_t H = fv.dim(0), W = fv.dim(1), C = fv.dim(2);
    if (w->val.size() != C) throw Error("cam: head length does not match channel count");
    Tensor out({H, W});
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) s += w->val[c] * fv.at(i, j, c);
            out.at(i, j) = s;
        }
    return make_op(std::move(out), {f, w}, [H, W, C](Node& n) {
        const Tensor& fv = n.parents[0]->val;
        const Tensor& wv = n.parents[1]->val;
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                double g = n.grad.at(i, j);
                if (g == 0.0) continue;
                for (std::size_t c = 0; c < C; ++c) {
                    if (n.parents[0]->needs_grad) n.parents[0]->grad[(i * W + j) * C + c] += g * wv[c];
                    if (n.parents[1]->needs_grad) n.parents[1]->grad[c] += g * fv.at(i, j, c);
                }
            }
    });
}

// Min-max normalization to [0,1]. A constant input maps to all zeros.
// Backward treats the argmin/argmax locations as fixed (first occurrence).
inline Value minmax_norm(const Value& x) {
    const Tensor& xv = x->val;
    std::size_t imin = 0, imax = 0;
    for (std::size_t i = 1; i < xv.size(); ++i) {
        if (xv[i] < xv[imin]) imin = i;
        if (xv[i] > xv[imax]) imax = i;
    }
    const double m = xv[imin], M = xv[imax], r = M - m;
    Tensor out = xv;
    if (r == 0.0) {
        for (auto& v : out.raw()) v = 0.0;
    } else {
        for (auto& v : out.raw()) v = (v - m) / r;
    }
    return make_op(std::move(out), {x}, [imin, imax, m, r](Node& n) {
        if (r == 0.0) return;  // flat input: zero subgradient
        double gsum = 0.0, gysum = 0.0;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            gsum += n.grad[i];
            gysum += n.grad[i] * (n.parents[0]->val[i] - m);
        }
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i] / r;
        n.parents[0]->grad[imin] += gysum / (r * r) - gsum / r;
        n.parents[0]->grad[imax] -= gysum / (r * r);
    });
}

// Residual attention gate: out = (1 + beta*h) ⊙ f, h broadcast over channels.
inline Value residual_gate(const Value& f, const Value& h, double beta) {
    const Tensor& fv = f->val;
    const Tensor& hv = h->val;
    if (fv.rank() != 3 || hv.rank() != 2 || fv.dim(0) != hv.dim(0) || fv.dim(1) != hv.dim(1))
        throw Error("residual_gate: spatial dims of H do not match the feature map");
    const std::size_t H = fv.dim(0), W = fv.dim(1), C = fv.dim(2);
    Tensor out({H, W, C});
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            double g = 1.0 + beta * hv.at(i, j);
            for (std::size_t c = 0; c < C; ++c) out.at(i, j, c) = g * fv.at(i, j, c);
        }
    return make_op(std::move(out), {f, h}, [H, W, C, beta](Node& n) {
        const Tensor& fv = n.parents[0]->val;
        const Tensor& hv = n.parents[1]->val;
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                double gate = 1.0 + beta * hv.at(i, j);
                double dh = 0.0;
                for (std::size_t c = 0; c < C; ++c) {
                    double g = n.grad.at(i, j, c);
                    if (n.parents[0]->needs_grad) n.parents[0]->grad[(i * W + j) * C + c] += g * gate;
                    dh += g * fv.at(i, j, c);
                }
                if (n.parents[1]->needs_grad) n.parents[1]->grad[i * W + j] += beta * dh;
            }
    });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

inline void backward(const Value& root) {
    if (root->val.size() != 1) throw Error("backward: root must be a scalar loss");
    // Iterative post-order DFS over the needs_grad subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    if (root->needs_grad) stack.push_back({root.get(), 0});
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next == 0) {
            if (seen.count(node)) {
                stack.pop_back();
                continue;
            }
            seen.insert(node);
        }
        bool descended = false;
        while (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->needs_grad && !seen.count(p)) {
                stack.push_back({p, 0});
                descended = true;
                break;
            }
        }
        if (!descended && next >= node->parents.size()) {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->grad = Tensor::zeros_like(n->val);
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->pull) (*it)->pull(**it);
}

}  // namespace agx::ad
