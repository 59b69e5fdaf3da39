#include "pkt/core/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pkt/core/errors.hpp"

namespace pkt {

using kernels::Trans;

namespace {

std::string pair_str(const char* op, const Array& a, const Array& b) {
    return std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " are incompatible";
}

void require_matrix(const char* op, const Array& a) {
    if (a.rank() > 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

}  // namespace

void Graph::check(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw std::out_of_range("Graph: invalid Var handle");
}

Var Graph::push(Array value, bool requires_grad, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::leaf(Array value, bool requires_grad) { return push(std::move(value), requires_grad, nullptr); }

Var Graph::borrow(const Array& value, bool requires_grad) {
    Node n;
    n.external = &value;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Array& Graph::value(Var v) const {
    check(v);
    return val(v.id);
}

Array& Graph::grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Array::zeros_like(val(id));
        n.has_grad = true;
    }
    return n.grad;
}

const Array& Graph::grad(Var v) {
    check(v);
    return grad_slot(v.id);
}

void Graph::zero_grad() {
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad = Array();
    }
}

void Graph::backward(Var loss) {
    check(loss);
    if (val(loss.id).size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(val(loss.id).shape()));
    }
    zero_grad();
    grad_slot(loss.id)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.requires_grad && n.has_grad && n.backward) {
            BackwardFn& fn = n.backward;
            fn(*this, id);
        }
    }
}

// ---------------------------------------------------------------------------
// Linear algebra

Var Graph::matmul(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = val(a.id);
    const Array& bv = val(b.id);
    require_matrix("matmul", av);
    require_matrix("matmul", bv);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k) throw ShapeError(pair_str("matmul", av, bv));
    Array out({m, n});
    kernels::gemm(Trans::kNone, Trans::kNone, m, n, k, av.ptr(), bv.ptr(), out.ptr(), false);
    const bool rg = needs(a.id) || needs(b.id);
    return push(std::move(out), rg, [a = a.id, b = b.id, m, n, k](Graph& g, std::size_t self) {
        const Array& dc = g.upstream(self);
        if (g.needs(a)) {
            kernels::gemm(Trans::kNone, Trans::kTranspose, m, k, n, dc.ptr(), g.val(b).ptr(), g.grad_slot(a).ptr(),
                          true);
        }
        if (g.needs(b)) {
            kernels::gemm(Trans::kTranspose, Trans::kNone, k, n, m, g.val(a).ptr(), dc.ptr(), g.grad_slot(b).ptr(),
                          true);
        }
    });
}

Var Graph::matmul_nt(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = val(a.id);
    const Array& bv = val(b.id);
    require_matrix("matmul_nt", av);
    require_matrix("matmul_nt", bv);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    if (bv.cols() != k) throw ShapeError(pair_str("matmul_nt", av, bv));
    Array out({m, n});
    kernels::gemm(Trans::kNone, Trans::kTranspose, m, n, k, av.ptr(), bv.ptr(), out.ptr(), false);
    const bool rg = needs(a.id) || needs(b.id);
    return push(std::move(out), rg, [a = a.id, b = b.id, m, n, k](Graph& g, std::size_t self) {
        const Array& dc = g.upstream(self);
        if (g.needs(a)) {
            kernels::gemm(Trans::kNone, Trans::kNone, m, k, n, dc.ptr(), g.val(b).ptr(), g.grad_slot(a).ptr(), true);
        }
        if (g.needs(b)) {
            kernels::gemm(Trans::kTranspose, Trans::kNone, n, k, m, dc.ptr(), g.val(a).ptr(), g.grad_slot(b).ptr(),
                          true);
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise

Var Graph::add(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = val(a.id);
    const Array& bv = val(b.id);
    if (!av.same_shape(bv)) throw ShapeError(pair_str("add", av, bv));
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const bool rg = needs(a.id) || needs(b.id);
    return push(std::move(out), rg, [a = a.id, b = b.id](Graph& g, std::size_t self) {
        const Array& d = g.upstream(self);
        for (std::size_t p : {a, b}) {
            if (!g.needs(p)) continue;
            Array& gp = g.grad_slot(p);
            for (std::size_t i = 0; i < d.size(); ++i) gp[i] += d[i];
        }
    });
}

Var Graph::add_bias(Var a, Var bias) {
    check(a);
    check(bias);
    const Array& av = val(a.id);
    const Array& bv = val(bias.id);
    require_matrix("add_bias", av);
    const std::size_t m = av.rows(), n = av.cols();
    if (bv.size() != n) throw ShapeError(pair_str("add_bias", av, bv));
    Array out = av;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    const bool rg = needs(a.id) || needs(bias.id);
    return push(std::move(out), rg, [a = a.id, b = bias.id, m, n](Graph& g, std::size_t self) {
        const Array& d = g.upstream(self);
        if (g.needs(a)) {
            Array& ga = g.grad_slot(a);
            for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i];
        }
        if (g.needs(b)) {
            Array& gb = g.grad_slot(b);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += d[i * n + j];
        }
    });
}

Var Graph::mul(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = val(a.id);
    const Array& bv = val(b.id);
    if (!av.same_shape(bv)) throw ShapeError(pair_str("mul", av, bv));
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const bool rg = needs(a.id) || needs(b.id);
    return push(std::move(out), rg, [a = a.id, b = b.id](Graph& g, std::size_t self) {
        const Array& d = g.upstream(self);
        if (g.needs(a)) {
            Array& ga = g.grad_slot(a);
            const Array& bv = g.val(b);
            for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * bv[i];
        }
        if (g.needs(b)) {
            Array& gb = g.grad_slot(b);
            const Array& av = g.val(a);
            for (std::size_t i = 0; i < d.size(); ++i) gb[i] += d[i] * av[i];
        }
    });
}

Var Graph::scale(Var a, double s) {
    check(a);
    Array out = val(a.id);
    for (double& v : out.data()) v *= s;
    return push(std::move(out), needs(a.id), [a = a.id, s](Graph& g, std::size_t self) {
        const Array& d = g.upstream(self);
        Array& ga = g.grad_slot(a);
        for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * s;
    });
}

Var Graph::tanh(Var a) {
    check(a);
    Array out = val(a.id);
    for (double& v : out.data()) v = std::tanh(v);
    return push(std::move(out), needs(a.id), [a = a.id](Graph& g, std::size_t self) {
        const Array& d = g.upstream(self);
        const Array& y = g.val(self);
        Array& ga = g.grad_slot(a);
        for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * (1.0 - y[i] * y[i]);
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var Graph::gelu(Var a) {
    check(a);
    Array out = val(a.id);
    for (double& v : out.data()) {
        const double x = v;
        v = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    }
    return push(std::move(out), needs(a.id), [a = a.id](Graph& g, std::size_t self) {
        const Array& d = g.upstream(self);
        const Array& xv = g.val(a);
        Array& ga = g.grad_slot(a);
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double x = xv[i];
            const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
            const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            ga[i] += d[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization

Var Graph::softmax(Var a, std::size_t causal_offset) {
    check(a);
    const Array& av = val(a.id);
    require_matrix("softmax", av);
    const std::size_t m = av.rows(), n = av.cols();
    Array out(av.shape());
    kernels::softmax_rows(av.ptr(), out.ptr(), m, n, causal_offset);
    return push(std::move(out), needs(a.id), [a = a.id, m, n](Graph& g, std::size_t self) {
        kernels::softmax_rows_backward(g.val(self).ptr(), g.upstream(self).ptr(), g.grad_slot(a).ptr(), m, n, true);
    });
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
    check(x);
    check(gamma);
    check(beta);
    const Array& xv = val(x.id);
    require_matrix("layer_norm", xv);
    const std::size_t m = xv.rows(), n = xv.cols();
    if (val(gamma.id).size() != n || val(beta.id).size() != n) {
        throw ShapeError(pair_str("layer_norm", xv, val(gamma.id)));
    }
    Array out(xv.shape());
    std::vector<double> mean(m), rstd(m);
    kernels::layer_norm_rows(xv.ptr(), val(gamma.id).ptr(), val(beta.id).ptr(), out.ptr(), mean.data(), rstd.data(),
                             m, n, eps);
    const bool rg = needs(x.id) || needs(gamma.id) || needs(beta.id);
    return push(std::move(out), rg,
                [x = x.id, gm = gamma.id, bt = beta.id, m, n, mean = std::move(mean), rstd = std::move(rstd)](
                    Graph& g, std::size_t self) {
                    double* dx = g.needs(x) ? g.grad_slot(x).ptr() : nullptr;
                    double* dg = g.needs(gm) ? g.grad_slot(gm).ptr() : nullptr;
                    double* db = g.needs(bt) ? g.grad_slot(bt).ptr() : nullptr;
                    kernels::layer_norm_rows_backward(g.val(x).ptr(), g.val(gm).ptr(), mean.data(), rstd.data(),
                                                      g.upstream(self).ptr(), dx, dg, db, m, n);
                });
}

// ---------------------------------------------------------------------------
// Indexing

Var Graph::embedding(Var table, std::span<const int> ids) {
    check(table);
    const Array& tv = val(table.id);
    require_matrix("embedding", tv);
    const std::size_t vocab = tv.rows(), d = tv.cols();
    Array out({ids.size(), d});
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab) {
            throw ShapeError("embedding: id " + std::to_string(ids[t]) + " outside table of " +
                             std::to_string(vocab) + " rows");
        }
        std::copy_n(tv.ptr() + static_cast<std::size_t>(ids[t]) * d, d, out.ptr() + t * d);
    }
    return push(std::move(out), needs(table.id),
                [tb = table.id, ids = std::vector<int>(ids.begin(), ids.end()), d](Graph& g, std::size_t self) {
                    const Array& dout = g.upstream(self);
                    Array& gt = g.grad_slot(tb);
                    for (std::size_t t = 0; t < ids.size(); ++t) {
                        double* row = gt.ptr() + static_cast<std::size_t>(ids[t]) * d;
                        for (std::size_t j = 0; j < d; ++j) row[j] += dout[t * d + j];
                    }
                });
}

Var Graph::slice_rows(Var a, std::size_t start, std::size_t count) {
    check(a);
    const Array& av = val(a.id);
    require_matrix("slice_rows", av);
    const std::size_t n = av.cols();
    if (start + count > av.rows()) {
        throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_str(av.shape()));
    }
    Array out({count, n});
    std::copy_n(av.ptr() + start * n, count * n, out.ptr());
    return push(std::move(out), needs(a.id), [a = a.id, start, n](Graph& g, std::size_t self) {
        const Array& d = g.upstream(self);
        double* ga = g.grad_slot(a).ptr() + start * n;
        for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i];
    });
}

Var Graph::slice_cols(Var a, std::size_t start, std::size_t count) {
    check(a);
    const Array& av = val(a.id);
    require_matrix("slice_cols", av);
    const std::size_t m = av.rows(), n = av.cols();
    if (start + count > n) {
        throw ShapeError("slice_cols: cols [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_str(av.shape()));
    }
    Array out({m, count});
    for (std::size_t i = 0; i < m; ++i) std::copy_n(av.ptr() + i * n + start, count, out.ptr() + i * count);
    return push(std::move(out), needs(a.id), [a = a.id, start, m, n, count](Graph& g, std::size_t self) {
        const Array& d = g.upstream(self);
        Array& ga = g.grad_slot(a);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < count; ++j) ga[i * n + start + j] += d[i * count + j];
    });
}

Var Graph::concat_rows(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = val(a.id);
    const Array& bv = val(b.id);
    require_matrix("concat_rows", av);
    require_matrix("concat_rows", bv);
    if (av.cols() != bv.cols()) throw ShapeError(pair_str("concat_rows", av, bv));
    const std::size_t n = av.cols(), ma = av.rows();
    Array out({ma + bv.rows(), n});
    std::copy_n(av.ptr(), av.size(), out.ptr());
    std::copy_n(bv.ptr(), bv.size(), out.ptr() + av.size());
    const bool rg = needs(a.id) || needs(b.id);
    return push(std::move(out), rg, [a = a.id, b = b.id, split = ma * n](Graph& g, std::size_t self) {
        const Array& d = g.upstream(self);
        if (g.needs(a)) {
            Array& ga = g.grad_slot(a);
            for (std::size_t i = 0; i < split; ++i) ga[i] += d[i];
        }
        if (g.needs(b)) {
            Array& gb = g.grad_slot(b);
            for (std::size_t i = split; i < d.size(); ++i) gb[i - split] += d[i];
        }
    });
}

Var Graph::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    std::vector<std::size_t> ids, widths;
    std::size_t total = 0;
    const std::size_t m = value(parts[0]).rows();
    bool rg = false;
    for (Var p : parts) {
        const Array& pv = value(p);
        require_matrix("concat_cols", pv);
        if (pv.rows() != m) throw ShapeError(pair_str("concat_cols", value(parts[0]), pv));
        ids.push_back(p.id);
        widths.push_back(pv.cols());
        total += pv.cols();
        rg = rg || needs(p.id);
    }
    Array out({m, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const Array& pv = val(ids[k]);
        for (std::size_t i = 0; i < m; ++i) std::copy_n(pv.ptr() + i * widths[k], widths[k], out.ptr() + i * total + off);
        off += widths[k];
    }
    return push(std::move(out), rg,
                [ids = std::move(ids), widths = std::move(widths), m, total](Graph& g, std::size_t self) {
                    const Array& d = g.upstream(self);
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                        if (g.needs(ids[k])) {
                            Array& gp = g.grad_slot(ids[k]);
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += d[i * total + off + j];
                        }
                        off += widths[k];
                    }
                });
}

// ---------------------------------------------------------------------------
// Reductions and losses

Var Graph::sum(Var a) {
    check(a);
    double s = 0.0;
    for (double v : val(a.id).data()) s += v;
    return push(Array::scalar(s), needs(a.id), [a = a.id](Graph& g, std::size_t self) {
        const double d = g.upstream(self)[0];
        Array& ga = g.grad_slot(a);
        for (double& v : ga.data()) v += d;
    });
}

Var Graph::mean(std::span<const Var> scalars) {
    if (scalars.empty()) throw ShapeError("mean: no inputs");
    std::vector<std::size_t> ids;
    double s = 0.0;
    bool rg = false;
    for (Var v : scalars) {
        const Array& sv = value(v);
        if (sv.size() != 1) throw ShapeError("mean: expected scalars, got " + shape_str(sv.shape()));
        s += sv[0];
        ids.push_back(v.id);
        rg = rg || needs(v.id);
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    return push(Array::scalar(s * inv), rg, [ids = std::move(ids), inv](Graph& g, std::size_t self) {
        const double d = g.upstream(self)[0] * inv;
        for (std::size_t id : ids)
            if (g.needs(id)) g.grad_slot(id)[0] += d;
    });
}

Var Graph::cross_entropy(Var logits, std::span<const int> targets) {
    check(logits);
    const Array& lv = val(logits.id);
    require_matrix("cross_entropy", lv);
    const std::size_t m = lv.rows(), n = lv.cols();
    if (targets.size() != m) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(m) +
                         " rows");
    }
    std::size_t count = 0;
    for (int t : targets) {
        if (t >= static_cast<int>(n)) throw ShapeError("cross_entropy: target " + std::to_string(t) + " >= " + std::to_string(n));
        if (t >= 0) ++count;
    }
    if (count == 0) throw ShapeError("cross_entropy: no target positions");
    Array probs({m, n});
    kernels::softmax_rows(lv.ptr(), probs.ptr(), m, n, kernels::kNoMask);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (targets[i] < 0) continue;
        const double* row = lv.ptr() + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double se = 0.0;
        for (std::size_t j = 0; j < n; ++j) se += std::exp(row[j] - mx);
        total += mx + std::log(se) - row[targets[i]];
    }
    const double inv = 1.0 / static_cast<double>(count);
    return push(Array::scalar(total * inv), needs(logits.id),
                [lg = logits.id, tg = std::vector<int>(targets.begin(), targets.end()), probs = std::move(probs), m, n,
                 inv](Graph& g, std::size_t self) {
                    const double d = g.upstream(self)[0] * inv;
                    Array& gl = g.grad_slot(lg);
                    for (std::size_t i = 0; i < m; ++i) {
                        if (tg[i] < 0) continue;
                        for (std::size_t j = 0; j < n; ++j) gl[i * n + j] += d * probs[i * n + j];
                        gl[i * n + static_cast<std::size_t>(tg[i])] -= d;
                    }
                });
}

}  // namespace pkt
