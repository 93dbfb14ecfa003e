#include "tapnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "tapnet/errors.hpp"

namespace tapnet {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " +
                                        Tensor::shape_string(t.shape()));
}

} // namespace

Tape::Node& Tape::node_at(int id) {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        throw StateError("invalid tape node handle (no forward pass recorded it)");
    return nodes_[static_cast<std::size_t>(id)];
}

const Tape::Node& Tape::node_at(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        throw StateError("invalid tape node handle (no forward pass recorded it)");
    return nodes_[static_cast<std::size_t>(id)];
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = false;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Tensor& t) {
    auto it = leaf_ids_.find(&t);
    if (it != leaf_ids_.end()) return Var{it->second};
    Node n;
    n.value = t; // copy of the current values
    if (grad_enabled_ && t.has_grad()) {
        n.leaf = &t;
        n.needs_grad = true;
    }
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    leaf_ids_.emplace(&t, id);
    return Var{id};
}

Var Tape::make(Tensor value, std::vector<int> parents,
               std::function<void(Tape&, int)> backprop) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (int p : n.parents)
        if (node_at(p).needs_grad) n.needs_grad = true;
    if (n.needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require_rank2(ta, "matmul");
    require_rank2(tb, "matmul");
    const auto m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
    if (tb.dim(0) != k)
        throw ShapeError("matmul: inner dimensions differ (" + Tensor::shape_string(ta.shape()) +
                         " x " + Tensor::shape_string(tb.shape()) + ")");
    Tensor out({m, n});
    MapM(out.data(), m, n) = MapC(ta.data(), m, k) * MapC(tb.data(), k, n);
    return make(std::move(out), {a.id, b.id}, [m, k, n](Tape& t, int self) {
        const auto& nd = t.node_at(self);
        const int pa = nd.parents[0], pb = nd.parents[1];
        MapC g(t.grad_ref(self).data(), m, n);
        if (t.wants_grad(pa)) {
            MapC bm(t.node_at(pb).value.data(), k, n);
            MapM(t.grad_ref(pa).data(), m, k) += g * bm.transpose();
        }
        if (t.wants_grad(pb)) {
            MapC am(t.node_at(pa).value.data(), m, k);
            MapM(t.grad_ref(pb).data(), k, n) += am.transpose() * g;
        }
    });
}

Var Tape::matmul_const(Var a, const Eigen::MatrixXd& m) {
    const Tensor& ta = value(a);
    require_rank2(ta, "matmul_const");
    const auto rows = ta.dim(0), k = ta.dim(1);
    if (static_cast<Eigen::Index>(k) != m.rows())
        throw ShapeError("matmul_const: inner dimensions differ");
    const auto cols = static_cast<std::size_t>(m.cols());
    Tensor out({rows, cols});
    MapM(out.data(), rows, cols) = MapC(ta.data(), rows, k) * m;
    // The matrix is captured by value: it is frozen for this node's lifetime.
    return make(std::move(out), {a.id}, [rows, k, cols, m](Tape& t, int self) {
        const int pa = t.node_at(self).parents[0];
        if (!t.wants_grad(pa)) return;
        MapC g(t.grad_ref(self).data(), rows, cols);
        MapM(t.grad_ref(pa).data(), rows, k) += g * m.transpose();
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("add: shapes differ");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    return make(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const auto& nd = t.node_at(self);
        const auto& g = t.grad_ref(self);
        for (int p : nd.parents) {
            if (!t.wants_grad(p)) continue;
            auto& pg = t.grad_ref(p);
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
    });
}

Var Tape::sub(Var a, Var b) { return add(a, neg(b)); }

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("mul: shapes differ");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    return make(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const auto& nd = t.node_at(self);
        const int pa = nd.parents[0], pb = nd.parents[1];
        const auto& g = t.grad_ref(self);
        const auto& va = t.node_at(pa).value;
        const auto& vb = t.node_at(pb).value;
        if (t.wants_grad(pa)) {
            auto& pg = t.grad_ref(pa);
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * vb[i];
        }
        if (t.wants_grad(pb)) {
            auto& pg = t.grad_ref(pb);
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * va[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return make(std::move(out), {a.id}, [c](Tape& t, int self) {
        const int pa = t.node_at(self).parents[0];
        if (!t.wants_grad(pa)) return;
        const auto& g = t.grad_ref(self);
        auto& pg = t.grad_ref(pa);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += c * g[i];
    });
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::add_rows(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require_rank2(ta, "add_rows");
    if (tb.rank() != 1 || tb.dim(0) != ta.dim(1))
        throw ShapeError("add_rows: bias must be a vector matching the column count");
    const auto m = ta.dim(0), n = ta.dim(1);
    Tensor out = ta;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += tb[j];
    return make(std::move(out), {a.id, b.id}, [m, n](Tape& t, int self) {
        const auto& nd = t.node_at(self);
        const int pa = nd.parents[0], pb = nd.parents[1];
        const auto& g = t.grad_ref(self);
        if (t.wants_grad(pa)) {
            auto& pg = t.grad_ref(pa);
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
        if (t.wants_grad(pb)) {
            auto& pg = t.grad_ref(pb);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pg[j] += g[i * n + j];
        }
    });
}

Var Tape::relu(Var a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return make(std::move(out), {a.id}, [](Tape& t, int self) {
        const int pa = t.node_at(self).parents[0];
        if (!t.wants_grad(pa)) return;
        const auto& g = t.grad_ref(self);
        const auto& x = t.node_at(pa).value;
        auto& pg = t.grad_ref(pa);
        // subgradient at exactly 0 is 0
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) pg[i] += g[i];
    });
}

Var Tape::square(Var a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
    return make(std::move(out), {a.id}, [](Tape& t, int self) {
        const int pa = t.node_at(self).parents[0];
        if (!t.wants_grad(pa)) return;
        const auto& g = t.grad_ref(self);
        const auto& x = t.node_at(pa).value;
        auto& pg = t.grad_ref(pa);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += 2.0 * x[i] * g[i];
    });
}

Var Tape::sqrt_elem(Var a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
    return make(std::move(out), {a.id}, [](Tape& t, int self) {
        const int pa = t.node_at(self).parents[0];
        if (!t.wants_grad(pa)) return;
        const auto& g = t.grad_ref(self);
        const auto& y = t.node_at(self).value;
        auto& pg = t.grad_ref(pa);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (y[i] > 0.0) pg[i] += 0.5 * g[i] / y[i];
    });
}

Var Tape::conv2d(Var x, Var w, Var b, std::size_t pad) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    const Tensor& tb = value(b);
    if (tx.rank() != 4) throw ShapeError("conv2d: input must be [B,C,H,W]");
    if (tw.rank() != 4) throw ShapeError("conv2d: weight must be [OC,C,kh,kw]");
    const auto bn = tx.dim(0), c = tx.dim(1), h = tx.dim(2), wd = tx.dim(3);
    const auto oc = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
    if (tw.dim(1) != c) throw ShapeError("conv2d: channel counts differ");
    if (tb.rank() != 1 || tb.dim(0) != oc)
        throw ShapeError("conv2d: bias must have one entry per output channel");
    if (h + 2 * pad < kh || wd + 2 * pad < kw)
        throw ShapeError("conv2d: kernel larger than padded input");
    const auto oh = h + 2 * pad - kh + 1;
    const auto ow = wd + 2 * pad - kw + 1;

    Tensor out({bn, oc, oh, ow});
    const auto at_x = [&](std::size_t bi, std::size_t ci, std::size_t yi, std::size_t xi) {
        return tx[((bi * c + ci) * h + yi) * wd + xi];
    };
    for (std::size_t bi = 0; bi < bn; ++bi)
        for (std::size_t o = 0; o < oc; ++o)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = tb[o];
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                acc += at_x(bi, ci, static_cast<std::size_t>(iy),
                                            static_cast<std::size_t>(ix)) *
                                       tw[((o * c + ci) * kh + ky) * kw + kx];
                            }
                        }
                    out[((bi * oc + o) * oh + oy) * ow + ox] = acc;
                }

    return make(std::move(out), {x.id, w.id, b.id},
                [bn, c, h, wd, oc, kh, kw, oh, ow, pad](Tape& t, int self) {
        const auto& nd = t.node_at(self);
        const int px = nd.parents[0], pw = nd.parents[1], pb = nd.parents[2];
        const auto& g = t.grad_ref(self);
        const auto& vx = t.node_at(px).value;
        const auto& vw = t.node_at(pw).value;
        const bool wx = t.wants_grad(px), ww = t.wants_grad(pw), wb = t.wants_grad(pb);
        for (std::size_t bi = 0; bi < bn; ++bi)
            for (std::size_t o = 0; o < oc; ++o)
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const double go = g[((bi * oc + o) * oh + oy) * ow + ox];
                        if (go == 0.0) continue;
                        if (wb) t.grad_ref(pb)[o] += go;
                        for (std::size_t ci = 0; ci < c; ++ci)
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) -
                                                          static_cast<std::ptrdiff_t>(pad);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) -
                                                              static_cast<std::ptrdiff_t>(pad);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                    const std::size_t xi =
                                        ((bi * c + ci) * h + static_cast<std::size_t>(iy)) * wd +
                                        static_cast<std::size_t>(ix);
                                    const std::size_t wi = ((o * c + ci) * kh + ky) * kw + kx;
                                    if (wx) t.grad_ref(px)[xi] += go * vw[wi];
                                    if (ww) t.grad_ref(pw)[wi] += go * vx[xi];
                                }
                            }
                    }
    });
}

Var Tape::maxpool2d(Var x, std::size_t k) {
    const Tensor& tx = value(x);
    if (tx.rank() != 4) throw ShapeError("maxpool2d: input must be [B,C,H,W]");
    if (k < 1) throw ShapeError("maxpool2d: window must be at least 1");
    const auto bn = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
    const auto oh = h / k, ow = w / k;
    if (oh == 0 || ow == 0) throw ShapeError("maxpool2d: window larger than input");

    Tensor out({bn, c, oh, ow});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    for (std::size_t bi = 0; bi < bn; ++bi)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_i = 0;
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const std::size_t idx =
                                ((bi * c + ci) * h + oy * k + ky) * w + ox * k + kx;
                            if (tx[idx] > best) { // first maximum wins ties
                                best = tx[idx];
                                best_i = idx;
                            }
                        }
                    const std::size_t oi = ((bi * c + ci) * oh + oy) * ow + ox;
                    out[oi] = best;
                    (*argmax)[oi] = best_i;
                }

    return make(std::move(out), {x.id}, [argmax](Tape& t, int self) {
        const int px = t.node_at(self).parents[0];
        if (!t.wants_grad(px)) return;
        const auto& g = t.grad_ref(self);
        auto& pg = t.grad_ref(px);
        for (std::size_t i = 0; i < g.size(); ++i) pg[(*argmax)[i]] += g[i];
    });
}

Var Tape::flatten(Var x) {
    const Tensor& tx = value(x);
    if (tx.rank() < 2) throw ShapeError("flatten: input must have a batch dimension");
    const auto bn = tx.dim(0);
    Tensor out({bn, tx.size() / bn}, tx.values());
    return make(std::move(out), {x.id}, [](Tape& t, int self) {
        const int px = t.node_at(self).parents[0];
        if (!t.wants_grad(px)) return;
        const auto& g = t.grad_ref(self);
        auto& pg = t.grad_ref(px);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    });
}

Var Tape::pairwise_sqdist(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require_rank2(ta, "pairwise_sqdist");
    require_rank2(tb, "pairwise_sqdist");
    if (ta.dim(1) != tb.dim(1)) throw ShapeError("pairwise_sqdist: feature dimensions differ");
    const auto m = ta.dim(0), n = tb.dim(0), d = ta.dim(1);

    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t q = 0; q < d; ++q) {
                const double diff = ta[i * d + q] - tb[j * d + q];
                acc += diff * diff;
            }
            out[i * n + j] = acc;
        }

    return make(std::move(out), {a.id, b.id}, [m, n, d](Tape& t, int self) {
        const auto& nd = t.node_at(self);
        const int pa = nd.parents[0], pb = nd.parents[1];
        const auto& g = t.grad_ref(self);
        const auto& va = t.node_at(pa).value;
        const auto& vb = t.node_at(pb).value;
        const bool wa = t.wants_grad(pa), wb = t.wants_grad(pb);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double go = g[i * n + j];
                if (go == 0.0) continue;
                for (std::size_t q = 0; q < d; ++q) {
                    const double diff = va[i * d + q] - vb[j * d + q];
                    if (wa) t.grad_ref(pa)[i * d + q] += 2.0 * go * diff;
                    if (wb) t.grad_ref(pb)[j * d + q] -= 2.0 * go * diff;
                }
            }
    });
}

Var Tape::select_cols(Var a, const std::vector<std::size_t>& idx) {
    const Tensor& ta = value(a);
    require_rank2(ta, "select_cols");
    const auto m = ta.dim(0), n = ta.dim(1);
    if (idx.size() != m) throw ShapeError("select_cols: one index per row required");
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        if (idx[i] >= n) throw ShapeError("select_cols: column index out of range");
        out[i] = ta[i * n + idx[i]];
    }
    return make(std::move(out), {a.id}, [idx, n](Tape& t, int self) {
        const int pa = t.node_at(self).parents[0];
        if (!t.wants_grad(pa)) return;
        const auto& g = t.grad_ref(self);
        auto& pg = t.grad_ref(pa);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i * n + idx[i]] += g[i];
    });
}

Var Tape::logsumexp_rows(Var a) {
    const Tensor& ta = value(a);
    require_rank2(ta, "logsumexp_rows");
    const auto m = ta.dim(0), n = ta.dim(1);
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = ta[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, ta[i * n + j]);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(ta[i * n + j] - mx);
        out[i] = mx + std::log(s);
    }
    return make(std::move(out), {a.id}, [m, n](Tape& t, int self) {
        const int pa = t.node_at(self).parents[0];
        if (!t.wants_grad(pa)) return;
        const auto& g = t.grad_ref(self);
        const auto& y = t.node_at(self).value;
        const auto& x = t.node_at(pa).value;
        auto& pg = t.grad_ref(pa);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                pg[i * n + j] += g[i] * std::exp(x[i * n + j] - y[i]);
    });
}

Var Tape::sum_all(Var a) {
    const Tensor& ta = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
    return make(Tensor::scalar(s), {a.id}, [](Tape& t, int self) {
        const int pa = t.node_at(self).parents[0];
        if (!t.wants_grad(pa)) return;
        const double g = t.grad_ref(self)[0];
        auto& pg = t.grad_ref(pa);
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g;
    });
}

Var Tape::mean_all(Var a) {
    const Tensor& ta = value(a);
    if (ta.size() == 0) throw ShapeError("mean_all: empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(ta.size()));
}

void Tape::backward(Var loss) {
    if (nodes_.empty()) throw StateError("backward called before any forward computation");
    if (loss.id < 0 || loss.id >= static_cast<int>(nodes_.size()))
        throw StateError("backward: loss handle does not belong to this tape");
    if (value(loss).size() != 1) throw ShapeError("backward: loss must be a scalar");

    grads_.assign(nodes_.size(), {});
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        grads_[i].assign(nodes_[i].value.size(), 0.0);
    grads_[static_cast<std::size_t>(loss.id)][0] = 1.0;

    for (int id = loss.id; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.needs_grad && n.backprop) n.backprop(*this, id);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        Node& n = nodes_[i];
        if (!n.leaf) continue;
        auto& g = n.leaf->grad();
        const auto& src = grads_[i];
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += src[j];
    }
}

const std::vector<double>& Tape::node_grad(Var v) const {
    if (grads_.size() != nodes_.size()) throw StateError("node_grad: no backward pass has run");
    if (v.id < 0 || v.id >= static_cast<int>(grads_.size()))
        throw StateError("node_grad: invalid handle");
    return grads_[static_cast<std::size_t>(v.id)];
}

} // namespace tapnet
