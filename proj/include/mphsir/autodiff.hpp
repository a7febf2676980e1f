#pragma once

// Reverse-mode autodiff on a flat tape. Feature maps travel as 2-d (C, N)
// tensors in band-major order, so a (C, h*w) matrix aliases the same memory
// as the (C, h, w) image; spatial operators take h and w explicitly.
//
// Conventions:
//   - Every op allocates a fresh output buffer; reshape aliases.
//   - A node's backward closure is dropped as soon as it has run, which
//     releases the activations it captured while the tape unwinds.
//   - Gradients accumulate only into nodes that require them.

#include "mphsir/fft.hpp"
#include "mphsir/tensor.hpp"

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mphsir {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

template <typename S>
class Tape {
public:
    using T = Tensor<S>;
    using EMat = typename T::EMat;
    using MapMat = typename T::MapMat;
    using ConstMapMat = typename T::ConstMapMat;

    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ------------------------------------------------------------------
    // Node management
    // ------------------------------------------------------------------

    Var leaf(T value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), T{}, nullptr, requires_grad});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Var constant(T value) { return leaf(std::move(value), false); }

    const T& val(Var v) const { return node(v).value; }
    bool requires_grad(Var v) const { return node(v).req; }

    // Gradient buffer, allocated to zeros on first touch.
    T& gbuf(Var v) {
        Node& n = node(v);
        if (!n.grad.defined()) n.grad = T(n.value.shape());
        return n.grad;
    }

    const T& grad(Var v) const {
        const Node& n = node(v);
        if (!n.grad.defined()) throw std::logic_error("grad not computed for node");
        return n.grad;
    }

    bool has_grad(Var v) const { return node(v).grad.defined(); }

    // Runs reverse accumulation from a scalar root.
    void backward(Var root) {
        Node& r = node(root);
        if (r.value.size() != 1) throw std::invalid_argument("backward: root must be scalar");
        if (!r.req) throw std::invalid_argument("backward: root does not depend on any parameter");
        gbuf(root)[0] = S(1);
        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.back && n.grad.defined()) n.back(*this);
            if (n.back) {
                n.back = nullptr;      // releases captured activations
                n.grad = T{};          // interior grads are consumed by now
            }
        }
    }

    size_t num_nodes() const { return nodes_.size(); }

    // Gradient of the node whose backward closure is currently running.
    const T& grad_of_current() const { return nodes_[static_cast<size_t>(current_)].grad; }

    // Fixed-order row sum over a (R, C) tensor; Eigen map reductions vectorize
    // with alignment-dependent prologues, which breaks bit-exact replay.
    static S row_sum(const T& t, int r) {
        const int cols = t.dim(1);
        const S* p = t.data() + static_cast<std::int64_t>(r) * cols;
        S acc = S(0);
        for (int c = 0; c < cols; ++c) acc += p[c];
        return acc;
    }

    // ------------------------------------------------------------------
    // Elementwise and structural ops
    // ------------------------------------------------------------------

    Var add(Var a, Var b) {
        const T& x = val(a);
        const T& y = val(b);
        check_same(x, y, "add");
        T out(x.shape());
        out.arr() = x.arr() + y.arr();
        return make(std::move(out), {a, b}, [a, b](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a)) t.gbuf(a).arr() += g.arr();
            if (t.requires_grad(b)) t.gbuf(b).arr() += g.arr();
        });
    }

    Var sub(Var a, Var b) {
        const T& x = val(a);
        const T& y = val(b);
        check_same(x, y, "sub");
        T out(x.shape());
        out.arr() = x.arr() - y.arr();
        return make(std::move(out), {a, b}, [a, b](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a)) t.gbuf(a).arr() += g.arr();
            if (t.requires_grad(b)) t.gbuf(b).arr() -= g.arr();
        });
    }

    Var mul(Var a, Var b) {
        const T& x = val(a);
        const T& y = val(b);
        check_same(x, y, "mul");
        T out(x.shape());
        out.arr() = x.arr() * y.arr();
        return make(std::move(out), {a, b}, [a, b, x, y](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a)) t.gbuf(a).arr() += g.arr() * y.arr();
            if (t.requires_grad(b)) t.gbuf(b).arr() += g.arr() * x.arr();
        });
    }

    Var scale(Var a, S c) {
        const T& x = val(a);
        T out(x.shape());
        out.arr() = x.arr() * c;
        return make(std::move(out), {a}, [a, c](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a)) t.gbuf(a).arr() += g.arr() * c;
        });
    }

    Var reshape(Var a, Shape s) {
        T out = val(a).reshaped(std::move(s));
        return make(std::move(out), {a}, [a](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a)) t.gbuf(a).arr() += g.arr();
        });
    }

    Var transpose(Var a) {
        const T& x = val(a);
        T out({x.dim(1), x.dim(0)});
        out.mat().noalias() = x.mat().transpose();
        return make(std::move(out), {a}, [a](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a)) t.gbuf(a).mat().noalias() += g.mat().transpose();
        });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
        int cols = val(parts[0]).dim(1);
        int rows = 0;
        for (Var p : parts) {
            if (val(p).dim(1) != cols) throw std::invalid_argument("concat_rows: column mismatch");
            rows += val(p).dim(0);
        }
        T out({rows, cols});
        int r = 0;
        for (Var p : parts) {
            const T& x = val(p);
            out.mat().middleRows(r, x.dim(0)) = x.mat();
            r += x.dim(0);
        }
        std::vector<Var> deps = parts;
        return make(std::move(out), deps, [deps](Tape& t) {
            const T& g = t.grad_of_current();
            int r = 0;
            for (Var p : deps) {
                int pr = t.val(p).dim(0);
                if (t.requires_grad(p)) t.gbuf(p).mat().noalias() += g.mat().middleRows(r, pr);
                r += pr;
            }
        });
    }

    Var slice_rows(Var a, int r0, int r1) {
        const T& x = val(a);
        if (r0 < 0 || r1 > x.dim(0) || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
        T out({r1 - r0, x.dim(1)});
        out.mat() = x.mat().middleRows(r0, r1 - r0);
        return make(std::move(out), {a}, [a, r0, r1](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a)) t.gbuf(a).mat().middleRows(r0, r1 - r0) += g.mat();
        });
    }

    Var sigmoid(Var a) {
        const T& x = val(a);
        T out(x.shape());
        const S* xp = x.data();
        S* op = out.data();
        for (std::int64_t i = 0; i < x.size(); ++i) op[i] = S(1) / (S(1) + std::exp(-xp[i]));
        T saved = out;
        return make(std::move(out), {a}, [a, saved](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a))
                t.gbuf(a).arr() += g.arr() * saved.arr() * (S(1) - saved.arr());
        });
    }

    Var gelu(Var a) {
        const T& x = val(a);
        T out(x.shape());
        const S* xp = x.data();
        S* op = out.data();
        for (std::int64_t i = 0; i < x.size(); ++i) {
            const S phi = S(0.5) * (S(1) + std::erf(xp[i] * S(0.70710678118654752440)));
            op[i] = xp[i] * phi;
        }
        return make(std::move(out), {a}, [a, x](Tape& t) {
            const T& g = t.grad_of_current();
            if (!t.requires_grad(a)) return;
            T& ga = t.gbuf(a);
            const S* xp = x.data();
            const S* gp = g.data();
            S* gap = ga.data();
            constexpr double inv_sqrt2 = 0.70710678118654752440;
            constexpr double inv_sqrt2pi = 0.39894228040143267794;
            for (std::int64_t i = 0; i < x.size(); ++i) {
                const double xv = static_cast<double>(xp[i]);
                const double phi = 0.5 * (1.0 + std::erf(xv * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * xv * xv);
                gap[i] += gp[i] * static_cast<S>(phi + xv * pdf);
            }
        });
    }

    // Row-wise softmax of a 2-d tensor.
    Var softmax_rows(Var a) {
        const T& x = val(a);
        T out(x.shape());
        const int rows = x.dim(0), cols = x.dim(1);
        for (int r = 0; r < rows; ++r) {
            const S* xr = x.data() + static_cast<std::int64_t>(r) * cols;
            S* yr = out.data() + static_cast<std::int64_t>(r) * cols;
            S m = xr[0];
            for (int c = 1; c < cols; ++c) m = std::max(m, xr[c]);
            S sum = S(0);
            for (int c = 0; c < cols; ++c) {
                yr[c] = std::exp(xr[c] - m);
                sum += yr[c];
            }
            const S inv = S(1) / sum;
            for (int c = 0; c < cols; ++c) yr[c] *= inv;
        }
        T saved = out;
        return make(std::move(out), {a}, [a, saved](Tape& t) {
            const T& g = t.grad_of_current();
            if (!t.requires_grad(a)) return;
            T& ga = t.gbuf(a);
            const int rows = saved.dim(0), cols = saved.dim(1);
            for (int r = 0; r < rows; ++r) {
                const S* yr = saved.data() + static_cast<std::int64_t>(r) * cols;
                const S* gr = g.data() + static_cast<std::int64_t>(r) * cols;
                S* gar = ga.data() + static_cast<std::int64_t>(r) * cols;
                S dot = S(0);
                for (int c = 0; c < cols; ++c) dot += gr[c] * yr[c];
                for (int c = 0; c < cols; ++c) gar[c] += yr[c] * (gr[c] - dot);
            }
        });
    }

    // Row-wise L2 normalization: y_r = x_r / sqrt(|x_r|^2 + 1e-12).
    Var l2normalize_rows(Var a) {
        const T& x = val(a);
        const int rows = x.dim(0), cols = x.dim(1);
        T out(x.shape());
        T norms({rows});
        for (int r = 0; r < rows; ++r) {
            const S* xr = x.data() + static_cast<std::int64_t>(r) * cols;
            S* yr = out.data() + static_cast<std::int64_t>(r) * cols;
            S ss = S(0);
            for (int c = 0; c < cols; ++c) ss += xr[c] * xr[c];
            const S n = std::sqrt(ss + S(1e-12));
            norms[r] = n;
            const S inv = S(1) / n;
            for (int c = 0; c < cols; ++c) yr[c] = xr[c] * inv;
        }
        T saved = out;
        return make(std::move(out), {a}, [a, saved, norms](Tape& t) {
            const T& g = t.grad_of_current();
            if (!t.requires_grad(a)) return;
            T& ga = t.gbuf(a);
            const int rows = saved.dim(0), cols = saved.dim(1);
            for (int r = 0; r < rows; ++r) {
                const S* yr = saved.data() + static_cast<std::int64_t>(r) * cols;
                const S* gr = g.data() + static_cast<std::int64_t>(r) * cols;
                S* gar = ga.data() + static_cast<std::int64_t>(r) * cols;
                S dot = S(0);
                for (int c = 0; c < cols; ++c) dot += gr[c] * yr[c];
                const S inv = S(1) / norms[r];
                for (int c = 0; c < cols; ++c) gar[c] += (gr[c] - dot * yr[c]) * inv;
            }
        });
    }

    // x / max(eps, min_eps) where eps is a learnable scalar.
    Var div_scalar_clamped(Var x, Var eps, S min_eps) {
        const T& xv = val(x);
        if (val(eps).size() != 1) throw std::invalid_argument("div_scalar_clamped: eps must be scalar");
        const S e_raw = val(eps)[0];
        const S e = std::max(e_raw, min_eps);
        T out(xv.shape());
        out.arr() = xv.arr() / e;
        const bool clamped = e_raw < min_eps;
        return make(std::move(out), {x, eps}, [x, eps, xv, e, clamped](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(x)) t.gbuf(x).arr() += g.arr() / e;
            if (t.requires_grad(eps) && !clamped) {
                S acc = S(0);
                const S* gp = g.data();
                const S* xp = xv.data();
                for (std::int64_t i = 0; i < xv.size(); ++i) acc += gp[i] * xp[i];
                t.gbuf(eps)[0] += -acc / (e * e);
            }
        });
    }

    Var matmul(Var a, Var b) {
        const T& x = val(a);
        const T& y = val(b);
        if (x.dim(1) != y.dim(0)) throw std::invalid_argument("matmul: inner dim mismatch");
        T out({x.dim(0), y.dim(1)});
        out.mat().noalias() = x.mat() * y.mat();
        return make(std::move(out), {a, b}, [a, b, x, y](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a)) t.gbuf(a).mat().noalias() += g.mat() * y.mat().transpose();
            if (t.requires_grad(b)) t.gbuf(b).mat().noalias() += x.mat().transpose() * g.mat();
        });
    }

    // Point-wise convolution in (C, N) layout: y = w * x + bias per output
    // channel. w is (Cout, Cin), bias (Cout) or invalid.
    Var linear_cols(Var w, Var x, Var bias) {
        const T& wv = val(w);
        const T& xv = val(x);
        if (wv.dim(1) != xv.dim(0)) throw std::invalid_argument("linear_cols: dim mismatch");
        T out({wv.dim(0), xv.dim(1)});
        out.mat().noalias() = wv.mat() * xv.mat();
        if (bias.valid()) {
            const T& bv = val(bias);
            if (bv.size() != wv.dim(0)) throw std::invalid_argument("linear_cols: bias size");
            for (int r = 0; r < out.dim(0); ++r)
                out.mat().row(r).array() += bv[r];
        }
        std::vector<Var> deps{w, x};
        if (bias.valid()) deps.push_back(bias);
        return make(std::move(out), deps, [w, x, bias, wv, xv](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(w)) t.gbuf(w).mat().noalias() += g.mat() * xv.mat().transpose();
            if (t.requires_grad(x)) t.gbuf(x).mat().noalias() += wv.mat().transpose() * g.mat();
            if (bias.valid() && t.requires_grad(bias)) {
                T& gb = t.gbuf(bias);
                for (int r = 0; r < g.dim(0); ++r) gb[r] += row_sum(g, r);
            }
        });
    }

    Var add_colvec(Var x, Var b) {
        const T& xv = val(x);
        const T& bv = val(b);
        if (bv.size() != xv.dim(0)) throw std::invalid_argument("add_colvec: size mismatch");
        T out(xv.shape());
        for (int r = 0; r < xv.dim(0); ++r)
            out.mat().row(r) = xv.mat().row(r).array() + bv[r];
        return make(std::move(out), {x, b}, [x, b](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(x)) t.gbuf(x).arr() += g.arr();
            if (t.requires_grad(b)) {
                T& gb = t.gbuf(b);
                for (int r = 0; r < g.dim(0); ++r) gb[r] += row_sum(g, r);
            }
        });
    }

    // Broadcast a length-C vector across N columns -> (C, N).
    Var broadcast_col(Var v, int n) {
        const T& xv = val(v);
        const int c = static_cast<int>(xv.size());
        T out({c, n});
        for (int r = 0; r < c; ++r) out.mat().row(r).setConstant(xv[r]);
        return make(std::move(out), {v}, [v](Tape& t) {
            const T& g = t.grad_of_current();
            if (!t.requires_grad(v)) return;
            T& gv = t.gbuf(v);
            for (int r = 0; r < g.dim(0); ++r) gv[r] += row_sum(g, r);
        });
    }

    // Layer normalization over dim 0 of a (C, N) tensor, i.e. per spatial
    // position across channels, with learnable gain and bias of length C.
    Var layernorm_cols(Var x, Var gain, Var bias, S eps) {
        const T& xv = val(x);
        const T& gv = val(gain);
        const T& bv = val(bias);
        const int c = xv.dim(0), n = xv.dim(1);
        if (gv.size() != c || bv.size() != c) throw std::invalid_argument("layernorm: gain/bias size");
        T xhat({c, n});
        T inv_std({n});
        // Column-wise moments; row-major layout makes these contiguous sweeps.
        std::vector<S> mean(static_cast<size_t>(n), S(0));
        for (int r = 0; r < c; ++r) {
            const S* xr = xv.data() + static_cast<std::int64_t>(r) * n;
            for (int j = 0; j < n; ++j) mean[static_cast<size_t>(j)] += xr[j];
        }
        const S invc = S(1) / static_cast<S>(c);
        for (int j = 0; j < n; ++j) mean[static_cast<size_t>(j)] *= invc;
        std::vector<S> var(static_cast<size_t>(n), S(0));
        for (int r = 0; r < c; ++r) {
            const S* xr = xv.data() + static_cast<std::int64_t>(r) * n;
            for (int j = 0; j < n; ++j) {
                const S d = xr[j] - mean[static_cast<size_t>(j)];
                var[static_cast<size_t>(j)] += d * d;
            }
        }
        for (int j = 0; j < n; ++j) inv_std[j] = S(1) / std::sqrt(var[static_cast<size_t>(j)] * invc + eps);
        T out({c, n});
        for (int r = 0; r < c; ++r) {
            const S* xr = xv.data() + static_cast<std::int64_t>(r) * n;
            S* hr = xhat.data() + static_cast<std::int64_t>(r) * n;
            S* yr = out.data() + static_cast<std::int64_t>(r) * n;
            const S gr = gv[r], br = bv[r];
            for (int j = 0; j < n; ++j) {
                hr[j] = (xr[j] - mean[static_cast<size_t>(j)]) * inv_std[j];
                yr[j] = gr * hr[j] + br;
            }
        }
        return make(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std, gv](Tape& t) {
            const T& g = t.grad_of_current();
            const int c = xhat.dim(0), n = xhat.dim(1);
            if (t.requires_grad(gain)) {
                T& gg = t.gbuf(gain);
                for (int r = 0; r < c; ++r) {
                    const S* hr = xhat.data() + static_cast<std::int64_t>(r) * n;
                    const S* gr = g.data() + static_cast<std::int64_t>(r) * n;
                    S acc = S(0);
                    for (int j = 0; j < n; ++j) acc += gr[j] * hr[j];
                    gg[r] += acc;
                }
            }
            if (t.requires_grad(bias)) {
                T& gb = t.gbuf(bias);
                for (int r = 0; r < c; ++r) gb[r] += row_sum(g, r);
            }
            if (!t.requires_grad(x)) return;
            T& gx = t.gbuf(x);
            const S invc = S(1) / static_cast<S>(c);
            // Per column: gx = s * (gh - mean(gh) - xhat * mean(gh .* xhat)),
            // with gh = g * gain per row.
            std::vector<S> m1(static_cast<size_t>(n), S(0)), m2(static_cast<size_t>(n), S(0));
            for (int r = 0; r < c; ++r) {
                const S* hr = xhat.data() + static_cast<std::int64_t>(r) * n;
                const S* gr = g.data() + static_cast<std::int64_t>(r) * n;
                const S gainr = gv[r];
                for (int j = 0; j < n; ++j) {
                    const S gh = gr[j] * gainr;
                    m1[static_cast<size_t>(j)] += gh;
                    m2[static_cast<size_t>(j)] += gh * hr[j];
                }
            }
            for (int j = 0; j < n; ++j) {
                m1[static_cast<size_t>(j)] *= invc;
                m2[static_cast<size_t>(j)] *= invc;
            }
            for (int r = 0; r < c; ++r) {
                const S* hr = xhat.data() + static_cast<std::int64_t>(r) * n;
                const S* gr = g.data() + static_cast<std::int64_t>(r) * n;
                S* gxr = gx.data() + static_cast<std::int64_t>(r) * n;
                const S gainr = gv[r];
                for (int j = 0; j < n; ++j) {
                    const S gh = gr[j] * gainr;
                    gxr[j] += inv_std[j] * (gh - m1[static_cast<size_t>(j)] - hr[j] * m2[static_cast<size_t>(j)]);
                }
            }
        });
    }

    // ------------------------------------------------------------------
    // Reductions and losses
    // ------------------------------------------------------------------

    Var mean_all(Var a) {
        const T& x = val(a);
        T out({1});
        double acc = 0.0;
        for (std::int64_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x[i]);
        out[0] = static_cast<S>(acc / static_cast<double>(x.size()));
        const S inv_n = S(1) / static_cast<S>(x.size());
        return make(std::move(out), {a}, [a, inv_n](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a)) t.gbuf(a).arr() += g[0] * inv_n;
        });
    }

    Var sum_all(Var a) {
        const T& x = val(a);
        T out({1});
        double acc = 0.0;
        for (std::int64_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x[i]);
        out[0] = static_cast<S>(acc);
        return make(std::move(out), {a}, [a](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(a)) t.gbuf(a).arr() += g[0];
        });
    }

    // Mean over dim 0: (R, C) -> (1, C).
    Var mean_rows0(Var a) {
        const T& x = val(a);
        const int rows = x.dim(0), cols = x.dim(1);
        T out({1, cols});
        for (int c = 0; c < cols; ++c) {
            S acc = S(0);
            for (int r = 0; r < rows; ++r) acc += x[static_cast<std::int64_t>(r) * cols + c];
            out[c] = acc / static_cast<S>(rows);
        }
        const S inv_r = S(1) / static_cast<S>(rows);
        return make(std::move(out), {a}, [a, inv_r, rows](Tape& t) {
            const T& g = t.grad_of_current();
            if (!t.requires_grad(a)) return;
            T& ga = t.gbuf(a);
            for (int r = 0; r < rows; ++r) ga.mat().row(r) += g.mat().row(0) * inv_r;
        });
    }

    // Mean over columns of (C, N) -> (C), the global spatial pooling.
    Var mean_cols(Var a) {
        const T& x = val(a);
        const int rows = x.dim(0), cols = x.dim(1);
        T out({rows});
        for (int r = 0; r < rows; ++r) out[r] = row_sum(x, r) / static_cast<S>(cols);
        const S inv_n = S(1) / static_cast<S>(cols);
        return make(std::move(out), {a}, [a, inv_n](Tape& t) {
            const T& g = t.grad_of_current();
            if (!t.requires_grad(a)) return;
            T& ga = t.gbuf(a);
            for (int r = 0; r < ga.dim(0); ++r) ga.mat().row(r).array() += g[r] * inv_n;
        });
    }

    Var l1_loss(Var a, Var b) {
        const T& x = val(a);
        const T& y = val(b);
        check_same(x, y, "l1_loss");
        T out({1});
        double acc = 0.0;
        for (std::int64_t i = 0; i < x.size(); ++i) acc += std::abs(static_cast<double>(x[i] - y[i]));
        out[0] = static_cast<S>(acc / static_cast<double>(x.size()));
        const S inv_n = S(1) / static_cast<S>(x.size());
        return make(std::move(out), {a, b}, [a, b, x, y, inv_n](Tape& t) {
            const T& g = t.grad_of_current();
            const S go = g[0] * inv_n;
            for (std::int64_t i = 0; i < x.size(); ++i) {
                const S d = x[i] - y[i];
                const S s = d > S(0) ? go : (d < S(0) ? -go : S(0));
                if (t.requires_grad(a)) t.gbuf(a)[i] += s;
                if (t.requires_grad(b)) t.gbuf(b)[i] -= s;
            }
        });
    }

    // Binary cross entropy on probabilities, clamped to [1e-7, 1 - 1e-7].
    Var bce_loss(Var probs, Var labels) {
        const T& p = val(probs);
        const T& y = val(labels);
        check_same(p, y, "bce_loss");
        const double lo = 1e-7, hi = 1.0 - 1e-7;
        T out({1});
        double acc = 0.0;
        for (std::int64_t i = 0; i < p.size(); ++i) {
            double pc = std::min(std::max(static_cast<double>(p[i]), lo), hi);
            double yv = static_cast<double>(y[i]);
            acc += yv * std::log(pc) + (1.0 - yv) * std::log(1.0 - pc);
        }
        out[0] = static_cast<S>(-acc / static_cast<double>(p.size()));
        return make(std::move(out), {probs, labels}, [probs, p, y](Tape& t) {
            const T& g = t.grad_of_current();
            if (!t.requires_grad(probs)) return;
            T& gp = t.gbuf(probs);
            const double lo = 1e-7, hi = 1.0 - 1e-7;
            const double gn = static_cast<double>(g[0]) / static_cast<double>(p.size());
            for (std::int64_t i = 0; i < p.size(); ++i) {
                const double pv = static_cast<double>(p[i]);
                if (pv < lo || pv > hi) continue;  // clamped, zero slope
                const double yv = static_cast<double>(y[i]);
                gp[i] += static_cast<S>(gn * (pv - yv) / (pv * (1.0 - pv)));
            }
        });
    }

    // ------------------------------------------------------------------
    // Spatial ops; x is (C, h*w) band-major with h, w passed explicitly
    // ------------------------------------------------------------------

    // Standard convolution with zero padding. w is (Cout, Cin, kh, kw).
    Var conv2d(Var x, Var w, Var bias, int h, int wd, int stride, int pad) {
        const T& xv = val(x);
        const T& wv = val(w);
        const int cin = xv.dim(0);
        if (wv.ndim() != 4 || wv.dim(1) != cin) throw std::invalid_argument("conv2d: weight shape");
        const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        const int oh = (h + 2 * pad - kh) / stride + 1;
        const int ow = (wd + 2 * pad - kw) / stride + 1;
        if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: kernel exceeds extent");
        T col = im2col(xv, h, wd, kh, kw, stride, pad, oh, ow);
        T out({cout, oh * ow});
        out.mat().noalias() = wv.mat(cout, cin * kh * kw) * col.mat();
        if (bias.valid()) {
            const T& bv = val(bias);
            for (int r = 0; r < cout; ++r) out.mat().row(r).array() += bv[r];
        }
        std::vector<Var> deps{x, w};
        if (bias.valid()) deps.push_back(bias);
        return make(std::move(out), deps,
                    [x, w, bias, col, h, wd, stride, pad, cin, cout, kh, kw, oh, ow](Tape& t) {
            const T& g = t.grad_of_current();
            if (t.requires_grad(w)) {
                t.gbuf(w).mat(cout, cin * kh * kw).noalias() += g.mat() * col.mat().transpose();
            }
            if (bias.valid() && t.requires_grad(bias)) {
                T& gb = t.gbuf(bias);
                for (int r = 0; r < cout; ++r) gb[r] += row_sum(g, r);
            }
            if (t.requires_grad(x)) {
                const T& wv = t.val(w);
                T gcol({cin * kh * kw, oh * ow});
                gcol.mat().noalias() = wv.mat(cout, cin * kh * kw).transpose() * g.mat();
                col2im_add(t.gbuf(x), gcol, h, wd, kh, kw, stride, pad, oh, ow);
            }
        });
    }

    // Depth-wise 3x3 convolution, stride 1, zero padding 1.
    Var conv2d_depthwise3(Var x, Var w, Var bias, int h, int wd) {
        const T& xv = val(x);
        const T& wv = val(w);
        const int c = xv.dim(0);
        if (wv.ndim() != 3 || wv.dim(0) != c || wv.dim(1) != 3 || wv.dim(2) != 3)
            throw std::invalid_argument("depthwise3: weight shape");
        T out({c, h * wd});
        for (int ch = 0; ch < c; ++ch) {
            const S* xp = xv.data() + static_cast<std::int64_t>(ch) * h * wd;
            const S* kp = wv.data() + static_cast<std::int64_t>(ch) * 9;
            S* op = out.data() + static_cast<std::int64_t>(ch) * h * wd;
            const S b = bias.valid() ? val(bias)[ch] : S(0);
            for (int y = 0; y < h; ++y) {
                for (int xx = 0; xx < wd; ++xx) {
                    S acc = b;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= h) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int sx = xx + dx;
                            if (sx < 0 || sx >= wd) continue;
                            acc += kp[(dy + 1) * 3 + (dx + 1)] * xp[sy * wd + sx];
                        }
                    }
                    op[y * wd + xx] = acc;
                }
            }
        }
        std::vector<Var> deps{x, w};
        if (bias.valid()) deps.push_back(bias);
        return make(std::move(out), deps, [x, w, bias, xv, h, wd, c](Tape& t) {
            const T& g = t.grad_of_current();
            const T& wv = t.val(w);
            const bool need_x = t.requires_grad(x);
            const bool need_w = t.requires_grad(w);
            for (int ch = 0; ch < c; ++ch) {
                const S* gp = g.data() + static_cast<std::int64_t>(ch) * h * wd;
                const S* xp = xv.data() + static_cast<std::int64_t>(ch) * h * wd;
                const S* kp = wv.data() + static_cast<std::int64_t>(ch) * 9;
                S* gxp = need_x ? t.gbuf(x).data() + static_cast<std::int64_t>(ch) * h * wd : nullptr;
                S* gwp = need_w ? t.gbuf(w).data() + static_cast<std::int64_t>(ch) * 9 : nullptr;
                for (int y = 0; y < h; ++y) {
                    for (int xx = 0; xx < wd; ++xx) {
                        const S gv = gp[y * wd + xx];
                        if (gv == S(0)) continue;
                        for (int dy = -1; dy <= 1; ++dy) {
                            const int sy = y + dy;
                            if (sy < 0 || sy >= h) continue;
                            for (int dx = -1; dx <= 1; ++dx) {
                                const int sx = xx + dx;
                                if (sx < 0 || sx >= wd) continue;
                                if (need_x) gxp[sy * wd + sx] += gv * kp[(dy + 1) * 3 + (dx + 1)];
                                if (need_w) gwp[(dy + 1) * 3 + (dx + 1)] += gv * xp[sy * wd + sx];
                            }
                        }
                    }
                }
                if (bias.valid() && t.requires_grad(bias)) {
                    S acc = S(0);
                    for (int i = 0; i < h * wd; ++i) acc += gp[i];
                    t.gbuf(bias)[ch] += acc;
                }
            }
        });
    }

    // Transposed convolution with a 2x2 kernel and stride 2 (the decoder
    // upsampler). w is (Cin, Cout, 2, 2); output is (Cout, 2h * 2w).
    Var conv_transpose2d_s2(Var x, Var w, Var bias, int h, int wd) {
        const T& xv = val(x);
        const T& wv = val(w);
        const int cin = xv.dim(0);
        if (wv.ndim() != 4 || wv.dim(0) != cin || wv.dim(2) != 2 || wv.dim(3) != 2)
            throw std::invalid_argument("conv_transpose2d: weight shape");
        const int cout = wv.dim(1);
        const int oh = 2 * h, ow = 2 * wd;
        T out({cout, oh * ow});
        if (bias.valid()) {
            const T& bv = val(bias);
            for (int r = 0; r < cout; ++r) out.mat().row(r).setConstant(bv[r]);
        }
        // One GEMM per kernel tap, scattered onto the strided grid.
        EMat tap(cout, h * wd);
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                EMat wmat(cout, cin);
                for (int ci = 0; ci < cin; ++ci)
                    for (int co = 0; co < cout; ++co)
                        wmat(co, ci) = wv[((static_cast<std::int64_t>(ci) * cout + co) * 2 + dy) * 2 + dx];
                tap.noalias() = wmat * xv.mat();
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < wd; ++xx) {
                        const int opix = (2 * y + dy) * ow + (2 * xx + dx);
                        for (int co = 0; co < cout; ++co)
                            out[static_cast<std::int64_t>(co) * oh * ow + opix] += tap(co, y * wd + xx);
                    }
            }
        }
        std::vector<Var> deps{x, w};
        if (bias.valid()) deps.push_back(bias);
        return make(std::move(out), deps, [x, w, bias, xv, h, wd, cin, cout](Tape& t) {
            const T& g = t.grad_of_current();
            const T& wv = t.val(w);
            const int oh = 2 * h, ow = 2 * wd;
            EMat gtap(cout, h * wd);
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    for (int y = 0; y < h; ++y)
                        for (int xx = 0; xx < wd; ++xx) {
                            const int opix = (2 * y + dy) * ow + (2 * xx + dx);
                            for (int co = 0; co < cout; ++co)
                                gtap(co, y * wd + xx) = g[static_cast<std::int64_t>(co) * oh * ow + opix];
                        }
                    if (t.requires_grad(x)) {
                        EMat wmat(cout, cin);
                        for (int ci = 0; ci < cin; ++ci)
                            for (int co = 0; co < cout; ++co)
                                wmat(co, ci) = wv[((static_cast<std::int64_t>(ci) * cout + co) * 2 + dy) * 2 + dx];
                        t.gbuf(x).mat().noalias() += wmat.transpose() * gtap;
                    }
                    if (t.requires_grad(w)) {
                        EMat gw(cout, cin);
                        gw.noalias() = gtap * xv.mat().transpose();
                        T& gwt = t.gbuf(w);
                        for (int ci = 0; ci < cin; ++ci)
                            for (int co = 0; co < cout; ++co)
                                gwt[((static_cast<std::int64_t>(ci) * cout + co) * 2 + dy) * 2 + dx] += gw(co, ci);
                    }
                }
            }
            if (bias.valid() && t.requires_grad(bias)) {
                T& gb = t.gbuf(bias);
                for (int r = 0; r < cout; ++r) gb[r] += row_sum(g, r);
            }
        });
    }

    // Patch-mean pooling: (C, h*w) -> (J, C), J = (h/P)*(w/P), row-major
    // patch order.
    Var avg_pool_patches(Var x, int h, int wd, int P) {
        const T& xv = val(x);
        const int c = xv.dim(0);
        if (h % P != 0 || wd % P != 0) throw std::invalid_argument("avg_pool_patches: extent not divisible by window");
        const int nwh = h / P, nww = wd / P, J = nwh * nww;
        T out({J, c});
        const S inv = S(1) / static_cast<S>(P * P);
        for (int ch = 0; ch < c; ++ch) {
            const S* xp = xv.data() + static_cast<std::int64_t>(ch) * h * wd;
            for (int j = 0; j < J; ++j) {
                const int wy = j / nww, wx = j % nww;
                S acc = S(0);
                for (int py = 0; py < P; ++py) {
                    const S* row = xp + (wy * P + py) * wd + wx * P;
                    for (int px = 0; px < P; ++px) acc += row[px];
                }
                out[static_cast<std::int64_t>(j) * c + ch] = acc * inv;
            }
        }
        return make(std::move(out), {x}, [x, h, wd, P, c](Tape& t) {
            const T& g = t.grad_of_current();
            if (!t.requires_grad(x)) return;
            T& gx = t.gbuf(x);
            const int nww = wd / P;
            const S inv = S(1) / static_cast<S>(P * P);
            for (int ch = 0; ch < c; ++ch) {
                S* gxp = gx.data() + static_cast<std::int64_t>(ch) * h * wd;
                for (int j = 0; j < g.dim(0); ++j) {
                    const int wy = j / nww, wx = j % nww;
                    const S gv = g[static_cast<std::int64_t>(j) * c + ch] * inv;
                    for (int py = 0; py < P; ++py) {
                        S* row = gxp + (wy * P + py) * wd + wx * P;
                        for (int px = 0; px < P; ++px) row[px] += gv;
                    }
                }
            }
        });
    }

    // Per-patch per-channel gating: y = x * gate[j][c] over patch j.
    Var scale_patches(Var x, Var gate, int h, int wd, int P) {
        const T& xv = val(x);
        const T& gv = val(gate);
        const int c = xv.dim(0);
        const int nwh = h / P, nww = wd / P, J = nwh * nww;
        if (gv.dim(0) != J || gv.dim(1) != c) throw std::invalid_argument("scale_patches: gate shape");
        T out({c, h * wd});
        for (int ch = 0; ch < c; ++ch) {
            const S* xp = xv.data() + static_cast<std::int64_t>(ch) * h * wd;
            S* op = out.data() + static_cast<std::int64_t>(ch) * h * wd;
            for (int j = 0; j < J; ++j) {
                const int wy = j / nww, wx = j % nww;
                const S gg = gv[static_cast<std::int64_t>(j) * c + ch];
                for (int py = 0; py < P; ++py) {
                    const int base = (wy * P + py) * wd + wx * P;
                    for (int px = 0; px < P; ++px) op[base + px] = xp[base + px] * gg;
                }
            }
        }
        return make(std::move(out), {x, gate}, [x, gate, xv, gv, h, wd, P, c, J, nww](Tape& t) {
            const T& g = t.grad_of_current();
            const bool nx = t.requires_grad(x);
            const bool ng = t.requires_grad(gate);
            for (int ch = 0; ch < c; ++ch) {
                const S* xp = xv.data() + static_cast<std::int64_t>(ch) * h * wd;
                const S* gp = g.data() + static_cast<std::int64_t>(ch) * h * wd;
                S* gxp = nx ? t.gbuf(x).data() + static_cast<std::int64_t>(ch) * h * wd : nullptr;
                for (int j = 0; j < J; ++j) {
                    const int wy = j / nww, wx = j % nww;
                    const S gg = gv[static_cast<std::int64_t>(j) * c + ch];
                    S acc = S(0);
                    for (int py = 0; py < P; ++py) {
                        const int base = (wy * P + py) * wd + wx * P;
                        for (int px = 0; px < P; ++px) {
                            if (nx) gxp[base + px] += gp[base + px] * gg;
                            acc += gp[base + px] * xp[base + px];
                        }
                    }
                    if (ng) t.gbuf(gate)[static_cast<std::int64_t>(j) * c + ch] += acc;
                }
            }
        });
    }

    // Multi-head scaled dot-product attention inside non-overlapping P x P
    // windows. q, k, v are (C, h*w); shift cycles the window origin.
    Var window_attention(Var q, Var k, Var v, int h, int wd, int P, int heads, int shift) {
        const T& qv = val(q);
        const T& kv = val(k);
        const T& vv = val(v);
        const int c = qv.dim(0);
        if (c % heads != 0) throw std::invalid_argument("window_attention: C not divisible by heads");
        if (h % P != 0 || wd % P != 0) throw std::invalid_argument("window_attention: extent not divisible by window");
        const int dh = c / heads, nwh = h / P, nww = wd / P, nwin = nwh * nww, tk = P * P;
        const S att_scale = S(1) / std::sqrt(static_cast<S>(dh));
        T out({c, h * wd});
        T probs({nwin * heads, tk, tk});
        std::vector<int> src(static_cast<size_t>(tk));
        EMat Q(tk, dh), K(tk, dh), V(tk, dh), A(tk, tk), O(tk, dh);
        for (int win = 0; win < nwin; ++win) {
            window_sources(win, nww, P, h, wd, shift, src);
            for (int hd = 0; hd < heads; ++hd) {
                const int c0 = hd * dh;
                for (int tkn = 0; tkn < tk; ++tkn) {
                    const int pix = src[static_cast<size_t>(tkn)];
                    for (int d = 0; d < dh; ++d) {
                        Q(tkn, d) = qv[static_cast<std::int64_t>(c0 + d) * h * wd + pix];
                        K(tkn, d) = kv[static_cast<std::int64_t>(c0 + d) * h * wd + pix];
                        V(tkn, d) = vv[static_cast<std::int64_t>(c0 + d) * h * wd + pix];
                    }
                }
                A.noalias() = Q * K.transpose();
                A *= att_scale;
                softmax_rows_inplace(A);
                std::copy(A.data(), A.data() + tk * tk,
                          probs.data() + (static_cast<std::int64_t>(win) * heads + hd) * tk * tk);
                O.noalias() = A * V;
                for (int tkn = 0; tkn < tk; ++tkn) {
                    const int pix = src[static_cast<size_t>(tkn)];
                    for (int d = 0; d < dh; ++d)
                        out[static_cast<std::int64_t>(c0 + d) * h * wd + pix] = O(tkn, d);
                }
            }
        }
        return make(std::move(out), {q, k, v},
                    [q, k, v, qv, kv, vv, probs, h, wd, P, heads, shift, dh, nwh, nww, tk, att_scale](Tape& t) {
            const T& g = t.grad_of_current();
            const int nwin = nwh * nww;
            std::vector<int> src(static_cast<size_t>(tk));
            EMat Q(tk, dh), K(tk, dh), V(tk, dh), GO(tk, dh), GA(tk, tk), DS(tk, tk);
            const bool nq = t.requires_grad(q), nk = t.requires_grad(k), nv = t.requires_grad(v);
            for (int win = 0; win < nwin; ++win) {
                window_sources(win, nww, P, h, wd, shift, src);
                for (int hd = 0; hd < heads; ++hd) {
                    const int c0 = hd * dh;
                    for (int tkn = 0; tkn < tk; ++tkn) {
                        const int pix = src[static_cast<size_t>(tkn)];
                        for (int d = 0; d < dh; ++d) {
                            Q(tkn, d) = qv[static_cast<std::int64_t>(c0 + d) * h * wd + pix];
                            K(tkn, d) = kv[static_cast<std::int64_t>(c0 + d) * h * wd + pix];
                            V(tkn, d) = vv[static_cast<std::int64_t>(c0 + d) * h * wd + pix];
                            GO(tkn, d) = g[static_cast<std::int64_t>(c0 + d) * h * wd + pix];
                        }
                    }
                    Eigen::Map<const EMat> A(probs.data() + (static_cast<std::int64_t>(win) * heads + hd) * tk * tk, tk, tk);
                    if (nv) {
                        V.noalias() = A.transpose() * GO;  // reuse V as gV scratch
                        for (int tkn = 0; tkn < tk; ++tkn) {
                            const int pix = src[static_cast<size_t>(tkn)];
                            for (int d = 0; d < dh; ++d)
                                t.gbuf(v)[static_cast<std::int64_t>(c0 + d) * h * wd + pix] += V(tkn, d);
                        }
                        // restore V for gA below
                        for (int tkn = 0; tkn < tk; ++tkn) {
                            const int pix = src[static_cast<size_t>(tkn)];
                            for (int d = 0; d < dh; ++d)
                                V(tkn, d) = vv[static_cast<std::int64_t>(c0 + d) * h * wd + pix];
                        }
                    }
                    GA.noalias() = GO * V.transpose();
                    for (int r = 0; r < tk; ++r) {
                        S dot = S(0);
                        for (int cc = 0; cc < tk; ++cc) dot += GA(r, cc) * A(r, cc);
                        DS.row(r) = A.row(r).array() * (GA.row(r).array() - dot);
                    }
                    if (nq) {
                        GO.noalias() = DS * K;  // reuse GO as gQ scratch
                        for (int tkn = 0; tkn < tk; ++tkn) {
                            const int pix = src[static_cast<size_t>(tkn)];
                            for (int d = 0; d < dh; ++d)
                                t.gbuf(q)[static_cast<std::int64_t>(c0 + d) * h * wd + pix] += GO(tkn, d) * att_scale;
                        }
                    }
                    if (nk) {
                        GO.noalias() = DS.transpose() * Q;
                        for (int tkn = 0; tkn < tk; ++tkn) {
                            const int pix = src[static_cast<size_t>(tkn)];
                            for (int d = 0; d < dh; ++d)
                                t.gbuf(k)[static_cast<std::int64_t>(c0 + d) * h * wd + pix] += GO(tkn, d) * att_scale;
                        }
                    }
                }
            }
        });
    }

    // Transposed (spectral) attention: per head, rows of q and k are
    // L2-normalized, the (dh x dh) map softmax(QK^T / eps) is applied to V.
    // eps holds one learnable temperature per head, clamped at min_eps.
    Var spectral_attention(Var q, Var k, Var v, Var eps, int heads, S min_eps) {
        const T& qv = val(q);
        const T& kv = val(k);
        const T& vv = val(v);
        const int c = qv.dim(0), n = qv.dim(1);
        if (c % heads != 0) throw std::invalid_argument("spectral_attention: C not divisible by heads");
        if (val(eps).size() != heads) throw std::invalid_argument("spectral_attention: eps size");
        const int dh = c / heads;
        T out({c, n});
        T probs({heads, dh, dh});
        T qn({c}), kn({c});
        EMat Qh(dh, n), Kh(dh, n), A(dh, dh);
        for (int hd = 0; hd < heads; ++hd) {
            const int c0 = hd * dh;
            const S e = std::max(val(eps)[hd], min_eps);
            normalize_rows_into(qv, c0, dh, n, Qh, qn);
            normalize_rows_into(kv, c0, dh, n, Kh, kn);
            A.noalias() = Qh * Kh.transpose();
            A /= e;
            softmax_rows_inplace(A);
            std::copy(A.data(), A.data() + dh * dh, probs.data() + static_cast<std::int64_t>(hd) * dh * dh);
            out.mat().middleRows(c0, dh).noalias() = A * vv.mat().middleRows(c0, dh);
        }
        return make(std::move(out), {q, k, v, eps},
                    [q, k, v, eps, qv, kv, vv, probs, qn, kn, heads, dh, n, min_eps](Tape& t) {
            const T& g = t.grad_of_current();
            const int c = dh * heads;
            EMat Qh(dh, n), Kh(dh, n), GA(dh, dh), DS(dh, dh), M(dh, dh);
            for (int hd = 0; hd < heads; ++hd) {
                const int c0 = hd * dh;
                const S e_raw = t.val(eps)[hd];
                const S e = std::max(e_raw, min_eps);
                // Rebuild normalized rows from saved norms.
                for (int r = 0; r < dh; ++r) {
                    Qh.row(r) = qv.mat().row(c0 + r) / qn[c0 + r];
                    Kh.row(r) = kv.mat().row(c0 + r) / kn[c0 + r];
                }
                Eigen::Map<const EMat> A(probs.data() + static_cast<std::int64_t>(hd) * dh * dh, dh, dh);
                auto GOh = g.mat().middleRows(c0, dh);
                if (t.requires_grad(v))
                    t.gbuf(v).mat().middleRows(c0, dh).noalias() += A.transpose() * GOh;
                GA.noalias() = GOh * vv.mat().middleRows(c0, dh).transpose();
                for (int r = 0; r < dh; ++r) {
                    S dot = S(0);
                    for (int cc = 0; cc < dh; ++cc) dot += GA(r, cc) * A(r, cc);
                    DS.row(r) = A.row(r).array() * (GA.row(r).array() - dot);
                }
                if (t.requires_grad(eps) && e_raw >= min_eps) {
                    M.noalias() = Qh * Kh.transpose();
                    t.gbuf(eps)[hd] += -(DS.array() * M.array()).sum() / (e * e);
                }
                if (t.requires_grad(q)) {
                    M.noalias() = DS * Kh;  // gradient w.r.t. normalized Q, times e^-1
                    for (int r = 0; r < dh; ++r) {
                        const S dot = (M.row(r).array() * Qh.row(r).array()).sum() / e;
                        t.gbuf(q).mat().row(c0 + r).noalias() +=
                            (M.row(r) / e - dot * Qh.row(r)) / qn[c0 + r];
                    }
                }
                if (t.requires_grad(k)) {
                    M.noalias() = DS.transpose() * Qh;
                    for (int r = 0; r < dh; ++r) {
                        const S dot = (M.row(r).array() * Kh.row(r).array()).sum() / e;
                        t.gbuf(k).mat().row(c0 + r).noalias() +=
                            (M.row(r) / e - dot * Kh.row(r)) / kn[c0 + r];
                    }
                }
            }
            (void)c;
        });
    }

    // ------------------------------------------------------------------
    // Fourier ops (predictor branch)
    // ------------------------------------------------------------------

    // Unnormalized 2-d DFT per channel; real and imaginary parts are stacked
    // as (2C, h*w).
    Var fft2_stack(Var x, int h, int wd) {
        const T& xv = val(x);
        const int c = xv.dim(0);
        T out({2 * c, h * wd});
        fft::CVec<S> buf(static_cast<size_t>(h) * wd);
        for (int ch = 0; ch < c; ++ch) {
            const S* xp = xv.data() + static_cast<std::int64_t>(ch) * h * wd;
            for (int i = 0; i < h * wd; ++i) buf[static_cast<size_t>(i)] = std::complex<S>(xp[i], S(0));
            fft::transform2d(buf.data(), h, wd, -1);
            S* re = out.data() + static_cast<std::int64_t>(ch) * h * wd;
            S* im = out.data() + static_cast<std::int64_t>(c + ch) * h * wd;
            for (int i = 0; i < h * wd; ++i) {
                re[i] = buf[static_cast<size_t>(i)].real();
                im[i] = buf[static_cast<size_t>(i)].imag();
            }
        }
        return make(std::move(out), {x}, [x, h, wd, c](Tape& t) {
            const T& g = t.grad_of_current();
            if (!t.requires_grad(x)) return;
            T& gx = t.gbuf(x);
            fft::CVec<S> buf(static_cast<size_t>(h) * wd);
            for (int ch = 0; ch < c; ++ch) {
                const S* re = g.data() + static_cast<std::int64_t>(ch) * h * wd;
                const S* im = g.data() + static_cast<std::int64_t>(c + ch) * h * wd;
                for (int i = 0; i < h * wd; ++i) buf[static_cast<size_t>(i)] = std::complex<S>(re[i], im[i]);
                fft::transform2d(buf.data(), h, wd, +1);
                S* gp = gx.data() + static_cast<std::int64_t>(ch) * h * wd;
                for (int i = 0; i < h * wd; ++i) gp[i] += buf[static_cast<size_t>(i)].real();
            }
        });
    }

    // Inverse of fft2_stack composed with Re(.): (2C, h*w) -> (C, h*w) with
    // 1/(h*w) normalization.
    Var ifft2_real(Var z, int h, int wd) {
        const T& zv = val(z);
        const int c2 = zv.dim(0);
        if (c2 % 2 != 0) throw std::invalid_argument("ifft2_real: channel count must be even");
        const int c = c2 / 2;
        const S norm = S(1) / static_cast<S>(h * wd);
        T out({c, h * wd});
        fft::CVec<S> buf(static_cast<size_t>(h) * wd);
        for (int ch = 0; ch < c; ++ch) {
            const S* re = zv.data() + static_cast<std::int64_t>(ch) * h * wd;
            const S* im = zv.data() + static_cast<std::int64_t>(c + ch) * h * wd;
            for (int i = 0; i < h * wd; ++i) buf[static_cast<size_t>(i)] = std::complex<S>(re[i], im[i]);
            fft::transform2d(buf.data(), h, wd, +1);
            S* op = out.data() + static_cast<std::int64_t>(ch) * h * wd;
            for (int i = 0; i < h * wd; ++i) op[i] = buf[static_cast<size_t>(i)].real() * norm;
        }
        return make(std::move(out), {z}, [z, h, wd, c, norm](Tape& t) {
            const T& g = t.grad_of_current();
            if (!t.requires_grad(z)) return;
            T& gz = t.gbuf(z);
            fft::CVec<S> buf(static_cast<size_t>(h) * wd);
            for (int ch = 0; ch < c; ++ch) {
                const S* gp = g.data() + static_cast<std::int64_t>(ch) * h * wd;
                for (int i = 0; i < h * wd; ++i) buf[static_cast<size_t>(i)] = std::complex<S>(gp[i], S(0));
                fft::transform2d(buf.data(), h, wd, -1);
                S* gre = gz.data() + static_cast<std::int64_t>(ch) * h * wd;
                S* gim = gz.data() + static_cast<std::int64_t>(c + ch) * h * wd;
                for (int i = 0; i < h * wd; ++i) {
                    gre[i] += buf[static_cast<size_t>(i)].real() * norm;
                    gim[i] += buf[static_cast<size_t>(i)].imag() * norm;
                }
            }
        });
    }

private:
    struct Node {
        T value;
        T grad;
        std::function<void(Tape&)> back;
        bool req = false;
    };

    Node& node(Var v) {
        if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
            throw std::logic_error("invalid tape var");
        return nodes_[static_cast<size_t>(v.id)];
    }
    const Node& node(Var v) const {
        if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
            throw std::logic_error("invalid tape var");
        return nodes_[static_cast<size_t>(v.id)];
    }

    Var make(T value, const std::vector<Var>& deps, std::function<void(Tape&)> back) {
        bool req = false;
        for (Var d : deps) req = req || node(d).req;
        Node n;
        n.value = std::move(value);
        n.req = req;
        if (req) {
            const int my_id = static_cast<int>(nodes_.size());
            n.back = [my_id, fn = std::move(back)](Tape& t) {
                t.current_ = my_id;
                fn(t);
            };
        }
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    static void check_same(const T& a, const T& b, const char* op) {
        if (a.size() != b.size())
            throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
    }

    static void softmax_rows_inplace(EMat& m) {
        for (int r = 0; r < m.rows(); ++r) {
            const S mx = m.row(r).maxCoeff();
            m.row(r) = (m.row(r).array() - mx).exp();
            m.row(r) /= m.row(r).sum();
        }
    }

    static void normalize_rows_into(const T& src, int c0, int dh, int n, EMat& dst, T& norms) {
        for (int r = 0; r < dh; ++r) {
            const S* xp = src.data() + static_cast<std::int64_t>(c0 + r) * n;
            S ss = S(0);
            for (int j = 0; j < n; ++j) ss += xp[j] * xp[j];
            const S nv = std::sqrt(ss + S(1e-12));
            norms[c0 + r] = nv;
            const S inv = S(1) / nv;
            for (int j = 0; j < n; ++j) dst(r, j) = xp[j] * inv;
        }
    }

    static void window_sources(int win, int nww, int P, int h, int wd, int shift,
                               std::vector<int>& src) {
        const int wy = win / nww, wx = win % nww;
        int idx = 0;
        for (int py = 0; py < P; ++py) {
            const int sy = (wy * P + py + shift) % h;
            for (int px = 0; px < P; ++px) {
                const int sx = (wx * P + px + shift) % wd;
                src[static_cast<size_t>(idx++)] = sy * wd + sx;
            }
        }
    }

    T im2col(const T& x, int h, int wd, int kh, int kw, int stride, int pad, int oh, int ow) const {
        const int cin = x.dim(0);
        T col({cin * kh * kw, oh * ow});
        S* cp = col.data();
        for (int ci = 0; ci < cin; ++ci) {
            const S* xp = x.data() + static_cast<std::int64_t>(ci) * h * wd;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    S* dst = cp + (static_cast<std::int64_t>(ci) * kh * kw + ky * kw + kx) * oh * ow;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int sy = oy * stride - pad + ky;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int sx = ox * stride - pad + kx;
                            dst[oy * ow + ox] =
                                (sy >= 0 && sy < h && sx >= 0 && sx < wd) ? xp[sy * wd + sx] : S(0);
                        }
                    }
                }
            }
        }
        return col;
    }

    static void col2im_add(T& gx, const T& gcol, int h, int wd, int kh, int kw, int stride, int pad,
                           int oh, int ow) {
        const int cin = gx.dim(0);
        for (int ci = 0; ci < cin; ++ci) {
            S* gp = gx.data() + static_cast<std::int64_t>(ci) * h * wd;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const S* src = gcol.data() + (static_cast<std::int64_t>(ci) * kh * kw + ky * kw + kx) * oh * ow;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int sy = oy * stride - pad + ky;
                        if (sy < 0 || sy >= h) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int sx = ox * stride - pad + kx;
                            if (sx < 0 || sx >= wd) continue;
                            gp[sy * wd + sx] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }

    std::vector<Node> nodes_;
    int current_ = -1;
};

}  // namespace mphsir
