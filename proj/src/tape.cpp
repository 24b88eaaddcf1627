#include "rxpp/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rxpp {

namespace {
double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Var Tape::push(Tensor value, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    if (grad_enabled_) {
        n.grad = n.value;
        n.grad.zero();
        n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, bool needs_grad) {
    (void)needs_grad;
    return push(std::move(value), nullptr);
}

Var Tape::linear(Var W, Var x, Var b) {
    const Tensor& w = v(W);
    const Tensor& xv = v(x);
    check_mat(w, "linear");
    check_vec(xv, "linear");
    size_t m = w.rows(), n = w.cols();
    if (xv.size() != n) throw std::invalid_argument("linear: dimension mismatch");
    Tensor y = Tensor::vec(m);
    for (size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* wr = &w.data[i * n];
        for (size_t j = 0; j < n; ++j) acc += wr[j] * xv.data[j];
        y.data[i] = acc;
    }
    if (b.ok()) {
        const Tensor& bv = v(b);
        if (bv.size() != m) throw std::invalid_argument("linear: bias mismatch");
        for (size_t i = 0; i < m; ++i) y.data[i] += bv.data[i];
    }
    flops_ += 2.0 * static_cast<double>(m * n);
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, W, x, b, out, m, n] {
        const Tensor& go = g(out);
        const Tensor& wv = v(W);
        const Tensor& xv = v(x);
        Tensor& gw = g(W);
        Tensor& gx = g(x);
        for (size_t i = 0; i < m; ++i) {
            double gi = go.data[i];
            for (size_t j = 0; j < n; ++j) {
                gw.data[i * n + j] += gi * xv.data[j];
                gx.data[j] += gi * wv.data[i * n + j];
            }
        }
        if (b.ok()) {
            Tensor& gb = g(b);
            for (size_t i = 0; i < m; ++i) gb.data[i] += go.data[i];
        }
    };
    return out;
}

Var Tape::linear_rows(Var W, Var M, Var b) {
    const Tensor& w = v(W);
    const Tensor& mv = v(M);
    check_mat(w, "linear_rows");
    check_mat(mv, "linear_rows");
    size_t m = w.rows(), n = w.cols(), T = mv.rows();
    if (mv.cols() != n) throw std::invalid_argument("linear_rows: dimension mismatch");
    Tensor y = Tensor::mat(T, m);
    for (size_t t = 0; t < T; ++t) {
        const double* row = &mv.data[t * n];
        for (size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            const double* wr = &w.data[i * n];
            for (size_t j = 0; j < n; ++j) acc += wr[j] * row[j];
            y.data[t * m + i] = acc;
        }
    }
    if (b.ok()) {
        const Tensor& bv = v(b);
        if (bv.size() != m) throw std::invalid_argument("linear_rows: bias mismatch");
        for (size_t t = 0; t < T; ++t)
            for (size_t i = 0; i < m; ++i) y.data[t * m + i] += bv.data[i];
    }
    flops_ += 2.0 * static_cast<double>(T * m * n);
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, W, M, b, out, m, n, T] {
        const Tensor& go = g(out);
        const Tensor& wv = v(W);
        const Tensor& mv2 = v(M);
        Tensor& gw = g(W);
        Tensor& gm = g(M);
        for (size_t t = 0; t < T; ++t) {
            for (size_t i = 0; i < m; ++i) {
                double gi = go.data[t * m + i];
                if (gi == 0.0) continue;
                for (size_t j = 0; j < n; ++j) {
                    gw.data[i * n + j] += gi * mv2.data[t * n + j];
                    gm.data[t * n + j] += gi * wv.data[i * n + j];
                }
            }
        }
        if (b.ok()) {
            Tensor& gb = g(b);
            for (size_t t = 0; t < T; ++t)
                for (size_t i = 0; i < m; ++i) gb.data[i] += go.data[t * m + i];
        }
    };
    return out;
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = v(a);
    const Tensor& bv = v(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
    Tensor y = av;
    for (size_t i = 0; i < y.size(); ++i) y.data[i] += bv.data[i];
    flops_ += static_cast<double>(y.size());
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, a, b, out] {
        const Tensor& go = g(out);
        Tensor& ga = g(a);
        Tensor& gb = g(b);
        for (size_t i = 0; i < go.size(); ++i) {
            ga.data[i] += go.data[i];
            gb.data[i] += go.data[i];
        }
    };
    return out;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = v(a);
    const Tensor& bv = v(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("sub: shape mismatch");
    Tensor y = av;
    for (size_t i = 0; i < y.size(); ++i) y.data[i] -= bv.data[i];
    flops_ += static_cast<double>(y.size());
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, a, b, out] {
        const Tensor& go = g(out);
        Tensor& ga = g(a);
        Tensor& gb = g(b);
        for (size_t i = 0; i < go.size(); ++i) {
            ga.data[i] += go.data[i];
            gb.data[i] -= go.data[i];
        }
    };
    return out;
}

Var Tape::scale(Var x, double c) {
    Tensor y = v(x);
    for (double& d : y.data) d *= c;
    flops_ += static_cast<double>(y.size());
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, x, out, c] {
        const Tensor& go = g(out);
        Tensor& gx = g(x);
        for (size_t i = 0; i < go.size(); ++i) gx.data[i] += c * go.data[i];
    };
    return out;
}

Var Tape::hadamard(Var a, Var b) {
    const Tensor& av = v(a);
    const Tensor& bv = v(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("hadamard: shape mismatch");
    Tensor y = av;
    for (size_t i = 0; i < y.size(); ++i) y.data[i] *= bv.data[i];
    flops_ += static_cast<double>(y.size());
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, a, b, out] {
        const Tensor& go = g(out);
        const Tensor& av2 = v(a);
        const Tensor& bv2 = v(b);
        Tensor& ga = g(a);
        Tensor& gb = g(b);
        for (size_t i = 0; i < go.size(); ++i) {
            ga.data[i] += go.data[i] * bv2.data[i];
            gb.data[i] += go.data[i] * av2.data[i];
        }
    };
    return out;
}

Var Tape::scalar_mul(Var s, Var x) {
    const Tensor& sv = v(s);
    if (sv.size() != 1) throw std::invalid_argument("scalar_mul: s must be scalar");
    Tensor y = v(x);
    double c = sv.data[0];
    for (double& d : y.data) d *= c;
    flops_ += static_cast<double>(y.size());
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, s, x, out] {
        const Tensor& go = g(out);
        const Tensor& xv = v(x);
        double c2 = v(s).data[0];
        Tensor& gs = g(s);
        Tensor& gx = g(x);
        double acc = 0.0;
        for (size_t i = 0; i < go.size(); ++i) {
            gx.data[i] += c2 * go.data[i];
            acc += go.data[i] * xv.data[i];
        }
        gs.data[0] += acc;
    };
    return out;
}

Var Tape::concat(std::span<const Var> parts) {
    size_t total = 0;
    for (Var p : parts) {
        check_vec(v(p), "concat");
        total += v(p).size();
    }
    Tensor y = Tensor::vec(total);
    size_t off = 0;
    for (Var p : parts) {
        const Tensor& pv = v(p);
        std::copy(pv.data.begin(), pv.data.end(), y.data.begin() + off);
        off += pv.size();
    }
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    std::vector<Var> ps(parts.begin(), parts.end());
    nodes_[out.id].back = [this, ps, out] {
        const Tensor& go = g(out);
        size_t off2 = 0;
        for (Var p : ps) {
            Tensor& gp = g(p);
            for (size_t i = 0; i < gp.size(); ++i) gp.data[i] += go.data[off2 + i];
            off2 += gp.size();
        }
    };
    return out;
}

#define RXPP_ELEMENTWISE(name, fwd_expr, bwd_expr)                            \
    Var Tape::name(Var x) {                                                   \
        Tensor y = v(x);                                                      \
        for (double& d : y.data) {                                            \
            double xv = d;                                                    \
            (void)xv;                                                         \
            d = (fwd_expr);                                                   \
        }                                                                     \
        flops_ += 4.0 * static_cast<double>(y.size());                        \
        Var out = push(std::move(y));                                         \
        if (!grad_enabled_) return out;                                       \
        nodes_[out.id].back = [this, x, out] {                                \
            const Tensor& go = g(out);                                        \
            const Tensor& xt = v(x);                                          \
            Tensor& gx = g(x);                                                \
            for (size_t i = 0; i < go.size(); ++i) {                          \
                double xv = xt.data[i];                                       \
                (void)xv;                                                     \
                gx.data[i] += go.data[i] * (bwd_expr);                        \
            }                                                                 \
        };                                                                    \
        return out;                                                           \
    }

RXPP_ELEMENTWISE(silu, xv * sigmoid_d(xv),
                 sigmoid_d(xv) * (1.0 + xv * (1.0 - sigmoid_d(xv))))
RXPP_ELEMENTWISE(relu, xv > 0.0 ? xv : 0.0, xv > 0.0 ? 1.0 : 0.0)
RXPP_ELEMENTWISE(sigmoid, sigmoid_d(xv), sigmoid_d(xv) * (1.0 - sigmoid_d(xv)))
RXPP_ELEMENTWISE(tanh_, std::tanh(xv), 1.0 - std::tanh(xv) * std::tanh(xv))
RXPP_ELEMENTWISE(sin_, std::sin(xv), std::cos(xv))
RXPP_ELEMENTWISE(cos_, std::cos(xv), -std::sin(xv))
RXPP_ELEMENTWISE(log_, std::log(xv), 1.0 / xv)

#undef RXPP_ELEMENTWISE

Var Tape::layernorm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& xv = v(x);
    check_vec(xv, "layernorm");
    size_t n = xv.size();
    if (v(gamma).size() != n || v(beta).size() != n)
        throw std::invalid_argument("layernorm: parameter mismatch");
    double mu = 0.0;
    for (double d : xv.data) mu += d;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double d : xv.data) var += (d - mu) * (d - mu);
    var /= static_cast<double>(n);
    double sd = std::sqrt(var + eps);
    Tensor y = Tensor::vec(n);
    const Tensor& gv = v(gamma);
    const Tensor& bv = v(beta);
    for (size_t i = 0; i < n; ++i) y.data[i] = gv.data[i] * (xv.data[i] - mu) / sd + bv.data[i];
    flops_ += 8.0 * static_cast<double>(n);
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, x, gamma, beta, out, mu, sd, n] {
        const Tensor& go = g(out);
        const Tensor& xv2 = v(x);
        const Tensor& gv2 = v(gamma);
        Tensor& gx = g(x);
        Tensor& gg = g(gamma);
        Tensor& gb = g(beta);
        double mean_h = 0.0, mean_hx = 0.0;
        std::vector<double> xhat(n), h(n);
        for (size_t i = 0; i < n; ++i) {
            xhat[i] = (xv2.data[i] - mu) / sd;
            h[i] = go.data[i] * gv2.data[i];
            mean_h += h[i];
            mean_hx += h[i] * xhat[i];
        }
        mean_h /= static_cast<double>(n);
        mean_hx /= static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) {
            gx.data[i] += (h[i] - mean_h - xhat[i] * mean_hx) / sd;
            gg.data[i] += go.data[i] * xhat[i];
            gb.data[i] += go.data[i];
        }
    };
    return out;
}

Var Tape::layernorm_rows(Var M, Var gamma, Var beta, double eps) {
    const Tensor& mv = v(M);
    check_mat(mv, "layernorm_rows");
    size_t T = mv.rows(), n = mv.cols();
    if (v(gamma).size() != n || v(beta).size() != n)
        throw std::invalid_argument("layernorm_rows: parameter mismatch");
    Tensor y = Tensor::mat(T, n);
    std::vector<double> mus(T), sds(T);
    const Tensor& gv = v(gamma);
    const Tensor& bv = v(beta);
    for (size_t t = 0; t < T; ++t) {
        const double* row = &mv.data[t * n];
        double mu = 0.0;
        for (size_t i = 0; i < n; ++i) mu += row[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (size_t i = 0; i < n; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= static_cast<double>(n);
        double sd = std::sqrt(var + eps);
        mus[t] = mu;
        sds[t] = sd;
        for (size_t i = 0; i < n; ++i) y.data[t * n + i] = gv.data[i] * (row[i] - mu) / sd + bv.data[i];
    }
    flops_ += 8.0 * static_cast<double>(T * n);
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, M, gamma, beta, out, mus, sds, T, n] {
        const Tensor& go = g(out);
        const Tensor& mv2 = v(M);
        const Tensor& gv2 = v(gamma);
        Tensor& gm = g(M);
        Tensor& gg = g(gamma);
        Tensor& gb = g(beta);
        std::vector<double> xhat(n), h(n);
        for (size_t t = 0; t < T; ++t) {
            double mean_h = 0.0, mean_hx = 0.0;
            for (size_t i = 0; i < n; ++i) {
                xhat[i] = (mv2.data[t * n + i] - mus[t]) / sds[t];
                h[i] = go.data[t * n + i] * gv2.data[i];
                mean_h += h[i];
                mean_hx += h[i] * xhat[i];
            }
            mean_h /= static_cast<double>(n);
            mean_hx /= static_cast<double>(n);
            for (size_t i = 0; i < n; ++i) {
                gm.data[t * n + i] += (h[i] - mean_h - xhat[i] * mean_hx) / sds[t];
                gg.data[i] += go.data[t * n + i] * xhat[i];
                gb.data[i] += go.data[t * n + i];
            }
        }
    };
    return out;
}

Var Tape::l2_normalize(Var x, double eps) {
    const Tensor& xv = v(x);
    check_vec(xv, "l2_normalize");
    double norm = 0.0;
    for (double d : xv.data) norm += d * d;
    norm = std::sqrt(norm);
    double denom = std::max(norm, eps);
    Tensor y = xv;
    for (double& d : y.data) d /= denom;
    flops_ += 3.0 * static_cast<double>(y.size());
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, x, out, denom] {
        const Tensor& go = g(out);
        const Tensor& yv = v(out);
        Tensor& gx = g(x);
        double proj = 0.0;
        for (size_t i = 0; i < go.size(); ++i) proj += go.data[i] * yv.data[i];
        for (size_t i = 0; i < go.size(); ++i)
            gx.data[i] += (go.data[i] - yv.data[i] * proj) / denom;
    };
    return out;
}

Var Tape::softmax(Var x) {
    const Tensor& xv = v(x);
    check_vec(xv, "softmax");
    double mx = xv.data[0];
    for (double d : xv.data) mx = std::max(mx, d);
    Tensor y = xv;
    double z = 0.0;
    for (double& d : y.data) {
        d = std::exp(d - mx);
        z += d;
    }
    for (double& d : y.data) d /= z;
    flops_ += 4.0 * static_cast<double>(y.size());
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, x, out] {
        const Tensor& go = g(out);
        const Tensor& yv = v(out);
        Tensor& gx = g(x);
        double dotv = 0.0;
        for (size_t i = 0; i < go.size(); ++i) dotv += go.data[i] * yv.data[i];
        for (size_t i = 0; i < go.size(); ++i)
            gx.data[i] += yv.data[i] * (go.data[i] - dotv);
    };
    return out;
}

Var Tape::mean_rows(Var M) {
    const Tensor& mv = v(M);
    check_mat(mv, "mean_rows");
    size_t T = mv.rows(), n = mv.cols();
    if (T == 0) throw std::invalid_argument("mean_rows: empty matrix");
    Tensor y = Tensor::vec(n);
    for (size_t t = 0; t < T; ++t)
        for (size_t i = 0; i < n; ++i) y.data[i] += mv.data[t * n + i];
    for (double& d : y.data) d /= static_cast<double>(T);
    flops_ += static_cast<double>(T * n);
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, M, out, T, n] {
        const Tensor& go = g(out);
        Tensor& gm = g(M);
        for (size_t t = 0; t < T; ++t)
            for (size_t i = 0; i < n; ++i) gm.data[t * n + i] += go.data[i] / static_cast<double>(T);
    };
    return out;
}

Var Tape::stack_rows(std::span<const Var> rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
    size_t n = v(rows[0]).size();
    Tensor y = Tensor::mat(rows.size(), n);
    for (size_t r = 0; r < rows.size(); ++r) {
        const Tensor& rv = v(rows[r]);
        check_vec(rv, "stack_rows");
        if (rv.size() != n) throw std::invalid_argument("stack_rows: ragged rows");
        std::copy(rv.data.begin(), rv.data.end(), y.data.begin() + r * n);
    }
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    std::vector<Var> rs(rows.begin(), rows.end());
    nodes_[out.id].back = [this, rs, out, n] {
        const Tensor& go = g(out);
        for (size_t r = 0; r < rs.size(); ++r) {
            Tensor& gr = g(rs[r]);
            for (size_t i = 0; i < n; ++i) gr.data[i] += go.data[r * n + i];
        }
    };
    return out;
}

Var Tape::stack_scalars(std::span<const Var> scalars) {
    Tensor y = Tensor::vec(scalars.size());
    for (size_t i = 0; i < scalars.size(); ++i) {
        if (v(scalars[i]).size() != 1) throw std::invalid_argument("stack_scalars: non-scalar");
        y.data[i] = v(scalars[i]).data[0];
    }
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    std::vector<Var> ss(scalars.begin(), scalars.end());
    nodes_[out.id].back = [this, ss, out] {
        const Tensor& go = g(out);
        for (size_t i = 0; i < ss.size(); ++i) g(ss[i]).data[0] += go.data[i];
    };
    return out;
}

Var Tape::dot(Var a, Var b) {
    const Tensor& av = v(a);
    const Tensor& bv = v(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("dot: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < av.size(); ++i) acc += av.data[i] * bv.data[i];
    flops_ += 2.0 * static_cast<double>(av.size());
    Var out = push(Tensor::scalar(acc));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, a, b, out] {
        double go = g(out).data[0];
        const Tensor& av2 = v(a);
        const Tensor& bv2 = v(b);
        Tensor& ga = g(a);
        Tensor& gb = g(b);
        for (size_t i = 0; i < av2.size(); ++i) {
            ga.data[i] += go * bv2.data[i];
            gb.data[i] += go * av2.data[i];
        }
    };
    return out;
}

Var Tape::cosine(Var a, Var b) {
    const Tensor& av = v(a);
    const Tensor& bv = v(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("cosine: shape mismatch");
    double na = 0.0, nb = 0.0, ab = 0.0;
    for (size_t i = 0; i < av.size(); ++i) {
        na += av.data[i] * av.data[i];
        nb += bv.data[i] * bv.data[i];
        ab += av.data[i] * bv.data[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < 1e-12 || nb < 1e-12) throw std::runtime_error("cosine: zero-norm operand");
    double c = ab / (na * nb);
    flops_ += 6.0 * static_cast<double>(av.size());
    Var out = push(Tensor::scalar(c));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, a, b, out, na, nb, c] {
        double go = g(out).data[0];
        const Tensor& av2 = v(a);
        const Tensor& bv2 = v(b);
        Tensor& ga = g(a);
        Tensor& gb = g(b);
        for (size_t i = 0; i < av2.size(); ++i) {
            ga.data[i] += go * (bv2.data[i] / (na * nb) - c * av2.data[i] / (na * na));
            gb.data[i] += go * (av2.data[i] / (na * nb) - c * bv2.data[i] / (nb * nb));
        }
    };
    return out;
}

Var Tape::row(Var M, size_t r) {
    const Tensor& mv = v(M);
    check_mat(mv, "row");
    if (r >= mv.rows()) throw std::invalid_argument("row: index out of range");
    size_t n = mv.cols();
    Tensor y = Tensor::vec(n);
    std::copy(mv.data.begin() + r * n, mv.data.begin() + (r + 1) * n, y.data.begin());
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, M, out, r, n] {
        const Tensor& go = g(out);
        Tensor& gm = g(M);
        for (size_t i = 0; i < n; ++i) gm.data[r * n + i] += go.data[i];
    };
    return out;
}

Var Tape::pick(Var x, size_t idx) {
    const Tensor& xv = v(x);
    check_vec(xv, "pick");
    if (idx >= xv.size()) throw std::invalid_argument("pick: index out of range");
    Var out = push(Tensor::scalar(xv.data[idx]));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, x, out, idx] { g(x).data[idx] += g(out).data[0]; };
    return out;
}

Var Tape::sum_scalars(std::span<const Var> scalars) {
    double acc = 0.0;
    for (Var s : scalars) {
        if (v(s).size() != 1) throw std::invalid_argument("sum_scalars: non-scalar");
        acc += v(s).data[0];
    }
    flops_ += static_cast<double>(scalars.size());
    Var out = push(Tensor::scalar(acc));
    if (!grad_enabled_) return out;
    std::vector<Var> ss(scalars.begin(), scalars.end());
    nodes_[out.id].back = [this, ss, out] {
        double go = g(out).data[0];
        for (Var s : ss) g(s).data[0] += go;
    };
    return out;
}

Var Tape::focal_nll(Var p, double gamma) {
    const Tensor& pv = v(p);
    if (pv.size() != 1) throw std::invalid_argument("focal_nll: p must be scalar");
    double pd = pv.data[0];
    double f = -std::pow(1.0 - pd, gamma) * std::log(pd);
    flops_ += 8.0;
    Var out = push(Tensor::scalar(f));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, p, out, gamma] {
        double go = g(out).data[0];
        double pd2 = v(p).data[0];
        double one_m = 1.0 - pd2;
        double dfdp;
        if (gamma == 0.0) {
            dfdp = -1.0 / pd2;
        } else {
            dfdp = gamma * std::pow(one_m, gamma - 1.0) * std::log(pd2) -
                   std::pow(one_m, gamma) / pd2;
        }
        g(p).data[0] += go * dfdp;
    };
    return out;
}

Var Tape::bank_attention(Var q, Var K, Var V, Var head_bias, int heads) {
    const Tensor& qv = v(q);
    const Tensor& kv = v(K);
    const Tensor& vv = v(V);
    check_vec(qv, "bank_attention");
    check_mat(kv, "bank_attention");
    check_mat(vv, "bank_attention");
    size_t D = qv.size();
    size_t Kn = kv.rows();
    if (Kn == 0) throw std::runtime_error("bank_attention: empty bank");
    if (kv.cols() != D || !vv.same_shape(kv))
        throw std::invalid_argument("bank_attention: dimension mismatch");
    if (heads <= 0 || D % static_cast<size_t>(heads) != 0)
        throw std::invalid_argument("bank_attention: heads must divide dim");
    size_t dh = D / static_cast<size_t>(heads);
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* bias = nullptr;
    if (head_bias.ok()) {
        if (v(head_bias).size() != static_cast<size_t>(heads))
            throw std::invalid_argument("bank_attention: bias size must equal heads");
        bias = v(head_bias).data.data();
    }

    Tensor weights = Tensor::mat(heads, Kn);  // saved softmax weights per head
    Tensor y = Tensor::vec(D);
    for (int a = 0; a < heads; ++a) {
        size_t off = static_cast<size_t>(a) * dh;
        double mx = -1e300;
        for (size_t k = 0; k < Kn; ++k) {
            double s = 0.0;
            for (size_t j = 0; j < dh; ++j) s += qv.data[off + j] * kv.data[k * D + off + j];
            s = s * inv_sqrt + (bias ? bias[a] : 0.0);
            weights.at(a, k) = s;
            mx = std::max(mx, s);
        }
        double z = 0.0;
        for (size_t k = 0; k < Kn; ++k) {
            double e = std::exp(weights.at(a, k) - mx);
            weights.at(a, k) = e;
            z += e;
        }
        for (size_t k = 0; k < Kn; ++k) {
            weights.at(a, k) /= z;
            double w = weights.at(a, k);
            for (size_t j = 0; j < dh; ++j) y.data[off + j] += w * vv.data[k * D + off + j];
        }
    }
    flops_ += 4.0 * static_cast<double>(Kn * D);
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, q, K, V, head_bias, out, weights, heads, dh, inv_sqrt, Kn, D] {
        const Tensor& go = g(out);
        const Tensor& qv2 = v(q);
        const Tensor& kv2 = v(K);
        const Tensor& vv2 = v(V);
        Tensor& gq = g(q);
        Tensor& gk = g(K);
        Tensor& gv = g(V);
        std::vector<double> dw(Kn), ds(Kn);
        for (int a = 0; a < heads; ++a) {
            size_t off = static_cast<size_t>(a) * dh;
            double wdot = 0.0;
            for (size_t k = 0; k < Kn; ++k) {
                double acc = 0.0;
                for (size_t j = 0; j < dh; ++j) acc += go.data[off + j] * vv2.data[k * D + off + j];
                dw[k] = acc;
                wdot += weights.at(a, k) * acc;
            }
            double ds_sum = 0.0;
            for (size_t k = 0; k < Kn; ++k) {
                ds[k] = weights.at(a, k) * (dw[k] - wdot);
                ds_sum += ds[k];
                double w = weights.at(a, k);
                for (size_t j = 0; j < dh; ++j) gv.data[k * D + off + j] += w * go.data[off + j];
            }
            if (head_bias.ok()) g(head_bias).data[a] += ds_sum;
            for (size_t k = 0; k < Kn; ++k) {
                double c = ds[k] * inv_sqrt;
                for (size_t j = 0; j < dh; ++j) {
                    gq.data[off + j] += c * kv2.data[k * D + off + j];
                    gk.data[k * D + off + j] += c * qv2.data[off + j];
                }
            }
        }
    };
    return out;
}

Var Tape::mhsa_rows(Var Q, Var K, Var V, int heads) {
    const Tensor& qv = v(Q);
    const Tensor& kv = v(K);
    const Tensor& vv = v(V);
    check_mat(qv, "mhsa_rows");
    size_t T = qv.rows(), D = qv.cols();
    if (!kv.same_shape(qv) || !vv.same_shape(qv))
        throw std::invalid_argument("mhsa_rows: shape mismatch");
    if (heads <= 0 || D % static_cast<size_t>(heads) != 0)
        throw std::invalid_argument("mhsa_rows: heads must divide dim");
    size_t dh = D / static_cast<size_t>(heads);
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    // weights: heads * T rows of T softmaxed attention coefficients
    Tensor weights = Tensor::mat(static_cast<size_t>(heads) * T, T);
    Tensor y = Tensor::mat(T, D);
    for (int a = 0; a < heads; ++a) {
        size_t off = static_cast<size_t>(a) * dh;
        for (size_t t = 0; t < T; ++t) {
            double* wrow = &weights.data[(static_cast<size_t>(a) * T + t) * T];
            double mx = -1e300;
            for (size_t u = 0; u < T; ++u) {
                double s = 0.0;
                for (size_t j = 0; j < dh; ++j)
                    s += qv.data[t * D + off + j] * kv.data[u * D + off + j];
                wrow[u] = s * inv_sqrt;
                mx = std::max(mx, wrow[u]);
            }
            double z = 0.0;
            for (size_t u = 0; u < T; ++u) {
                wrow[u] = std::exp(wrow[u] - mx);
                z += wrow[u];
            }
            for (size_t u = 0; u < T; ++u) {
                wrow[u] /= z;
                for (size_t j = 0; j < dh; ++j)
                    y.data[t * D + off + j] += wrow[u] * vv.data[u * D + off + j];
            }
        }
    }
    flops_ += 4.0 * static_cast<double>(T * T * D);
    Var out = push(std::move(y));
    if (!grad_enabled_) return out;
    nodes_[out.id].back = [this, Q, K, V, out, weights, heads, dh, inv_sqrt, T, D] {
        const Tensor& go = g(out);
        const Tensor& qv2 = v(Q);
        const Tensor& kv2 = v(K);
        const Tensor& vv2 = v(V);
        Tensor& gq = g(Q);
        Tensor& gk = g(K);
        Tensor& gv = g(V);
        std::vector<double> dw(T), ds(T);
        for (int a = 0; a < heads; ++a) {
            size_t off = static_cast<size_t>(a) * dh;
            for (size_t t = 0; t < T; ++t) {
                const double* wrow = &weights.data[(static_cast<size_t>(a) * T + t) * T];
                double wdot = 0.0;
                for (size_t u = 0; u < T; ++u) {
                    double acc = 0.0;
                    for (size_t j = 0; j < dh; ++j)
                        acc += go.data[t * D + off + j] * vv2.data[u * D + off + j];
                    dw[u] = acc;
                    wdot += wrow[u] * acc;
                    for (size_t j = 0; j < dh; ++j)
                        gv.data[u * D + off + j] += wrow[u] * go.data[t * D + off + j];
                }
                for (size_t u = 0; u < T; ++u) {
                    ds[u] = wrow[u] * (dw[u] - wdot) * inv_sqrt;
                    for (size_t j = 0; j < dh; ++j) {
                        gq.data[t * D + off + j] += ds[u] * kv2.data[u * D + off + j];
                        gk.data[u * D + off + j] += ds[u] * qv2.data[t * D + off + j];
                    }
                }
            }
        }
    };
    return out;
}

void Tape::backward(Var root) {
    if (!grad_enabled_) throw std::runtime_error("backward: tape built with grads disabled");
    if (v(root).size() != 1) throw std::invalid_argument("backward: root must be scalar");
    g(root).data[0] = 1.0;
    for (size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back();
    }
}

}  // namespace rxpp
