#include "resp/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "resp/error.hpp"

namespace resp {

// ---------------------------------------------------------------------------
// kernels

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            out[i * n + j] += acc;
        }
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a.data() + p * m;
        const double* brow = b.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = arow[i];
            double* row = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += api * brow[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Gradients

const Tensor& Gradients::of(const Parameter& p) const {
    auto it = index_.find(&p);
    if (it == index_.end()) throw Error("no gradient recorded for parameter '" + p.name + "'");
    return entries_[it->second].second;
}

void Gradients::insert(const Parameter& p, Tensor grad) {
    if (auto it = index_.find(&p); it != index_.end()) {
        entries_[it->second].second = std::move(grad);
        return;
    }
    index_.emplace(&p, entries_.size());
    entries_.emplace_back(&p, std::move(grad));
}

void Gradients::accumulate(const Gradients& other, double weight) {
    for (const auto& [param, grad] : other.entries_) {
        auto it = index_.find(param);
        if (it == index_.end()) {
            Tensor scaled = grad;
            for (auto& v : scaled.data()) v *= weight;
            insert(*param, std::move(scaled));
            continue;
        }
        auto dst = entries_[it->second].second.data();
        auto src = grad.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * src[i];
    }
}

void Gradients::scale(double factor) {
    for (auto& [param, grad] : entries_) {
        for (auto& v : grad.data()) v *= factor;
    }
}

// ---------------------------------------------------------------------------
// Tape plumbing

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    }
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

Tensor matrix_zeros(std::size_t r, std::size_t c) { return Tensor(Shape{r, c}); }

}  // namespace

void Tape::check_live() const {
    if (consumed_) throw Error("tape already consumed by backward(); record a new forward pass");
}

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn) {
    check_live();
    nodes_.push_back(Node{std::move(value), requires_grad, requires_grad ? std::move(fn) : BackwardFn{}});
    return Var(static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor& Tape::grad_slot(Var v) {
    Tensor& g = grads_[v.id()];
    if (g.numel() == 0) g = zeros_like(nodes_[v.id()].value);
    return g;
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

Var Tape::param(const Parameter& p) {
    check_live();
    if (auto it = param_index_.find(&p); it != param_index_.end()) return Var(it->second);
    Var v = push(p.value, true, [](Tape&, const Tensor&) {});
    param_index_.emplace(&p, v.id());
    params_.emplace_back(&p, v.id());
    return v;
}

// ---------------------------------------------------------------------------
// ops

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_to_string(av.shape()) + " x " +
                             shape_to_string(bv.shape()));
    }
    Tensor out = matrix_zeros(m, n);
    gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
    return push(std::move(out), needs(a) || needs(b), [a, b, m, k, n](Tape& t, const Tensor& g) {
        if (t.needs(a)) gemm_nt(g.data(), t.value(b).data(), t.grad_slot(a).data(), m, n, k);
        if (t.needs(b)) gemm_tn(t.value(a).data(), g.data(), t.grad_slot(b).data(), k, m, n);
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    if (bv.cols() != k) {
        throw DimensionError("matmul_nt: inner dimensions differ, " + shape_to_string(av.shape()) + " x " +
                             shape_to_string(bv.shape()) + "^T");
    }
    Tensor out = matrix_zeros(m, n);
    gemm_nt(av.data(), bv.data(), out.data(), m, k, n);
    return push(std::move(out), needs(a) || needs(b), [a, b, m, k, n](Tape& t, const Tensor& g) {
        if (t.needs(a)) gemm_nn(g.data(), t.value(b).data(), t.grad_slot(a).data(), m, n, k);
        if (t.needs(b)) gemm_tn(g.data(), t.value(a).data(), t.grad_slot(b).data(), n, m, k);
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "add");
    Tensor out = av;
    auto o = out.data();
    auto bd = bv.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Tensor& g) {
        for (Var v : {a, b}) {
            if (!t.needs(v)) continue;
            auto dst = t.grad_slot(v).data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
        }
    });
}

Var Tape::add_row(Var x, Var row) {
    const Tensor& xv = value(x);
    const Tensor& rv = value(row);
    const std::size_t m = xv.rows(), n = xv.cols();
    if (rv.numel() != n) {
        throw DimensionError("add_row: row " + shape_to_string(rv.shape()) + " does not match columns of " +
                             shape_to_string(xv.shape()));
    }
    Tensor out = xv;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rv[j];
    return push(std::move(out), needs(x) || needs(row), [x, row, m, n](Tape& t, const Tensor& g) {
        if (t.needs(x)) {
            auto dst = t.grad_slot(x).data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
        }
        if (t.needs(row)) {
            auto dst = t.grad_slot(row).data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) dst[j] += g[i * n + j];
        }
    });
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "mul");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Tensor& g) {
        if (t.needs(a)) {
            auto dst = t.grad_slot(a).data();
            const Tensor& bv = t.value(b);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * bv[i];
        }
        if (t.needs(b)) {
            auto dst = t.grad_slot(b).data();
            const Tensor& av = t.value(a);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * av[i];
        }
    });
}

Var Tape::scale(Var x, double factor) {
    Tensor out = value(x);
    for (auto& v : out.data()) v *= factor;
    return push(std::move(out), needs(x), [x, factor](Tape& t, const Tensor& g) {
        auto dst = t.grad_slot(x).data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
    });
}

Var Tape::mul_scalar(Var x, Var s) {
    const Tensor& sv = value(s);
    if (sv.numel() != 1) throw DimensionError("mul_scalar: expected a single-element scale, got " +
                                              shape_to_string(sv.shape()));
    const double factor = sv[0];
    Tensor out = value(x);
    for (auto& v : out.data()) v *= factor;
    return push(std::move(out), needs(x) || needs(s), [x, s, factor](Tape& t, const Tensor& g) {
        if (t.needs(x)) {
            auto dst = t.grad_slot(x).data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
        }
        if (t.needs(s)) {
            const Tensor& xv = t.value(x);
            double acc = 0.0;
            for (std::size_t i = 0; i < xv.numel(); ++i) acc += g[i] * xv[i];
            t.grad_slot(s)[0] += acc;
        }
    });
}

Var Tape::add_constant(Var x, double c) {
    Tensor out = value(x);
    for (auto& v : out.data()) v += c;
    return push(std::move(out), needs(x), [x](Tape& t, const Tensor& g) {
        auto dst = t.grad_slot(x).data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    });
}

Var Tape::softmax_rows(Var x) {
    const Tensor& xv = value(x);
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor out = xv;
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data().data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            total += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= total;
    }
    Var y(static_cast<std::uint32_t>(nodes_.size()));
    return push(std::move(out), needs(x), [x, y, m, n](Tape& t, const Tensor& g) {
        const Tensor& yv = t.value(y);
        auto dst = t.grad_slot(x).data();
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * yv[i * n + j];
            for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += yv[i * n + j] * (g[i * n + j] - dot);
        }
    });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = value(x);
    const std::size_t m = xv.rows(), d = xv.cols();
    if (value(gain).numel() != d || value(bias).numel() != d) {
        throw DimensionError("layer_norm: gain/bias " + shape_to_string(value(gain).shape()) +
                             " do not match last dimension of " + shape_to_string(xv.shape()));
    }
    const Tensor& gv = value(gain);
    const Tensor& bv = value(bias);
    Tensor normalized = xv;
    std::vector<double> inv_std(m);
    Tensor out = xv;
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xv[i * d + j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xv[i * d + j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xv[i * d + j] - mean) * inv_std[i];
            normalized[i * d + j] = h;
            out[i * d + j] = h * gv[j] + bv[j];
        }
    }
    return push(std::move(out), needs(x) || needs(gain) || needs(bias),
                [x, gain, bias, m, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](
                    Tape& t, const Tensor& g) {
                    if (t.needs(gain)) {
                        auto dst = t.grad_slot(gain).data();
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j] * normalized[i * d + j];
                    }
                    if (t.needs(bias)) {
                        auto dst = t.grad_slot(bias).data();
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
                    }
                    if (t.needs(x)) {
                        const Tensor& gv = t.value(gain);
                        auto dst = t.grad_slot(x).data();
                        const double inv_d = 1.0 / static_cast<double>(d);
                        for (std::size_t i = 0; i < m; ++i) {
                            double mean_dh = 0.0, mean_dh_h = 0.0;
                            for (std::size_t j = 0; j < d; ++j) {
                                const double dh = g[i * d + j] * gv[j];
                                mean_dh += dh;
                                mean_dh_h += dh * normalized[i * d + j];
                            }
                            mean_dh *= inv_d;
                            mean_dh_h *= inv_d;
                            for (std::size_t j = 0; j < d; ++j) {
                                const double dh = g[i * d + j] * gv[j];
                                dst[i * d + j] +=
                                    inv_std[i] * (dh - mean_dh - normalized[i * d + j] * mean_dh_h);
                            }
                        }
                    }
                });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

Var Tape::gelu(Var x) {
    Tensor out = value(x);
    for (auto& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    return push(std::move(out), needs(x), [x](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        auto dst = t.grad_slot(x).data();
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < dst.size(); ++i) {
            const double v = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            dst[i] += g[i] * (cdf + v * pdf);
        }
    });
}

Var Tape::sigmoid(Var x) {
    Tensor out = value(x);
    for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
    Var y(static_cast<std::uint32_t>(nodes_.size()));
    return push(std::move(out), needs(x), [x, y](Tape& t, const Tensor& g) {
        const Tensor& yv = t.value(y);
        auto dst = t.grad_slot(x).data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * yv[i] * (1.0 - yv[i]);
    });
}

Var Tape::dropout(Var x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor out = value(x);
    std::vector<double> mask(out.numel());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
        out[i] *= mask[i];
    }
    return push(std::move(out), needs(x), [x, mask = std::move(mask)](Tape& t, const Tensor& g) {
        auto dst = t.grad_slot(x).data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * mask[i];
    });
}

Var Tape::mean_rows(Var x) {
    const Tensor& xv = value(x);
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor out = matrix_zeros(1, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
    for (auto& v : out.data()) v /= static_cast<double>(m);
    return push(std::move(out), needs(x), [x, m, n](Tape& t, const Tensor& g) {
        auto dst = t.grad_slot(x).data();
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += g[j] * inv_m;
    });
}

Var Tape::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    std::vector<Var> inputs(parts.begin(), parts.end());
    std::vector<double> data;
    bool any = false;
    for (Var p : inputs) {
        const Tensor& pv = value(p);
        if (pv.rows() != 1) throw DimensionError("concat_cols expects row vectors, got " + shape_to_string(pv.shape()));
        data.insert(data.end(), pv.data().begin(), pv.data().end());
        any = any || needs(p);
    }
    const std::size_t width = data.size();
    return push(Tensor(Shape{1, width}, std::move(data)), any, [inputs](Tape& t, const Tensor& g) {
        std::size_t offset = 0;
        for (Var p : inputs) {
            const std::size_t n = t.value(p).numel();
            if (t.needs(p)) {
                auto dst = t.grad_slot(p).data();
                for (std::size_t j = 0; j < n; ++j) dst[j] += g[offset + j];
            }
            offset += n;
        }
    });
}

Var Tape::stack_rows(std::span<const Var> rows) {
    if (rows.empty()) throw DimensionError("stack_rows: no inputs");
    std::vector<Var> inputs(rows.begin(), rows.end());
    const std::size_t n = value(inputs.front()).numel();
    std::vector<double> data;
    data.reserve(n * inputs.size());
    bool any = false;
    for (Var r : inputs) {
        const Tensor& rv = value(r);
        if (rv.numel() != n) throw DimensionError("stack_rows: rows of unequal width");
        data.insert(data.end(), rv.data().begin(), rv.data().end());
        any = any || needs(r);
    }
    return push(Tensor(Shape{inputs.size(), n}, std::move(data)), any, [inputs, n](Tape& t, const Tensor& g) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (!t.needs(inputs[i])) continue;
            auto dst = t.grad_slot(inputs[i]).data();
            for (std::size_t j = 0; j < n; ++j) dst[j] += g[i * n + j];
        }
    });
}

Var Tape::sum(Var x) {
    double total = 0.0;
    for (double v : value(x).data()) total += v;
    return push(Tensor::scalar(total), needs(x), [x](Tape& t, const Tensor& g) {
        auto dst = t.grad_slot(x).data();
        for (auto& v : dst) v += g[0];
    });
}

Var Tape::smoothed_cross_entropy(Var logits, std::size_t target, double smoothing) {
    const Tensor& lv = value(logits);
    const std::size_t c = lv.numel();
    if (target >= c) {
        throw Error("invalid class index " + std::to_string(target) + " for " + std::to_string(c) + " classes");
    }
    if (!(smoothing >= 0.0 && smoothing < 1.0)) {
        throw Error("label smoothing must lie in [0, 1), got " + std::to_string(smoothing));
    }
    const double mx = *std::max_element(lv.data().begin(), lv.data().end());
    double total = 0.0;
    for (double v : lv.data()) total += std::exp(v - mx);
    const double log_z = mx + std::log(total);
    std::vector<double> probs(c), targets(c, smoothing / static_cast<double>(c));
    targets[target] += 1.0 - smoothing;
    double loss = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        const double log_p = lv[i] - log_z;
        probs[i] = std::exp(log_p);
        loss -= targets[i] * log_p;
    }
    return push(Tensor::scalar(loss), needs(logits),
                [logits, probs = std::move(probs), targets = std::move(targets)](Tape& t, const Tensor& g) {
                    auto dst = t.grad_slot(logits).data();
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0] * (probs[i] - targets[i]);
                });
}

Var Tape::straight_through(Var soft, std::size_t index) {
    const Tensor& sv = value(soft);
    if (index >= sv.numel()) throw DimensionError("straight_through: index out of range");
    Tensor hard = zeros_like(sv);
    hard[index] = 1.0;
    return push(std::move(hard), needs(soft), [soft](Tape& t, const Tensor& g) {
        auto dst = t.grad_slot(soft).data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// reverse pass

Gradients Tape::backward(Var loss) {
    if (consumed_) throw Error("stale tape: backward() already ran; record a new forward pass first");
    if (value(loss).numel() != 1) {
        throw DimensionError("backward() needs a scalar loss, got " + shape_to_string(value(loss).shape()));
    }
    consumed_ = true;
    grads_.assign(nodes_.size(), Tensor{});
    grads_[loss.id()] = Tensor::filled(value(loss).shape(), 1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.requires_grad || grads_[i].numel() == 0 || !node.backward) continue;
        node.backward(*this, grads_[i]);
    }
    Gradients result;
    for (const auto& [param, id] : params_) {
        result.insert(*param, grads_[id].numel() == 0 ? Tensor(param->value.shape()) : std::move(grads_[id]));
    }
    grads_.clear();
    return result;
}

}  // namespace resp
