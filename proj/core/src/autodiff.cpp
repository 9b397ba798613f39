#include "tnd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tnd::ad {

const DenseTensor& Var::value() const { return tape_->value(node_); }
const DenseTensor& Var::grad() const { return tape_->grad(node_); }

std::size_t Tape::push(DenseTensor value, bool requires_grad, std::function<void(Tape&)> pull) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.pull = std::move(pull);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

DenseTensor& Tape::grad_buffer(std::size_t node) {
    Node& n = nodes_[node];
    if (!n.grad_alloc) {
        n.grad = DenseTensor(n.value.shape());
        n.grad_alloc = true;
    }
    return n.grad;
}

void Tape::accumulate(std::size_t node, const DenseTensor& g) {
    DenseTensor& buf = grad_buffer(node);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

Var Tape::leaf(DenseTensor value, bool requires_grad) {
    return Var(this, push(std::move(value), requires_grad, nullptr));
}

Var Tape::contract(Var a, Var b, std::vector<std::pair<std::size_t, std::size_t>> axes) {
    const std::size_t ia = a.node_, ib = b.node_;
    DenseTensor out = tnd::contract(nodes_[ia].value, nodes_[ib].value, axes);
    const bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;

    auto pull = [ia, ib, axes](Tape& t) {
        const DenseTensor& ga = t.nodes_[ia].value;
        const DenseTensor& gb = t.nodes_[ib].value;
        const std::size_t self = t.pull_node_;
        const DenseTensor& gout = t.nodes_[self].grad;

        std::vector<bool> a_used(ga.rank(), false), b_used(gb.rank(), false);
        for (auto& [x, y] : axes) {
            a_used[x] = true;
            b_used[y] = true;
        }
        std::vector<std::size_t> a_free, b_free;
        for (std::size_t i = 0; i < ga.rank(); ++i)
            if (!a_used[i]) a_free.push_back(i);
        for (std::size_t i = 0; i < gb.rank(); ++i)
            if (!b_used[i]) b_free.push_back(i);
        const std::size_t na_free = a_free.size(), nb_free = b_free.size();

        if (t.nodes_[ia].requires_grad) {
            // dA = contract(gout, B over b_free), then permute into A's layout.
            std::vector<std::pair<std::size_t, std::size_t>> pairs;
            for (std::size_t i = 0; i < nb_free; ++i) pairs.emplace_back(na_free + i, b_free[i]);
            DenseTensor da = tnd::contract(gout, gb, pairs);
            // da axes: a_free..., then B's contracted axes in B-axis order.
            std::vector<std::size_t> b_contr_sorted;
            for (std::size_t i = 0; i < gb.rank(); ++i)
                if (b_used[i]) b_contr_sorted.push_back(i);
            std::vector<std::size_t> perm(ga.rank());
            for (std::size_t i = 0; i < na_free; ++i) perm[a_free[i]] = i;
            for (auto& [ax, bx] : axes) {
                const std::size_t pos =
                    std::lower_bound(b_contr_sorted.begin(), b_contr_sorted.end(), bx) -
                    b_contr_sorted.begin();
                perm[ax] = na_free + pos;
            }
            t.accumulate(ia, tnd::permute(da, perm));
        }
        if (t.nodes_[ib].requires_grad) {
            std::vector<std::pair<std::size_t, std::size_t>> pairs;
            for (std::size_t i = 0; i < na_free; ++i) pairs.emplace_back(a_free[i], i);
            DenseTensor db = tnd::contract(ga, gout, pairs);
            // db axes: A's contracted axes in A-axis order, then b_free.
            std::vector<std::size_t> a_contr_sorted;
            for (std::size_t i = 0; i < ga.rank(); ++i)
                if (a_used[i]) a_contr_sorted.push_back(i);
            std::vector<std::size_t> perm(gb.rank());
            for (auto& [ax, bx] : axes) {
                const std::size_t pos =
                    std::lower_bound(a_contr_sorted.begin(), a_contr_sorted.end(), ax) -
                    a_contr_sorted.begin();
                perm[bx] = pos;
            }
            for (std::size_t i = 0; i < nb_free; ++i) perm[b_free[i]] = a_contr_sorted.size() + i;
            t.accumulate(ib, tnd::permute(db, perm));
        }
    };
    return Var(this, push(std::move(out), rg, rg ? std::function<void(Tape&)>(pull) : nullptr));
}

Var Tape::matmul(Var a, Var b) { return contract(a, b, {{1, 0}}); }

Var Tape::add(Var a, Var b) {
    const std::size_t ia = a.node_, ib = b.node_;
    const bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    auto pull = [ia, ib](Tape& t) {
        const DenseTensor& g = t.nodes_[t.pull_node_].grad;
        if (t.nodes_[ia].requires_grad) t.accumulate(ia, g);
        if (t.nodes_[ib].requires_grad) t.accumulate(ib, g);
    };
    return Var(this, push(tnd::add(nodes_[ia].value, nodes_[ib].value), rg,
                          rg ? std::function<void(Tape&)>(pull) : nullptr));
}

Var Tape::sub(Var a, Var b) {
    const std::size_t ia = a.node_, ib = b.node_;
    const bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    auto pull = [ia, ib](Tape& t) {
        const DenseTensor& g = t.nodes_[t.pull_node_].grad;
        if (t.nodes_[ia].requires_grad) t.accumulate(ia, g);
        if (t.nodes_[ib].requires_grad) t.accumulate(ib, tnd::scale(g, -1.0));
    };
    return Var(this, push(tnd::sub(nodes_[ia].value, nodes_[ib].value), rg,
                          rg ? std::function<void(Tape&)>(pull) : nullptr));
}

Var Tape::scale(Var a, double alpha) {
    const std::size_t ia = a.node_;
    const bool rg = nodes_[ia].requires_grad;
    auto pull = [ia, alpha](Tape& t) {
        if (t.nodes_[ia].requires_grad)
            t.accumulate(ia, tnd::scale(t.nodes_[t.pull_node_].grad, alpha));
    };
    return Var(this, push(tnd::scale(nodes_[ia].value, alpha), rg,
                          rg ? std::function<void(Tape&)>(pull) : nullptr));
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
    const std::size_t ia = a.node_;
    const bool rg = nodes_[ia].requires_grad;
    auto pull = [ia](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const DenseTensor& g = t.nodes_[t.pull_node_].grad;
        t.accumulate(ia, tnd::reshape(g, t.nodes_[ia].value.shape()));
    };
    return Var(this, push(tnd::reshape(nodes_[ia].value, std::move(shape)), rg,
                          rg ? std::function<void(Tape&)>(pull) : nullptr));
}

Var Tape::permute(Var a, std::vector<std::size_t> perm) {
    const std::size_t ia = a.node_;
    const bool rg = nodes_[ia].requires_grad;
    auto pull = [ia, perm](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        std::vector<std::size_t> inv(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
        t.accumulate(ia, tnd::permute(t.nodes_[t.pull_node_].grad, inv));
    };
    return Var(this, push(tnd::permute(nodes_[ia].value, perm), rg,
                          rg ? std::function<void(Tape&)>(pull) : nullptr));
}

Var Tape::relu(Var a) {
    const std::size_t ia = a.node_;
    const bool rg = nodes_[ia].requires_grad;
    DenseTensor out = nodes_[ia].value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
    auto pull = [ia](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const DenseTensor& x = t.nodes_[ia].value;
        DenseTensor g = t.nodes_[t.pull_node_].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] <= 0.0) g[i] = 0.0;
        t.accumulate(ia, g);
    };
    return Var(this, push(std::move(out), rg, rg ? std::function<void(Tape&)>(pull) : nullptr));
}

Var Tape::add_rowvec(Var x, Var bias) {
    const std::size_t ix = x.node_, ib = bias.node_;
    const DenseTensor& xv = nodes_[ix].value;
    const DenseTensor& bv = nodes_[ib].value;
    if (!xv.is_matrix() || bv.rank() != 1 || bv.size() != xv.cols()) {
        throw std::invalid_argument("add_rowvec: x must be (m,n) and bias length n");
    }
    DenseTensor out = xv;
    const std::size_t m = xv.rows(), n = xv.cols();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) += bv[j];
    const bool rg = nodes_[ix].requires_grad || nodes_[ib].requires_grad;
    auto pull = [ix, ib, m, n](Tape& t) {
        const DenseTensor& g = t.nodes_[t.pull_node_].grad;
        if (t.nodes_[ix].requires_grad) t.accumulate(ix, g);
        if (t.nodes_[ib].requires_grad) {
            DenseTensor gb({n});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
            t.accumulate(ib, gb);
        }
    };
    return Var(this, push(std::move(out), rg, rg ? std::function<void(Tape&)>(pull) : nullptr));
}

Var Tape::skew_from_lower(Var lower) {
    const std::size_t il = lower.node_;
    const DenseTensor& lv = nodes_[il].value;
    if (!lv.is_matrix() || lv.rows() != lv.cols()) {
        throw std::invalid_argument("skew_from_lower: square matrix required");
    }
    const std::size_t n = lv.rows();
    DenseTensor out({n, n});
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            out(i, j) = lv(i, j);
            out(j, i) = -lv(i, j);
        }
    const bool rg = nodes_[il].requires_grad;
    auto pull = [il, n](Tape& t) {
        if (!t.nodes_[il].requires_grad) return;
        const DenseTensor& g = t.nodes_[t.pull_node_].grad;
        DenseTensor gl({n, n});
        for (std::size_t i = 1; i < n; ++i)
            for (std::size_t j = 0; j < i; ++j) gl(i, j) = g[i * n + j] - g[j * n + i];
        t.accumulate(il, gl);
    };
    return Var(this, push(std::move(out), rg, rg ? std::function<void(Tape&)>(pull) : nullptr));
}

Var Tape::expm_skew(Var lower) {
    Var s = skew_from_lower(lower);
    const DenseTensor& sv = s.value();
    const std::size_t n = sv.rows();

    double maxnorm = 0;
    for (std::size_t i = 0; i < sv.size(); ++i) maxnorm = std::max(maxnorm, std::abs(sv[i]));
    int squarings = 0;
    double nrm = maxnorm * static_cast<double>(n);
    while (nrm > 0.5 && squarings < 60) {
        nrm /= 2.0;
        ++squarings;
    }

    Var b = scale(s, std::pow(0.5, squarings));
    Var sum = leaf(DenseTensor::identity(n), false);
    Var term = sum;
    for (int k = 1; k <= 12; ++k) {
        term = scale(matmul(term, b), 1.0 / k);
        sum = add(sum, term);
    }
    for (int i = 0; i < squarings; ++i) sum = matmul(sum, sum);
    return sum;
}

Var Tape::batchnorm_train(Var x, Var gamma, Var beta, BatchNormState& state, double eps,
                          double momentum) {
    const std::size_t ix = x.node_, ig = gamma.node_, ib = beta.node_;
    const DenseTensor& xv = nodes_[ix].value;
    if (!xv.is_matrix()) throw std::invalid_argument("batchnorm: (batch, features) input required");
    const std::size_t m = xv.rows(), n = xv.cols();
    if (m < 2) throw std::invalid_argument("batchnorm: batch size must be >= 2 in training mode");

    DenseTensor mean({n}), var({n});
    for (std::size_t j = 0; j < n; ++j) {
        double mu = 0;
        for (std::size_t i = 0; i < m; ++i) mu += xv(i, j);
        mu /= static_cast<double>(m);
        double v = 0;
        for (std::size_t i = 0; i < m; ++i) v += (xv(i, j) - mu) * (xv(i, j) - mu);
        v /= static_cast<double>(m);
        mean[j] = mu;
        var[j] = v;
    }

    // Running stats track the unbiased variance.
    for (std::size_t j = 0; j < n; ++j) {
        state.running_mean[j] = (1 - momentum) * state.running_mean[j] + momentum * mean[j];
        const double unbiased = var[j] * static_cast<double>(m) / static_cast<double>(m - 1);
        state.running_var[j] = (1 - momentum) * state.running_var[j] + momentum * unbiased;
    }

    DenseTensor xhat({m, n});
    DenseTensor inv_std({n});
    for (std::size_t j = 0; j < n; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) xhat(i, j) = (xv(i, j) - mean[j]) * inv_std[j];

    const DenseTensor& gv = nodes_[ig].value;
    const DenseTensor& bv = nodes_[ib].value;
    DenseTensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = gv[j] * xhat(i, j) + bv[j];

    const bool rg = nodes_[ix].requires_grad || nodes_[ig].requires_grad || nodes_[ib].requires_grad;
    auto pull = [ix, ig, ib, xhat, inv_std, m, n](Tape& t) {
        const DenseTensor& g = t.nodes_[t.pull_node_].grad;
        const DenseTensor& gv = t.nodes_[ig].value;

        if (t.nodes_[ib].requires_grad) {
            DenseTensor gb({n});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
            t.accumulate(ib, gb);
        }
        if (t.nodes_[ig].requires_grad) {
            DenseTensor gg({n});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat(i, j);
            t.accumulate(ig, gg);
        }
        if (t.nodes_[ix].requires_grad) {
            // Standard batch-norm pull-back through mean and variance.
            DenseTensor gx({m, n});
            for (std::size_t j = 0; j < n; ++j) {
                double sum_g = 0, sum_gx = 0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double gh = g[i * n + j] * gv[j];
                    sum_g += gh;
                    sum_gx += gh * xhat(i, j);
                }
                const double inv_m = 1.0 / static_cast<double>(m);
                for (std::size_t i = 0; i < m; ++i) {
                    const double gh = g[i * n + j] * gv[j];
                    gx(i, j) = inv_std[j] * (gh - inv_m * sum_g - inv_m * xhat(i, j) * sum_gx);
                }
            }
            t.accumulate(ix, gx);
        }
    };
    return Var(this, push(std::move(out), rg, rg ? std::function<void(Tape&)>(pull) : nullptr));
}

Var Tape::batchnorm_eval(Var x, Var gamma, Var beta, const BatchNormState& state, double eps) {
    const std::size_t ix = x.node_, ig = gamma.node_, ib = beta.node_;
    const DenseTensor& xv = nodes_[ix].value;
    if (!xv.is_matrix()) throw std::invalid_argument("batchnorm: (batch, features) input required");
    const std::size_t m = xv.rows(), n = xv.cols();

    DenseTensor inv_std({n});
    for (std::size_t j = 0; j < n; ++j) inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + eps);
    DenseTensor mean = state.running_mean;

    const DenseTensor& gv = nodes_[ig].value;
    const DenseTensor& bv = nodes_[ib].value;
    DenseTensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out(i, j) = gv[j] * (xv(i, j) - mean[j]) * inv_std[j] + bv[j];

    const bool rg = nodes_[ix].requires_grad || nodes_[ig].requires_grad || nodes_[ib].requires_grad;
    auto pull = [ix, ig, ib, inv_std, mean, m, n](Tape& t) {
        const DenseTensor& g = t.nodes_[t.pull_node_].grad;
        const DenseTensor& gv = t.nodes_[ig].value;
        const DenseTensor& xv2 = t.nodes_[ix].value;
        if (t.nodes_[ib].requires_grad) {
            DenseTensor gb({n});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
            t.accumulate(ib, gb);
        }
        if (t.nodes_[ig].requires_grad) {
            DenseTensor gg({n});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    gg[j] += g[i * n + j] * (xv2(i, j) - mean[j]) * inv_std[j];
            t.accumulate(ig, gg);
        }
        if (t.nodes_[ix].requires_grad) {
            DenseTensor gx({m, n});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gx(i, j) = g[i * n + j] * gv[j] * inv_std[j];
            t.accumulate(ix, gx);
        }
    };
    return Var(this, push(std::move(out), rg, rg ? std::function<void(Tape&)>(pull) : nullptr));
}

void Tape::backward(Var root, const DenseTensor& seed) {
    if (root.tape_ != this) throw std::invalid_argument("backward: var from another tape");
    if (seed.shape() != nodes_[root.node_].value.shape()) {
        throw std::invalid_argument("backward: seed shape mismatch");
    }
    accumulate(root.node_, seed);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.pull || !n.grad_alloc) continue;
        pull_node_ = i;
        n.pull(*this);
    }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace tnd::ad
