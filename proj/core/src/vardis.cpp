#include "tnd/vardis.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace tnd {

namespace {

// Operators are 2^l x 2^l matrices in row convention, viewed as tensors
// with 2l axes of extent 2: row wires first, then column wires.

DenseTensor as_wire_tensor(const DenseTensor& op, std::size_t wires) {
    return reshape(op, std::vector<std::size_t>(2 * wires, 2));
}

DenseTensor as_matrix(const DenseTensor& t, std::size_t wires) {
    const std::size_t dim = std::size_t{1} << wires;
    return reshape(t, {dim, dim});
}

// X <- emb(g) * X  (g applied to the row index of X).
void lmul(DenseTensor& x, const Gate& g, std::size_t wires, bool transpose_gate) {
    DenseTensor t = as_wire_tensor(x, wires);
    t = apply_gate(t, transpose_gate ? transpose(g.matrix) : g.matrix, g.wire, g.span);
    x = as_matrix(t, wires);
}

// X <- X * emb(g)  (g applied to the column index of X).
void rmul(DenseTensor& x, const Gate& g, std::size_t wires, bool transpose_gate) {
    DenseTensor t = as_wire_tensor(x, wires);
    // Right-multiplying by emb(g) pairs g's output index with X's column
    // index, which is apply_gate with the transposed matrix.
    t = apply_gate(t, transpose_gate ? g.matrix : transpose(g.matrix), wires + g.wire, g.span);
    x = as_matrix(t, wires);
}

std::vector<const Gate*> flatten(const Circuit& c) {
    std::vector<const Gate*> gates;
    for (const auto& layer : c.layers)
        for (const auto& g : layer) gates.push_back(&g);
    return gates;
}

std::vector<Gate*> flatten(Circuit& c) {
    std::vector<Gate*> gates;
    for (auto& layer : c.layers)
        for (auto& g : layer) gates.push_back(&g);
    return gates;
}

// E[i,j] = sum_{a,c} K[(a j c), (a i c)], i.e. the hole left by removing a
// gate whose span covers bits j (row side) and i (column side).
DenseTensor hole_trace(const DenseTensor& k, std::size_t wires, std::size_t wire, std::size_t span) {
    const std::size_t d = std::size_t{1} << span;
    const std::size_t pre = wire;
    const std::size_t post = wires - wire - span;
    const std::size_t pre_n = std::size_t{1} << pre;
    const std::size_t post_n = std::size_t{1} << post;
    const std::size_t dim = std::size_t{1} << wires;

    DenseTensor e({d, d});
    for (std::size_t a = 0; a < pre_n; ++a) {
        for (std::size_t c = 0; c < post_n; ++c) {
            const std::size_t base = (a << (span + post)) | c;
            for (std::size_t i = 0; i < d; ++i) {
                const std::size_t col = base | (i << post);
                for (std::size_t j = 0; j < d; ++j) {
                    const std::size_t row = base | (j << post);
                    e(i, j) += k[row * dim + col];
                }
            }
        }
    }
    return e;
}

// Base matrix for environments of the left circuit:
//   target_op * right_row * input_op^T, all in row convention,
// where right_row is the right circuit's row matrix (transpose of its
// column matrix), built by gate-wise application.
DenseTensor left_base(const DisentangleProblem& p) {
    const std::size_t wires = p.wires();
    DenseTensor x = transpose(p.input_op);
    // x <- C_R^T * x, applying the transposed gates last-to-first.
    const auto gates = flatten(p.right);
    for (std::size_t k = gates.size(); k-- > 0;) lmul(x, *gates[k], wires, /*transpose=*/true);
    return matmul(p.target_op, x);
}

// Base for the right circuit: input_op^T * left_row^T... expressed as
//   input_op^T * C_L^T * target_op with C_L^T applied gate-wise.
DenseTensor right_base(const DisentangleProblem& p) {
    const std::size_t wires = p.wires();
    DenseTensor x = p.target_op;
    const auto gates = flatten(p.left);
    for (std::size_t k = gates.size(); k-- > 0;) lmul(x, *gates[k], wires, /*transpose=*/true);
    return matmul(transpose(p.input_op), x);
}

// K for gate `idx` given precomputed suffix chain and prefix accumulator.
DenseTensor gate_k_matrix(const DenseTensor& suffix_applied, const DenseTensor& prefix) {
    return matmul(suffix_applied, prefix);
}

double overlap_value(const DisentangleProblem& p) {
    const std::size_t wires = p.wires();
    DenseTensor y = p.target_op;
    const auto lgates = flatten(p.left);
    for (std::size_t k = lgates.size(); k-- > 0;) lmul(y, *lgates[k], wires, true);
    const auto rgates = flatten(p.right);
    for (const Gate* g : rgates) rmul(y, *g, wires, true);
    return dot(p.input_op, y) / (p.input_norm * p.target_norm);
}

}  // namespace

DisentangleProblem DisentangleProblem::make(Mpo input, Mpo target, Circuit left, Circuit right) {
    DisentangleProblem p;
    p.input = std::move(input);
    p.target = std::move(target);
    p.left = std::move(left);
    p.right = std::move(right);

    const std::size_t wires = p.input.num_sites();
    if (p.target.num_sites() != wires || p.left.wires != wires || p.right.wires != wires) {
        throw std::invalid_argument("disentangle problem: wire/site counts differ");
    }
    const auto in_dims = p.input.bond_dims();
    const auto tg_dims = p.target.bond_dims();
    for (std::size_t k = 0; k < tg_dims.size(); ++k) {
        if (tg_dims[k] > in_dims[k]) {
            throw std::invalid_argument("disentangle problem: target bond exceeds input bond");
        }
    }

    p.input_op = reconstruct(p.input);
    p.target_op = reconstruct(p.target);
    p.input_norm = frobenius_norm(p.input_op);
    p.target_norm = frobenius_norm(p.target_op);
    if (p.input_norm == 0.0 || p.target_norm == 0.0) {
        throw std::invalid_argument("disentangle problem: zero-norm operand");
    }
    return p;
}

double overlap(const DisentangleProblem& p) { return overlap_value(p); }

DenseTensor environment(const DisentangleProblem& p, Side which, std::size_t gate_index) {
    const Circuit& c = (which == Side::Left) ? p.left : p.right;
    const auto gates = flatten(c);
    if (gate_index >= gates.size()) throw std::out_of_range("environment: gate index out of range");
    const Gate& g = *gates[gate_index];
    if (!g.is_trainable()) {
        throw std::invalid_argument("environment: fixed gates have no environment");
    }

    const std::size_t wires = p.wires();
    DenseTensor base = (which == Side::Left) ? left_base(p) : right_base(p);

    // suffix: gates after the hole, transposed, applied on the left.
    for (std::size_t k = gates.size(); k-- > gate_index + 1;) lmul(base, *gates[k], wires, true);
    // prefix: gates before the hole, transposed, applied on the right.
    DenseTensor k_mat = base;
    for (std::size_t k = 0; k < gate_index; ++k) rmul(k_mat, *gates[k], wires, true);

    DenseTensor env = hole_trace(k_mat, wires, g.wire, g.span);
    return scale(env, 1.0 / (p.input_norm * p.target_norm));
}

DenseTensor update_gate(const DenseTensor& env) {
    if (!env.is_matrix() || env.rows() != env.cols()) {
        throw std::invalid_argument("update_gate: square environment required");
    }
    SvdResult f = svd(env);
    // g' = V U^T: the orthogonal Procrustes maximizer of trace(env * g).
    return transpose(matmul(f.u, f.vt));
}

DenseTensor effective_operator(const DisentangleProblem& p) {
    const std::size_t wires = p.wires();
    DenseTensor x = p.input_op;
    const auto lgates = flatten(p.left);
    for (const Gate* g : lgates) lmul(x, *g, wires, false);
    const auto rgates = flatten(p.right);
    for (std::size_t k = rgates.size(); k-- > 0;) rmul(x, *rgates[k], wires, false);
    return x;
}

namespace {

// One optimization pass over a single circuit. Returns the overlap after
// the last gate update (or the current overlap when nothing is trainable).
double sweep_circuit(DisentangleProblem& p, Side side, SweepHistory& history) {
    Circuit& c = (side == Side::Left) ? p.left : p.right;
    auto gates = flatten(c);
    const std::size_t wires = p.wires();
    const double norm_scale = 1.0 / (p.input_norm * p.target_norm);

    if (gates.empty()) return overlap_value(p);

    DenseTensor base = (side == Side::Left) ? left_base(p) : right_base(p);

    // Suffix chain: suffix[k] = (gates k+1..end, transposed) applied to base.
    const std::size_t n = gates.size();
    std::vector<DenseTensor> suffix(n);
    DenseTensor acc = base;
    for (std::size_t k = n; k-- > 0;) {
        suffix[k] = acc;
        lmul(acc, *gates[k], wires, true);
    }

    const std::size_t dim = std::size_t{1} << wires;
    DenseTensor prefix = DenseTensor::identity(dim);
    double last_overlap = overlap_value(p);
    for (std::size_t k = 0; k < n; ++k) {
        Gate& g = *gates[k];
        if (g.is_trainable()) {
            const DenseTensor k_mat = gate_k_matrix(suffix[k], prefix);
            DenseTensor env = hole_trace(k_mat, wires, g.wire, g.span);
            env = scale(env, norm_scale);

            double before = 0;
            for (std::size_t i = 0; i < env.rows(); ++i)
                for (std::size_t j = 0; j < env.cols(); ++j) before += env(i, j) * g.matrix(j, i);

            g.matrix = update_gate(env);

            double after = 0;
            for (std::size_t i = 0; i < env.rows(); ++i)
                for (std::size_t j = 0; j < env.cols(); ++j) after += env(i, j) * g.matrix(j, i);

            history.updates.push_back({side, k, before, after});
            last_overlap = after;
        }
        rmul(prefix, g, wires, true);
    }
    return last_overlap;
}

}  // namespace

SweepHistory sweep(DisentangleProblem& p, std::size_t passes, double tol, bool track_entropy) {
    bool any_trainable = !p.left.trainable_gates().empty() || !p.right.trainable_gates().empty();
    if (!any_trainable) throw std::invalid_argument("sweep: no trainable gates");

    SweepHistory history;
    double prev = overlap_value(p);
    for (std::size_t pass = 0; pass < passes; ++pass) {
        const auto t0 = std::chrono::steady_clock::now();
        sweep_circuit(p, Side::Left, history);
        const double after = sweep_circuit(p, Side::Right, history);
        const auto t1 = std::chrono::steady_clock::now();

        double entropy = 0.0;
        if (track_entropy) {
            const DenseTensor eff = effective_operator(p);
            const Mpo eff_mpo = decompose(eff, p.input.num_sites());
            entropy = bond_entropies(eff_mpo).average;
        }
        history.passes.push_back({after, entropy, std::chrono::duration<double>(t1 - t0).count()});

        if (std::abs(after - prev) < tol) break;
        prev = after;
    }
    return history;
}

DisentangleResult disentangle(const Mpo& m, std::size_t target_chi, const std::string& left_spec,
                              const std::string& right_spec, std::size_t passes, Rng& rng,
                              double init_stddev) {
    if (target_chi > m.max_bond()) {
        throw std::invalid_argument("disentangle: target bond exceeds input bond");
    }
    const std::size_t wires = m.num_sites();
    Mpo target = truncate(m, target_chi);

    Circuit left = parse_circuit_spec(left_spec, wires);
    Circuit right = parse_circuit_spec(right_spec, wires);
    if (init_stddev > 0) {
        randomize_gates(left, rng, init_stddev);
        randomize_gates(right, rng, init_stddev);
    }

    DisentangleProblem p = DisentangleProblem::make(m, std::move(target), std::move(left), std::move(right));
    SweepHistory history = sweep(p, passes);
    return {std::move(p.left), std::move(p.target), std::move(p.right), std::move(history)};
}

}  // namespace tnd
