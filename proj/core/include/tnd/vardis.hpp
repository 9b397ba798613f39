#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tnd/circuit.hpp"
#include "tnd/mpo.hpp"
#include "tnd/rng.hpp"
#include "tnd/tensor.hpp"

namespace tnd {

/// Fixed input MPO, fixed compact target MPO, and the two circuits being
/// optimized around the target. All four live on the same wire count.
///
/// The objective is the normalized Frobenius overlap between the input
/// operator and the composite left-circuit * target * right-circuit
/// operator; it equals 1 exactly when they are proportional.
struct DisentangleProblem {
    Mpo input;    // M_chi
    Mpo target;   // M'_chi', held fixed
    Circuit left;
    Circuit right;

    // Cached dense operators (row convention) and their norms.
    DenseTensor input_op;
    DenseTensor target_op;
    double input_norm = 0.0;
    double target_norm = 0.0;

    static DisentangleProblem make(Mpo input, Mpo target, Circuit left, Circuit right);
    std::size_t wires() const { return left.wires; }
};

enum class Side { Left, Right };

struct UpdateRecord {
    Side side;
    std::size_t gate_index;
    double overlap_before;
    double overlap_after;
};

struct PassRecord {
    double overlap;
    double entropy_avg;  // S_avg of the effective disentangled operator
    double seconds;
};

struct SweepHistory {
    std::vector<PassRecord> passes;
    std::vector<UpdateRecord> updates;
};

/// Normalized trace overlap of the problem (Eq. of merit for sweeps).
double overlap(const DisentangleProblem& p);

/// Environment tensor of one gate: the full network contraction with that
/// gate removed, reshaped to the gate's matrix indices and normalized so
/// that trace(environment * gate) reproduces overlap(p).
/// `gate_index` counts gates layer-major within the chosen circuit.
DenseTensor environment(const DisentangleProblem& p, Side which, std::size_t gate_index);

/// SVD (Procrustes) update: the orthogonal matrix maximizing
/// trace(env * g); the maximum value is the nuclear norm of env.
DenseTensor update_gate(const DenseTensor& env);

/// Alternate over all trainable gates (left circuit first, layer-major,
/// then right), replacing each by its Procrustes optimum. Stops after
/// `passes` passes or when the overlap gain over a full pass drops below
/// `tol`. Records per-pass overlap/entropy and per-update overlaps.
SweepHistory sweep(DisentangleProblem& p, std::size_t passes, double tol = 1e-8,
                   bool track_entropy = true);

/// The current estimate of the disentangled core: left * input * right as
/// a dense operator, decomposed into an untruncated MPO for diagnostics.
DenseTensor effective_operator(const DisentangleProblem& p);

struct DisentangleResult {
    Circuit left;
    Mpo core;
    Circuit right;
    SweepHistory history;
};

/// Full procedure: the target is truncate(input, target_chi); circuits are
/// built from the given specs with parameters drawn from N(0, init_stddev),
/// then optimized by sweeping.
DisentangleResult disentangle(const Mpo& m, std::size_t target_chi, const std::string& left_spec,
                              const std::string& right_spec, std::size_t passes, Rng& rng,
                              double init_stddev = 0.1);

}  // namespace tnd
