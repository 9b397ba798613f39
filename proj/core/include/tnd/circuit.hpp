#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "tnd/rng.hpp"
#include "tnd/tensor.hpp"

namespace tnd {

enum class GateKind { FixedCnot, Trainable };

/// A gate on a contiguous span of wires.
///
/// Trainable gates are real orthogonal, materialized as
/// expm_skew(params) from a strictly lower-triangular parameter matrix.
/// Fixed CNOTs span exactly two wires with the lower-numbered wire as
/// control. Gate matrices act on column states: psi' = matrix * psi,
/// index bits ordered with the first spanned wire most significant.
struct Gate {
    std::size_t wire = 0;   // first wire of the span
    std::size_t span = 1;   // number of wires n, matrix is 2^n x 2^n
    GateKind kind = GateKind::Trainable;
    DenseTensor params;     // 2^n x 2^n, strictly lower triangular (trainable only)
    DenseTensor matrix;     // cached orthogonal matrix

    static Gate cnot(std::size_t wire);
    static Gate trainable(std::size_t wire, std::size_t span, const DenseTensor& params);
    static Gate identity_gate(std::size_t wire, std::size_t span);

    bool is_trainable() const { return kind == GateKind::Trainable; }
    std::size_t dim() const { return std::size_t{1} << span; }

    /// Recompute the cached matrix from params (trainable gates).
    void refresh();
};

/// Ordered layers of non-overlapping gates on `wires` qubit wires.
/// Wire 0 is the most significant bit of the state index.
struct Circuit {
    std::size_t wires = 0;
    std::vector<std::vector<Gate>> layers;

    std::size_t num_gates() const;
    std::vector<Gate*> trainable_gates();
    std::vector<const Gate*> trainable_gates() const;

    std::string to_json() const;
    static Circuit from_json(const std::string& text);
};

struct GateCount {
    std::size_t one_body = 0;
    std::size_t two_body = 0;
    std::map<std::size_t, std::size_t> by_arity;
};

/// Brickwall circuit of `depth` layers of n-wire gates. Even layers
/// (0-based) start at wire 0, odd layers at wire n/2; each layer tiles as
/// many non-overlapping spans as fit from its offset.
/// Trainable gates start as identity (zero parameters).
Circuit build_brickwall(std::size_t wires, std::size_t depth, std::size_t gate_size, GateKind kind);

/// The 2^l x 2^l orthogonal matrix of the whole circuit (column
/// convention: state' = matrix * state). Layer matrices are Kronecker
/// products of gate matrices padded with identities, multiplied in
/// application order. Refuses l > 12.
DenseTensor circuit_matrix(const Circuit& c);

/// Apply the circuit to a length-2^l state vector gate by gate, without
/// materializing the full matrix.
DenseTensor apply_to_state(const Circuit& c, const DenseTensor& psi);

/// Apply one gate to the given axes of a state-like tensor (each axis of
/// extent 2). Axes must be contiguous ascending; `g` is a 2^n x 2^n matrix.
DenseTensor apply_gate(const DenseTensor& state, const DenseTensor& g, std::size_t first_axis,
                       std::size_t span);

GateCount gate_count(const Circuit& c);

/// Randomize all trainable gate parameters: strictly lower entries drawn
/// from N(0, stddev), matrices refreshed.
void randomize_gates(Circuit& c, Rng& rng, double stddev = 0.1);

/// Circuit-spec grammar
/// --------------------
///   spec  := term ('+' term)*
///   term  := [count 'x'] kind
///   kind  := 'cnot' | 'cnots' | '1b' | '2b' | '3b' | '4b' | '5b' | '6b'
///
/// Each term contributes `count` (default 1) brickwall layers of the
/// given gate type; offsets alternate with the layer index within the
/// circuit. Whitespace and case are ignored. Example: "1b + cnots + 1b + 5x cnots".
Circuit parse_circuit_spec(const std::string& spec, std::size_t wires);

/// Canonical textual form of a circuit built from layer tokens; parsing
/// the result reproduces the same structure.
std::string format_circuit_spec(const Circuit& c);

}  // namespace tnd
