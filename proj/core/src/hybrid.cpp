#include "tnd/hybrid.hpp"

#include <stdexcept>

namespace tnd {

EncodedState encode(const DenseTensor& x) {
    const double n = frobenius_norm(x);
    if (n == 0.0) throw std::invalid_argument("encode: zero vector cannot be amplitude-encoded");
    EncodedState s;
    s.amplitudes = scale(x, 1.0 / n);
    s.norm = n;
    return s;
}

DenseTensor decode(const EncodedState& s) { return scale(s.amplitudes, s.norm); }

DenseTensor run_hybrid_layer(const DenseTensor& x, const Circuit& left, const Mpo& core,
                             const Circuit& right) {
    const std::size_t dim = std::size_t{1} << left.wires;
    if (x.size() != dim) {
        throw std::invalid_argument("run_hybrid_layer: input length must be 2^wires");
    }
    if (core.total_in() != dim || core.total_out() != dim || right.wires != left.wires) {
        throw std::invalid_argument("run_hybrid_layer: inconsistent dimensions");
    }

    EncodedState s = encode(x);
    DenseTensor psi = apply_to_state(left, s.amplitudes);

    // The core maps row vectors, so its operator action on a column state
    // contracts the state with the core's input index.
    const DenseTensor op = reconstruct(core);
    psi = contract(psi, op, {{0, 0}});

    psi = apply_to_state(right, psi);
    return scale(psi, s.norm);
}

}  // namespace tnd
