#pragma once

#include "tnd/circuit.hpp"
#include "tnd/mpo.hpp"
#include "tnd/tensor.hpp"

namespace tnd {

/// Amplitude-encoded state: unit-norm amplitudes plus the original norm so
/// the classical vector can be recovered exactly.
struct EncodedState {
    DenseTensor amplitudes;  // length 2^l, unit norm
    double norm = 0.0;
};

/// Normalize and amplitude-encode a nonzero vector.
EncodedState encode(const DenseTensor& x);

/// Undo the encoding.
DenseTensor decode(const EncodedState& s);

/// Statevector simulation of one disentangled layer: encode, run the left
/// circuit, contract the reconstructed core as an operator on the state,
/// run the right circuit, then restore the stored norm. Exactly matches
/// the classical circuit-mpo-circuit forward of the same triple.
DenseTensor run_hybrid_layer(const DenseTensor& x, const Circuit& left, const Mpo& core,
                             const Circuit& right);

}  // namespace tnd
