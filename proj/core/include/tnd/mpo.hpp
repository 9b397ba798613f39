#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tnd/tensor.hpp"

namespace tnd {

/// Matrix Product Operator: a chain of 4-index site tensors with axes
/// (left-bond, physical-in, physical-out, right-bond). Boundary bonds have
/// extent 1 and adjacent bonds must match.
///
/// The operator matrix it represents maps row vectors: grouping the
/// physical-in indices (site 0 most significant) gives the row index and
/// the physical-out indices the column index.
class Mpo {
public:
    Mpo() = default;
    explicit Mpo(std::vector<DenseTensor> sites);

    std::size_t num_sites() const { return sites_.size(); }
    const std::vector<DenseTensor>& sites() const { return sites_; }
    const DenseTensor& site(std::size_t k) const { return sites_.at(k); }
    DenseTensor& site(std::size_t k) { return sites_.at(k); }

    /// Bond dimensions chi_1..chi_b between adjacent sites (b = sites-1).
    std::vector<std::size_t> bond_dims() const;
    std::size_t max_bond() const;

    std::size_t phys_in(std::size_t k) const { return sites_.at(k).extent(1); }
    std::size_t phys_out(std::size_t k) const { return sites_.at(k).extent(2); }
    std::size_t total_in() const;
    std::size_t total_out() const;

    std::string to_json() const;
    static Mpo from_json(const std::string& text);

private:
    std::vector<DenseTensor> sites_;
};

struct EntropyReport {
    std::vector<double> per_bond;  // S_1..S_b in nats
    double average = 0.0;          // mean of per_bond
    double maximum = 0.0;          // mean of log chi_k over bonds
};

/// Tensor-train factorization of a matrix by successive SVDs.
///
/// `w` maps row vectors (shape total_in x total_out); site k carries the
/// k-th input digit and the k-th output digit, most significant at site 0.
/// Bonds are truncated to `max_bond` when it is nonzero.
Mpo decompose(const DenseTensor& w, const std::vector<std::size_t>& in_dims,
              const std::vector<std::size_t>& out_dims, std::size_t max_bond = 0);

/// Qubit-wire convenience: 2^sites x 2^sites matrix, all physical dims 2.
Mpo decompose(const DenseTensor& w, std::size_t sites, std::size_t max_bond = 0);

/// Contract all bonds and group physical indices back into a matrix.
DenseTensor reconstruct(const Mpo& m);

/// Mixed-canonical gauge: sites left of `center` left-orthogonal, sites
/// right of it right-orthogonal. The represented operator is unchanged.
Mpo canonicalize(const Mpo& m, std::size_t center);

/// Truncate every bond to at most `max_bond`, keeping the dominant
/// singular subspace at each bond (left-to-right sweep from the
/// right-canonical gauge).
Mpo truncate(const Mpo& m, std::size_t max_bond);

/// Per-bond entanglement entropies of the MPO viewed as a pure state,
/// S_k = -sum(l^2 log l^2) over normalized Schmidt values at bond k.
/// Singular values below 1e-12 of the largest are dropped (0 log 0 = 0).
EntropyReport bond_entropies(const Mpo& m);

}  // namespace tnd
