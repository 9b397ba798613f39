#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

namespace tnd {

/// Dense multiaxis double-precision tensor, row-major.
///
/// The shape may be empty, in which case the tensor is a scalar holding a
/// single value. All extents must be >= 1 and product(shape) == data size.
class DenseTensor {
public:
    DenseTensor() : data_(1, 0.0) {}
    explicit DenseTensor(std::vector<std::size_t> shape);
    DenseTensor(std::vector<std::size_t> shape, std::vector<double> data);

    static DenseTensor scalar(double v);
    static DenseTensor identity(std::size_t n);
    static DenseTensor from_rows(const std::vector<std::vector<double>>& rows);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    bool is_matrix() const { return shape_.size() == 2; }
    std::size_t rows() const { return extent(0); }
    std::size_t cols() const { return extent(1); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Element access by multi-index (bounds-checked).
    double& at(std::initializer_list<std::size_t> idx);
    double at(std::initializer_list<std::size_t> idx) const;

    /// Matrix element access, valid only for rank-2 tensors.
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    /// Value of a rank-0 tensor.
    double item() const;

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

struct SvdResult {
    DenseTensor u;          // m x k, orthonormal columns
    std::vector<double> s;  // k singular values, non-increasing, >= 0
    DenseTensor vt;         // k x n, orthonormal rows

    /// Number of singular values above cutoff * s.front().
    std::size_t rank(double cutoff = 1e-12) const;
};

struct QrResult {
    DenseTensor q;  // m x k, orthonormal columns
    DenseTensor r;  // k x n, upper triangular
};

/// General pairwise tensor contraction.
///
/// Contracts the axes of `a` and `b` listed in `axes` (pairs of axis
/// indices, a-axis first). The result shape is the concatenation of the
/// uncontracted axes of `a` followed by those of `b`, in original order.
DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     const std::vector<std::pair<std::size_t, std::size_t>>& axes);

/// Axis permutation: result axis i is input axis perm[i].
DenseTensor permute(const DenseTensor& a, const std::vector<std::size_t>& perm);

/// Shape change without reordering data. Total size must be preserved.
DenseTensor reshape(const DenseTensor& a, std::vector<std::size_t> shape);

DenseTensor transpose(const DenseTensor& m);

/// Plain matrix product of two rank-2 tensors.
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);

/// Kronecker product of two matrices.
DenseTensor kron(const DenseTensor& a, const DenseTensor& b);

DenseTensor add(const DenseTensor& a, const DenseTensor& b);
DenseTensor sub(const DenseTensor& a, const DenseTensor& b);
DenseTensor scale(const DenseTensor& a, double alpha);

double frobenius_norm(const DenseTensor& a);
double max_abs_diff(const DenseTensor& a, const DenseTensor& b);
double dot(const DenseTensor& a, const DenseTensor& b);

/// Thin SVD a = u * diag(s) * vt via one-sided Jacobi rotations.
/// Tolerance 1e-12, at most 200 sweeps; throws on non-convergence.
/// Columns of u are sign-fixed so their largest-magnitude entry is positive.
SvdResult svd(const DenseTensor& a);

/// Thin QR via Householder reflections, q: m x k orthonormal columns.
QrResult qr(const DenseTensor& a);

/// Orthogonal matrix exp(L - L^T) from the strictly lower triangle of
/// `lower` (diagonal and upper entries are ignored). Computed by
/// scaling-and-squaring with a fixed order-12 Taylor series.
DenseTensor expm_skew(const DenseTensor& lower);

/// exp(a) for a square matrix by the same scheme as expm_skew.
DenseTensor expm(const DenseTensor& a);

}  // namespace tnd
