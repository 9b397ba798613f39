#include "tnd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tnd {

namespace {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

void check_extents(const std::vector<std::size_t>& shape) {
    for (std::size_t e : shape) {
        if (e < 1) throw std::invalid_argument("tensor extents must be >= 1");
    }
}

std::vector<std::size_t> row_major_strides(const std::vector<std::size_t>& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) {
        strides[i - 1] = strides[i] * shape[i];
    }
    return strides;
}

// out(i,j) = sum_k a(i,k) * b(k,j), ikj order over contiguous rows.
void matmul_kernel(const double* a, const double* b, double* out,
                   std::size_t m, std::size_t k, std::size_t n) {
    std::fill(out, out + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* orow = out + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace

DenseTensor::DenseTensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
    check_extents(shape_);
}

DenseTensor::DenseTensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents(shape_);
    if (shape_size(shape_) != data_.size()) {
        throw std::invalid_argument("tensor data size does not match shape");
    }
}

DenseTensor DenseTensor::scalar(double v) {
    DenseTensor t;
    t.data_[0] = v;
    return t;
}

DenseTensor DenseTensor::identity(std::size_t n) {
    DenseTensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
}

DenseTensor DenseTensor::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("from_rows: no rows");
    const std::size_t n = rows.front().size();
    DenseTensor t({rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != n) throw std::invalid_argument("from_rows: ragged rows");
        std::copy(rows[i].begin(), rows[i].end(), t.data_.begin() + i * n);
    }
    return t;
}

std::size_t DenseTensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) throw std::out_of_range("axis out of range");
    return shape_[axis];
}

namespace {
std::size_t flat_index(const std::vector<std::size_t>& shape, std::initializer_list<std::size_t> idx) {
    if (idx.size() != shape.size()) throw std::out_of_range("index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        if (i >= shape[axis]) throw std::out_of_range("index out of range");
        flat = flat * shape[axis] + i;
        ++axis;
    }
    return flat;
}
}  // namespace

double& DenseTensor::at(std::initializer_list<std::size_t> idx) {
    return data_[flat_index(shape_, idx)];
}

double DenseTensor::at(std::initializer_list<std::size_t> idx) const {
    return data_[flat_index(shape_, idx)];
}

double DenseTensor::item() const {
    if (!shape_.empty()) throw std::invalid_argument("item() requires a scalar tensor");
    return data_[0];
}

std::string DenseTensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

std::size_t SvdResult::rank(double cutoff) const {
    if (s.empty() || s.front() == 0.0) return 0;
    const double thr = cutoff * s.front();
    std::size_t r = 0;
    while (r < s.size() && s[r] > thr) ++r;
    return r;
}

DenseTensor permute(const DenseTensor& a, const std::vector<std::size_t>& perm) {
    if (perm.size() != a.rank()) throw std::invalid_argument("permute: rank mismatch");
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t p : perm) {
        if (p >= perm.size() || seen[p]) throw std::invalid_argument("permute: invalid permutation");
        seen[p] = true;
    }
    std::vector<std::size_t> out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = a.shape()[perm[i]];

    DenseTensor out(out_shape);
    if (a.rank() == 0) {
        out[0] = a[0];
        return out;
    }
    const auto in_strides = row_major_strides(a.shape());
    // Stride of output axis i in the input layout.
    std::vector<std::size_t> gather(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) gather[i] = in_strides[perm[i]];

    std::vector<std::size_t> idx(out_shape.size(), 0);
    std::size_t src = 0;
    const std::size_t total = out.size();
    for (std::size_t flat = 0; flat < total; ++flat) {
        out[flat] = a[src];
        // odometer increment over out_shape, tracking src
        for (std::size_t ax = out_shape.size(); ax-- > 0;) {
            src += gather[ax];
            if (++idx[ax] < out_shape[ax]) break;
            src -= gather[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

DenseTensor reshape(const DenseTensor& a, std::vector<std::size_t> shape) {
    if (shape_size(shape) != a.size()) throw std::invalid_argument("reshape: size mismatch");
    return DenseTensor(std::move(shape), a.values());
}

DenseTensor transpose(const DenseTensor& m) {
    if (!m.is_matrix()) throw std::invalid_argument("transpose: matrix required");
    return permute(m, {1, 0});
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
    if (!a.is_matrix() || !b.is_matrix()) throw std::invalid_argument("matmul: matrices required");
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner extents differ " + a.shape_str() + " vs " + b.shape_str());
    }
    DenseTensor out({a.rows(), b.cols()});
    matmul_kernel(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
    return out;
}

DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     const std::vector<std::pair<std::size_t, std::size_t>>& axes) {
    std::vector<bool> a_used(a.rank(), false), b_used(b.rank(), false);
    for (const auto& [ia, ib] : axes) {
        if (ia >= a.rank() || ib >= b.rank()) throw std::out_of_range("contract: axis out of range");
        if (a_used[ia] || b_used[ib]) throw std::invalid_argument("contract: repeated axis");
        if (a.shape()[ia] != b.shape()[ib]) {
            throw std::invalid_argument("contract: paired extents differ " + a.shape_str() + " vs " +
                                        b.shape_str());
        }
        a_used[ia] = true;
        b_used[ib] = true;
    }

    std::vector<std::size_t> a_free, b_free, a_contr, b_contr;
    for (std::size_t i = 0; i < a.rank(); ++i)
        (a_used[i] ? a_contr : a_free).push_back(i);
    for (const auto& [ia, ib] : axes) {
        (void)ia;
        b_contr.push_back(ib);
    }
    // a_contr must pair positionally with b_contr
    a_contr.clear();
    for (const auto& [ia, ib] : axes) {
        (void)ib;
        a_contr.push_back(ia);
    }
    for (std::size_t i = 0; i < b.rank(); ++i)
        if (!b_used[i]) b_free.push_back(i);

    std::size_t m = 1, k = 1, n = 1;
    std::vector<std::size_t> out_shape;
    for (std::size_t i : a_free) {
        m *= a.shape()[i];
        out_shape.push_back(a.shape()[i]);
    }
    for (std::size_t i : a_contr) k *= a.shape()[i];
    for (std::size_t i : b_free) {
        n *= b.shape()[i];
        out_shape.push_back(b.shape()[i]);
    }

    std::vector<std::size_t> a_perm = a_free;
    a_perm.insert(a_perm.end(), a_contr.begin(), a_contr.end());
    std::vector<std::size_t> b_perm = b_contr;
    b_perm.insert(b_perm.end(), b_free.begin(), b_free.end());

    const DenseTensor ap = permute(a, a_perm);
    const DenseTensor bp = permute(b, b_perm);

    DenseTensor out(out_shape);
    matmul_kernel(ap.data(), bp.data(), out.data(), m, k, n);
    return out;
}

DenseTensor kron(const DenseTensor& a, const DenseTensor& b) {
    if (!a.is_matrix() || !b.is_matrix()) throw std::invalid_argument("kron: matrices required");
    const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    DenseTensor out({ar * br, ac * bc});
    for (std::size_t i = 0; i < ar; ++i)
        for (std::size_t j = 0; j < ac; ++j) {
            const double av = a(i, j);
            if (av == 0.0) continue;
            for (std::size_t p = 0; p < br; ++p)
                for (std::size_t q = 0; q < bc; ++q)
                    out(i * br + p, j * bc + q) = av * b(p, q);
        }
    return out;
}

DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
    DenseTensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

DenseTensor sub(const DenseTensor& a, const DenseTensor& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("sub: shape mismatch");
    DenseTensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

DenseTensor scale(const DenseTensor& a, double alpha) {
    DenseTensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= alpha;
    return out;
}

double frobenius_norm(const DenseTensor& a) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double dot(const DenseTensor& a, const DenseTensor& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

namespace {

constexpr double kSvdTol = 1e-12;
constexpr int kSvdMaxSweeps = 200;

// One-sided Jacobi on the columns of a (m x n with m >= n preferred).
// Returns economy factors. Deterministic: fixed (p,q) sweep order.
SvdResult svd_jacobi(const DenseTensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    DenseTensor u = a;                         // working column set, m x n
    DenseTensor v = DenseTensor::identity(n);  // accumulated rotations, n x n

    auto col_dot = [&](const DenseTensor& t, std::size_t p, std::size_t q) {
        double s = 0;
        const std::size_t cols = t.cols();
        const double* d = t.data();
        for (std::size_t i = 0; i < t.rows(); ++i) s += d[i * cols + p] * d[i * cols + q];
        return s;
    };
    auto rotate_cols = [&](DenseTensor& t, std::size_t p, std::size_t q, double c, double s) {
        const std::size_t cols = t.cols();
        double* d = t.data();
        for (std::size_t i = 0; i < t.rows(); ++i) {
            const double tp = d[i * cols + p], tq = d[i * cols + q];
            d[i * cols + p] = c * tp - s * tq;
            d[i * cols + q] = s * tp + c * tq;
        }
    };

    int sweep = 0;
    for (; sweep < kSvdMaxSweeps; ++sweep) {
        double off = 0;
        double max_col2 = 0;
        for (std::size_t j = 0; j < n; ++j) max_col2 = std::max(max_col2, col_dot(u, j, j));
        // Columns this small are numerically zero; rotating them against
        // each other never converges.
        const double negligible2 = max_col2 * 1e-28;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = col_dot(u, p, p);
                const double beta = col_dot(u, q, q);
                if (alpha <= negligible2 || beta <= negligible2) continue;
                const double gamma = col_dot(u, p, q);
                const double denom = std::sqrt(alpha * beta);
                if (denom == 0.0 || std::abs(gamma) <= kSvdTol * denom) continue;
                off = std::max(off, std::abs(gamma) / denom);
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate_cols(u, p, q, c, s);
                rotate_cols(v, p, q, c, s);
            }
        }
        if (off < kSvdTol) break;
    }
    if (sweep == kSvdMaxSweeps) {
        throw std::runtime_error("svd: Jacobi failed to converge after " +
                                 std::to_string(kSvdMaxSweeps) + " sweeps");
    }

    std::vector<double> sv(n);
    for (std::size_t j = 0; j < n; ++j) sv[j] = std::sqrt(std::max(0.0, col_dot(u, j, j)));

    // Sort by singular value, descending; stable so ties stay deterministic.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });

    const std::size_t kk = std::min(m, n);
    SvdResult res;
    res.u = DenseTensor({m, kk});
    res.vt = DenseTensor({kk, n});
    res.s.resize(kk);

    const double smax = sv.empty() ? 0.0 : sv[order[0]];
    for (std::size_t j = 0; j < kk; ++j) {
        const std::size_t src = order[j];
        res.s[j] = sv[src];
        if (sv[src] > kSvdTol * std::max(smax, 1e-300)) {
            for (std::size_t i = 0; i < m; ++i) res.u(i, j) = u(i, src) / sv[src];
        }
        for (std::size_t c = 0; c < n; ++c) res.vt(j, c) = v(c, src);
    }

    // Complete zero columns of u to an orthonormal set (Gram-Schmidt against
    // the standard basis); keeps u's columns orthonormal in the rank-deficient case.
    for (std::size_t j = 0; j < kk; ++j) {
        if (res.s[j] > kSvdTol * std::max(smax, 1e-300)) continue;
        for (std::size_t seed = 0; seed < m; ++seed) {
            std::vector<double> cand(m, 0.0);
            cand[seed] = 1.0;
            for (std::size_t prev = 0; prev < kk; ++prev) {
                double proj = 0;
                for (std::size_t i = 0; i < m; ++i) proj += cand[i] * res.u(i, prev);
                for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * res.u(i, prev);
            }
            double nrm = 0;
            for (double x : cand) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > 1e-8) {
                for (std::size_t i = 0; i < m; ++i) res.u(i, j) = cand[i] / nrm;
                break;
            }
        }
    }

    // Sign convention: largest-magnitude entry of each u column positive.
    for (std::size_t j = 0; j < kk; ++j) {
        std::size_t arg = 0;
        double best = -1;
        for (std::size_t i = 0; i < m; ++i) {
            if (std::abs(res.u(i, j)) > best) {
                best = std::abs(res.u(i, j));
                arg = i;
            }
        }
        if (res.u(arg, j) < 0) {
            for (std::size_t i = 0; i < m; ++i) res.u(i, j) = -res.u(i, j);
            for (std::size_t c = 0; c < n; ++c) res.vt(j, c) = -res.vt(j, c);
        }
    }
    return res;
}

}  // namespace

SvdResult svd(const DenseTensor& a) {
    if (!a.is_matrix()) throw std::invalid_argument("svd: matrix required, got " + a.shape_str());
    if (a.rows() >= a.cols()) return svd_jacobi(a);
    // Work on the transpose so Jacobi sees m >= n, then swap factors.
    SvdResult t = svd_jacobi(transpose(a));
    SvdResult res;
    res.s = std::move(t.s);
    res.u = transpose(t.vt);
    res.vt = transpose(t.u);
    // Re-apply the sign convention to the swapped factors.
    const std::size_t m = res.u.rows(), kk = res.u.cols(), n = res.vt.cols();
    for (std::size_t j = 0; j < kk; ++j) {
        std::size_t arg = 0;
        double best = -1;
        for (std::size_t i = 0; i < m; ++i) {
            if (std::abs(res.u(i, j)) > best) {
                best = std::abs(res.u(i, j));
                arg = i;
            }
        }
        if (res.u(arg, j) < 0) {
            for (std::size_t i = 0; i < m; ++i) res.u(i, j) = -res.u(i, j);
            for (std::size_t c = 0; c < n; ++c) res.vt(j, c) = -res.vt(j, c);
        }
    }
    return res;
}

QrResult qr(const DenseTensor& a) {
    if (!a.is_matrix()) throw std::invalid_argument("qr: matrix required, got " + a.shape_str());
    const std::size_t m = a.rows(), n = a.cols();
    const std::size_t k = std::min(m, n);

    DenseTensor r = a;                          // m x n working copy
    DenseTensor qfull = DenseTensor::identity(m);

    for (std::size_t j = 0; j < k; ++j) {
        // Householder vector for column j below the diagonal.
        double norm = 0;
        for (std::size_t i = j; i < m; ++i) norm += r(i, j) * r(i, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        const double alpha = (r(j, j) > 0 ? -norm : norm);
        std::vector<double> v(m, 0.0);
        v[j] = r(j, j) - alpha;
        for (std::size_t i = j + 1; i < m; ++i) v[i] = r(i, j);
        double vnorm2 = 0;
        for (std::size_t i = j; i < m; ++i) vnorm2 += v[i] * v[i];
        if (vnorm2 == 0.0) continue;

        // r <- (I - 2 v v^T / v^T v) r
        for (std::size_t c = j; c < n; ++c) {
            double w = 0;
            for (std::size_t i = j; i < m; ++i) w += v[i] * r(i, c);
            w = 2.0 * w / vnorm2;
            for (std::size_t i = j; i < m; ++i) r(i, c) -= w * v[i];
        }
        // qfull <- qfull (I - 2 v v^T / v^T v)
        for (std::size_t row = 0; row < m; ++row) {
            double w = 0;
            for (std::size_t i = j; i < m; ++i) w += qfull(row, i) * v[i];
            w = 2.0 * w / vnorm2;
            for (std::size_t i = j; i < m; ++i) qfull(row, i) -= w * v[i];
        }
    }

    QrResult res;
    res.q = DenseTensor({m, k});
    res.r = DenseTensor({k, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) res.q(i, j) = qfull(i, j);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < n; ++j) res.r(i, j) = r(i, j);
    return res;
}

DenseTensor expm(const DenseTensor& a) {
    if (!a.is_matrix() || a.rows() != a.cols()) {
        throw std::invalid_argument("expm: square matrix required, got " + a.shape_str());
    }
    const std::size_t n = a.rows();

    double maxnorm = 0;
    for (std::size_t i = 0; i < a.size(); ++i) maxnorm = std::max(maxnorm, std::abs(a[i]));
    int squarings = 0;
    double nrm = maxnorm * static_cast<double>(n);
    while (nrm > 0.5 && squarings < 60) {
        nrm /= 2.0;
        ++squarings;
    }

    const DenseTensor b = scale(a, std::pow(0.5, squarings));
    DenseTensor term = DenseTensor::identity(n);
    DenseTensor sum = term;
    for (int kk = 1; kk <= 12; ++kk) {
        term = scale(matmul(term, b), 1.0 / kk);
        sum = add(sum, term);
    }
    for (int i = 0; i < squarings; ++i) sum = matmul(sum, sum);
    return sum;
}

DenseTensor expm_skew(const DenseTensor& lower) {
    if (!lower.is_matrix() || lower.rows() != lower.cols()) {
        throw std::invalid_argument("expm_skew: square matrix required, got " + lower.shape_str());
    }
    const std::size_t n = lower.rows();
    DenseTensor skew({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            skew(i, j) = lower(i, j);
            skew(j, i) = -lower(i, j);
        }
    }
    return expm(skew);
}

}  // namespace tnd
