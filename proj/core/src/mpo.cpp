#include "tnd/mpo.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace tnd {

namespace {

void validate_sites(const std::vector<DenseTensor>& sites) {
    if (sites.empty()) throw std::invalid_argument("mpo: at least one site required");
    for (const auto& s : sites) {
        if (s.rank() != 4) throw std::invalid_argument("mpo: site tensors must have 4 axes");
    }
    if (sites.front().extent(0) != 1 || sites.back().extent(3) != 1) {
        throw std::invalid_argument("mpo: boundary bonds must have extent 1");
    }
    for (std::size_t k = 0; k + 1 < sites.size(); ++k) {
        if (sites[k].extent(3) != sites[k + 1].extent(0)) {
            throw std::invalid_argument("mpo: adjacent bond extents differ at bond " + std::to_string(k + 1));
        }
    }
}

}  // namespace

Mpo::Mpo(std::vector<DenseTensor> sites) : sites_(std::move(sites)) {
    validate_sites(sites_);
}

std::vector<std::size_t> Mpo::bond_dims() const {
    std::vector<std::size_t> dims;
    for (std::size_t k = 0; k + 1 < sites_.size(); ++k) dims.push_back(sites_[k].extent(3));
    return dims;
}

std::size_t Mpo::max_bond() const {
    std::size_t m = 1;
    for (std::size_t d : bond_dims()) m = std::max(m, d);
    return m;
}

std::size_t Mpo::total_in() const {
    std::size_t n = 1;
    for (const auto& s : sites_) n *= s.extent(1);
    return n;
}

std::size_t Mpo::total_out() const {
    std::size_t n = 1;
    for (const auto& s : sites_) n *= s.extent(2);
    return n;
}

std::string Mpo::to_json() const {
    nlohmann::json j;
    j["sites"] = nlohmann::json::array();
    for (const auto& s : sites_) {
        nlohmann::json js;
        js["shape"] = s.shape();
        js["data"] = s.values();
        j["sites"].push_back(std::move(js));
    }
    return j.dump();
}

Mpo Mpo::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (!j.contains("sites") || !j["sites"].is_array()) {
        throw std::invalid_argument("mpo json: missing 'sites' array");
    }
    std::vector<DenseTensor> sites;
    for (const auto& js : j["sites"]) {
        std::vector<std::size_t> shape = js.at("shape").get<std::vector<std::size_t>>();
        std::vector<double> data = js.at("data").get<std::vector<double>>();
        sites.emplace_back(std::move(shape), std::move(data));
    }
    return Mpo(std::move(sites));
}

Mpo decompose(const DenseTensor& w, const std::vector<std::size_t>& in_dims,
              const std::vector<std::size_t>& out_dims, std::size_t max_bond) {
    if (!w.is_matrix()) throw std::invalid_argument("decompose: matrix required");
    if (in_dims.size() != out_dims.size() || in_dims.empty()) {
        throw std::invalid_argument("decompose: in/out dim lists must match and be non-empty");
    }
    const std::size_t n_sites = in_dims.size();
    std::size_t prod_in = 1, prod_out = 1;
    for (std::size_t d : in_dims) prod_in *= d;
    for (std::size_t d : out_dims) prod_out *= d;
    if (prod_in != w.rows() || prod_out != w.cols()) {
        throw std::invalid_argument("decompose: matrix " + w.shape_str() +
                                    " does not factor over the requested site dims");
    }

    // Split row into input digits and column into output digits, then
    // interleave so site k owns (in_k, out_k).
    std::vector<std::size_t> split_shape;
    for (std::size_t d : in_dims) split_shape.push_back(d);
    for (std::size_t d : out_dims) split_shape.push_back(d);
    DenseTensor t = reshape(w, split_shape);
    std::vector<std::size_t> interleave(2 * n_sites);
    for (std::size_t k = 0; k < n_sites; ++k) {
        interleave[2 * k] = k;
        interleave[2 * k + 1] = n_sites + k;
    }
    t = permute(t, interleave);  // axes (in_0, out_0, in_1, out_1, ...)

    std::vector<DenseTensor> sites;
    std::size_t left_bond = 1;
    std::size_t rest = t.size();
    for (std::size_t k = 0; k + 1 < n_sites; ++k) {
        const std::size_t pin = in_dims[k], pout = out_dims[k];
        rest /= pin * pout;
        DenseTensor mat = reshape(t, {left_bond * pin * pout, rest});
        SvdResult f = svd(mat);
        std::size_t keep = f.rank();
        if (max_bond > 0) keep = std::min(keep, max_bond);
        keep = std::max<std::size_t>(keep, 1);

        DenseTensor u({mat.rows(), keep});
        for (std::size_t i = 0; i < mat.rows(); ++i)
            for (std::size_t j = 0; j < keep; ++j) u(i, j) = f.u(i, j);
        sites.push_back(reshape(u, {left_bond, pin, pout, keep}));

        // carry = diag(s) * vt restricted to the kept subspace
        DenseTensor carry({keep, rest});
        for (std::size_t i = 0; i < keep; ++i)
            for (std::size_t j = 0; j < rest; ++j) carry(i, j) = f.s[i] * f.vt(i, j);
        t = carry;
        left_bond = keep;
    }
    sites.push_back(reshape(t, {left_bond, in_dims.back(), out_dims.back(), 1}));
    return Mpo(std::move(sites));
}

Mpo decompose(const DenseTensor& w, std::size_t sites, std::size_t max_bond) {
    if (!w.is_matrix()) throw std::invalid_argument("decompose: matrix required");
    const std::size_t dim = std::size_t{1} << sites;
    if (w.rows() != dim || w.cols() != dim) {
        throw std::invalid_argument("decompose: matrix " + w.shape_str() + " is not 2^" +
                                    std::to_string(sites) + " square");
    }
    std::vector<std::size_t> twos(sites, 2);
    return decompose(w, twos, twos, max_bond);
}

DenseTensor reconstruct(const Mpo& m) {
    // Carry axes: (in_0, out_0, ..., in_k, out_k, right_bond).
    DenseTensor t = m.site(0);  // (1, pin, pout, r)
    t = reshape(t, {m.phys_in(0), m.phys_out(0), m.site(0).extent(3)});
    for (std::size_t k = 1; k < m.num_sites(); ++k) {
        t = contract(t, m.site(k), {{t.rank() - 1, 0}});
    }
    // Drop the trailing bond of extent 1.
    std::vector<std::size_t> shape = t.shape();
    shape.pop_back();
    t = reshape(t, shape);

    // Separate input digits from output digits.
    const std::size_t n = m.num_sites();
    std::vector<std::size_t> perm;
    for (std::size_t k = 0; k < n; ++k) perm.push_back(2 * k);
    for (std::size_t k = 0; k < n; ++k) perm.push_back(2 * k + 1);
    t = permute(t, perm);
    return reshape(t, {m.total_in(), m.total_out()});
}

namespace {

// QR-push the non-orthogonal factor from site k into site k+1.
void left_orthogonalize_step(std::vector<DenseTensor>& sites, std::size_t k) {
    DenseTensor& s = sites[k];
    const std::size_t l = s.extent(0), pin = s.extent(1), pout = s.extent(2), r = s.extent(3);
    QrResult f = qr(reshape(s, {l * pin * pout, r}));
    const std::size_t newr = f.q.cols();
    s = reshape(f.q, {l, pin, pout, newr});
    sites[k + 1] = contract(f.r, sites[k + 1], {{1, 0}});
}

// Mirror image: push left out of site k into site k-1.
void right_orthogonalize_step(std::vector<DenseTensor>& sites, std::size_t k) {
    DenseTensor& s = sites[k];
    const std::size_t l = s.extent(0), pin = s.extent(1), pout = s.extent(2), r = s.extent(3);
    QrResult f = qr(transpose(reshape(s, {l, pin * pout * r})));
    const std::size_t newl = f.q.cols();
    s = reshape(transpose(f.q), {newl, pin, pout, r});
    DenseTensor carry = transpose(f.r);  // l x newl
    sites[k - 1] = contract(sites[k - 1], carry, {{3, 0}});
}

}  // namespace

Mpo canonicalize(const Mpo& m, std::size_t center) {
    if (center >= m.num_sites()) throw std::out_of_range("canonicalize: center out of range");
    std::vector<DenseTensor> sites = m.sites();
    for (std::size_t k = 0; k < center; ++k) left_orthogonalize_step(sites, k);
    for (std::size_t k = m.num_sites() - 1; k > center; --k) right_orthogonalize_step(sites, k);
    return Mpo(std::move(sites));
}

Mpo truncate(const Mpo& m, std::size_t max_bond) {
    if (max_bond < 1) throw std::invalid_argument("truncate: max_bond must be >= 1");
    Mpo canon = canonicalize(m, 0);
    std::vector<DenseTensor> sites = canon.sites();
    for (std::size_t k = 0; k + 1 < sites.size(); ++k) {
        DenseTensor& s = sites[k];
        const std::size_t l = s.extent(0), pin = s.extent(1), pout = s.extent(2), r = s.extent(3);
        SvdResult f = svd(reshape(s, {l * pin * pout, r}));
        std::size_t keep = std::min(f.rank(), max_bond);
        keep = std::max<std::size_t>(keep, 1);

        DenseTensor u({l * pin * pout, keep});
        for (std::size_t i = 0; i < u.rows(); ++i)
            for (std::size_t j = 0; j < keep; ++j) u(i, j) = f.u(i, j);
        s = reshape(u, {l, pin, pout, keep});

        DenseTensor carry({keep, r});
        for (std::size_t i = 0; i < keep; ++i)
            for (std::size_t j = 0; j < r; ++j) carry(i, j) = f.s[i] * f.vt(i, j);
        sites[k + 1] = contract(carry, sites[k + 1], {{1, 0}});
    }
    return Mpo(std::move(sites));
}

EntropyReport bond_entropies(const Mpo& m) {
    EntropyReport report;
    const std::size_t b = m.num_sites() - 1;
    if (b == 0) return report;

    // Right-canonical start; sweeping left to right exposes the exact
    // Schmidt spectrum of each bipartition at the active bond.
    std::vector<DenseTensor> sites = canonicalize(m, 0).sites();
    for (std::size_t k = 0; k < b; ++k) {
        DenseTensor& s = sites[k];
        const std::size_t l = s.extent(0), pin = s.extent(1), pout = s.extent(2), r = s.extent(3);
        SvdResult f = svd(reshape(s, {l * pin * pout, r}));

        double total = 0;
        for (double x : f.s) total += x * x;
        double entropy = 0;
        if (total > 0) {
            const double cutoff = 1e-12 * f.s.front();
            for (double x : f.s) {
                if (x <= cutoff) continue;
                const double p = x * x / total;
                entropy -= p * std::log(p);
            }
        }
        report.per_bond.push_back(entropy);

        const std::size_t keep = std::max<std::size_t>(f.rank(), 1);
        DenseTensor u({l * pin * pout, keep});
        for (std::size_t i = 0; i < u.rows(); ++i)
            for (std::size_t j = 0; j < keep; ++j) u(i, j) = f.u(i, j);
        s = reshape(u, {l, pin, pout, keep});
        DenseTensor carry({keep, r});
        for (std::size_t i = 0; i < keep; ++i)
            for (std::size_t j = 0; j < r; ++j) carry(i, j) = f.s[i] * f.vt(i, j);
        sites[k + 1] = contract(carry, sites[k + 1], {{1, 0}});
    }

    double avg = 0, mx = 0;
    const auto dims = m.bond_dims();
    for (std::size_t k = 0; k < b; ++k) {
        avg += report.per_bond[k];
        mx += std::log(static_cast<double>(dims[k]));
    }
    report.average = avg / static_cast<double>(b);
    report.maximum = mx / static_cast<double>(b);
    return report;
}

}  // namespace tnd
