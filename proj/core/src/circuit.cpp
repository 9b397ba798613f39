#include "tnd/circuit.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tnd {

Gate Gate::cnot(std::size_t wire) {
    Gate g;
    g.wire = wire;
    g.span = 2;
    g.kind = GateKind::FixedCnot;
    // Control on the first (more significant) wire: |10> <-> |11>.
    g.matrix = DenseTensor({4, 4});
    g.matrix(0, 0) = 1;
    g.matrix(1, 1) = 1;
    g.matrix(2, 3) = 1;
    g.matrix(3, 2) = 1;
    return g;
}

Gate Gate::trainable(std::size_t wire, std::size_t span, const DenseTensor& params) {
    const std::size_t d = std::size_t{1} << span;
    if (!params.is_matrix() || params.rows() != d || params.cols() != d) {
        throw std::invalid_argument("gate params must be 2^span square");
    }
    Gate g;
    g.wire = wire;
    g.span = span;
    g.kind = GateKind::Trainable;
    // Force the upper triangle and diagonal to zero at construction.
    g.params = DenseTensor({d, d});
    for (std::size_t i = 1; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) g.params(i, j) = params(i, j);
    g.refresh();
    return g;
}

Gate Gate::identity_gate(std::size_t wire, std::size_t span) {
    const std::size_t d = std::size_t{1} << span;
    return trainable(wire, span, DenseTensor({d, d}));
}

void Gate::refresh() {
    if (kind == GateKind::Trainable) matrix = expm_skew(params);
}

std::size_t Circuit::num_gates() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.size();
    return n;
}

std::vector<Gate*> Circuit::trainable_gates() {
    std::vector<Gate*> out;
    for (auto& layer : layers)
        for (auto& g : layer)
            if (g.is_trainable()) out.push_back(&g);
    return out;
}

std::vector<const Gate*> Circuit::trainable_gates() const {
    std::vector<const Gate*> out;
    for (const auto& layer : layers)
        for (const auto& g : layer)
            if (g.is_trainable()) out.push_back(&g);
    return out;
}

Circuit build_brickwall(std::size_t wires, std::size_t depth, std::size_t gate_size, GateKind kind) {
    if (gate_size < 1 || gate_size > wires) {
        throw std::invalid_argument("build_brickwall: gate size must be in [1, wires]");
    }
    if (kind == GateKind::FixedCnot && gate_size != 2) {
        throw std::invalid_argument("build_brickwall: CNOT gates span exactly 2 wires");
    }
    Circuit c;
    c.wires = wires;
    for (std::size_t d = 0; d < depth; ++d) {
        std::vector<Gate> layer;
        const std::size_t offset = (d % 2 == 0 || gate_size == 1) ? 0 : gate_size / 2;
        for (std::size_t w = offset; w + gate_size <= wires; w += gate_size) {
            layer.push_back(kind == GateKind::FixedCnot ? Gate::cnot(w)
                                                        : Gate::identity_gate(w, gate_size));
        }
        c.layers.push_back(std::move(layer));
    }
    return c;
}

DenseTensor circuit_matrix(const Circuit& c) {
    if (c.wires > 12) {
        throw std::invalid_argument("circuit_matrix: dense evaluation capped at 12 wires");
    }
    const std::size_t dim = std::size_t{1} << c.wires;
    DenseTensor m = DenseTensor::identity(dim);
    for (const auto& layer : c.layers) {
        // Kronecker product over wire order, identities between gates.
        std::vector<const Gate*> sorted;
        for (const auto& g : layer) sorted.push_back(&g);
        std::sort(sorted.begin(), sorted.end(),
                  [](const Gate* a, const Gate* b) { return a->wire < b->wire; });
        DenseTensor lm = DenseTensor::identity(1);
        std::size_t wire = 0;
        for (const Gate* g : sorted) {
            if (g->wire < wire) throw std::invalid_argument("circuit_matrix: overlapping gates in a layer");
            if (g->wire > wire) {
                lm = kron(lm, DenseTensor::identity(std::size_t{1} << (g->wire - wire)));
            }
            lm = kron(lm, g->matrix);
            wire = g->wire + g->span;
        }
        if (wire < c.wires) lm = kron(lm, DenseTensor::identity(std::size_t{1} << (c.wires - wire)));
        m = matmul(lm, m);
    }
    return m;
}

DenseTensor apply_gate(const DenseTensor& state, const DenseTensor& g, std::size_t first_axis,
                       std::size_t span) {
    // Pair the gate's input axes with the state's wire axes, then rotate
    // the produced output axes back into place.
    std::vector<std::size_t> gshape(2 * span, 2);
    const DenseTensor gt = reshape(g, gshape);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < span; ++i) pairs.emplace_back(span + i, first_axis + i);
    // contract(gt, state): result axes = (gate out axes..., state free axes...)
    DenseTensor out = contract(gt, state, pairs);

    // Restore original axis order: out axes currently lead.
    const std::size_t rank = state.rank();
    std::vector<std::size_t> perm(rank);
    std::size_t src_free = span;  // position of the first surviving state axis
    for (std::size_t ax = 0; ax < rank; ++ax) {
        if (ax >= first_axis && ax < first_axis + span) {
            perm[ax] = ax - first_axis;  // one of the gate's out axes
        } else {
            perm[ax] = src_free++;
        }
    }
    return permute(out, perm);
}

DenseTensor apply_to_state(const Circuit& c, const DenseTensor& psi) {
    const std::size_t dim = std::size_t{1} << c.wires;
    if (psi.size() != dim) {
        throw std::invalid_argument("apply_to_state: state length must be 2^wires");
    }
    DenseTensor state = reshape(psi, std::vector<std::size_t>(c.wires, 2));
    for (const auto& layer : c.layers)
        for (const auto& g : layer) state = apply_gate(state, g.matrix, g.wire, g.span);
    return reshape(state, psi.shape());
}

GateCount gate_count(const Circuit& c) {
    GateCount gc;
    for (const auto& layer : c.layers) {
        for (const auto& g : layer) {
            gc.by_arity[g.span] += 1;
            if (g.span == 1) ++gc.one_body;
            if (g.span == 2) ++gc.two_body;
        }
    }
    return gc;
}

void randomize_gates(Circuit& c, Rng& rng, double stddev) {
    for (Gate* g : c.trainable_gates()) {
        const std::size_t d = g->dim();
        for (std::size_t i = 1; i < d; ++i)
            for (std::size_t j = 0; j < i; ++j) g->params(i, j) = rng.normal(0.0, stddev);
        g->refresh();
    }
}

namespace {

std::string lower_nospace(const std::string& s) {
    std::string out;
    for (char ch : s)
        if (!std::isspace(static_cast<unsigned char>(ch)))
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    return out;
}

struct SpecTerm {
    std::size_t count;
    std::size_t arity;  // 0 means CNOT layer
};

std::vector<SpecTerm> parse_terms(const std::string& spec) {
    const std::string s = lower_nospace(spec);
    if (s.empty()) throw std::invalid_argument("circuit spec: empty");
    std::vector<SpecTerm> terms;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t end = s.find('+', pos);
        if (end == std::string::npos) end = s.size();
        std::string tok = s.substr(pos, end - pos);
        if (tok.empty()) throw std::invalid_argument("circuit spec: empty term");

        std::size_t count = 1;
        const std::size_t xpos = tok.find('x');
        if (xpos != std::string::npos && xpos > 0 &&
            std::all_of(tok.begin(), tok.begin() + xpos,
                        [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            count = std::stoul(tok.substr(0, xpos));
            tok = tok.substr(xpos + 1);
        }
        if (count < 1) throw std::invalid_argument("circuit spec: zero repeat count");

        SpecTerm t{count, 0};
        if (tok == "cnot" || tok == "cnots") {
            t.arity = 0;
        } else if (tok.size() == 2 && tok[1] == 'b' && tok[0] >= '1' && tok[0] <= '6') {
            t.arity = static_cast<std::size_t>(tok[0] - '0');
        } else {
            throw std::invalid_argument("circuit spec: unknown token '" + tok + "'");
        }
        terms.push_back(t);
        if (end == s.size()) break;
        pos = end + 1;
    }
    return terms;
}

}  // namespace

Circuit parse_circuit_spec(const std::string& spec, std::size_t wires) {
    Circuit c;
    c.wires = wires;
    // Brickwall offsets alternate per gate arity, so interleaved
    // single-body layers do not shift the two-body bricks.
    std::map<std::size_t, std::size_t> arity_count;
    for (const SpecTerm& t : parse_terms(spec)) {
        for (std::size_t rep = 0; rep < t.count; ++rep) {
            const std::size_t arity = (t.arity == 0) ? 2 : t.arity;
            if (arity > wires) {
                throw std::invalid_argument("circuit spec: gate arity exceeds wire count");
            }
            const std::size_t nth = arity_count[arity]++;
            const std::size_t offset = (nth % 2 == 0 || arity == 1) ? 0 : arity / 2;
            std::vector<Gate> layer;
            for (std::size_t w = offset; w + arity <= wires; w += arity) {
                layer.push_back(t.arity == 0 ? Gate::cnot(w) : Gate::identity_gate(w, arity));
            }
            c.layers.push_back(std::move(layer));
        }
    }
    return c;
}

std::string format_circuit_spec(const Circuit& c) {
    // Reduce each layer to its token, then run-length encode.
    std::vector<std::string> tokens;
    for (const auto& layer : c.layers) {
        if (layer.empty()) throw std::invalid_argument("format_circuit_spec: empty layer");
        const bool all_cnot = std::all_of(layer.begin(), layer.end(), [](const Gate& g) {
            return g.kind == GateKind::FixedCnot;
        });
        const std::size_t arity = layer.front().span;
        const bool uniform = std::all_of(layer.begin(), layer.end(), [&](const Gate& g) {
            return g.span == arity && (g.kind == GateKind::FixedCnot) == all_cnot;
        });
        if (!uniform) throw std::invalid_argument("format_circuit_spec: mixed layer has no token");
        tokens.push_back(all_cnot ? "cnot" : std::to_string(arity) + "b");
    }
    std::ostringstream os;
    std::size_t i = 0;
    bool first = true;
    while (i < tokens.size()) {
        std::size_t run = 1;
        while (i + run < tokens.size() && tokens[i + run] == tokens[i]) ++run;
        if (!first) os << " + ";
        if (run > 1) os << run << "x " << tokens[i];
        else os << tokens[i];
        first = false;
        i += run;
    }
    return os.str();
}

std::string Circuit::to_json() const {
    nlohmann::json j;
    j["wires"] = wires;
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : layers) {
        nlohmann::json jl = nlohmann::json::array();
        for (const auto& g : layer) {
            nlohmann::json jg;
            jg["wire"] = g.wire;
            jg["span"] = g.span;
            jg["kind"] = g.kind == GateKind::FixedCnot ? "cnot" : "orthogonal";
            if (g.is_trainable()) jg["params"] = g.params.values();
            jl.push_back(std::move(jg));
        }
        j["layers"].push_back(std::move(jl));
    }
    return j.dump();
}

Circuit Circuit::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Circuit c;
    c.wires = j.at("wires").get<std::size_t>();
    for (const auto& jl : j.at("layers")) {
        std::vector<Gate> layer;
        for (const auto& jg : jl) {
            const std::size_t wire = jg.at("wire").get<std::size_t>();
            const std::size_t span = jg.at("span").get<std::size_t>();
            const std::string kind = jg.at("kind").get<std::string>();
            if (kind == "cnot") {
                if (span != 2) throw std::invalid_argument("circuit json: cnot span must be 2");
                layer.push_back(Gate::cnot(wire));
            } else {
                const std::size_t d = std::size_t{1} << span;
                std::vector<double> p = jg.at("params").get<std::vector<double>>();
                layer.push_back(Gate::trainable(wire, span, DenseTensor({d, d}, std::move(p))));
            }
        }
        c.layers.push_back(std::move(layer));
    }
    return c;
}

}  // namespace tnd
