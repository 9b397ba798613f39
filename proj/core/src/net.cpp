#include "tnd/net.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tnd {

namespace {

constexpr char kBlobMagic[8] = {'T', 'N', 'D', 'B', 'L', 'O', 'B', '1'};

std::size_t strict_lower_count(std::size_t d) { return d * (d - 1) / 2; }

// Spectral norm estimate by power iteration from a fixed start vector.
double spectral_norm(const DenseTensor& m) {
    const std::size_t rows = m.rows(), cols = m.cols();
    std::vector<double> v(cols, 1.0 / std::sqrt(static_cast<double>(cols)));
    std::vector<double> u(rows, 0.0);
    double sigma = 0;
    for (int it = 0; it < 50; ++it) {
        for (std::size_t i = 0; i < rows; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < cols; ++j) s += m(i, j) * v[j];
            u[i] = s;
        }
        double un = 0;
        for (double x : u) un += x * x;
        un = std::sqrt(un);
        if (un == 0) return 0;
        for (double& x : u) x /= un;
        for (std::size_t j = 0; j < cols; ++j) {
            double s = 0;
            for (std::size_t i = 0; i < rows; ++i) s += m(i, j) * u[i];
            v[j] = s;
        }
        double vn = 0;
        for (double x : v) vn += x * x;
        vn = std::sqrt(vn);
        if (vn == 0) return 0;
        sigma = vn;
        for (double& x : v) x /= vn;
    }
    return sigma;
}

ad::Var taped_apply_gate(ad::Tape& t, ad::Var state, ad::Var gmat, std::size_t first_axis,
                         std::size_t span) {
    ad::Var gt = t.reshape(gmat, std::vector<std::size_t>(2 * span, 2));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < span; ++i) pairs.emplace_back(span + i, first_axis + i);
    ad::Var out = t.contract(gt, state, pairs);

    const std::size_t rank = state.value().rank();
    std::vector<std::size_t> perm(rank);
    std::size_t src_free = span;
    for (std::size_t ax = 0; ax < rank; ++ax) {
        if (ax >= first_axis && ax < first_axis + span) {
            perm[ax] = ax - first_axis;
        } else {
            perm[ax] = src_free++;
        }
    }
    return t.permute(out, perm);
}

}  // namespace

Layer Layer::reshape(std::vector<std::size_t> shape) {
    Layer l;
    l.kind = LayerKind::Reshape;
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    l.in_size = l.out_size = n;
    l.shape = std::move(shape);
    return l;
}

Layer Layer::mpo_layer(Mpo m) {
    Layer l;
    l.kind = LayerKind::MpoLayer;
    l.in_size = m.total_in();
    l.out_size = m.total_out();
    l.has_bias = false;
    l.mpo = std::move(m);
    return l;
}

Layer Layer::circuit_layer(Circuit c) {
    Layer l;
    l.kind = LayerKind::CircuitLayer;
    l.in_size = l.out_size = std::size_t{1} << c.wires;
    l.circuit = std::move(c);
    return l;
}

Layer Layer::dense(std::size_t in, std::size_t out, bool bias) {
    Layer l;
    l.kind = LayerKind::Dense;
    l.in_size = in;
    l.out_size = out;
    l.weight = DenseTensor({in, out});
    l.has_bias = bias;
    if (bias) l.bias = DenseTensor({out});
    return l;
}

Layer Layer::batchnorm(std::size_t features) {
    Layer l;
    l.kind = LayerKind::BatchNorm;
    l.in_size = l.out_size = features;
    l.gamma = DenseTensor({features});
    l.beta = DenseTensor({features});
    for (std::size_t i = 0; i < features; ++i) l.gamma[i] = 1.0;
    l.bn_state.running_mean = DenseTensor({features});
    l.bn_state.running_var = DenseTensor({features});
    for (std::size_t i = 0; i < features; ++i) l.bn_state.running_var[i] = 1.0;
    return l;
}

Layer Layer::relu(std::size_t features) {
    Layer l;
    l.kind = LayerKind::Relu;
    l.in_size = l.out_size = features;
    return l;
}

Model::Model(std::vector<Layer> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
        if (layers_[i].out_size != layers_[i + 1].in_size) {
            throw std::invalid_argument("model: layer " + std::to_string(i) + " output " +
                                        std::to_string(layers_[i].out_size) + " != layer " +
                                        std::to_string(i + 1) + " input " +
                                        std::to_string(layers_[i + 1].in_size));
        }
    }
}

std::size_t Model::input_size() const { return layers_.empty() ? 0 : layers_.front().in_size; }
std::size_t Model::output_size() const { return layers_.empty() ? 0 : layers_.back().out_size; }

std::vector<ParamRef> Model::params() {
    std::vector<ParamRef> refs;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        Layer& l = layers_[li];
        if (!l.trainable) continue;
        switch (l.kind) {
            case LayerKind::MpoLayer: {
                for (std::size_t k = 0; k < l.mpo.num_sites(); ++k) {
                    refs.push_back({li, k, &l.mpo.site(k), l.mpo.site(k).size()});
                }
                if (l.has_bias) {
                    refs.push_back({li, l.mpo.num_sites(), &l.bias, l.bias.size()});
                }
                break;
            }
            case LayerKind::CircuitLayer: {
                std::size_t slot = 0;
                for (auto& layer : l.circuit.layers) {
                    for (auto& g : layer) {
                        if (g.is_trainable()) {
                            refs.push_back({li, slot, &g.params, strict_lower_count(g.dim())});
                        }
                        ++slot;
                    }
                }
                break;
            }
            case LayerKind::Dense: {
                refs.push_back({li, 0, &l.weight, l.weight.size()});
                if (l.has_bias) refs.push_back({li, 1, &l.bias, l.bias.size()});
                break;
            }
            case LayerKind::BatchNorm: {
                refs.push_back({li, 0, &l.gamma, l.gamma.size()});
                refs.push_back({li, 1, &l.beta, l.beta.size()});
                break;
            }
            default:
                break;
        }
    }
    return refs;
}

std::size_t Model::count_params() const {
    std::size_t total = 0;
    for (const Layer& l : layers_) {
        if (!l.trainable) continue;
        switch (l.kind) {
            case LayerKind::MpoLayer:
                for (const auto& s : l.mpo.sites()) total += s.size();
                if (l.has_bias) total += l.bias.size();
                break;
            case LayerKind::CircuitLayer:
                for (const Gate* g : l.circuit.trainable_gates()) total += strict_lower_count(g->dim());
                break;
            case LayerKind::Dense:
                total += l.weight.size() + (l.has_bias ? l.bias.size() : 0);
                break;
            case LayerKind::BatchNorm:
                total += l.gamma.size() + l.beta.size();
                break;
            default:
                break;
        }
    }
    return total;
}

void Model::refresh_gates() {
    for (Layer& l : layers_) {
        if (l.kind != LayerKind::CircuitLayer) continue;
        for (Gate* g : l.circuit.trainable_gates()) g->refresh();
    }
}

DenseTensor Model::forward(const DenseTensor& x, bool train_mode) {
    if (!x.is_matrix() || x.cols() != input_size()) {
        throw std::invalid_argument("forward: input must be (batch, " +
                                    std::to_string(input_size()) + ")");
    }
    const std::size_t batch = x.rows();

    tape_.clear();
    param_vars_.clear();
    ad::Var cur = tape_.leaf(x, false);

    for (Layer& l : layers_) {
        switch (l.kind) {
            case LayerKind::Reshape:
                break;  // row-major regrouping marker; data unchanged

            case LayerKind::MpoLayer: {
                const std::size_t s = l.mpo.num_sites();
                std::vector<ad::Var> sites;
                for (std::size_t k = 0; k < s; ++k) {
                    sites.push_back(tape_.leaf(l.mpo.site(k), l.trainable));
                    if (l.trainable) param_vars_.push_back(sites.back());
                }
                ad::Var bias_var;
                if (l.has_bias) {
                    bias_var = tape_.leaf(l.bias, l.trainable);
                    if (l.trainable) param_vars_.push_back(bias_var);
                }

                std::vector<std::size_t> shape = {batch, 1};
                for (std::size_t k = 0; k < s; ++k) shape.push_back(l.mpo.phys_in(k));
                ad::Var t = tape_.reshape(cur, shape);
                for (std::size_t k = 0; k < s; ++k) {
                    t = tape_.contract(t, sites[k], {{1, 0}, {2, 1}});
                    const std::size_t rank = t.value().rank();
                    std::vector<std::size_t> perm(rank);
                    perm[0] = 0;
                    perm[1] = rank - 1;
                    for (std::size_t i = 2; i + 1 < rank; ++i) perm[i] = i - 1;
                    perm[rank - 1] = rank - 2;
                    t = tape_.permute(t, perm);
                }
                cur = tape_.reshape(t, {batch, l.out_size});
                if (l.has_bias) cur = tape_.add_rowvec(cur, bias_var);
                break;
            }

            case LayerKind::CircuitLayer: {
                const std::size_t wires = l.circuit.wires;
                std::vector<std::size_t> shape = {batch};
                shape.insert(shape.end(), wires, 2);
                ad::Var t = tape_.reshape(cur, shape);
                for (auto& clayer : l.circuit.layers) {
                    for (auto& g : clayer) {
                        ad::Var gmat;
                        if (g.is_trainable()) {
                            ad::Var p = tape_.leaf(g.params, l.trainable);
                            if (l.trainable) param_vars_.push_back(p);
                            gmat = tape_.expm_skew(p);
                        } else {
                            gmat = tape_.leaf(g.matrix, false);
                        }
                        t = taped_apply_gate(tape_, t, gmat, 1 + g.wire, g.span);
                    }
                }
                cur = tape_.reshape(t, {batch, l.out_size});
                break;
            }

            case LayerKind::Dense: {
                ad::Var w = tape_.leaf(l.weight, l.trainable);
                if (l.trainable) param_vars_.push_back(w);
                cur = tape_.contract(cur, w, {{1, 0}});
                if (l.has_bias) {
                    ad::Var b = tape_.leaf(l.bias, l.trainable);
                    if (l.trainable) param_vars_.push_back(b);
                    cur = tape_.add_rowvec(cur, b);
                }
                break;
            }

            case LayerKind::BatchNorm: {
                ad::Var g = tape_.leaf(l.gamma, l.trainable);
                ad::Var b = tape_.leaf(l.beta, l.trainable);
                if (l.trainable) {
                    param_vars_.push_back(g);
                    param_vars_.push_back(b);
                }
                cur = train_mode ? tape_.batchnorm_train(cur, g, b, l.bn_state, l.bn_eps, l.bn_momentum)
                                 : tape_.batchnorm_eval(cur, g, b, l.bn_state, l.bn_eps);
                break;
            }

            case LayerKind::Relu:
                cur = tape_.relu(cur);
                break;
        }
    }

    output_var_ = cur;
    have_forward_ = true;
    return cur.value();
}

std::vector<DenseTensor> Model::backward(const DenseTensor& loss_grad) {
    if (!have_forward_) throw std::logic_error("backward: no forward pass recorded");
    tape_.backward(output_var_, loss_grad);

    std::vector<DenseTensor> grads;
    grads.reserve(param_vars_.size());
    for (const ad::Var& v : param_vars_) {
        const DenseTensor& g = v.grad();
        if (g.shape() == v.value().shape()) {
            grads.push_back(g);
        } else {
            grads.push_back(DenseTensor(v.value().shape()));  // no gradient reached it
        }
    }
    have_forward_ = false;
    return grads;
}

std::pair<double, DenseTensor> cross_entropy(const DenseTensor& logits,
                                             const std::vector<int>& labels) {
    if (!logits.is_matrix() || logits.rows() != labels.size()) {
        throw std::invalid_argument("cross_entropy: logits rows must match labels");
    }
    const std::size_t n = logits.rows(), c = logits.cols();
    DenseTensor grad({n, c});
    double loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw std::out_of_range("cross_entropy: label out of class range");
        }
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits(i, j));
        double se = 0;
        for (std::size_t j = 0; j < c; ++j) se += std::exp(logits(i, j) - mx);
        const double lse = mx + std::log(se);
        loss += lse - logits(i, static_cast<std::size_t>(labels[i]));
        for (std::size_t j = 0; j < c; ++j) {
            grad(i, j) = std::exp(logits(i, j) - lse) / static_cast<double>(n);
        }
        grad(i, static_cast<std::size_t>(labels[i])) -= 1.0 / static_cast<double>(n);
    }
    return {loss / static_cast<double>(n), std::move(grad)};
}

double accuracy(const DenseTensor& logits, const std::vector<int>& labels) {
    std::size_t correct = 0;
    const std::size_t n = logits.rows(), c = logits.cols();
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (logits(i, j) > logits(i, arg)) arg = j;
        if (static_cast<int>(arg) == labels[i]) ++correct;
    }
    return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
}

void TrainConfig::validate() const {
    if (optimizer != "adam" && optimizer != "sgd") {
        throw std::invalid_argument("train config: unknown optimizer '" + optimizer + "'");
    }
    if (lr < 0 || batch < 1 || beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
        throw std::invalid_argument("train config: hyperparameters out of range");
    }
}

std::string TrainReport::to_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,train_acc,test_acc\n";
    os.precision(12);
    for (const auto& r : rows) {
        os << r.epoch << "," << r.train_loss << "," << r.train_acc << "," << r.test_acc << "\n";
    }
    return os.str();
}

namespace {

double evaluate(Model& model, const Dataset& ds, std::size_t eval_batch) {
    if (ds.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < ds.size(); start += eval_batch) {
        const std::size_t end = std::min(ds.size(), start + eval_batch);
        std::vector<std::size_t> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        auto [x, labels] = gather(ds, idx);
        const DenseTensor logits = model.forward(x, false);
        correct += static_cast<std::size_t>(
            std::lround(accuracy(logits, labels) * static_cast<double>(labels.size())));
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace

TrainReport train(Model& model, const Dataset& train_ds, const Dataset& test_ds,
                  const TrainConfig& config) {
    config.validate();
    if (train_ds.size() == 0) throw std::invalid_argument("train: empty dataset");

    auto refs = model.params();
    std::vector<bool> frozen(refs.size(), false);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        for (std::size_t f : config.freeze)
            if (refs[i].layer == f) frozen[i] = true;
    }

    std::vector<DenseTensor> m1, m2;
    if (config.optimizer == "adam") {
        for (auto& r : refs) {
            m1.emplace_back(r.tensor->shape());
            m2.emplace_back(r.tensor->shape());
        }
    }

    TrainReport report;
    BatchStream stream(train_ds, config.batch, config.seed);
    std::size_t step = 0;
    double prev_loss = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0;
        double correct = 0;
        for (const auto& idx : stream.epoch(epoch)) {
            auto [x, labels] = gather(train_ds, idx);
            const DenseTensor logits = model.forward(x, true);
            auto [loss, grad] = cross_entropy(logits, labels);
            if (!std::isfinite(loss)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
            }
            loss_sum += loss * static_cast<double>(labels.size());
            correct += accuracy(logits, labels) * static_cast<double>(labels.size());

            std::vector<DenseTensor> grads = model.backward(grad);

            if (config.grad_clip > 0) {
                double norm2 = 0;
                for (std::size_t i = 0; i < grads.size(); ++i) {
                    if (frozen[i]) continue;
                    for (std::size_t j = 0; j < grads[i].size(); ++j)
                        norm2 += grads[i][j] * grads[i][j];
                }
                const double norm = std::sqrt(norm2);
                if (norm > config.grad_clip) {
                    const double s = config.grad_clip / norm;
                    for (auto& g : grads)
                        for (std::size_t j = 0; j < g.size(); ++j) g[j] *= s;
                }
            }

            ++step;
            if (config.optimizer == "adam") {
                const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
                const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
                for (std::size_t i = 0; i < refs.size(); ++i) {
                    if (frozen[i]) continue;
                    DenseTensor& p = *refs[i].tensor;
                    for (std::size_t j = 0; j < p.size(); ++j) {
                        m1[i][j] = config.beta1 * m1[i][j] + (1 - config.beta1) * grads[i][j];
                        m2[i][j] = config.beta2 * m2[i][j] + (1 - config.beta2) * grads[i][j] * grads[i][j];
                        const double mh = m1[i][j] / bc1;
                        const double vh = m2[i][j] / bc2;
                        p[j] -= config.lr * mh / (std::sqrt(vh) + config.adam_eps);
                    }
                }
            } else {
                for (std::size_t i = 0; i < refs.size(); ++i) {
                    if (frozen[i]) continue;
                    DenseTensor& p = *refs[i].tensor;
                    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= config.lr * grads[i][j];
                }
            }
        }
        model.refresh_gates();

        const double train_loss = loss_sum / static_cast<double>(train_ds.size());
        const double train_acc = correct / static_cast<double>(train_ds.size());
        const double test_acc = evaluate(model, test_ds, config.eval_batch);
        report.rows.push_back({epoch, train_loss, train_acc, test_acc});
        report.final_test_acc = test_acc;

        if (config.stop_loss_delta > 0 && epoch > 0 &&
            std::abs(train_loss - prev_loss) < config.stop_loss_delta) {
            break;
        }
        prev_loss = train_loss;
    }
    if (config.epochs == 0) report.final_test_acc = evaluate(model, test_ds, config.eval_batch);
    return report;
}

HealReport heal(Model& model, std::size_t layer_id, std::size_t max_bond,
                const std::vector<std::size_t>& in_dims, const std::vector<std::size_t>& out_dims,
                const Dataset& train_ds, const Dataset& test_ds, const TrainConfig& config) {
    if (layer_id >= model.layers().size()) throw std::out_of_range("heal: layer id out of range");
    Layer& l = model.layers()[layer_id];

    if (l.kind == LayerKind::Dense) {
        Mpo m = decompose(l.weight, in_dims, out_dims, max_bond);
        Layer replacement = Layer::mpo_layer(std::move(m));
        if (l.has_bias) {
            replacement.has_bias = true;
            replacement.bias = l.bias;
        }
        replacement.trainable = l.trainable;
        l = std::move(replacement);
    } else if (l.kind == LayerKind::MpoLayer) {
        l.mpo = truncate(l.mpo, max_bond);
    } else {
        throw std::invalid_argument("heal: layer must be dense or mpo");
    }

    HealReport report;
    {
        std::size_t correct = 0;
        for (std::size_t start = 0; start < test_ds.size(); start += config.eval_batch) {
            const std::size_t end = std::min(test_ds.size(), start + config.eval_batch);
            std::vector<std::size_t> idx(end - start);
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
            auto [x, labels] = gather(test_ds, idx);
            correct += static_cast<std::size_t>(std::lround(
                accuracy(model.forward(x, false), labels) * static_cast<double>(labels.size())));
        }
        report.pre_accuracy =
            test_ds.size() ? static_cast<double>(correct) / static_cast<double>(test_ds.size()) : 0.0;
    }

    TrainConfig ft = config;
    if (ft.stop_loss_delta == 0) ft.stop_loss_delta = 1e-4;
    report.fine_tune = train(model, train_ds, test_ds, ft);
    report.post_accuracy = report.fine_tune.final_test_acc;
    return report;
}

void init_params(Model& model, Rng& rng, double gate_stddev) {
    for (Layer& l : model.layers()) {
        switch (l.kind) {
            case LayerKind::Dense: {
                const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_size));
                for (std::size_t i = 0; i < l.weight.size(); ++i)
                    l.weight[i] = rng.uniform(-bound, bound);
                if (l.has_bias)
                    for (std::size_t i = 0; i < l.bias.size(); ++i)
                        l.bias[i] = rng.uniform(-bound, bound);
                break;
            }
            case LayerKind::MpoLayer: {
                for (std::size_t k = 0; k < l.mpo.num_sites(); ++k) {
                    DenseTensor& s = l.mpo.site(k);
                    for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng.normal();
                }
                const double sigma = spectral_norm(reconstruct(l.mpo));
                if (sigma > 0) {
                    const double fac =
                        std::pow(1.0 / sigma, 1.0 / static_cast<double>(l.mpo.num_sites()));
                    for (std::size_t k = 0; k < l.mpo.num_sites(); ++k) {
                        DenseTensor& s = l.mpo.site(k);
                        for (std::size_t i = 0; i < s.size(); ++i) s[i] *= fac;
                    }
                }
                if (l.has_bias)
                    for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] = 0.0;
                break;
            }
            case LayerKind::CircuitLayer:
                randomize_gates(l.circuit, rng, gate_stddev);
                break;
            default:
                break;
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoint serialization: JSON manifest + little-endian double blob.
// ---------------------------------------------------------------------------

namespace {

struct BlobWriter {
    std::vector<double> data;
    std::size_t put(const DenseTensor& t) {
        const std::size_t off = data.size();
        data.insert(data.end(), t.values().begin(), t.values().end());
        return off;
    }
};

struct BlobReader {
    std::vector<double> data;
    DenseTensor get(std::size_t offset, std::vector<std::size_t> shape) const {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        if (offset + n > data.size()) throw std::runtime_error("checkpoint blob: out-of-range slice");
        std::vector<double> v(data.begin() + static_cast<std::ptrdiff_t>(offset),
                              data.begin() + static_cast<std::ptrdiff_t>(offset + n));
        return DenseTensor(std::move(shape), std::move(v));
    }
};

}  // namespace

void Model::save(const std::string& manifest_path, const std::string& blob_path) const {
    BlobWriter blob;
    nlohmann::json j;
    j["version"] = 1;
    j["blob"] = std::filesystem::path(blob_path).filename().string();
    j["layers"] = nlohmann::json::array();

    for (const Layer& l : layers_) {
        nlohmann::json jl;
        jl["trainable"] = l.trainable;
        switch (l.kind) {
            case LayerKind::Reshape:
                jl["kind"] = "reshape";
                jl["shape"] = l.shape;
                break;
            case LayerKind::MpoLayer: {
                jl["kind"] = "mpo";
                nlohmann::json sites = nlohmann::json::array();
                for (const auto& s : l.mpo.sites()) {
                    sites.push_back({{"shape", s.shape()}, {"offset", blob.put(s)}});
                }
                jl["sites"] = std::move(sites);
                jl["has_bias"] = l.has_bias;
                if (l.has_bias) {
                    jl["bias_offset"] = blob.put(l.bias);
                    jl["out"] = l.out_size;
                }
                break;
            }
            case LayerKind::CircuitLayer: {
                jl["kind"] = "circuit";
                jl["wires"] = l.circuit.wires;
                nlohmann::json layers = nlohmann::json::array();
                for (const auto& clayer : l.circuit.layers) {
                    nlohmann::json row = nlohmann::json::array();
                    for (const auto& g : clayer) {
                        nlohmann::json jg;
                        jg["wire"] = g.wire;
                        jg["span"] = g.span;
                        jg["kind"] = g.is_trainable() ? "orthogonal" : "cnot";
                        if (g.is_trainable()) {
                            jg["params_offset"] = blob.put(g.params);
                            jg["matrix_offset"] = blob.put(g.matrix);
                        }
                        row.push_back(std::move(jg));
                    }
                    layers.push_back(std::move(row));
                }
                jl["layers"] = std::move(layers);
                break;
            }
            case LayerKind::Dense:
                jl["kind"] = "dense";
                jl["in"] = l.in_size;
                jl["out"] = l.out_size;
                jl["weight_offset"] = blob.put(l.weight);
                jl["has_bias"] = l.has_bias;
                if (l.has_bias) jl["bias_offset"] = blob.put(l.bias);
                break;
            case LayerKind::BatchNorm:
                jl["kind"] = "batchnorm";
                jl["features"] = l.in_size;
                jl["eps"] = l.bn_eps;
                jl["momentum"] = l.bn_momentum;
                jl["gamma_offset"] = blob.put(l.gamma);
                jl["beta_offset"] = blob.put(l.beta);
                jl["running_mean_offset"] = blob.put(l.bn_state.running_mean);
                jl["running_var_offset"] = blob.put(l.bn_state.running_var);
                break;
            case LayerKind::Relu:
                jl["kind"] = "relu";
                jl["features"] = l.in_size;
                break;
        }
        j["layers"].push_back(std::move(jl));
    }

    std::ofstream fb(blob_path, std::ios::binary);
    if (!fb) throw std::runtime_error("cannot open " + blob_path);
    fb.write(kBlobMagic, 8);
    const std::uint64_t count = blob.data.size();
    fb.write(reinterpret_cast<const char*>(&count), 8);
    fb.write(reinterpret_cast<const char*>(blob.data.data()),
             static_cast<std::streamsize>(count * sizeof(double)));

    std::ofstream fm(manifest_path);
    if (!fm) throw std::runtime_error("cannot open " + manifest_path);
    fm << j.dump(2) << "\n";
}

Model Model::load(const std::string& manifest_path) {
    std::ifstream fm(manifest_path);
    if (!fm) throw std::runtime_error("cannot open " + manifest_path);
    nlohmann::json j = nlohmann::json::parse(fm);
    if (j.at("version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");

    const auto blob_path =
        std::filesystem::path(manifest_path).parent_path() / j.at("blob").get<std::string>();
    std::ifstream fb(blob_path, std::ios::binary);
    if (!fb) throw std::runtime_error("cannot open " + blob_path.string());
    char magic[8];
    fb.read(magic, 8);
    if (!fb || std::memcmp(magic, kBlobMagic, 8) != 0) {
        throw std::runtime_error("bad checkpoint blob header");
    }
    std::uint64_t count = 0;
    fb.read(reinterpret_cast<char*>(&count), 8);
    BlobReader blob;
    blob.data.resize(count);
    if (!fb.read(reinterpret_cast<char*>(blob.data.data()),
                 static_cast<std::streamsize>(count * sizeof(double)))) {
        throw std::runtime_error("truncated checkpoint blob");
    }

    std::vector<Layer> layers;
    for (const auto& jl : j.at("layers")) {
        const std::string kind = jl.at("kind").get<std::string>();
        Layer l;
        if (kind == "reshape") {
            l = Layer::reshape(jl.at("shape").get<std::vector<std::size_t>>());
        } else if (kind == "mpo") {
            std::vector<DenseTensor> sites;
            for (const auto& js : jl.at("sites")) {
                sites.push_back(blob.get(js.at("offset").get<std::size_t>(),
                                         js.at("shape").get<std::vector<std::size_t>>()));
            }
            l = Layer::mpo_layer(Mpo(std::move(sites)));
            if (jl.value("has_bias", false)) {
                l.has_bias = true;
                l.bias = blob.get(jl.at("bias_offset").get<std::size_t>(),
                                  {jl.at("out").get<std::size_t>()});
            }
        } else if (kind == "circuit") {
            Circuit c;
            c.wires = jl.at("wires").get<std::size_t>();
            for (const auto& row : jl.at("layers")) {
                std::vector<Gate> clayer;
                for (const auto& jg : row) {
                    const std::size_t wire = jg.at("wire").get<std::size_t>();
                    const std::size_t span = jg.at("span").get<std::size_t>();
                    if (jg.at("kind").get<std::string>() == "cnot") {
                        clayer.push_back(Gate::cnot(wire));
                    } else {
                        const std::size_t d = std::size_t{1} << span;
                        Gate g = Gate::trainable(
                            wire, span, blob.get(jg.at("params_offset").get<std::size_t>(), {d, d}));
                        g.matrix = blob.get(jg.at("matrix_offset").get<std::size_t>(), {d, d});
                        clayer.push_back(std::move(g));
                    }
                }
                c.layers.push_back(std::move(clayer));
            }
            l = Layer::circuit_layer(std::move(c));
        } else if (kind == "dense") {
            const auto in = jl.at("in").get<std::size_t>();
            const auto out = jl.at("out").get<std::size_t>();
            l = Layer::dense(in, out, jl.at("has_bias").get<bool>());
            l.weight = blob.get(jl.at("weight_offset").get<std::size_t>(), {in, out});
            if (l.has_bias) l.bias = blob.get(jl.at("bias_offset").get<std::size_t>(), {out});
        } else if (kind == "batchnorm") {
            const auto n = jl.at("features").get<std::size_t>();
            l = Layer::batchnorm(n);
            l.bn_eps = jl.at("eps").get<double>();
            l.bn_momentum = jl.at("momentum").get<double>();
            l.gamma = blob.get(jl.at("gamma_offset").get<std::size_t>(), {n});
            l.beta = blob.get(jl.at("beta_offset").get<std::size_t>(), {n});
            l.bn_state.running_mean = blob.get(jl.at("running_mean_offset").get<std::size_t>(), {n});
            l.bn_state.running_var = blob.get(jl.at("running_var_offset").get<std::size_t>(), {n});
        } else if (kind == "relu") {
            l = Layer::relu(jl.at("features").get<std::size_t>());
        } else {
            throw std::runtime_error("unknown layer kind in checkpoint: " + kind);
        }
        l.trainable = jl.value("trainable", true);
        layers.push_back(std::move(l));
    }
    return Model(std::move(layers));
}

}  // namespace tnd
