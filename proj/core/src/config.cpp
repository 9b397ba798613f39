#include "tnd/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace tnd {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
        }
    }
}

DatasetConfig parse_dataset(const json& j) {
    reject_unknown(j,
                   {"kind", "train_images", "train_labels", "test_images", "test_labels",
                    "cifar_train", "cifar_test", "downscale", "limit_train", "limit_test",
                    "synth_rows", "synth_dim", "synth_classes"},
                   "dataset");
    DatasetConfig c;
    c.kind = j.value("kind", c.kind);
    if (c.kind != "mnist" && c.kind != "cifar10" && c.kind != "synthetic") {
        throw std::invalid_argument("config: dataset.kind must be mnist, cifar10 or synthetic");
    }
    c.train_images = j.value("train_images", std::string{});
    c.train_labels = j.value("train_labels", std::string{});
    c.test_images = j.value("test_images", std::string{});
    c.test_labels = j.value("test_labels", std::string{});
    c.cifar_train = j.value("cifar_train", std::vector<std::string>{});
    c.cifar_test = j.value("cifar_test", std::vector<std::string>{});
    c.downscale = j.value("downscale", c.downscale);
    c.limit_train = j.value("limit_train", c.limit_train);
    c.limit_test = j.value("limit_test", c.limit_test);
    c.synth_rows = j.value("synth_rows", c.synth_rows);
    c.synth_dim = j.value("synth_dim", c.synth_dim);
    c.synth_classes = j.value("synth_classes", c.synth_classes);
    return c;
}

LayerConfig parse_layer(const json& j, std::size_t index) {
    const std::string where = "model[" + std::to_string(index) + "]";
    reject_unknown(j,
                   {"type", "shape", "in_dims", "out_dims", "bond", "bias", "wires", "spec",
                    "nonlin_every", "in", "out", "features", "trainable"},
                   where);
    LayerConfig c;
    c.type = j.at("type").get<std::string>();
    c.shape = j.value("shape", c.shape);
    c.in_dims = j.value("in_dims", c.in_dims);
    c.out_dims = j.value("out_dims", c.out_dims);
    c.bond = j.value("bond", c.bond);
    c.bias = j.value("bias", c.bias);
    c.wires = j.value("wires", c.wires);
    c.spec = j.value("spec", c.spec);
    c.nonlin_every = j.value("nonlin_every", c.nonlin_every);
    c.in = j.value("in", c.in);
    c.out = j.value("out", c.out);
    c.features = j.value("features", c.features);
    c.trainable = j.value("trainable", true);

    const std::set<std::string> kinds = {"reshape", "mpo", "circuit", "dense", "batchnorm", "relu"};
    if (!kinds.count(c.type)) {
        throw std::invalid_argument("config: unknown layer type '" + c.type + "' in " + where);
    }
    if (c.type == "mpo" && (c.in_dims.empty() || c.in_dims.size() != c.out_dims.size())) {
        throw std::invalid_argument("config: mpo layer needs matching in_dims/out_dims in " + where);
    }
    if (c.type == "circuit" && (c.wires == 0 || c.spec.empty())) {
        throw std::invalid_argument("config: circuit layer needs wires and spec in " + where);
    }
    if (c.type == "dense" && (c.in == 0 || c.out == 0)) {
        throw std::invalid_argument("config: dense layer needs in/out in " + where);
    }
    if ((c.type == "batchnorm" || c.type == "relu") && c.features == 0) {
        throw std::invalid_argument("config: " + c.type + " layer needs features in " + where);
    }
    return c;
}

TrainConfig parse_train(const json& j) {
    reject_unknown(j,
                   {"optimizer", "lr", "batch", "epochs", "seed", "grad_clip", "freeze", "betas",
                    "stop_loss_delta", "eval_batch"},
                   "train");
    TrainConfig c;
    c.optimizer = j.value("optimizer", c.optimizer);
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.freeze = j.value("freeze", c.freeze);
    c.stop_loss_delta = j.value("stop_loss_delta", c.stop_loss_delta);
    c.eval_batch = j.value("eval_batch", c.eval_batch);
    if (j.contains("betas")) {
        const auto betas = j.at("betas").get<std::vector<double>>();
        if (betas.size() != 2) throw std::invalid_argument("config: train.betas must have 2 entries");
        c.beta1 = betas[0];
        c.beta2 = betas[1];
    }
    c.validate();
    return c;
}

DisentangleConfig parse_disentangle(const json& j) {
    reject_unknown(j, {"layer", "target_chi", "left", "right", "passes", "init_stddev"},
                   "disentangle");
    DisentangleConfig c;
    c.layer = j.value("layer", c.layer);
    c.target_chi = j.value("target_chi", c.target_chi);
    c.left = j.value("left", c.left);
    c.right = j.value("right", c.right);
    c.passes = j.value("passes", c.passes);
    c.init_stddev = j.value("init_stddev", c.init_stddev);
    if (c.target_chi < 1) throw std::invalid_argument("config: disentangle.target_chi must be >= 1");
    return c;
}

HealConfig parse_heal(const json& j) {
    reject_unknown(j, {"layer", "max_bond", "in_dims", "out_dims"}, "heal");
    HealConfig c;
    c.layer = j.value("layer", c.layer);
    c.max_bond = j.value("max_bond", c.max_bond);
    c.in_dims = j.value("in_dims", c.in_dims);
    c.out_dims = j.value("out_dims", c.out_dims);
    return c;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    reject_unknown(j, {"seed", "out_dir", "dataset", "model", "train", "disentangle", "heal"},
                   "top level");
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("dataset")) c.dataset = parse_dataset(j.at("dataset"));
    if (j.contains("model")) {
        std::size_t i = 0;
        for (const auto& jl : j.at("model")) c.model.push_back(parse_layer(jl, i++));
    }
    if (j.contains("train")) c.train = parse_train(j.at("train"));
    if (j.contains("disentangle")) c.disentangle = parse_disentangle(j.at("disentangle"));
    if (j.contains("heal")) c.heal = parse_heal(j.at("heal"));
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

Model build_model(const ExperimentConfig& cfg) {
    std::vector<Layer> layers;
    for (const LayerConfig& lc : cfg.model) {
        if (lc.type == "reshape") {
            layers.push_back(Layer::reshape(lc.shape));
        } else if (lc.type == "mpo") {
            // Start from an identity-free random MPO of the requested bond;
            // init_params sets the actual scaled values.
            std::vector<DenseTensor> sites;
            const std::size_t s = lc.in_dims.size();
            std::size_t left = 1;
            // bond caps: full Schmidt rank from either end
            std::vector<std::size_t> bonds(s - 1);
            {
                std::vector<double> lcap(s - 1), rcap(s - 1);
                double acc = 1;
                for (std::size_t k = 0; k + 1 < s; ++k) {
                    acc *= static_cast<double>(lc.in_dims[k] * lc.out_dims[k]);
                    lcap[k] = acc;
                }
                acc = 1;
                for (std::size_t k = s - 1; k > 0; --k) {
                    acc *= static_cast<double>(lc.in_dims[k] * lc.out_dims[k]);
                    rcap[k - 1] = acc;
                }
                for (std::size_t k = 0; k + 1 < s; ++k) {
                    bonds[k] = static_cast<std::size_t>(
                        std::min<double>(lc.bond, std::min(lcap[k], rcap[k])));
                    bonds[k] = std::max<std::size_t>(bonds[k], 1);
                }
            }
            for (std::size_t k = 0; k < s; ++k) {
                const std::size_t right = (k + 1 < s) ? bonds[k] : 1;
                sites.emplace_back(
                    std::vector<std::size_t>{left, lc.in_dims[k], lc.out_dims[k], right});
                left = right;
            }
            Layer l = Layer::mpo_layer(Mpo(std::move(sites)));
            if (lc.bias) {
                l.has_bias = true;
                l.bias = DenseTensor({l.out_size});
            }
            l.trainable = lc.trainable;
            layers.push_back(std::move(l));
        } else if (lc.type == "circuit") {
            Circuit full = parse_circuit_spec(lc.spec, lc.wires);
            if (lc.nonlin_every == 0 || full.layers.size() <= lc.nonlin_every) {
                Layer l = Layer::circuit_layer(std::move(full));
                l.trainable = lc.trainable;
                layers.push_back(std::move(l));
            } else {
                // Segment deep circuits with batchnorm + relu between
                // sub-blocks to keep gradients alive.
                const std::size_t dim = std::size_t{1} << lc.wires;
                std::size_t start = 0;
                while (start < full.layers.size()) {
                    const std::size_t end = std::min(full.layers.size(), start + lc.nonlin_every);
                    Circuit part;
                    part.wires = lc.wires;
                    part.layers.assign(full.layers.begin() + static_cast<std::ptrdiff_t>(start),
                                       full.layers.begin() + static_cast<std::ptrdiff_t>(end));
                    Layer l = Layer::circuit_layer(std::move(part));
                    l.trainable = lc.trainable;
                    layers.push_back(std::move(l));
                    if (end < full.layers.size()) {
                        layers.push_back(Layer::batchnorm(dim));
                        layers.push_back(Layer::relu(dim));
                    }
                    start = end;
                }
            }
        } else if (lc.type == "dense") {
            Layer l = Layer::dense(lc.in, lc.out, lc.bias);
            l.trainable = lc.trainable;
            layers.push_back(std::move(l));
        } else if (lc.type == "batchnorm") {
            layers.push_back(Layer::batchnorm(lc.features));
        } else if (lc.type == "relu") {
            layers.push_back(Layer::relu(lc.features));
        }
    }
    Model model(std::move(layers));
    Rng rng(cfg.seed);
    init_params(model, rng);
    return model;
}

namespace {

Dataset make_synthetic(const DatasetConfig& cfg, std::uint64_t seed, const std::string& split) {
    // Separable classification task: class centroids on coordinate axes
    // plus noise; deterministic given (seed, split).
    Rng rng(seed ^ (split == "train" ? 0x7ea7ull : 0x7e57ull));
    Dataset ds;
    ds.split = split;
    ds.features = DenseTensor({cfg.synth_rows, cfg.synth_dim});
    ds.labels.resize(cfg.synth_rows);
    for (std::size_t i = 0; i < cfg.synth_rows; ++i) {
        const int label = static_cast<int>(rng.below(cfg.synth_classes));
        ds.labels[i] = label;
        for (std::size_t j = 0; j < cfg.synth_dim; ++j) {
            double v = 0.25 + 0.1 * rng.normal();
            if (j % cfg.synth_classes == static_cast<std::size_t>(label)) v += 0.5;
            ds.features[i * cfg.synth_dim + j] = std::min(1.0, std::max(0.0, v));
        }
    }
    return ds;
}

}  // namespace

std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg) {
    Dataset train_ds, test_ds;
    if (cfg.kind == "mnist") {
        train_ds = load_mnist_idx(cfg.train_images, cfg.train_labels, "train");
        test_ds = load_mnist_idx(cfg.test_images, cfg.test_labels, "test");
    } else if (cfg.kind == "cifar10") {
        train_ds = load_cifar10_bin(cfg.cifar_train, "train");
        test_ds = load_cifar10_bin(cfg.cifar_test, "test");
    } else {
        train_ds = make_synthetic(cfg, 1234, "train");
        test_ds = make_synthetic(cfg, 1234, "test");
    }
    if (cfg.downscale > 0) {
        train_ds = downscale(train_ds, cfg.downscale);
        test_ds = downscale(test_ds, cfg.downscale);
    }
    if (cfg.limit_train > 0) train_ds = train_ds.head(cfg.limit_train);
    if (cfg.limit_test > 0) test_ds = test_ds.head(cfg.limit_test);
    return {std::move(train_ds), std::move(test_ds)};
}

}  // namespace tnd
