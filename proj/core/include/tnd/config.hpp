#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tnd/data.hpp"
#include "tnd/net.hpp"
#include "tnd/rng.hpp"

namespace tnd {

/// Declarative experiment description, parsed from JSON with unknown keys
/// rejected. See docs/config.md for the schema.
struct DatasetConfig {
    std::string kind = "mnist";  // mnist | cifar10 | synthetic
    std::string train_images, train_labels, test_images, test_labels;
    std::vector<std::string> cifar_train, cifar_test;
    std::size_t downscale = 0;     // 0 = keep resolution
    std::size_t limit_train = 0;   // 0 = all rows
    std::size_t limit_test = 0;
    // synthetic: deterministic pseudo-random classification set
    std::size_t synth_rows = 256;
    std::size_t synth_dim = 64;
    std::size_t synth_classes = 10;
};

struct LayerConfig {
    std::string type;  // reshape | mpo | circuit | dense | batchnorm | relu
    std::vector<std::size_t> shape;                 // reshape
    std::vector<std::size_t> in_dims, out_dims;     // mpo
    std::size_t bond = 1;                           // mpo
    bool bias = false;                              // mpo/dense
    std::size_t wires = 0;                          // circuit
    std::string spec;                               // circuit
    std::size_t nonlin_every = 0;                   // circuit: insert bn+relu every k layers
    std::size_t in = 0, out = 0;                    // dense
    std::size_t features = 0;                       // batchnorm / relu
    bool trainable = true;
};

struct DisentangleConfig {
    std::size_t layer = 0;       // model layer index holding the MPO
    std::size_t target_chi = 1;
    std::string left = "2b";
    std::string right = "2b";
    std::size_t passes = 200;
    double init_stddev = 0.1;
};

struct HealConfig {
    std::size_t layer = 0;
    std::size_t max_bond = 1;
    std::vector<std::size_t> in_dims, out_dims;  // for dense layers
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    DatasetConfig dataset;
    std::vector<LayerConfig> model;
    TrainConfig train;
    std::optional<DisentangleConfig> disentangle;
    std::optional<HealConfig> heal;

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
};

/// Materialize the configured layer stack and initialize parameters from
/// the experiment seed.
Model build_model(const ExperimentConfig& cfg);

/// Load train/test splits per the dataset config.
std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg);

}  // namespace tnd
