#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tnd/autodiff.hpp"
#include "tnd/circuit.hpp"
#include "tnd/data.hpp"
#include "tnd/mpo.hpp"
#include "tnd/rng.hpp"
#include "tnd/tensor.hpp"

namespace tnd {

enum class LayerKind { Reshape, MpoLayer, CircuitLayer, Dense, BatchNorm, Relu };

/// One network layer. Activations flow as (batch, features) matrices;
/// linear-algebra layers apply their operator to each row.
struct Layer {
    LayerKind kind = LayerKind::Relu;
    std::size_t in_size = 0;
    std::size_t out_size = 0;
    bool trainable = true;

    // reshape: a named regrouping marker; row data is unchanged.
    std::vector<std::size_t> shape;

    // mpo
    Mpo mpo;

    // circuit
    Circuit circuit;

    // dense
    DenseTensor weight;  // (in, out)
    DenseTensor bias;    // (out) when has_bias
    bool has_bias = true;

    // batchnorm
    DenseTensor gamma, beta;
    ad::Tape::BatchNormState bn_state;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    static Layer reshape(std::vector<std::size_t> shape);
    static Layer mpo_layer(Mpo m);
    static Layer circuit_layer(Circuit c);
    static Layer dense(std::size_t in, std::size_t out, bool bias = true);
    static Layer batchnorm(std::size_t features);
    static Layer relu(std::size_t features);
};

/// Location of one trainable tensor inside the model.
struct ParamRef {
    std::size_t layer = 0;
    std::size_t slot = 0;      // site index / trainable-gate index / 0=weight 1=bias / 0=gamma 1=beta
    DenseTensor* tensor = nullptr;
    std::size_t free_count = 0;  // trainable scalars (strict lower triangle for gates)
};

class Model {
public:
    Model() = default;
    explicit Model(std::vector<Layer> layers);

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::size_t input_size() const;
    std::size_t output_size() const;

    /// All trainable parameter tensors, in deterministic layer-major order.
    std::vector<ParamRef> params();

    /// Forward pass for a (batch, in) matrix. Records a tape so that
    /// backward() can run afterwards.
    DenseTensor forward(const DenseTensor& x, bool train_mode);

    /// Pull the given loss gradient (same shape as the last forward
    /// output) back to every trainable parameter. Returns gradients
    /// aligned with params(). Requires a recorded forward.
    std::vector<DenseTensor> backward(const DenseTensor& loss_grad);

    /// Forward without touching batchnorm running statistics.
    DenseTensor infer(const DenseTensor& x) { return forward(x, false); }

    std::size_t count_params() const;

    /// Re-derive cached gate matrices from parameters (after external
    /// parameter edits).
    void refresh_gates();

    void save(const std::string& manifest_path, const std::string& blob_path) const;
    static Model load(const std::string& manifest_path);

private:
    friend struct ForwardPlan;
    std::vector<Layer> layers_;

    // state of the last forward
    ad::Tape tape_;
    std::vector<ad::Var> param_vars_;
    ad::Var output_var_;
    bool have_forward_ = false;
};

/// Mean cross-entropy over the batch plus its gradient w.r.t. logits.
std::pair<double, DenseTensor> cross_entropy(const DenseTensor& logits,
                                             const std::vector<int>& labels);

double accuracy(const DenseTensor& logits, const std::vector<int>& labels);

struct TrainConfig {
    std::string optimizer = "adam";  // "adam" or "sgd"
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch = 128;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    double grad_clip = 0.0;             // global-norm clip, 0 disables
    std::vector<std::size_t> freeze;    // layer indices excluded from updates
    double stop_loss_delta = 0.0;       // early stop when epoch loss changes less, 0 disables
    std::size_t eval_batch = 1024;

    void validate() const;
};

struct EpochRow {
    std::size_t epoch;
    double train_loss;
    double train_acc;
    double test_acc;
};

struct TrainReport {
    std::vector<EpochRow> rows;
    double final_test_acc = 0.0;
    std::string to_csv() const;
};

/// Mini-batch training with seeded shuffling. Deterministic given config
/// and initial parameters. Throws on divergence (non-finite loss).
TrainReport train(Model& model, const Dataset& train_ds, const Dataset& test_ds,
                  const TrainConfig& config);

struct HealReport {
    double pre_accuracy = 0.0;   // after replacement, before fine-tuning
    double post_accuracy = 0.0;  // after fine-tuning
    TrainReport fine_tune;
};

/// Replace a dense or MPO layer by its bond-truncated MPO approximation
/// (dense layers are first factored over the given site dims), then
/// fine-tune until the epoch budget or loss convergence.
HealReport heal(Model& model, std::size_t layer_id, std::size_t max_bond,
                const std::vector<std::size_t>& in_dims, const std::vector<std::size_t>& out_dims,
                const Dataset& train_ds, const Dataset& test_ds, const TrainConfig& config);

/// Initialize parameters: dense uniform +-1/sqrt(fan_in); MPO sites scaled
/// Gaussian so the reconstructed operator has unit spectral scale;
/// circuit gates from N(0, gate_stddev).
void init_params(Model& model, Rng& rng, double gate_stddev = 0.1);

}  // namespace tnd
