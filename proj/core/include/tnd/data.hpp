#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnd/tensor.hpp"

namespace tnd {

/// In-memory dataset: one feature row per example, values in [0, 1].
struct Dataset {
    DenseTensor features;     // (n, d)
    std::vector<int> labels;  // length n
    std::string split;        // "train" or "test"

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.is_matrix() ? features.cols() : 0; }

    /// Copy of the first n examples.
    Dataset head(std::size_t n) const;
};

/// MNIST IDX loaders. Image magic 0x00000803, label magic 0x00000801,
/// big-endian headers, uint8 pixels scaled by 1/255.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       const std::string& split = "train");

/// Inverse of load_mnist_idx for square images; used for synthetic data
/// and round-trip checks. Features must be exact multiples of 1/255.
void write_mnist_idx(const Dataset& ds, std::size_t side, const std::string& images_path,
                     const std::string& labels_path);

/// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes.
Dataset load_cifar10_bin(const std::vector<std::string>& paths, const std::string& split = "train");

void write_cifar10_bin(const Dataset& ds, const std::string& path);

/// Area-average downscale of square images to side x side, with
/// fractional box weights. Preserves the global mean exactly.
Dataset downscale(const Dataset& ds, std::size_t side);

/// Seeded epoch shuffler. Each epoch yields a deterministic permutation of
/// all indices split into batches; the last partial batch is included.
class BatchStream {
public:
    BatchStream(const Dataset& ds, std::size_t batch_size, std::uint64_t seed);

    /// Batched indices for one epoch, deterministic per (seed, epoch).
    std::vector<std::vector<std::size_t>> epoch(std::size_t epoch_index) const;

private:
    const Dataset* ds_;
    std::size_t batch_size_;
    std::uint64_t seed_;
};

/// Gather rows into a (batch, d) matrix plus labels.
std::pair<DenseTensor, std::vector<int>> gather(const Dataset& ds,
                                                const std::vector<std::size_t>& indices);

}  // namespace tnd
