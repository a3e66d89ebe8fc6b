// Datasets, IDX parsing, synthetic blobs, and deterministic batching.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "xfer/autograd.hpp"

namespace xfer {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Immutable labelled image set; pixels in [0,1].
struct Dataset {
    std::string name;
    std::string split;
    ag::Shape sample_shape;  // e.g. {1,28,28} or {dim}
    std::size_t classes = 0;
    std::vector<double> images;  // size() * numel(sample_shape), row-major
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t sample_numel() const { return ag::numel(sample_shape); }

    /// Stacked samples [k, sample_shape...].
    ag::Tensor images_at(std::span<const std::size_t> indices) const;
    std::vector<int> labels_at(std::span<const std::size_t> indices) const;
    ag::Tensor all_images() const;

    /// Throws DataError on pixel range, label range, or length violations.
    void validate() const;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Bytes are scaled by 1/255.
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, std::string split = "train");

/// `train-*` or `t10k-*` standard file names inside a directory.
Dataset load_mnist_dir(const std::filesystem::path& dir, const std::string& split);

/// Raw IDX writers; images are given as bytes.
void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// Isotropic Gaussian clusters around seeded centres, clipped to [0,1].
Dataset synth_blobs(std::size_t n_per_class, std::size_t classes, std::size_t dim, std::uint64_t seed,
                    double spread = 0.1);

/// Train/test blobs sharing centres: the test set is the tail of a longer draw.
std::pair<Dataset, Dataset> synth_blobs_split(std::size_t train_per_class, std::size_t test_per_class,
                                              std::size_t classes, std::size_t dim, std::uint64_t seed,
                                              double spread = 0.1);

/// k samples drawn without replacement.
Dataset subset(const Dataset& ds, std::size_t k, std::uint64_t seed);
/// First k samples in stored order.
Dataset head(const Dataset& ds, std::size_t k);

/// Fixed sample order reused every epoch.
struct BatchPlan {
    std::size_t batch_size = 100;
    std::vector<std::size_t> order;
    std::size_t epochs = 1;

    static BatchPlan sequential(std::size_t n, std::size_t batch_size, std::size_t epochs = 1);

    std::size_t batch_count() const;
    /// Indices of batch b; the final batch may be short.
    std::span<const std::size_t> batch(std::size_t b) const;
};

}  // namespace xfer
