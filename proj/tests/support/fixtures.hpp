// Small trained models and datasets shared by the module tests.
#pragma once

#include "xfer/data.hpp"
#include "xfer/nn.hpp"
#include "xfer/pairtrain.hpp"

namespace xfer::testing {

/// 3-class blobs in 8 dimensions: 300 train, 120 test.
const Dataset& blob_train();
const Dataset& blob_test();

/// Larger 3-class blobs in 32 dimensions for the desk pair runs: 3000 train, 300 test.
const Dataset& desk_blob_train();
const Dataset& desk_blob_test();
/// MLP 32 -> 64 -> 3.
const ModelSpec& desk_blob_spec();
/// 20 epochs, batch 50, Adam lr 1e-2.
PairTrainConfig desk_blob_config(Goal goal);

/// Bundled MNIST subsets: 2000 random training images, the first 500 test images.
bool have_mnist();
const Dataset& mnist_train_small();
const Dataset& mnist_test_small();
/// MLP 784 -> 128 -> 64 -> 10.
const ModelSpec& mnist_mlp_spec();

/// MLP 8 -> 16 -> 3 trained with plain cross-entropy, cached per process.
const Model& trained_blob_mlp();

}  // namespace xfer::testing
