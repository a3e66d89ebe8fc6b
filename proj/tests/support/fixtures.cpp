#include "support/fixtures.hpp"

#include <filesystem>

#include "xfer/pairtrain.hpp"

namespace xfer::testing {
namespace {

const std::pair<Dataset, Dataset>& small_blobs() {
    static const auto split = synth_blobs_split(100, 40, 3, 8, 21, 0.15);
    return split;
}

const std::pair<Dataset, Dataset>& desk_blobs() {
    static const auto split = synth_blobs_split(1000, 100, 3, 32, 21, 0.15);
    return split;
}

}  // namespace

const Dataset& blob_train() { return small_blobs().first; }
const Dataset& blob_test() { return small_blobs().second; }
const Dataset& desk_blob_train() { return desk_blobs().first; }
const Dataset& desk_blob_test() { return desk_blobs().second; }

const ModelSpec& desk_blob_spec() {
    static const ModelSpec spec = ModelSpec::mlp({32}, {64}, 3);
    return spec;
}

PairTrainConfig desk_blob_config(Goal goal) {
    PairTrainConfig cfg;
    cfg.goal = goal;
    cfg.epochs = 20;
    cfg.batch_size = 50;
    cfg.adam.lr = 1e-2;
    return cfg;
}

namespace {
const std::filesystem::path kMnistDir = std::filesystem::path(XFER_SOURCE_DIR) / "data" / "mnist";
}

bool have_mnist() { return std::filesystem::exists(kMnistDir / "train-images-idx3-ubyte"); }

const Dataset& mnist_train_small() {
    static const Dataset ds = subset(load_mnist_dir(kMnistDir, "train"), 2000, 1);
    return ds;
}

const Dataset& mnist_test_small() {
    static const Dataset ds = head(load_mnist_dir(kMnistDir, "test"), 500);
    return ds;
}

const ModelSpec& mnist_mlp_spec() {
    static const ModelSpec spec = ModelSpec::mlp({1, 28, 28}, {128, 64}, 10);
    return spec;
}

const Model& trained_blob_mlp() {
    static const Model m = [] {
        PairTrainConfig cfg;
        cfg.epochs = 40;
        cfg.batch_size = 30;
        cfg.adam.lr = 1e-2;
        return train_single(Model::initialize(ModelSpec::mlp({8}, {16}, 3), 5), blob_train(), cfg).model;
    }();
    return m;
}

}  // namespace xfer::testing
