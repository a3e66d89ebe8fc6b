// Experiment configuration: JSON schema, defaults, validation and resolution.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xfer/attacks.hpp"
#include "xfer/data.hpp"
#include "xfer/nn.hpp"
#include "xfer/pairtrain.hpp"

namespace xfer::app {

/// Schema violation; `path` is the dotted location of the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct DatasetConfig {
    std::string kind = "blobs";  // "mnist" or "blobs"
    // mnist
    std::filesystem::path path;
    std::optional<std::size_t> train_subset;  // random draw without replacement
    std::uint64_t subset_seed = 1;
    std::optional<std::size_t> test_subset;   // first k test images
    // blobs
    std::size_t train_per_class = 1000;
    std::size_t test_per_class = 100;
    std::size_t classes = 3;
    std::size_t dim = 32;
    std::uint64_t seed = 21;
    double spread = 0.15;
};

struct Scenario {
    std::string name;
    std::filesystem::path dir;  // output directory of a train-pair run
};

struct EvalConfig {
    std::size_t attack_samples = 500;  // first k test samples
    std::size_t grad_batch = 500;
    double detector_max_fpr = 0.05;
};

struct AsymmetryConfig {
    double base = 0.1;            // M1 magnitude target
    std::vector<double> targets;  // M2 magnitude targets; at least 3 for the fit
};

struct ExperimentConfig {
    DatasetConfig dataset;
    /// Defaults to lenet for mnist and a 64-unit MLP for blobs.
    ModelSpec model;
    PairTrainConfig train;
    /// `train` command only: single-model magnitude target.
    std::optional<double> magnitude;
    std::vector<std::uint64_t> seeds{150};
    std::uint64_t seed_offset = 0;
    std::vector<AttackSpec> attacks;
    std::vector<Scenario> scenarios;
    AsymmetryConfig asymmetry;
    EvalConfig eval;
    std::vector<std::filesystem::path> report_inputs;

    /// Replicate seeds with the offset applied.
    std::vector<std::uint64_t> replicate_seeds() const;
};

/// Parses and validates. Relative paths resolve against `base_dir`.
/// A manifest is accepted too; its embedded config is used.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved form with every default spelled out and absolute paths.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Loads train/test splits named by the dataset config.
std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg);

}  // namespace xfer::app
