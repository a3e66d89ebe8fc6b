// Classifiers (LeNet and a small MLP) producing softmax probabilities, plus
// cross-entropy and differentiable input gradients of the ground-truth entry.
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xfer/autograd.hpp"
#include "xfer/rng.hpp"

namespace xfer {

enum class ModelKind { lenet, mlp };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ModelSpec {
    ModelKind kind = ModelKind::lenet;
    /// MLP only: hidden widths between the flattened input and the class layer.
    std::vector<std::size_t> hidden;
    ag::Shape input_shape{1, 28, 28};
    std::size_t classes = 10;

    static ModelSpec lenet();
    static ModelSpec mlp(ag::Shape input_shape, std::vector<std::size_t> hidden, std::size_t classes);

    bool operator==(const ModelSpec&) const = default;
};

struct NamedTensor {
    std::string name;
    ag::Tensor value;
};

class Model;

/// Parameters of a model registered as leaves on one graph.
struct BoundModel {
    const Model* model = nullptr;
    std::vector<ag::Tensor> params;

    ag::Tensor logits(const ag::Tensor& x) const;
    ag::Tensor probs(const ag::Tensor& x) const;
};

class Model {
public:
    /// Weights and biases uniform in +-1/sqrt(fan_in), drawn in parameter order.
    static Model initialize(const ModelSpec& spec, std::uint64_t seed);
    /// Two models drawn one after the other from a single stream, so they differ.
    static std::pair<Model, Model> initialize_pair(const ModelSpec& spec, std::uint64_t seed);
    /// Every parameter zero; forward gives uniform probabilities.
    static Model zeros(const ModelSpec& spec);
    static Model from_parameters(const ModelSpec& spec, std::uint64_t seed, std::vector<NamedTensor> params);

    const ModelSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<NamedTensor>& parameters() const { return params_; }
    std::size_t parameter_count() const;
    void set_parameter(std::size_t i, ag::Tensor value);

    /// Free-form training metadata carried into checkpoints.
    std::map<std::string, std::string>& metadata() { return metadata_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }

    BoundModel bind(ag::Graph& graph) const;
    /// Forward pass with params taken as-is (constants unless they carry nodes).
    ag::Tensor logits(std::span<const ag::Tensor> params, const ag::Tensor& x) const;

    /// Constant evaluation, no graph.
    ag::Tensor predict_proba(const ag::Tensor& x) const;
    std::vector<int> predict(const ag::Tensor& x) const;
    /// Flattened features entering the first fully connected layer.
    ag::Tensor features(const ag::Tensor& x) const;

    bool same_parameters(const Model& other) const;

private:
    static Model draw(const ModelSpec& spec, std::uint64_t seed, Rng& rng);

    ModelSpec spec_;
    std::uint64_t seed_ = 0;
    std::vector<NamedTensor> params_;
    std::map<std::string, std::string> metadata_;
};

/// Shape of the parameter tensors for a spec, in order.
std::vector<std::pair<std::string, ag::Shape>> parameter_layout(const ModelSpec& spec);

struct CrossEntropy {
    ag::Tensor loss;           // scalar, mean over the batch of -log p_gt
    std::size_t clamped = 0;   // samples with p_gt below 1e-12
};

CrossEntropy cross_entropy(const ag::Tensor& probs, std::span<const int> labels);

/// Row-wise argmax of a [N,C] tensor; ties to the lowest class.
std::vector<int> argmax_rows(const ag::Tensor& t);

struct InputGradient {
    ag::Tensor tensor;             // same shape as the input batch
    std::vector<int> gt_class;
    std::vector<double> l2_norm;   // per sample
};

/// d p_gt / d x for each sample. `x` must be a variable on the bound graph.
/// With create_graph the result is differentiable with respect to the params.
InputGradient input_gradient(const BoundModel& model, const ag::Tensor& x, std::span<const int> gt,
                             bool create_graph);
/// Constant version on a private graph.
InputGradient input_gradient(const Model& model, const ag::Tensor& x, std::span<const int> gt);

/// Per-sample probability of the ground-truth class.
std::vector<double> gt_probability(const Model& model, const ag::Tensor& x, std::span<const int> gt);

double accuracy(const Model& model, const ag::Tensor& x, std::span<const int> labels);

std::vector<double> row_norms(const ag::Tensor& t);

}  // namespace xfer
