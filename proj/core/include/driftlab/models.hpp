#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "driftlab/nn/graph.hpp"
#include "driftlab/nn/tensor.hpp"

namespace driftlab {

/// How a forward pass reads parameters: bound for gradients, or read-only.
enum class Binding { Trainable, Frozen };

/// Structural description of a network; two models with equal architectures
/// have parameter lists of identical shapes.
struct Architecture {
    std::string kind;  // "embedding" | "softmax"
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t output_dim = 0;  // embedding dim, or trunk feature dim for softmax models
    std::vector<std::size_t> heads;

    bool operator==(const Architecture&) const = default;
    [[nodiscard]] std::string describe() const;
};

struct DenseLayer {
    nn::Tensor weight;  // [in, out]
    nn::Tensor bias;    // [out]
    bool relu = false;
};

/// Stack of affine layers with optional ReLU, Kaiming-uniform (fan-in)
/// weights and zero biases.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim, bool relu_on_output,
        std::mt19937_64& rng);

    [[nodiscard]] nn::Var forward(nn::Graph& g, nn::Var x, Binding binding);
    [[nodiscard]] nn::Var forward(nn::Graph& g, nn::Var x) const;

    [[nodiscard]] std::size_t input_dim() const;
    [[nodiscard]] std::size_t output_dim() const;
    [[nodiscard]] std::vector<DenseLayer>& layers() noexcept { return layers_; }
    [[nodiscard]] const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

private:
    std::vector<DenseLayer> layers_;
};

/// Embedding network F: input -> hidden ReLU layers -> linear -> L2 normalize.
class EmbeddingModel {
public:
    struct Options {
        std::size_t input_dim = 784;
        std::vector<std::size_t> hidden{256, 256};
        std::size_t embedding_dim = 64;
        std::uint64_t seed = 0;
    };

    explicit EmbeddingModel(const Options& options);

    /// Pre-normalization output [n, embedding_dim].
    [[nodiscard]] nn::Var raw_output(nn::Graph& g, nn::Var batch, Binding binding = Binding::Trainable);
    [[nodiscard]] nn::Var raw_output(nn::Graph& g, nn::Var batch) const;
    /// Unit-norm embeddings [n, embedding_dim].
    [[nodiscard]] nn::Var embed(nn::Graph& g, nn::Var batch, Binding binding = Binding::Trainable);
    [[nodiscard]] nn::Var embed(nn::Graph& g, nn::Var batch) const;

    /// Inference helpers (no gradient tape kept).
    [[nodiscard]] nn::Tensor embed(const nn::Tensor& batch) const;
    [[nodiscard]] nn::Tensor raw_output(const nn::Tensor& batch) const;

    [[nodiscard]] std::vector<nn::Tensor*> parameters();
    [[nodiscard]] std::vector<const nn::Tensor*> parameters() const;
    [[nodiscard]] std::vector<std::string> parameter_names() const;
    void zero_grad();
    void drop_grads();

    [[nodiscard]] Architecture architecture() const;
    [[nodiscard]] std::size_t input_dim() const noexcept { return input_dim_; }
    [[nodiscard]] std::size_t embedding_dim() const noexcept { return embedding_dim_; }
    [[nodiscard]] Mlp& network() noexcept { return net_; }
    [[nodiscard]] const Mlp& network() const noexcept { return net_; }

private:
    std::size_t input_dim_;
    std::size_t embedding_dim_;
    std::vector<std::size_t> hidden_;
    Mlp net_;
};

/// Softmax classifier with a shared trunk (hidden ReLU layers -> ReLU feature
/// layer) and one linear head per task.
class SoftmaxModel {
public:
    struct Options {
        std::size_t input_dim = 784;
        std::vector<std::size_t> hidden{256, 256};
        std::size_t feature_dim = 64;
        std::uint64_t seed = 0;
    };

    explicit SoftmaxModel(const Options& options);

    /// Appends a freshly initialized head; existing heads are untouched.
    void add_head(std::size_t num_classes);
    [[nodiscard]] std::size_t head_count() const noexcept { return heads_.size(); }
    [[nodiscard]] std::size_t head_width(std::size_t head) const;

    [[nodiscard]] nn::Var features(nn::Graph& g, nn::Var batch, Binding binding = Binding::Trainable);
    [[nodiscard]] nn::Var head_logits(nn::Graph& g, nn::Var features, std::size_t head,
                                      Binding binding = Binding::Trainable);

    /// Activations of the trunk output (the layer before the heads).
    [[nodiscard]] nn::Tensor penultimate_features(const nn::Tensor& batch) const;
    /// Softmax probabilities of every head, concatenated in head order.
    [[nodiscard]] nn::Tensor concatenated_probabilities(const nn::Tensor& batch) const;
    /// Argmax over the concatenated per-head probabilities. Ids index the
    /// concatenation (head 0 classes first). Throws StateError with no heads.
    [[nodiscard]] std::vector<std::size_t> predict_multihead(const nn::Tensor& batch) const;

    [[nodiscard]] std::vector<nn::Tensor*> parameters();
    [[nodiscard]] std::vector<const nn::Tensor*> parameters() const;
    [[nodiscard]] std::vector<std::string> parameter_names() const;
    [[nodiscard]] std::vector<nn::Tensor*> trunk_parameters();
    [[nodiscard]] std::vector<nn::Tensor*> head_parameters(std::size_t head);
    void zero_grad();
    void drop_grads();

    [[nodiscard]] Architecture architecture() const;
    [[nodiscard]] std::size_t input_dim() const noexcept { return input_dim_; }
    [[nodiscard]] std::size_t feature_dim() const noexcept { return feature_dim_; }
    [[nodiscard]] Mlp& trunk() noexcept { return trunk_; }
    [[nodiscard]] std::vector<DenseLayer>& heads() noexcept { return heads_; }

private:
    std::size_t input_dim_;
    std::size_t feature_dim_;
    std::vector<std::size_t> hidden_;
    Mlp trunk_;
    std::vector<DenseLayer> heads_;
    std::mt19937_64 rng_;
};

/// Frozen deep copy of a model taken after `task` (1-based) was learned.
template <class Model>
class ModelSnapshot {
public:
    ModelSnapshot(const Model& model, int task) : model_(model), task_(task) { model_.drop_grads(); }

    [[nodiscard]] const Model& model() const noexcept { return model_; }
    [[nodiscard]] int task() const noexcept { return task_; }

private:
    Model model_;
    int task_;
};

template <class Model>
[[nodiscard]] ModelSnapshot<Model> snapshot(const Model& model, int task) {
    return ModelSnapshot<Model>(model, task);
}

/// Makes `model` parameter-identical to the snapshot. Throws ShapeError when
/// the architectures differ.
void restore(EmbeddingModel& model, const ModelSnapshot<EmbeddingModel>& snap);
void restore(SoftmaxModel& model, const ModelSnapshot<SoftmaxModel>& snap);

/// True when both parameter lists have identical shapes and values.
[[nodiscard]] bool parameters_equal(const std::vector<const nn::Tensor*>& a, const std::vector<const nn::Tensor*>& b);

// Parameter files: `<stem>.bin` holds every parameter as little-endian
// float64 in parameter_names() order; `<stem>.json` describes the
// architecture and the offset/shape of each tensor.
void save_model(const EmbeddingModel& model, const std::filesystem::path& stem);
void save_model(const SoftmaxModel& model, const std::filesystem::path& stem);
[[nodiscard]] EmbeddingModel load_embedding_model(const std::filesystem::path& stem);
[[nodiscard]] SoftmaxModel load_softmax_model(const std::filesystem::path& stem);

}  // namespace driftlab
