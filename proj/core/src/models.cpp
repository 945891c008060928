#include "driftlab/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "driftlab/error.hpp"
#include "driftlab/nn/ops.hpp"

namespace driftlab {

using nn::Graph;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

DenseLayer make_dense(std::size_t in, std::size_t out, bool relu, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer{Tensor(Shape{in, out}), Tensor(Shape{out}), relu};
    for (double& w : layer.weight.data()) w = dist(rng);
    return layer;
}

Var dense_forward(Graph& g, Var x, DenseLayer& layer, Binding binding) {
    const Var w = binding == Binding::Trainable ? g.parameter(layer.weight) : g.constant_view(layer.weight);
    const Var b = binding == Binding::Trainable ? g.parameter(layer.bias) : g.constant_view(layer.bias);
    const Var y = nn::affine(g, x, w, b);
    return layer.relu ? nn::relu(g, y) : y;
}

Var dense_forward(Graph& g, Var x, const DenseLayer& layer) {
    const Var y = nn::affine(g, x, g.constant_view(layer.weight), g.constant_view(layer.bias));
    return layer.relu ? nn::relu(g, y) : y;
}

void check_input(const Tensor& batch, std::size_t input_dim, const char* who) {
    if (batch.rank() != 2 || batch.cols() != input_dim) {
        throw ShapeError(std::string(who) + ": expected [n, " + std::to_string(input_dim) + "] input, got " +
                         nn::shape_string(batch.shape()));
    }
}

template <class Fn>
void for_each_layer_param(std::vector<DenseLayer>& layers, Fn&& fn) {
    for (auto& l : layers) {
        fn(l.weight);
        fn(l.bias);
    }
}

}  // namespace

std::string Architecture::describe() const {
    std::ostringstream out;
    out << kind << '(' << input_dim;
    for (auto h : hidden) out << "->" << h;
    out << "->" << output_dim;
    if (!heads.empty()) {
        out << " heads:";
        for (std::size_t i = 0; i < heads.size(); ++i) out << (i ? "," : "") << heads[i];
    }
    out << ')';
    return out.str();
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim, bool relu_on_output,
         std::mt19937_64& rng) {
    std::size_t in = input_dim;
    for (std::size_t width : hidden) {
        layers_.push_back(make_dense(in, width, true, rng));
        in = width;
    }
    layers_.push_back(make_dense(in, output_dim, relu_on_output, rng));
}

Var Mlp::forward(Graph& g, Var x, Binding binding) {
    for (auto& layer : layers_) x = dense_forward(g, x, layer, binding);
    return x;
}

Var Mlp::forward(Graph& g, Var x) const {
    for (const auto& layer : layers_) x = dense_forward(g, x, layer);
    return x;
}

std::size_t Mlp::input_dim() const { return layers_.front().weight.rows(); }
std::size_t Mlp::output_dim() const { return layers_.back().weight.cols(); }

// ---------------------------------------------------------------------------
// EmbeddingModel

EmbeddingModel::EmbeddingModel(const Options& options)
    : input_dim_(options.input_dim), embedding_dim_(options.embedding_dim), hidden_(options.hidden) {
    if (input_dim_ == 0 || embedding_dim_ == 0) throw ShapeError("embedding model dimensions must be positive");
    std::mt19937_64 rng(options.seed);
    net_ = Mlp(input_dim_, hidden_, embedding_dim_, false, rng);
}

Var EmbeddingModel::raw_output(Graph& g, Var batch, Binding binding) {
    check_input(g.value(batch), input_dim_, "EmbeddingModel");
    return net_.forward(g, batch, binding);
}

Var EmbeddingModel::raw_output(Graph& g, Var batch) const {
    check_input(g.value(batch), input_dim_, "EmbeddingModel");
    return net_.forward(g, batch);
}

Var EmbeddingModel::embed(Graph& g, Var batch, Binding binding) {
    return nn::l2_normalize(g, raw_output(g, batch, binding), 1);
}

Var EmbeddingModel::embed(Graph& g, Var batch) const { return nn::l2_normalize(g, raw_output(g, batch), 1); }

Tensor EmbeddingModel::embed(const Tensor& batch) const {
    Graph g;
    return g.value(embed(g, g.constant_view(batch)));
}

Tensor EmbeddingModel::raw_output(const Tensor& batch) const {
    Graph g;
    return g.value(raw_output(g, g.constant_view(batch)));
}

std::vector<Tensor*> EmbeddingModel::parameters() {
    std::vector<Tensor*> out;
    for_each_layer_param(net_.layers(), [&](Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<const Tensor*> EmbeddingModel::parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& l : net_.layers()) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<std::string> EmbeddingModel::parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < net_.layers().size(); ++i) {
        out.push_back("layers." + std::to_string(i) + ".weight");
        out.push_back("layers." + std::to_string(i) + ".bias");
    }
    return out;
}

void EmbeddingModel::zero_grad() {
    for (Tensor* p : parameters()) p->zero_grad();
}

void EmbeddingModel::drop_grads() {
    for (Tensor* p : parameters()) p->drop_grad();
}

Architecture EmbeddingModel::architecture() const {
    return Architecture{"embedding", input_dim_, hidden_, embedding_dim_, {}};
}

// ---------------------------------------------------------------------------
// SoftmaxModel

SoftmaxModel::SoftmaxModel(const Options& options)
    : input_dim_(options.input_dim), feature_dim_(options.feature_dim), hidden_(options.hidden), rng_(options.seed) {
    if (input_dim_ == 0 || feature_dim_ == 0) throw ShapeError("softmax model dimensions must be positive");
    trunk_ = Mlp(input_dim_, hidden_, feature_dim_, true, rng_);
}

void SoftmaxModel::add_head(std::size_t num_classes) {
    if (num_classes == 0) throw ShapeError("add_head: a head needs at least one class");
    heads_.push_back(make_dense(feature_dim_, num_classes, false, rng_));
}

std::size_t SoftmaxModel::head_width(std::size_t head) const { return heads_.at(head).weight.cols(); }

Var SoftmaxModel::features(Graph& g, Var batch, Binding binding) {
    check_input(g.value(batch), input_dim_, "SoftmaxModel");
    return trunk_.forward(g, batch, binding);
}

Var SoftmaxModel::head_logits(Graph& g, Var features, std::size_t head, Binding binding) {
    if (head >= heads_.size()) throw StateError("head " + std::to_string(head) + " does not exist");
    return dense_forward(g, features, heads_[head], binding);
}

Tensor SoftmaxModel::penultimate_features(const Tensor& batch) const {
    check_input(batch, input_dim_, "SoftmaxModel");
    Graph g;
    return g.value(trunk_.forward(g, g.constant_view(batch)));
}

Tensor SoftmaxModel::concatenated_probabilities(const Tensor& batch) const {
    if (heads_.empty()) throw StateError("predict_multihead: model has no heads");
    check_input(batch, input_dim_, "SoftmaxModel");
    Graph g;
    const Var feats = trunk_.forward(g, g.constant_view(batch));
    std::size_t total = 0;
    for (const auto& h : heads_) total += h.weight.cols();
    const std::size_t n = batch.rows();
    Tensor probs(Shape{n, total});
    std::size_t offset = 0;
    for (const auto& h : heads_) {
        const Tensor& logits = g.value(dense_forward(g, feats, h));
        const std::size_t k = logits.cols();
        for (std::size_t r = 0; r < n; ++r) {
            const auto row = logits.row(r);
            const double mx = *std::max_element(row.begin(), row.end());
            double z = 0.0;
            for (double v : row) z += std::exp(v - mx);
            for (std::size_t c = 0; c < k; ++c) probs.at(r, offset + c) = std::exp(row[c] - mx) / z;
        }
        offset += k;
    }
    return probs;
}

std::vector<std::size_t> SoftmaxModel::predict_multihead(const Tensor& batch) const {
    if (heads_.empty()) throw StateError("predict_multihead: model has no heads");
    check_input(batch, input_dim_, "SoftmaxModel");
    // Compared as log-probabilities: same argmax as the probabilities, but
    // saturated heads (p rounding to 1.0) do not tie.
    Graph g;
    const Var feats = trunk_.forward(g, g.constant_view(batch));
    const std::size_t n = batch.rows();
    std::vector<std::size_t> out(n, 0);
    std::vector<double> best(n, -std::numeric_limits<double>::infinity());
    std::size_t offset = 0;
    for (const auto& h : heads_) {
        const Tensor& logits = g.value(dense_forward(g, feats, h));
        const std::size_t k = logits.cols();
        for (std::size_t r = 0; r < n; ++r) {
            const auto row = logits.row(r);
            const auto top = std::max_element(row.begin(), row.end());
            double z = 0.0;
            for (double v : row) z += std::exp(v - *top);
            const double log_p = -std::log(z);
            if (log_p > best[r]) {
                best[r] = log_p;
                out[r] = offset + static_cast<std::size_t>(top - row.begin());
            }
        }
        offset += k;
    }
    return out;
}

std::vector<Tensor*> SoftmaxModel::parameters() {
    std::vector<Tensor*> out = trunk_parameters();
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        auto hp = head_parameters(h);
        out.insert(out.end(), hp.begin(), hp.end());
    }
    return out;
}

std::vector<const Tensor*> SoftmaxModel::parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& l : trunk_.layers()) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    for (const auto& l : heads_) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<std::string> SoftmaxModel::parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < trunk_.layers().size(); ++i) {
        out.push_back("trunk." + std::to_string(i) + ".weight");
        out.push_back("trunk." + std::to_string(i) + ".bias");
    }
    for (std::size_t i = 0; i < heads_.size(); ++i) {
        out.push_back("heads." + std::to_string(i) + ".weight");
        out.push_back("heads." + std::to_string(i) + ".bias");
    }
    return out;
}

std::vector<Tensor*> SoftmaxModel::trunk_parameters() {
    std::vector<Tensor*> out;
    for_each_layer_param(trunk_.layers(), [&](Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<Tensor*> SoftmaxModel::head_parameters(std::size_t head) {
    auto& h = heads_.at(head);
    return {&h.weight, &h.bias};
}

void SoftmaxModel::zero_grad() {
    for (Tensor* p : parameters()) p->zero_grad();
}

void SoftmaxModel::drop_grads() {
    for (Tensor* p : parameters()) p->drop_grad();
}

Architecture SoftmaxModel::architecture() const {
    std::vector<std::size_t> widths;
    for (const auto& h : heads_) widths.push_back(h.weight.cols());
    return Architecture{"softmax", input_dim_, hidden_, feature_dim_, widths};
}

// ---------------------------------------------------------------------------
// Snapshots

namespace {

template <class Model>
void restore_impl(Model& model, const ModelSnapshot<Model>& snap) {
    if (!(model.architecture() == snap.model().architecture())) {
        throw ShapeError("restore: architecture " + model.architecture().describe() + " differs from snapshot " +
                         snap.model().architecture().describe());
    }
    auto dst = model.parameters();
    auto src = snap.model().parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        std::copy(src[i]->data().begin(), src[i]->data().end(), dst[i]->data().begin());
        dst[i]->zero_grad();
    }
}

}  // namespace

void restore(EmbeddingModel& model, const ModelSnapshot<EmbeddingModel>& snap) { restore_impl(model, snap); }
void restore(SoftmaxModel& model, const ModelSnapshot<SoftmaxModel>& snap) { restore_impl(model, snap); }

bool parameters_equal(const std::vector<const Tensor*>& a, const std::vector<const Tensor*>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i]->same_values(*b[i])) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using nlohmann::json;

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
    return std::filesystem::path(stem.string() + suffix);
}

void write_le_doubles(std::ofstream& out, std::span<const double> values) {
    std::vector<unsigned char> buf(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) buf[i * 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_le_doubles(std::span<const unsigned char> bytes, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[i * 8 + static_cast<std::size_t>(b)]} << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
}

template <class Model>
void save_impl(const Model& model, const std::filesystem::path& stem) {
    const Architecture arch = model.architecture();
    const auto params = model.parameters();
    const auto names = model.parameter_names();
    json meta;
    meta["format"] = "driftlab-params-v1";
    meta["kind"] = arch.kind;
    meta["input_dim"] = arch.input_dim;
    meta["hidden"] = arch.hidden;
    meta["output_dim"] = arch.output_dim;
    meta["heads"] = arch.heads;
    meta["dtype"] = "float64-le";
    json entries = json::array();
    std::size_t offset = 0;
    std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + with_suffix(stem, ".bin").string());
    for (std::size_t i = 0; i < params.size(); ++i) {
        entries.push_back({{"name", names[i]}, {"shape", params[i]->shape()}, {"offset", offset}});
        write_le_doubles(bin, params[i]->data());
        offset += params[i]->size();
    }
    meta["parameters"] = entries;
    meta["count"] = offset;
    std::ofstream(with_suffix(stem, ".json")) << meta.dump(2) << '\n';
}

json read_meta(const std::filesystem::path& stem, const std::string& kind) {
    std::ifstream in(with_suffix(stem, ".json"));
    if (!in) throw std::runtime_error("cannot read " + with_suffix(stem, ".json").string());
    json meta = json::parse(in);
    if (meta.value("kind", "") != kind) {
        throw ShapeError("parameter file describes a '" + meta.value("kind", "") + "' model, expected '" + kind + "'");
    }
    return meta;
}

template <class Model>
void load_values(Model& model, const std::filesystem::path& stem, const json& meta) {
    std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    auto params = model.parameters();
    const auto& entries = meta.at("parameters");
    if (entries.size() != params.size()) throw ShapeError("parameter count mismatch in " + stem.string());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto shape = entries[i].at("shape").get<Shape>();
        const auto offset = entries[i].at("offset").get<std::size_t>();
        if (shape != params[i]->shape()) throw ShapeError("shape mismatch for " + entries[i].at("name").get<std::string>());
        if ((offset + params[i]->size()) * 8 > bytes.size()) {
            throw ParseError("parameter file truncated at byte " + std::to_string(bytes.size()), bytes.size());
        }
        read_le_doubles(std::span<const unsigned char>(bytes).subspan(offset * 8), params[i]->data());
    }
}

}  // namespace

void save_model(const EmbeddingModel& model, const std::filesystem::path& stem) { save_impl(model, stem); }
void save_model(const SoftmaxModel& model, const std::filesystem::path& stem) { save_impl(model, stem); }

EmbeddingModel load_embedding_model(const std::filesystem::path& stem) {
    const json meta = read_meta(stem, "embedding");
    EmbeddingModel::Options opts;
    opts.input_dim = meta.at("input_dim").get<std::size_t>();
    opts.hidden = meta.at("hidden").get<std::vector<std::size_t>>();
    opts.embedding_dim = meta.at("output_dim").get<std::size_t>();
    EmbeddingModel model(opts);
    load_values(model, stem, meta);
    return model;
}

SoftmaxModel load_softmax_model(const std::filesystem::path& stem) {
    const json meta = read_meta(stem, "softmax");
    SoftmaxModel::Options opts;
    opts.input_dim = meta.at("input_dim").get<std::size_t>();
    opts.hidden = meta.at("hidden").get<std::vector<std::size_t>>();
    opts.feature_dim = meta.at("output_dim").get<std::size_t>();
    SoftmaxModel model(opts);
    for (auto w : meta.at("heads").get<std::vector<std::size_t>>()) model.add_head(w);
    load_values(model, stem, meta);
    return model;
}

}  // namespace driftlab
