#include "driftlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "driftlab/error.hpp"
#include "driftlab/log.hpp"
#include "driftlab/nn/ops.hpp"

namespace driftlab {

using nn::Graph;
using nn::Shape;
using nn::Tensor;
using nn::Var;

Mining parse_mining(const std::string& name) {
    if (name == "random") return Mining::Random;
    if (name == "semihard") return Mining::Semihard;
    throw std::invalid_argument("unknown mining strategy '" + name + "' (expected random|semihard)");
}

std::string to_string(Mining mining) { return mining == Mining::Random ? "random" : "semihard"; }

namespace {

double sq_distance(const Tensor& e, std::size_t i, std::size_t j) {
    double s = 0.0;
    const auto a = e.row(i);
    const auto b = e.row(j);
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

}  // namespace

TripletBatch mine_triplets(std::span<const int> labels, const Tensor& embeddings, Mining strategy, double margin,
                           std::mt19937_64& rng) {
    const std::size_t n = labels.size();
    if (embeddings.rank() != 2 || embeddings.rows() != n) {
        throw ShapeError("mine_triplets: " + std::to_string(n) + " labels for embeddings of shape " +
                         nn::shape_string(embeddings.shape()));
    }
    TripletBatch batch;
    batch.margin = margin;

    std::vector<double> dist;
    if (strategy == Mining::Semihard) {
        dist.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = std::sqrt(sq_distance(embeddings, i, j));
        }
    }

    std::vector<std::size_t> negatives;
    for (std::size_t a = 0; a < n; ++a) {
        negatives.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (labels[j] != labels[a]) negatives.push_back(j);
        }
        if (negatives.empty()) continue;
        for (std::size_t p = 0; p < n; ++p) {
            if (p == a || labels[p] != labels[a]) continue;
            std::size_t chosen = negatives.front();
            if (strategy == Mining::Random) {
                std::uniform_int_distribution<std::size_t> pick(0, negatives.size() - 1);
                chosen = negatives[pick(rng)];
            } else {
                const double d_pos = dist[a * n + p];
                double best_semi = std::numeric_limits<double>::infinity();
                double best_hard = std::numeric_limits<double>::infinity();
                std::size_t semi = n, hard = n;
                for (std::size_t j : negatives) {
                    const double d = dist[a * n + j];
                    if (d > d_pos && d < best_semi) best_semi = d, semi = j;
                    if (d < best_hard) best_hard = d, hard = j;
                }
                chosen = semi < n ? semi : hard;
            }
            batch.triplets.push_back({a, p, chosen});
        }
    }
    return batch;
}

Var triplet_loss(Graph& g, Var embeddings, const TripletBatch& batch) {
    const Tensor& e = g.value(embeddings);
    if (batch.margin < 0.0) throw std::invalid_argument("triplet_loss: margin must be nonnegative");
    if (batch.empty()) {
        log::warn("triplet_loss: no valid triplets in batch; loss defined as 0");
        return g.constant(Tensor::scalar(0.0));
    }
    std::vector<std::size_t> a, p, n;
    a.reserve(batch.size());
    p.reserve(batch.size());
    n.reserve(batch.size());
    for (const Triplet& t : batch.triplets) {
        if (t.anchor >= e.rows() || t.positive >= e.rows() || t.negative >= e.rows()) {
            throw ShapeError("triplet_loss: triplet index outside batch of " + std::to_string(e.rows()));
        }
        a.push_back(t.anchor);
        p.push_back(t.positive);
        n.push_back(t.negative);
    }
    const Var za = nn::gather_rows(g, embeddings, a);
    const Var zp = nn::gather_rows(g, embeddings, p);
    const Var zn = nn::gather_rows(g, embeddings, n);
    const Var d_pos = nn::row_distance(g, za, zp);
    const Var d_neg = nn::row_distance(g, za, zn);
    const Var hinge = nn::relu(g, nn::add_scalar(g, nn::sub(g, d_pos, d_neg), batch.margin));
    return nn::mean(g, hinge);
}

Var cross_entropy_loss(Graph& g, Var logits, std::span<const int> labels) {
    return nn::softmax_cross_entropy(g, logits, labels);
}

Var lwf_align_loss(Graph& g, EmbeddingModel& model, const ModelSnapshot<EmbeddingModel>& previous, Var batch) {
    return lwf_align_loss(g, model.embed(g, batch), previous, batch);
}

Var lwf_align_loss(Graph& g, Var current_embeddings, const ModelSnapshot<EmbeddingModel>& previous, Var batch) {
    const Var z_prev = previous.model().embed(g, batch);
    if (g.value(z_prev).shape() != g.value(current_embeddings).shape()) {
        throw ShapeError("lwf_align_loss: snapshot embeddings " + nn::shape_string(g.value(z_prev).shape()) +
                         " vs current " + nn::shape_string(g.value(current_embeddings).shape()));
    }
    return nn::frobenius_norm(g, nn::sub(g, current_embeddings, z_prev));
}

void ImportanceMap::accumulate(const ImportanceMap& other, std::size_t count) {
    if (count == 0) throw std::invalid_argument("ImportanceMap::accumulate: count must be positive");
    if (weights.empty()) {
        weights = other.weights;
        kind = other.kind;
        return;
    }
    if (weights.size() != other.weights.size()) throw ShapeError("importance maps cover different parameter lists");
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i].shape() != other.weights[i].shape()) throw ShapeError("importance map shape mismatch");
        auto w = weights[i].data();
        const auto o = other.weights[i].data();
        for (std::size_t k = 0; k < w.size(); ++k) w[k] += (o[k] - w[k]) * inv;
    }
}

double ImportanceMap::total() const {
    double s = 0.0;
    for (const auto& w : weights) {
        for (double v : w.data()) s += v;
    }
    return s;
}

namespace {

void check_penalty_shapes(const std::vector<const Tensor*>& current, const std::vector<const Tensor*>& anchors,
                          const ImportanceMap& importance) {
    if (current.size() != anchors.size() || current.size() != importance.weights.size()) {
        throw ShapeError("quadratic_penalty: " + std::to_string(current.size()) + " parameters, " +
                         std::to_string(anchors.size()) + " snapshot tensors, " +
                         std::to_string(importance.weights.size()) + " importance tensors");
    }
    for (std::size_t i = 0; i < current.size(); ++i) {
        if (current[i]->shape() != anchors[i]->shape() || current[i]->shape() != importance.weights[i].shape()) {
            throw ShapeError("quadratic_penalty: shape mismatch at parameter " + std::to_string(i));
        }
    }
}

}  // namespace

Var quadratic_penalty(Graph& g, EmbeddingModel& model, const ModelSnapshot<EmbeddingModel>& previous,
                      const ImportanceMap& importance) {
    const auto anchors = previous.model().parameters();
    check_penalty_shapes(std::as_const(model).parameters(), anchors, importance);
    auto params = model.parameters();
    Var total{};
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Var term = nn::weighted_squared_distance(g, g.parameter(*params[i]), *anchors[i], importance.weights[i]);
        total = i == 0 ? term : nn::add(g, total, term);
    }
    return total;
}

double quadratic_penalty_value(const EmbeddingModel& model, const ModelSnapshot<EmbeddingModel>& previous,
                               const ImportanceMap& importance) {
    const auto params = model.parameters();
    const auto anchors = previous.model().parameters();
    check_penalty_shapes(params, anchors, importance);
    double total = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto w = importance.weights[i].data();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double d = (*params[i])[k] - (*anchors[i])[k];
            total += 0.5 * w[k] * d * d;
        }
    }
    return total;
}

std::vector<std::size_t> canonical_batch_order(const Tensor& features, std::span<const int> labels) {
    if (features.rank() != 2 || features.rows() != labels.size()) {
        throw ShapeError("importance estimation: feature/label count mismatch");
    }
    std::vector<std::size_t> idx(labels.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (labels[a] != labels[b]) return labels[a] < labels[b];
        const auto ra = features.row(a);
        const auto rb = features.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    // Deal classes round-robin so consecutive chunks mix labels.
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i : idx) by_class[labels[i]].push_back(i);
    std::vector<std::size_t> order;
    order.reserve(idx.size());
    for (std::size_t round = 0; order.size() < idx.size(); ++round) {
        for (auto& [label, members] : by_class) {
            if (round < members.size()) order.push_back(members[round]);
        }
    }
    return order;
}

namespace {

ImportanceMap zero_map(const EmbeddingModel& model, ImportanceKind kind) {
    ImportanceMap map;
    map.kind = kind;
    for (const Tensor* p : model.parameters()) map.weights.emplace_back(p->shape());
    return map;
}

/// Gradient of ||F(x)||^2 for one sample, left in the model's grad buffers.
void output_norm_gradient(EmbeddingModel& model, const Tensor& sample) {
    model.zero_grad();
    Graph g;
    const Var out = model.raw_output(g, g.constant_view(sample));
    g.backward(nn::sum(g, nn::row_squared_norm(g, out)));
}

}  // namespace

ImportanceMap estimate_fisher(EmbeddingModel& model, const Tensor& features, std::span<const int> labels,
                              const FisherOptions& options) {
    if (labels.empty()) throw std::invalid_argument("estimate_fisher: empty dataset");
    if (options.batch_size < 2) throw std::invalid_argument("estimate_fisher: batch_size must be at least 2");
    const auto order = canonical_batch_order(features, labels);
    ImportanceMap map = zero_map(model, ImportanceKind::Fisher);
    auto params = model.parameters();
    std::size_t contributions = 0;
    std::mt19937_64 unused_rng(0);

    auto add_squared_grads = [&] {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto w = map.weights[i].data();
            const auto gr = params[i]->grad();
            for (std::size_t k = 0; k < w.size(); ++k) w[k] += gr[k] * gr[k];
        }
        ++contributions;
    };

    if (options.variant == FisherVariant::OutputNorm) {
        for (std::size_t i : order) {
            output_norm_gradient(model, features.select_rows(std::span<const std::size_t>(&i, 1)));
            add_squared_grads();
        }
    } else {
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t stop = std::min(order.size(), start + options.batch_size);
            const std::span<const std::size_t> chunk(order.data() + start, stop - start);
            const Tensor x = features.select_rows(chunk);
            std::vector<int> y;
            for (std::size_t i : chunk) y.push_back(labels[i]);
            Graph g;
            const Var z = model.embed(g, g.constant_view(x));
            const TripletBatch triplets = mine_triplets(y, g.value(z), Mining::Semihard, options.margin, unused_rng);
            if (triplets.empty()) continue;
            model.zero_grad();
            g.backward(triplet_loss(g, z, triplets));
            add_squared_grads();
        }
    }
    model.zero_grad();
    if (contributions == 0) throw TrainingError("estimate_fisher: no mini-batch produced a valid triplet");
    const double inv = 1.0 / static_cast<double>(contributions);
    for (auto& w : map.weights) {
        for (double& v : w.data()) v *= inv;
    }
    return map;
}

ImportanceMap estimate_mas_importance(EmbeddingModel& model, const Tensor& features) {
    if (features.rank() != 2 || features.rows() == 0) throw std::invalid_argument("estimate_mas_importance: empty dataset");
    std::vector<int> no_labels(features.rows(), 0);
    const auto order = canonical_batch_order(features, no_labels);
    ImportanceMap map = zero_map(model, ImportanceKind::Mas);
    auto params = model.parameters();
    for (std::size_t i : order) {
        output_norm_gradient(model, features.select_rows(std::span<const std::size_t>(&i, 1)));
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto w = map.weights[p].data();
            const auto gr = params[p]->grad();
            for (std::size_t k = 0; k < w.size(); ++k) w[k] += std::abs(gr[k]);
        }
    }
    model.zero_grad();
    const double inv = 1.0 / static_cast<double>(features.rows());
    for (auto& w : map.weights) {
        for (double& v : w.data()) v *= inv;
    }
    return map;
}

Var combined_loss(Graph& g, Var metric_loss, Var regularizer_loss, double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("combined_loss: gamma must be nonnegative");
    if (gamma == 0.0) return metric_loss;
    return nn::add(g, metric_loss, nn::scale(g, regularizer_loss, gamma));
}

double combined_loss(double metric_loss, double regularizer_loss, double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("combined_loss: gamma must be nonnegative");
    return metric_loss + gamma * regularizer_loss;
}

}  // namespace driftlab
