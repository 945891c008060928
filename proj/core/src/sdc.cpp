#include "driftlab/sdc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "driftlab/error.hpp"
#include "driftlab/log.hpp"

namespace driftlab {

using nn::Shape;
using nn::Tensor;

double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::sqrt(s);
}

void PrototypeBook::add(int class_id, Vec prototype, int learned_at) {
    if (!entries_.empty() && prototype.size() != dim()) {
        throw ShapeError("prototype of class " + std::to_string(class_id) + " has dimension " +
                         std::to_string(prototype.size()) + ", book uses " + std::to_string(dim()));
    }
    PrototypeEntry e;
    e.compensation.assign(prototype.size(), 0.0);
    e.initial = prototype;
    e.vector = std::move(prototype);
    e.learned_at = learned_at;
    entries_[class_id] = std::move(e);
}

const PrototypeEntry& PrototypeBook::at(int class_id) const {
    auto it = entries_.find(class_id);
    if (it == entries_.end()) throw std::out_of_range("no prototype for class " + std::to_string(class_id));
    return it->second;
}

PrototypeEntry& PrototypeBook::at(int class_id) {
    auto it = entries_.find(class_id);
    if (it == entries_.end()) throw std::out_of_range("no prototype for class " + std::to_string(class_id));
    return it->second;
}

std::size_t PrototypeBook::dim() const { return entries_.empty() ? 0 : entries_.begin()->second.vector.size(); }

std::vector<int> PrototypeBook::class_ids() const {
    std::vector<int> ids;
    for (const auto& [id, e] : entries_) ids.push_back(id);
    return ids;
}

PrototypeBook PrototypeBook::uncompensated() const {
    PrototypeBook out;
    for (const auto& [id, e] : entries_) out.add(id, e.original(), e.learned_at);
    return out;
}

double DriftField::total_norm() const {
    double s = 0.0;
    for (double v : displacements.data()) s += v * v;
    return std::sqrt(s);
}

std::map<int, Vec> compute_prototypes(const Tensor& embeddings, std::span<const int> labels,
                                      std::span<const int> expected_classes) {
    if (embeddings.rank() != 2 || embeddings.rows() != labels.size()) {
        throw ShapeError("compute_prototypes: " + std::to_string(labels.size()) + " labels for embeddings " +
                         nn::shape_string(embeddings.shape()));
    }
    const std::size_t d = embeddings.cols();
    std::map<int, Vec> sums;
    std::map<int, std::size_t> counts;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& s = sums[labels[i]];
        if (s.empty()) s.assign(d, 0.0);
        const auto row = embeddings.row(i);
        for (std::size_t k = 0; k < d; ++k) s[k] += row[k];
        ++counts[labels[i]];
    }
    for (int c : expected_classes) {
        if (!counts.contains(c)) {
            throw std::invalid_argument("compute_prototypes: class " + std::to_string(c) + " has no samples");
        }
    }
    for (auto& [c, s] : sums) {
        const double inv = 1.0 / static_cast<double>(counts[c]);
        for (double& v : s) v *= inv;
    }
    return sums;
}

std::vector<int> ncm_classify(const Tensor& embeddings, const PrototypeBook& book, bool use_original) {
    if (book.empty()) throw StateError("ncm_classify: prototype book is empty");
    if (embeddings.rank() != 2 || embeddings.cols() != book.dim()) {
        throw ShapeError("ncm_classify: embeddings " + nn::shape_string(embeddings.shape()) +
                         " do not match prototype dimension " + std::to_string(book.dim()));
    }
    std::vector<int> ids;
    std::vector<Vec> protos;
    for (const auto& [id, e] : book.entries()) {
        ids.push_back(id);
        protos.push_back(use_original ? e.original() : e.vector);
    }
    std::vector<int> out(embeddings.rows());
    for (std::size_t r = 0; r < embeddings.rows(); ++r) {
        const auto z = embeddings.row(r);
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t c = 0; c < protos.size(); ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < z.size(); ++k) {
                const double diff = z[k] - protos[c][k];
                s += diff * diff;
            }
            if (s < best) best = s, arg = c;  // ids ascend, so strict < keeps the lowest id on ties
        }
        out[r] = ids[arg];
    }
    return out;
}

DriftField make_drift_field(Tensor before, const Tensor& after, std::vector<int> labels) {
    if (before.shape() != after.shape() || before.rank() != 2) {
        throw ShapeError("drift field: embeddings before " + nn::shape_string(before.shape()) + " and after " +
                         nn::shape_string(after.shape()) + " differ");
    }
    if (!labels.empty() && labels.size() != before.rows()) throw ShapeError("drift field: label count mismatch");
    DriftField field;
    field.displacements = after;
    for (std::size_t i = 0; i < before.size(); ++i) field.displacements[i] -= before[i];
    field.positions = std::move(before);
    field.labels = std::move(labels);
    return field;
}

DriftField collect_drift(const EmbeddingModel& before, const EmbeddingModel& after, const Tensor& task_features,
                         std::span<const int> task_labels) {
    if (!(before.architecture() == after.architecture())) {
        throw ShapeError("collect_drift: model architectures differ (" + before.architecture().describe() + " vs " +
                         after.architecture().describe() + ")");
    }
    return make_drift_field(before.embed(task_features), after.embed(task_features),
                            std::vector<int>(task_labels.begin(), task_labels.end()));
}

DriftEstimate interpolate_drift(const DriftField& field, std::span<const double> query, const KernelConfig& cfg) {
    if (field.size() == 0) throw std::invalid_argument("interpolate_drift: empty drift field");
    if (!(cfg.sigma > 0.0) || !(cfg.weight_floor > 0.0)) {
        throw std::invalid_argument("interpolate_drift: sigma and weight_floor must be positive");
    }
    const std::size_t n = field.size(), d = field.positions.cols();
    if (query.size() != d) throw ShapeError("interpolate_drift: query dimension differs from field dimension");

    // Exponents are shifted by the smallest squared distance before exp() so
    // the ratio stays finite for tiny sigma; the raw mass is tracked in logs.
    std::vector<double> sq(n);
    double min_sq = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const auto z = field.positions.row(i);
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = z[k] - query[k];
            s += diff * diff;
        }
        sq[i] = s;
        min_sq = std::min(min_sq, s);
    }
    const double inv_two_var = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    DriftEstimate est;
    est.drift.assign(d, 0.0);
    double shifted_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = std::exp(-(sq[i] - min_sq) * inv_two_var);
        shifted_mass += w;
        const auto delta = field.displacements.row(i);
        for (std::size_t k = 0; k < d; ++k) est.drift[k] += w * delta[k];
    }
    const double log_mass = -min_sq * inv_two_var + std::log(shifted_mass);
    est.weight_mass = std::exp(log_mass);
    if (log_mass < std::log(cfg.weight_floor)) {
        est.degenerate = true;
        std::fill(est.drift.begin(), est.drift.end(), 0.0);
        return est;
    }
    for (double& v : est.drift) v /= shifted_mass;
    return est;
}

std::vector<CompensationStep> compensate(PrototypeBook& book, const DriftField& field, const KernelConfig& cfg,
                                         int current_task, bool renormalize) {
    std::vector<CompensationStep> steps;
    for (int id : book.class_ids()) {
        PrototypeEntry& e = book.at(id);
        if (e.learned_at >= current_task) continue;
        CompensationStep step{id, e.vector, {}, {}, false};
        const DriftEstimate est = interpolate_drift(field, e.vector, cfg);
        if (est.degenerate) {
            log::warn("compensate: kernel mass below floor for class " + std::to_string(id) +
                      "; prototype left in place");
        }
        Vec moved = e.vector;
        for (std::size_t k = 0; k < moved.size(); ++k) moved[k] += est.drift[k];
        if (renormalize) {
            double norm = 0.0;
            for (double v : moved) norm += v * v;
            norm = std::sqrt(norm);
            if (norm > 0.0) {
                for (double& v : moved) v /= norm;
            }
        }
        for (std::size_t k = 0; k < moved.size(); ++k) e.compensation[k] += moved[k] - e.vector[k];
        step.drift = est.drift;
        step.degenerate = est.degenerate;
        e.vector = moved;
        step.after = moved;
        steps.push_back(std::move(step));
    }
    return steps;
}

std::map<int, Vec> true_drift(const PrototypeBook& old_book, const Tensor& new_embeddings,
                              std::span<const int> labels) {
    const auto means = compute_prototypes(new_embeddings, labels);
    std::map<int, Vec> out;
    for (const auto& [id, mean] : means) {
        const Vec& base = old_book.at(id).original();
        Vec d(mean.size());
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = mean[k] - base[k];
        out[id] = std::move(d);
    }
    return out;
}

}  // namespace driftlab
