#include "driftlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "driftlab/error.hpp"
#include "driftlab/log.hpp"
#include "driftlab/nn/ops.hpp"
#include "driftlab/nn/optim.hpp"

namespace driftlab {

using nn::Graph;
using nn::Tensor;
using nn::Var;

std::string to_string(Method method) {
    switch (method) {
        case Method::FT: return "FT";
        case Method::FTStar: return "FT*";
        case Method::EFT: return "E-FT";
        case Method::ELwF: return "E-LwF";
        case Method::EEWC: return "E-EWC";
        case Method::EMAS: return "E-MAS";
        case Method::EFix: return "E-Fix";
        case Method::EPreSubstitute: return "E-Pre-substitute";
        case Method::Joint: return "Joint";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::FT, Method::FTStar, Method::EFT, Method::ELwF, Method::EEWC, Method::EMAS, Method::EFix,
                     Method::EPreSubstitute, Method::Joint}) {
        if (to_string(m) == name) return m;
    }
    if (name == "FT-star") return Method::FTStar;
    throw std::invalid_argument("unknown method '" + name + "'");
}

bool is_embedding_method(Method method) { return method != Method::FT && method != Method::FTStar; }

double MethodConfig::effective_gamma() const {
    if (gamma) return *gamma;
    switch (method) {
        case Method::ELwF: return 1.0;
        case Method::EEWC: return 1e7;
        case Method::EMAS: return 1e6;
        default: return 0.0;
    }
}

std::string MethodConfig::display_label() const {
    if (!label.empty()) return label;
    return to_string(method) + (sdc ? "+SDC" : "");
}

void MethodConfig::validate() const {
    if (sdc && !is_embedding_method(method)) {
        throw ConfigError("sdc", "drift compensation only applies to embedding methods, not " + to_string(method));
    }
    if (sdc && method == Method::Joint) throw ConfigError("sdc", "Joint training has no task transitions to compensate");
    if (gamma && *gamma < 0.0) throw ConfigError("gamma", "must be nonnegative");
    if (!(sigma > 0.0)) throw ConfigError("sigma", "must be positive");
    if (margin < 0.0) throw ConfigError("margin", "must be nonnegative");
    if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
    if (epochs == 0) throw ConfigError("epochs", "must be positive");
    if (batch_size < 2) throw ConfigError("batch_size", "must be at least 2");
    if (embedding_dim == 0) throw ConfigError("embedding_dim", "must be positive");
}

// ---------------------------------------------------------------------------
// Task splitting

std::vector<std::vector<int>> split_classes(std::size_t n_classes, std::size_t n_tasks, double first_task_fraction,
                                            std::uint64_t seed, std::size_t holdout_classes, std::vector<int>* holdout) {
    if (n_tasks == 0) throw std::invalid_argument("split_tasks: need at least one task");
    if (holdout_classes >= n_classes) throw std::invalid_argument("split_tasks: holdout leaves no classes");
    std::vector<int> order(n_classes);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    if (holdout) holdout->assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout_classes));
    order.erase(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout_classes));
    const std::size_t k = order.size();
    if (n_tasks > k) {
        throw std::invalid_argument("split_tasks: " + std::to_string(n_tasks) + " tasks for " + std::to_string(k) +
                                    " classes");
    }
    std::vector<std::size_t> sizes;
    if (first_task_fraction > 0.0) {
        if (first_task_fraction >= 1.0) throw std::invalid_argument("split_tasks: first_task_fraction must be < 1");
        const auto first = static_cast<std::size_t>(std::llround(first_task_fraction * static_cast<double>(k)));
        if (first == 0 || first >= k) throw std::invalid_argument("split_tasks: first task would be empty or take every class");
        if (n_tasks < 2) throw std::invalid_argument("split_tasks: a large first task needs at least two tasks");
        const std::size_t rest = k - first;
        if (rest % (n_tasks - 1) != 0) {
            throw std::invalid_argument("split_tasks: " + std::to_string(rest) + " remaining classes do not divide evenly into " +
                                        std::to_string(n_tasks - 1) + " tasks");
        }
        sizes.push_back(first);
        sizes.insert(sizes.end(), n_tasks - 1, rest / (n_tasks - 1));
    } else {
        if (k % n_tasks != 0) {
            throw std::invalid_argument("split_tasks: " + std::to_string(k) + " classes do not divide evenly into " +
                                        std::to_string(n_tasks) + " tasks");
        }
        sizes.assign(n_tasks, k / n_tasks);
    }
    std::vector<std::vector<int>> groups;
    std::size_t at = 0;
    for (std::size_t s : sizes) {
        groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at), order.begin() + static_cast<std::ptrdiff_t>(at + s));
        at += s;
    }
    return groups;
}

TaskSequence split_tasks(const LabeledDataset& train, const LabeledDataset& test, std::size_t n_tasks,
                         double first_task_fraction, std::uint64_t seed, std::size_t holdout_classes) {
    const std::size_t n_classes = std::max(train.num_classes(), test.num_classes());
    if (train.dim() != test.dim()) throw ShapeError("split_tasks: train and test feature dimensions differ");
    std::vector<int> holdout;
    const auto groups = split_classes(n_classes, n_tasks, first_task_fraction, seed, holdout_classes, &holdout);
    TaskSequence seq;
    for (std::size_t t = 0; t < groups.size(); ++t) {
        Task task;
        task.index = t + 1;
        task.classes = groups[t];
        task.train = train.filter_classes(task.classes);
        task.test = test.filter_classes(task.classes);
        if (task.train.size() == 0) throw std::invalid_argument("split_tasks: task " + std::to_string(t + 1) + " has no training data");
        seq.class_order.insert(seq.class_order.end(), task.classes.begin(), task.classes.end());
        seq.tasks.push_back(std::move(task));
    }
    if (!holdout.empty()) seq.pretrain = train.filter_classes(holdout);
    return seq;
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                             idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
    }
    return batches;
}

bool uses_regularizer(Method m) { return m == Method::ELwF || m == Method::EEWC || m == Method::EMAS; }

TrainStats train_triplet(EmbeddingModel& model, const LabeledDataset& data, const MethodConfig& config,
                         std::size_t epochs, const ModelSnapshot<EmbeddingModel>* previous,
                         const ImportanceMap* importance, std::mt19937_64& rng) {
    if (data.size() == 0) throw TrainingError("train_task: task has no training data");
    const double gamma = config.effective_gamma();
    const bool regularize = previous && gamma > 0.0 && uses_regularizer(config.method);
    if (regularize && config.method != Method::ELwF && !importance) {
        throw StateError("train_task: " + to_string(config.method) + " needs an importance map after task 1");
    }
    nn::AdamOptions opts;
    opts.lr = config.lr;
    auto optimizer = nn::Optimizer::adam(model.parameters(), opts);
    TrainStats stats;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (const auto& chunk : epoch_batches(data.size(), config.batch_size, rng)) {
            const Tensor x = data.features.select_rows(chunk);
            std::vector<int> y;
            y.reserve(chunk.size());
            for (std::size_t i : chunk) y.push_back(data.labels[i]);

            Graph g;
            const Var xv = g.constant_view(x);
            const Var z = model.embed(g, xv);
            const TripletBatch triplets = mine_triplets(y, g.value(z), config.mining, config.margin, rng);
            if (triplets.empty()) {
                ++stats.skipped_batches;
                continue;
            }
            Var loss = triplet_loss(g, z, triplets);
            if (regularize) {
                const Var reg = config.method == Method::ELwF ? lwf_align_loss(g, z, *previous, xv)
                                                              : quadratic_penalty(g, model, *previous, *importance);
                loss = combined_loss(g, loss, reg, gamma);
            }
            optimizer.zero_grad();
            g.backward(loss);
            optimizer.step();
            loss_sum += g.value(loss).item();
            ++loss_count;
            ++stats.steps;
        }
        stats.mean_loss_last_epoch = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    }
    if (stats.steps == 0) throw TrainingError("train_task: no mini-batch contained a valid triplet");
    model.zero_grad();
    return stats;
}

}  // namespace

TrainStats train_task(EmbeddingModel& model, const Task& task, const MethodConfig& config,
                      const ModelSnapshot<EmbeddingModel>* previous, const ImportanceMap* importance,
                      std::mt19937_64& rng) {
    if (task.train.size() == 0) throw TrainingError("train_task: task has no training data");
    if (config.method == Method::EPreSubstitute) return {};
    if (config.method == Method::EFix && task.index > 1) return {};
    return train_triplet(model, task.train, config, config.epochs, previous, importance, rng);
}

TrainStats train_embedding(EmbeddingModel& model, const LabeledDataset& data, const MethodConfig& config,
                           std::size_t epochs, std::mt19937_64& rng) {
    return train_triplet(model, data, config, epochs, nullptr, nullptr, rng);
}

TrainStats train_softmax_task(SoftmaxModel& model, std::size_t head, const Tensor& features,
                              std::span<const int> local_labels, const MethodConfig& config, std::mt19937_64& rng) {
    if (local_labels.empty()) throw TrainingError("train_softmax_task: task has no training data");
    auto params = model.trunk_parameters();
    for (Tensor* p : model.head_parameters(head)) params.push_back(p);
    nn::AdamOptions opts;
    opts.lr = config.lr;
    auto optimizer = nn::Optimizer::adam(params, opts);
    TrainStats stats;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t n = 0;
        for (const auto& chunk : epoch_batches(local_labels.size(), config.batch_size, rng)) {
            const Tensor x = features.select_rows(chunk);
            std::vector<int> y;
            for (std::size_t i : chunk) y.push_back(local_labels[i]);
            Graph g;
            const Var feats = model.features(g, g.constant_view(x));
            const Var loss = cross_entropy_loss(g, model.head_logits(g, feats, head), y);
            optimizer.zero_grad();
            g.backward(loss);
            optimizer.step();
            loss_sum += g.value(loss).item();
            ++n;
            ++stats.steps;
        }
        stats.mean_loss_last_epoch = n ? loss_sum / static_cast<double>(n) : 0.0;
    }
    model.zero_grad();
    return stats;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct SeenData {
    LabeledDataset test;
    std::vector<std::size_t> task_of;  // per test sample, 1-based task index
    std::vector<int> classes;          // seen classes in learning order
};

SeenData seen_test_data(const TaskSequence& seq, std::size_t k) {
    SeenData out;
    std::vector<LabeledDataset> parts;
    for (std::size_t t = 0; t < k; ++t) {
        parts.push_back(seq.tasks[t].test);
        out.task_of.insert(out.task_of.end(), seq.tasks[t].test.size(), t + 1);
        out.classes.insert(out.classes.end(), seq.tasks[t].classes.begin(), seq.tasks[t].classes.end());
    }
    out.test = concat(parts);
    return out;
}

void fill_accuracy_row(RunRecord& rec, std::size_t k, const SeenData& seen, const std::vector<int>& predicted) {
    std::vector<std::size_t> correct(k + 1, 0), total(k + 1, 0);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        ++total[seen.task_of[i]];
        if (predicted[i] == seen.test.labels[i]) ++correct[seen.task_of[i]];
    }
    for (std::size_t j = 1; j <= k; ++j) {
        rec.accuracy.set(k, j, total[j] ? static_cast<double>(correct[j]) / static_cast<double>(total[j]) : 0.0);
    }
    rec.confusion.push_back(build_confusion(k, seen.classes, seen.test.labels, predicted));
}

void record_distances(RunRecord& rec, std::size_t k, const PrototypeBook& book, const Tensor& emb,
                      const std::vector<int>& labels) {
    const auto means = compute_prototypes(emb, labels);
    for (const auto& [cls, mean] : means) {
        if (!book.contains(cls)) continue;
        const auto& e = book.at(cls);
        rec.prototype_distances.push_back({k, cls, euclidean(e.original(), mean), euclidean(e.vector, mean)});
    }
}

void evaluate_embedding(RunRecord& rec, std::size_t k, const TaskSequence& seq, const EmbeddingModel& model,
                        const PrototypeBook& book, bool use_compensated) {
    const SeenData seen = seen_test_data(seq, k);
    if (seen.test.size() == 0) throw StateError("evaluation: no test data for the seen tasks");
    const Tensor emb = model.embed(seen.test.features);
    fill_accuracy_row(rec, k, seen, ncm_classify(emb, book, !use_compensated));
    record_distances(rec, k, book, emb, seen.test.labels);
    if (model.embedding_dim() == 2) rec.embeddings.push_back({k, seen.test.labels, emb});
}

RunRecord new_record(const MethodConfig& config, const TaskSequence& seq) {
    RunRecord rec;
    rec.label = config.display_label();
    rec.method = to_string(config.method);
    rec.sdc = config.sdc;
    rec.seed = config.seed;
    rec.embedding_dim = config.embedding_dim;
    rec.accuracy = AccuracyMatrix(seq.size());
    for (const auto& t : seq.tasks) rec.task_classes.push_back(t.classes);
    return rec;
}

void add_prototypes(PrototypeBook& book, const Tensor& emb, const Task& task) {
    const auto protos = compute_prototypes(emb, task.train.labels, task.classes);
    for (const auto& [cls, mu] : protos) book.add(cls, mu, static_cast<int>(task.index));
}

RunRecord run_embedding_sequence(const MethodConfig& config, const TaskSequence& seq) {
    RunRecord rec = new_record(config, seq);
    std::mt19937_64 rng(config.seed);
    EmbeddingModel::Options opts;
    opts.input_dim = seq.input_dim();
    opts.hidden = config.hidden;
    opts.embedding_dim = config.embedding_dim;
    opts.seed = config.seed;
    EmbeddingModel model(opts);

    if (config.method == Method::EPreSubstitute) {
        if (seq.pretrain.size() == 0) {
            throw ConfigError("holdout_classes", "E-Pre-substitute needs held-out pretraining classes");
        }
        train_embedding(model, seq.pretrain, config, config.pretrain_epochs ? config.pretrain_epochs : config.epochs, rng);
    }

    const KernelConfig kernel{config.sigma, 1e-12};
    PrototypeBook book;
    std::optional<ModelSnapshot<EmbeddingModel>> previous;
    std::optional<ImportanceMap> importance;
    std::size_t importance_count = 0;

    for (const Task& task : seq.tasks) {
        const std::size_t t = task.index;
        train_task(model, task, config, previous ? &*previous : nullptr, importance ? &*importance : nullptr, rng);

        add_prototypes(book, model.embed(task.train.features), task);

        if (previous) {
            // Compensation is tracked for every embedding method so that the
            // distance traces can always compare both prototype sets; only
            // config.sdc decides which set the classifier uses.
            const DriftField field = collect_drift(previous->model(), model, task.train.features, task.train.labels);
            const auto steps = compensate(book, field, kernel, static_cast<int>(t), config.renormalize_prototypes);
            TransitionRecord tr{t, field.total_norm(), {}};
            const SeenData seen = seen_test_data(seq, t);
            const auto means = compute_prototypes(model.embed(seen.test.features), seen.test.labels);
            for (const auto& s : steps) {
                const auto it = means.find(s.class_id);
                tr.classes.push_back({s.class_id, s.before, s.drift, s.after,
                                      it == means.end() ? Vec{} : it->second, s.degenerate});
            }
            rec.transitions.push_back(std::move(tr));
        }

        if ((config.method == Method::EEWC || config.method == Method::EMAS) && t < seq.size()) {
            ImportanceMap map = config.method == Method::EEWC
                                    ? estimate_fisher(model, task.train.features, task.train.labels,
                                                      FisherOptions{config.batch_size, config.margin, config.fisher_variant})
                                    : estimate_mas_importance(model, task.train.features);
            if (config.accumulation == ImportanceAccumulation::Recompute || !importance) {
                importance = std::move(map);
                importance_count = 1;
            } else {
                importance->accumulate(map, ++importance_count);
            }
        }

        previous.emplace(model, static_cast<int>(t));
        evaluate_embedding(rec, t, seq, model, book, config.sdc);
    }
    rec.prototypes = book;
    return rec;
}

RunRecord run_joint(const MethodConfig& config, const TaskSequence& seq) {
    RunRecord rec = new_record(config, seq);
    std::mt19937_64 rng(config.seed);
    EmbeddingModel::Options opts;
    opts.input_dim = seq.input_dim();
    opts.hidden = config.hidden;
    opts.embedding_dim = config.embedding_dim;
    opts.seed = config.seed;
    EmbeddingModel model(opts);

    std::vector<LabeledDataset> parts;
    for (const auto& t : seq.tasks) parts.push_back(t.train);
    const LabeledDataset all = concat(parts);
    train_embedding(model, all, config, config.epochs, rng);

    PrototypeBook book;
    for (const auto& task : seq.tasks) add_prototypes(book, model.embed(task.train.features), task);
    evaluate_embedding(rec, seq.size(), seq, model, book, false);
    rec.prototypes = book;
    return rec;
}

RunRecord run_softmax_sequence(const MethodConfig& config, const TaskSequence& seq) {
    RunRecord rec = new_record(config, seq);
    std::mt19937_64 rng(config.seed);
    SoftmaxModel::Options opts;
    opts.input_dim = seq.input_dim();
    opts.hidden = config.hidden;
    opts.feature_dim = config.embedding_dim;
    opts.seed = config.seed;
    SoftmaxModel model(opts);

    std::vector<int> concat_to_class;  // concatenated head output -> global class id
    PrototypeBook feature_book;        // FT*: NCM on penultimate features
    for (const Task& task : seq.tasks) {
        const std::size_t t = task.index;
        model.add_head(task.classes.size());
        std::map<int, int> local;
        for (std::size_t i = 0; i < task.classes.size(); ++i) local[task.classes[i]] = static_cast<int>(i);
        concat_to_class.insert(concat_to_class.end(), task.classes.begin(), task.classes.end());
        std::vector<int> y;
        for (int label : task.train.labels) y.push_back(local.at(label));
        train_softmax_task(model, t - 1, task.train.features, y, config, rng);

        const SeenData seen = seen_test_data(seq, t);
        std::vector<int> predicted;
        if (config.method == Method::FT) {
            for (std::size_t idx : model.predict_multihead(seen.test.features)) predicted.push_back(concat_to_class[idx]);
        } else {
            add_prototypes(feature_book, model.penultimate_features(task.train.features), task);
            const Tensor feats = model.penultimate_features(seen.test.features);
            predicted = ncm_classify(feats, feature_book);
            record_distances(rec, t, feature_book, feats, seen.test.labels);
        }
        fill_accuracy_row(rec, t, seen, predicted);
    }
    rec.prototypes = feature_book;
    return rec;
}

}  // namespace

RunRecord run_sequence(const MethodConfig& config, const TaskSequence& sequence) {
    config.validate();
    if (sequence.size() == 0) throw std::invalid_argument("run_sequence: empty task sequence");
    const auto start = std::chrono::steady_clock::now();
    RunRecord rec;
    if (config.method == Method::Joint) {
        rec = run_joint(config, sequence);
    } else if (is_embedding_method(config.method)) {
        rec = run_embedding_sequence(config, sequence);
    } else {
        rec = run_softmax_sequence(config, sequence);
    }
    rec.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

}  // namespace driftlab
