#include "driftlab/record.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "driftlab/error.hpp"

namespace driftlab {

using nlohmann::json;

AccuracyMatrix::AccuracyMatrix(std::size_t n_tasks) : cells_(n_tasks) {
    for (std::size_t k = 0; k < n_tasks; ++k) cells_[k].resize(k + 1);
}

void AccuracyMatrix::set(std::size_t k, std::size_t j, double value) {
    if (k < 1 || k > cells_.size() || j < 1 || j > k) {
        throw std::out_of_range("accuracy cell (" + std::to_string(k) + "," + std::to_string(j) + ") outside matrix");
    }
    if (!(value >= 0.0 && value <= 1.0)) throw std::invalid_argument("accuracy must lie in [0, 1]");
    cells_[k - 1][j - 1] = value;
}

std::optional<double> AccuracyMatrix::get(std::size_t k, std::size_t j) const {
    if (k < 1 || k > cells_.size() || j < 1 || j > k) return std::nullopt;
    return cells_[k - 1][j - 1];
}

double AccuracyMatrix::at(std::size_t k, std::size_t j) const {
    const auto v = get(k, j);
    if (!v) throw StateError("accuracy a(" + std::to_string(k) + "," + std::to_string(j) + ") not recorded");
    return *v;
}

bool AccuracyMatrix::row_complete(std::size_t k) const {
    if (k < 1 || k > cells_.size()) return false;
    return std::all_of(cells_[k - 1].begin(), cells_[k - 1].end(), [](const auto& c) { return c.has_value(); });
}

double avg_incremental_accuracy(const AccuracyMatrix& a, std::size_t k) {
    if (!a.row_complete(k)) throw StateError("avg_incremental_accuracy: row " + std::to_string(k) + " is incomplete");
    double s = 0.0;
    for (std::size_t j = 1; j <= k; ++j) s += a.at(k, j);
    return s / static_cast<double>(k);
}

double avg_forgetting(const AccuracyMatrix& a, std::size_t k) {
    if (k < 2) throw std::invalid_argument("avg_forgetting: needs k >= 2");
    double s = 0.0;
    for (std::size_t j = 1; j < k; ++j) {
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t l = j; l < k; ++l) worst = std::max(worst, a.at(l, j) - a.at(k, j));
        s += worst;
    }
    return s / static_cast<double>(k - 1);
}

std::size_t ConfusionMatrix::total() const {
    std::size_t t = 0;
    for (const auto& row : counts) {
        for (auto c : row) t += c;
    }
    return t;
}

double ConfusionMatrix::accuracy() const {
    std::size_t diag = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) diag += counts[i][i];
    const std::size_t t = total();
    return t ? static_cast<double>(diag) / static_cast<double>(t) : 0.0;
}

ConfusionMatrix build_confusion(std::size_t after_task, std::vector<int> classes, const std::vector<int>& truth,
                                const std::vector<int>& predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("confusion: truth/prediction count mismatch");
    ConfusionMatrix cm;
    cm.after_task = after_task;
    cm.classes = std::move(classes);
    std::map<int, std::size_t> pos;
    for (std::size_t i = 0; i < cm.classes.size(); ++i) pos[cm.classes[i]] = i;
    cm.counts.assign(cm.classes.size(), std::vector<std::size_t>(cm.classes.size(), 0));
    for (std::size_t i = 0; i < truth.size(); ++i) ++cm.counts.at(pos.at(truth[i])).at(pos.at(predicted[i]));
    return cm;
}

double avg_incremental_accuracy(const RunRecord& record, std::size_t k) {
    return avg_incremental_accuracy(record.accuracy, k);
}

double avg_forgetting(const RunRecord& record, std::size_t k) { return avg_forgetting(record.accuracy, k); }

const ConfusionMatrix& confusion_matrix(const RunRecord& record, std::size_t k) {
    for (const auto& cm : record.confusion) {
        if (cm.after_task == k) return cm;
    }
    throw std::out_of_range("no confusion matrix recorded after task " + std::to_string(k));
}

std::map<int, std::vector<DistanceTracePoint>> prototype_distance_trace(const RunRecord& record) {
    std::map<int, std::vector<DistanceTracePoint>> out;
    for (const auto& d : record.prototype_distances) {
        out[d.class_id].push_back({d.after_task, d.uncompensated, d.compensated});
    }
    return out;
}

DistanceTracePoint mean_old_class_distance(const RunRecord& record, std::size_t after_task) {
    DistanceTracePoint p{after_task, 0.0, 0.0};
    std::size_t n = 0;
    for (const auto& d : record.prototype_distances) {
        if (d.after_task != after_task || !record.prototypes.contains(d.class_id)) continue;
        if (static_cast<std::size_t>(record.prototypes.at(d.class_id).learned_at) >= after_task) continue;
        p.uncompensated += d.uncompensated;
        p.compensated += d.compensated;
        ++n;
    }
    if (n == 0) throw StateError("no old classes recorded after task " + std::to_string(after_task));
    p.uncompensated /= static_cast<double>(n);
    p.compensated /= static_cast<double>(n);
    return p;
}

// ---------------------------------------------------------------------------

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

std::string a_matrix_csv(const AccuracyMatrix& a) {
    std::string out = "k,j,accuracy\n";
    for (std::size_t k = 1; k <= a.tasks(); ++k) {
        for (std::size_t j = 1; j <= k; ++j) {
            if (auto v = a.get(k, j)) out += std::to_string(k) + "," + std::to_string(j) + "," + format_double(*v) + "\n";
        }
    }
    return out;
}

AccuracyMatrix parse_a_matrix_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("k,j,accuracy", 0) != 0) {
        throw ParseError("a_matrix.csv: missing header k,j,accuracy", 1);
    }
    struct Cell {
        std::size_t k, j;
        double v;
    };
    std::vector<Cell> cells;
    std::size_t n = 0, line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Cell c{};
        const char* p = line.data();
        const char* end = line.data() + line.size();
        auto r1 = std::from_chars(p, end, c.k);
        if (r1.ec != std::errc() || r1.ptr == end || *r1.ptr != ',') throw ParseError("a_matrix.csv: bad row", line_no);
        auto r2 = std::from_chars(r1.ptr + 1, end, c.j);
        if (r2.ec != std::errc() || r2.ptr == end || *r2.ptr != ',') throw ParseError("a_matrix.csv: bad row", line_no);
        auto r3 = std::from_chars(r2.ptr + 1, end, c.v);
        if (r3.ec != std::errc()) throw ParseError("a_matrix.csv: bad accuracy", line_no);
        n = std::max(n, c.k);
        cells.push_back(c);
    }
    AccuracyMatrix a(n);
    for (const auto& c : cells) a.set(c.k, c.j, c.v);
    return a;
}

AccuracyMatrix read_a_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_a_matrix_csv(ss.str());
}

namespace {

json book_to_json(const PrototypeBook& book) {
    json arr = json::array();
    for (const auto& [id, e] : book.entries()) {
        arr.push_back({{"class_id", id},
                       {"learned_at", e.learned_at},
                       {"vector", e.vector},
                       {"original", e.initial},
                       {"compensation", e.compensation}});
    }
    return arr;
}

}  // namespace

std::string prototype_book_json(const PrototypeBook& book) { return book_to_json(book).dump(2); }

PrototypeBook parse_prototype_book_json(const std::string& text) {
    const json doc = json::parse(text);
    const json& arr = doc.is_object() ? doc.at("prototypes") : doc;
    PrototypeBook book;
    for (const auto& e : arr) {
        const auto original = e.contains("original") ? e.at("original").get<Vec>() : e.at("vector").get<Vec>();
        book.add(e.at("class_id").get<int>(), original, e.at("learned_at").get<int>());
        auto& entry = book.at(e.at("class_id").get<int>());
        entry.vector = e.at("vector").get<Vec>();
        if (e.contains("compensation")) entry.compensation = e.at("compensation").get<Vec>();
    }
    return book;
}

std::string prototypes_json(const RunRecord& record) {
    json doc;
    doc["prototypes"] = book_to_json(record.prototypes);
    json transitions = json::array();
    for (const auto& t : record.transitions) {
        json classes = json::array();
        for (const auto& c : t.classes) {
            classes.push_back({{"class_id", c.class_id},
                               {"before", c.before},
                               {"drift", c.drift},
                               {"after", c.after},
                               {"true_mean", c.true_mean},
                               {"degenerate", c.degenerate}});
        }
        transitions.push_back({{"task", t.task}, {"field_norm", t.field_norm}, {"classes", classes}});
    }
    doc["transitions"] = transitions;
    return doc.dump(2);
}

std::string record_json(const RunRecord& r) {
    json doc;
    doc["label"] = r.label;
    doc["method"] = r.method;
    doc["sdc"] = r.sdc;
    doc["seed"] = r.seed;
    doc["embedding_dim"] = r.embedding_dim;
    doc["tasks"] = r.tasks();
    doc["task_classes"] = r.task_classes;
    json matrix = json::array();
    json a_k = json::array();
    json f_k = json::array();
    for (std::size_t k = 1; k <= r.tasks(); ++k) {
        json row = json::array();
        for (std::size_t j = 1; j <= k; ++j) {
            const auto v = r.accuracy.get(k, j);
            row.push_back(v ? json(*v) : json(nullptr));
        }
        matrix.push_back(row);
        a_k.push_back(r.accuracy.row_complete(k) ? json(avg_incremental_accuracy(r.accuracy, k)) : json(nullptr));
        bool forgetting_defined = k >= 2;
        for (std::size_t l = 1; l <= k && forgetting_defined; ++l) forgetting_defined = r.accuracy.row_complete(l);
        f_k.push_back(forgetting_defined ? json(avg_forgetting(r.accuracy, k)) : json(nullptr));
    }
    doc["accuracy"] = matrix;
    doc["avg_incremental_accuracy"] = a_k;
    doc["avg_forgetting"] = f_k;
    json dists = json::array();
    for (const auto& d : r.prototype_distances) {
        dists.push_back({{"after_task", d.after_task},
                         {"class_id", d.class_id},
                         {"uncompensated", d.uncompensated},
                         {"compensated", d.compensated}});
    }
    doc["prototype_distances"] = dists;
    json conf = json::array();
    for (const auto& cm : r.confusion) {
        conf.push_back({{"after_task", cm.after_task}, {"classes", cm.classes}, {"counts", cm.counts}});
    }
    doc["confusion"] = conf;
    json emb = json::array();
    for (const auto& e : r.embeddings) {
        json pts = json::array();
        for (std::size_t i = 0; i < e.points.rows(); ++i) pts.push_back({e.points.at(i, 0), e.points.at(i, 1)});
        emb.push_back({{"after_task", e.after_task}, {"labels", e.labels}, {"points", pts}});
    }
    doc["embeddings"] = emb;
    doc["wall_time_seconds"] = r.wall_time_seconds;
    return doc.dump(2);
}

void write_run(const RunRecord& record, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto write = [&](const char* name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << text;
        if (!text.empty() && text.back() != '\n') out << '\n';
    };
    write("a_matrix.csv", a_matrix_csv(record.accuracy));
    write("record.json", record_json(record));
    write("prototypes.json", prototypes_json(record));
}

}  // namespace driftlab
