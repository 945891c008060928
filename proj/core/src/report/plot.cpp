#include "driftlab/report/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "driftlab/log.hpp"
#include "driftlab/report/compare.hpp"

namespace driftlab::report {

namespace fs = std::filesystem;
using nlohmann::json;

PlotKind parse_plot_kind(const std::string& name) {
    if (name == "embedding") return PlotKind::Embedding;
    if (name == "curves") return PlotKind::Curves;
    if (name == "confusion") return PlotKind::Confusion;
    throw std::invalid_argument("unknown plot kind '" + name + "' (expected embedding, curves or confusion)");
}

std::string to_string(PlotKind kind) {
    switch (kind) {
        case PlotKind::Embedding: return "embedding";
        case PlotKind::Curves: return "curves";
        case PlotKind::Confusion: return "confusion";
    }
    return "?";
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

const char* color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string svg_open(double w, double h, const std::string& extra = {}) {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) +
           "\" height=\"" + num(h) + "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\"" + extra +
           ">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const std::string& attrs = {}) {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"12\"" + attrs + ">" +
           escape(s) + "</text>\n";
}

std::string star_points(double cx, double cy, double r) {
    std::string pts;
    for (int i = 0; i < 10; ++i) {
        const double rad = (i % 2 == 0) ? r : r * 0.45;
        const double a = -M_PI / 2 + i * M_PI / 5;
        if (i) pts += ' ';
        pts += num(cx + rad * std::cos(a)) + "," + num(cy + rad * std::sin(a));
    }
    return pts;
}

std::string triangle_points(double cx, double cy, double r) {
    return num(cx) + "," + num(cy - r) + " " + num(cx - r * 0.866) + "," + num(cy + r * 0.5) + " " +
           num(cx + r * 0.866) + "," + num(cy + r * 0.5);
}

}  // namespace

std::string embedding_svg(const EmbeddingPoints& points, const TransitionRecord& transition, const std::string& title,
                          PlotTransform* transform_out) {
    if (points.points.rank() != 2 || points.points.cols() != 2) {
        throw std::runtime_error("embedding plot needs 2-D embeddings");
    }
    std::set<int> old_classes;
    std::map<int, std::size_t> color_of;
    for (const auto& c : transition.classes) old_classes.insert(c.class_id);
    for (int c : old_classes) color_of[c] = color_of.size();

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    auto extend = [&](double x, double y) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    };
    for (std::size_t i = 0; i < points.labels.size(); ++i) {
        if (old_classes.contains(points.labels[i])) extend(points.points.at(i, 0), points.points.at(i, 1));
    }
    for (const auto& c : transition.classes) {
        if (c.before.size() != 2 || c.after.size() != 2 || c.drift.size() != 2) {
            throw std::runtime_error("embedding plot needs 2-D prototypes");
        }
        extend(c.before[0], c.before[1]);
        extend(c.after[0], c.after[1]);
        extend(c.before[0] + c.drift[0], c.before[1] + c.drift[1]);
        if (c.true_mean.size() == 2) extend(c.true_mean[0], c.true_mean[1]);
    }
    if (!std::isfinite(xmin)) {
        xmin = ymin = -1.0;
        xmax = ymax = 1.0;
    }
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-9}) * 1.1;
    const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
    const double plot = 500.0;
    PlotTransform tf{cx - span / 2, cy + span / 2, plot / span, 40.0, 40.0};
    if (transform_out) *transform_out = tf;

    const double width = plot + 200.0, height = plot + 80.0;
    std::string svg = svg_open(width, height,
                               " data-x0=\"" + format_double(tf.x0) + "\" data-y0=\"" + format_double(tf.y0) +
                                   "\" data-scale=\"" + format_double(tf.scale) + "\" data-left=\"" +
                                   format_double(tf.left) + "\" data-top=\"" + format_double(tf.top) + "\"");
    svg += "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" markerWidth=\"6\" "
           "markerHeight=\"6\" orient=\"auto-start-reverse\"><path d=\"M 0 0 L 10 5 L 0 10 z\" fill=\"black\"/>"
           "</marker></defs>\n";
    svg += text(40, 24, title, " font-size=\"14\"");
    svg += "<rect x=\"40\" y=\"40\" width=\"" + num(plot) + "\" height=\"" + num(plot) +
           "\" fill=\"none\" stroke=\"#999\"/>\n";

    svg += "<g class=\"points\">\n";
    for (std::size_t i = 0; i < points.labels.size(); ++i) {
        const int cls = points.labels[i];
        if (!old_classes.contains(cls)) continue;
        const auto [px, py] = tf.apply(points.points.at(i, 0), points.points.at(i, 1));
        svg += "<circle cx=\"" + num(px) + "\" cy=\"" + num(py) + "\" r=\"1.5\" fill=\"" + color(color_of[cls]) +
               "\" fill-opacity=\"0.35\"/>\n";
    }
    svg += "</g>\n";

    for (const auto& c : transition.classes) {
        const std::string col = color(color_of[c.class_id]);
        const std::string id = std::to_string(c.class_id);
        const auto [bx, by] = tf.apply(c.before[0], c.before[1]);
        const auto [ex, ey] = tf.apply(c.before[0] + c.drift[0], c.before[1] + c.drift[1]);
        const auto [ax, ay] = tf.apply(c.after[0], c.after[1]);
        svg += "<line class=\"drift-arrow\" data-class=\"" + id + "\" x1=\"" + num(bx) + "\" y1=\"" + num(by) +
               "\" x2=\"" + num(ex) + "\" y2=\"" + num(ey) +
               "\" stroke=\"black\" stroke-width=\"1.2\" stroke-dasharray=\"3,3\" marker-end=\"url(#arrow)\"/>\n";
        svg += "<circle class=\"prototype\" data-class=\"" + id + "\" cx=\"" + num(bx) + "\" cy=\"" + num(by) +
               "\" r=\"6\" fill=\"" + col + "\" stroke=\"black\"/>\n";
        svg += "<polygon class=\"compensated\" data-class=\"" + id + "\" points=\"" + triangle_points(ax, ay, 7) +
               "\" fill=\"" + col + "\" stroke=\"black\"/>\n";
        if (c.true_mean.size() == 2) {
            const auto [tx, ty] = tf.apply(c.true_mean[0], c.true_mean[1]);
            svg += "<polygon class=\"true-mean\" data-class=\"" + id + "\" points=\"" + star_points(tx, ty, 8) +
                   "\" fill=\"" + col + "\" stroke=\"black\"/>\n";
        }
    }

    double ly = 60;
    const double lx = plot + 60;
    svg += "<g class=\"legend\">\n";
    svg += "<circle cx=\"" + num(lx) + "\" cy=\"" + num(ly - 4) + "\" r=\"6\" fill=\"#ccc\" stroke=\"black\"/>\n" +
           text(lx + 12, ly, "saved prototype");
    ly += 22;
    svg += "<polygon points=\"" + triangle_points(lx, ly - 4, 7) + "\" fill=\"#ccc\" stroke=\"black\"/>\n" +
           text(lx + 12, ly, "compensated");
    ly += 22;
    svg += "<polygon points=\"" + star_points(lx, ly - 4, 8) + "\" fill=\"#ccc\" stroke=\"black\"/>\n" +
           text(lx + 12, ly, "true mean");
    ly += 22;
    svg += "<line x1=\"" + num(lx - 8) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(lx + 8) + "\" y2=\"" +
           num(ly - 4) + "\" stroke=\"black\" stroke-dasharray=\"3,3\"/>\n" + text(lx + 12, ly, "estimated drift");
    ly += 30;
    for (const auto& [cls, ci] : color_of) {
        svg += "<rect x=\"" + num(lx - 6) + "\" y=\"" + num(ly - 10) + "\" width=\"12\" height=\"12\" fill=\"" +
               color(ci) + "\"/>\n" + text(lx + 12, ly, "class " + std::to_string(cls));
        ly += 18;
    }
    svg += "</g>\n</svg>\n";
    return svg;
}

std::string curves_svg(const std::vector<CurveSeries>& series, const std::string& title) {
    std::size_t tasks = 0;
    for (const auto& s : series) tasks = std::max(tasks, s.values.size());
    const double left = 60, top = 40, w = 480, h = 320;
    const double width = left + w + 200, height = top + h + 60;
    auto px = [&](std::size_t k) { return tasks <= 1 ? left + w / 2 : left + w * static_cast<double>(k) / static_cast<double>(tasks - 1); };
    auto py = [&](double v) { return top + h * (1.0 - v); };

    std::string svg = svg_open(width, height);
    svg += text(left, 24, title, " font-size=\"14\"");
    svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
           "\" fill=\"none\" stroke=\"#999\"/>\n";
    for (int g = 0; g <= 10; g += 2) {
        const double y = py(g / 10.0);
        svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(y) + "\" x2=\"" + num(left + w) + "\" y2=\"" + num(y) +
               "\" stroke=\"#eee\"/>\n" + text(left - 34, y + 4, std::to_string(g * 10) + "%");
    }
    for (std::size_t k = 0; k < tasks; ++k) {
        svg += text(px(k) - 4, top + h + 18, std::to_string(k + 1));
    }
    svg += text(left + w / 2 - 30, top + h + 40, "task");
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        svg += "<g class=\"series\" data-label=\"" + escape(s.label) + "\">\n";
        std::string pts;
        for (std::size_t k = 0; k < s.values.size(); ++k) {
            if (std::isnan(s.values[k])) continue;
            if (!pts.empty()) pts += ' ';
            pts += num(px(k)) + "," + num(py(s.values[k]));
        }
        svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color(i) + "\" stroke-width=\"2\"/>\n";
        for (std::size_t k = 0; k < s.values.size(); ++k) {
            if (std::isnan(s.values[k])) continue;
            svg += "<circle cx=\"" + num(px(k)) + "\" cy=\"" + num(py(s.values[k])) + "\" r=\"3\" fill=\"" +
                   color(i) + "\"/>\n";
        }
        svg += "</g>\n";
        const double ly = top + 14 + 20.0 * static_cast<double>(i);
        svg += "<line x1=\"" + num(left + w + 20) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(left + w + 40) +
               "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color(i) + "\" stroke-width=\"2\"/>\n" +
               text(left + w + 46, ly, s.label);
    }
    svg += "</svg>\n";
    return svg;
}

std::string confusion_svg(const ConfusionMatrix& m, const std::string& title) {
    const std::size_t n = m.classes.size();
    const double cell = n ? std::min(40.0, 480.0 / static_cast<double>(n)) : 40.0;
    const double left = 70, top = 50;
    const double width = left + cell * static_cast<double>(n) + 40, height = top + cell * static_cast<double>(n) + 50;
    std::string svg = svg_open(width, height);
    svg += text(left, 24, title, " font-size=\"14\"");
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t row_total = 0;
        for (std::size_t c : m.counts[i]) row_total += c;
        for (std::size_t j = 0; j < n; ++j) {
            const double frac = row_total ? static_cast<double>(m.counts[i][j]) / static_cast<double>(row_total) : 0.0;
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - frac)));
            char fill[16];
            std::snprintf(fill, sizeof fill, "#%02x%02xff", shade, shade);
            svg += "<rect class=\"cell\" data-true=\"" + std::to_string(m.classes[i]) + "\" data-pred=\"" +
                   std::to_string(m.classes[j]) + "\" data-count=\"" + std::to_string(m.counts[i][j]) + "\" x=\"" +
                   num(left + cell * static_cast<double>(j)) + "\" y=\"" + num(top + cell * static_cast<double>(i)) +
                   "\" width=\"" + num(cell) + "\" height=\"" + num(cell) + "\" fill=\"" + fill + "\"/>\n";
        }
        svg += text(left - 24, top + cell * (static_cast<double>(i) + 0.6), std::to_string(m.classes[i]));
        svg += text(left + cell * (static_cast<double>(i) + 0.3), top + cell * static_cast<double>(n) + 16,
                    std::to_string(m.classes[i]));
    }
    svg += text(4, top - 8, "true \\ predicted");
    svg += "</svg>\n";
    return svg;
}

// ---------------------------------------------------------------------------

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::vector<fs::path> run_dirs(const fs::path& root) {
    if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + root.string());
    std::vector<fs::path> out;
    if (fs::exists(root / "record.json")) out.push_back(root);
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().filename() == "record.json" && e.path().parent_path() != root) {
            out.push_back(e.path().parent_path());
        }
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw std::runtime_error("no run results (record.json) below " + root.string());
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string run_title(const json& rec) {
    return rec.value("label", std::string("run")) + " (seed " + std::to_string(rec.value("seed", 0ULL)) + ")";
}

std::vector<fs::path> plot_embedding(const fs::path& run) {
    const json rec = read_json(run / "record.json");
    if (rec.value("embedding_dim", 0) != 2) {
        throw std::runtime_error(run.string() + ": embedding plots need embedding_dim = 2, got " +
                                 std::to_string(rec.value("embedding_dim", 0)));
    }
    const json protos = read_json(run / "prototypes.json");
    std::vector<fs::path> written;
    for (const auto& t : protos.at("transitions")) {
        TransitionRecord tr;
        tr.task = t.at("task").get<std::size_t>();
        tr.field_norm = t.at("field_norm").get<double>();
        for (const auto& c : t.at("classes")) {
            tr.classes.push_back({c.at("class_id").get<int>(), c.at("before").get<Vec>(), c.at("drift").get<Vec>(),
                                  c.at("after").get<Vec>(), c.at("true_mean").get<Vec>(),
                                  c.at("degenerate").get<bool>()});
        }
        EmbeddingPoints pts{tr.task, {}, {}};
        bool found = false;
        for (const auto& e : rec.at("embeddings")) {
            if (e.at("after_task").get<std::size_t>() != tr.task) continue;
            pts.labels = e.at("labels").get<std::vector<int>>();
            std::vector<double> flat;
            for (const auto& p : e.at("points")) {
                flat.push_back(p.at(0).get<double>());
                flat.push_back(p.at(1).get<double>());
            }
            pts.points = nn::Tensor({pts.labels.size(), 2}, std::move(flat));
            found = true;
        }
        if (!found) throw std::runtime_error(run.string() + ": no embeddings stored after task " + std::to_string(tr.task));
        const auto path = run / "plots" / ("embedding_task" + std::to_string(tr.task) + ".svg");
        write_file(path, embedding_svg(pts, tr,
                                       run_title(rec) + ": task " + std::to_string(tr.task - 1) + " to " +
                                           std::to_string(tr.task)));
        written.push_back(path);
    }
    if (written.empty()) throw std::runtime_error(run.string() + ": no task transitions recorded");
    return written;
}

std::vector<fs::path> plot_confusion(const fs::path& run) {
    const json rec = read_json(run / "record.json");
    std::vector<fs::path> written;
    for (const auto& c : rec.at("confusion")) {
        ConfusionMatrix m;
        m.after_task = c.at("after_task").get<std::size_t>();
        m.classes = c.at("classes").get<std::vector<int>>();
        m.counts = c.at("counts").get<std::vector<std::vector<std::size_t>>>();
        const auto path = run / "plots" / ("confusion_task" + std::to_string(m.after_task) + ".svg");
        write_file(path, confusion_svg(m, run_title(rec) + ": after task " + std::to_string(m.after_task)));
        written.push_back(path);
    }
    if (written.empty()) throw std::runtime_error(run.string() + ": no confusion matrices recorded");
    return written;
}

}  // namespace

std::vector<fs::path> plot_results(const fs::path& results_dir, PlotKind kind) {
    std::vector<fs::path> written;
    if (kind == PlotKind::Curves) {
        const auto table = build_compare_table(collect_runs({results_dir}));
        std::vector<CurveSeries> series;
        for (const auto& row : table.rows) series.push_back({row.label, row.mean});
        const auto path = results_dir / "curves.svg";
        write_file(path, curves_svg(series, "Average incremental accuracy"));
        written.push_back(path);
        return written;
    }
    // With several runs below the directory, runs that cannot be plotted
    // (e.g. 64-d embeddings or softmax baselines) are skipped with a warning.
    const auto runs = run_dirs(results_dir);
    std::string first_error;
    for (const auto& run : runs) {
        try {
            auto files = kind == PlotKind::Embedding ? plot_embedding(run) : plot_confusion(run);
            written.insert(written.end(), files.begin(), files.end());
        } catch (const std::runtime_error& e) {
            if (runs.size() == 1) throw;
            if (first_error.empty()) first_error = e.what();
            log::warn(std::string("skipping ") + e.what());
        }
    }
    if (written.empty()) throw std::runtime_error(first_error);
    return written;
}

}  // namespace driftlab::report
