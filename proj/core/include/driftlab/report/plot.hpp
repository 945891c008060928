#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "driftlab/record.hpp"

namespace driftlab::report {

enum class PlotKind { Embedding, Curves, Confusion };

[[nodiscard]] PlotKind parse_plot_kind(const std::string& name);
[[nodiscard]] std::string to_string(PlotKind kind);

/// Data -> pixel mapping of an embedding plot. Written into the SVG root as
/// data-x0, data-y0, data-scale, data-left, data-top so that coordinates can
/// be mapped back.
struct PlotTransform {
    double x0 = 0.0;  // data-space minimum x
    double y0 = 0.0;  // data-space maximum y (top edge)
    double scale = 1.0;
    double left = 0.0;
    double top = 0.0;

    [[nodiscard]] std::pair<double, double> apply(double x, double y) const {
        return {left + (x - x0) * scale, top + (y0 - y) * scale};
    }
    [[nodiscard]] std::pair<double, double> invert(double px, double py) const {
        return {x0 + (px - left) / scale, y0 - (py - top) / scale};
    }
};

/// Scatter of the old classes' test embeddings after `transition.task`, with
/// saved prototypes (circles), compensated prototypes (triangles), true means
/// (stars) and dotted arrows from each saved prototype along its estimated
/// drift. Requires 2-D points.
[[nodiscard]] std::string embedding_svg(const EmbeddingPoints& points, const TransitionRecord& transition,
                                        const std::string& title, PlotTransform* transform_out = nullptr);

struct CurveSeries {
    std::string label;
    std::vector<double> values;  // A_k per task as a fraction; NaN for gaps
};
[[nodiscard]] std::string curves_svg(const std::vector<CurveSeries>& series, const std::string& title);

[[nodiscard]] std::string confusion_svg(const ConfusionMatrix& matrix, const std::string& title);

/// Reads the run directories below `results_dir` and writes SVG files.
///  - embedding: <run>/plots/embedding_task<t>.svg per transition
///  - confusion: <run>/plots/confusion_task<k>.svg per task
///  - curves:    <results_dir>/curves.svg, one series per label (mean over seeds)
/// Returns the written paths. Throws std::runtime_error for missing data or
/// non-2-D embeddings.
std::vector<std::filesystem::path> plot_results(const std::filesystem::path& results_dir, PlotKind kind);

}  // namespace driftlab::report
