#include "driftlab/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "driftlab/error.hpp"

namespace driftlab {

using nn::Shape;
using nn::Tensor;

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.features = features.select_rows(indices);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.labels.push_back(labels.at(i));
    out.class_names = class_names;
    return out;
}

LabeledDataset LabeledDataset::filter_classes(std::span<const int> classes) const {
    const std::set<int> keep(classes.begin(), classes.end());
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (keep.contains(labels[i])) idx.push_back(i);
    }
    return subset(idx);
}

std::vector<std::size_t> LabeledDataset::indices_of(int label) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) idx.push_back(i);
    }
    return idx;
}

LabeledDataset concat(std::span<const LabeledDataset> parts) {
    if (parts.empty()) return {};
    const std::size_t d = parts.front().dim();
    std::size_t n = 0;
    for (const auto& p : parts) {
        if (p.dim() != d) throw ShapeError("concat: datasets have different feature dimensions");
        n += p.size();
    }
    LabeledDataset out;
    out.features = Tensor(Shape{n, d});
    out.class_names = parts.front().class_names;
    std::size_t row = 0;
    for (const auto& p : parts) {
        std::copy(p.features.data().begin(), p.features.data().end(), out.features.data().begin() + static_cast<std::ptrdiff_t>(row * d));
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
        row += p.size();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic clusters

std::vector<std::vector<double>> gaussian_cluster_centers(std::size_t n_classes, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> centers(n_classes, std::vector<double>(dim));
    for (auto& c : centers) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& v : c) {
                v = normal(rng);
                norm += v * v;
            }
            norm = std::sqrt(norm);
        } while (norm < 1e-12);
        for (double& v : c) v /= norm;
    }
    return centers;
}

LabeledDataset gen_gaussian_clusters(std::size_t n_classes, std::size_t per_class, std::size_t dim, double spread,
                                     std::uint64_t seed) {
    if (n_classes == 0 || per_class == 0 || dim == 0) {
        throw std::invalid_argument("gen_gaussian_clusters: counts must be positive");
    }
    if (spread < 0.0) throw std::invalid_argument("gen_gaussian_clusters: spread must be nonnegative");
    const auto centers = gaussian_cluster_centers(n_classes, dim, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    LabeledDataset out;
    out.features = Tensor(Shape{n_classes * per_class, dim});
    for (std::size_t c = 0; c < n_classes; ++c) {
        out.class_names.push_back(std::to_string(c));
        for (std::size_t i = 0; i < per_class; ++i) {
            auto row = out.features.row(c * per_class + i);
            for (std::size_t k = 0; k < dim; ++k) row[k] = centers[c][k] + spread * normal(rng);
            out.labels.push_back(static_cast<int>(c));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::vector<unsigned char> bytes;
    unsigned char buf[1 << 16];
    int got = 0;
    while ((got = gzread(f, buf, sizeof(buf))) > 0) bytes.insert(bytes.end(), buf, buf + got);
    const bool failed = got < 0;
    gzclose(f);
    if (failed) throw ParseError("decompression failed in " + path.string() + " after byte " + std::to_string(bytes.size()), bytes.size());
    return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t offset, const std::filesystem::path& path) {
    if (offset + 4 > b.size()) {
        throw ParseError(path.string() + ": truncated header at byte offset " + std::to_string(b.size()) +
                             " (needed 4 bytes at offset " + std::to_string(offset) + ")",
                         b.size());
    }
    return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) | (std::uint32_t{b[offset + 2]} << 8) |
           std::uint32_t{b[offset + 3]};
}

void check_magic(std::uint32_t magic, std::uint32_t expected, const std::filesystem::path& path) {
    if (magic != expected) {
        std::ostringstream msg;
        msg << path.string() << ": bad IDX magic 0x" << std::hex << magic << " at byte offset 0 (expected 0x"
            << expected << ')';
        throw ParseError(msg.str(), 0);
    }
}

void check_payload(const std::vector<unsigned char>& b, std::size_t header, std::size_t need,
                   const std::filesystem::path& path) {
    if (b.size() < header + need) {
        throw ParseError(path.string() + ": truncated at byte offset " + std::to_string(b.size()) + " (expected " +
                             std::to_string(header + need) + " bytes)",
                         b.size());
    }
}

}  // namespace

LabeledDataset read_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = read_maybe_gzip(images_path);
    const auto lab = read_maybe_gzip(labels_path);

    check_magic(be32(img, 0, images_path), 0x00000803u, images_path);
    const std::size_t n_img = be32(img, 4, images_path);
    const std::size_t rows = be32(img, 8, images_path);
    const std::size_t cols = be32(img, 12, images_path);
    check_payload(img, 16, n_img * rows * cols, images_path);

    check_magic(be32(lab, 0, labels_path), 0x00000801u, labels_path);
    const std::size_t n_lab = be32(lab, 4, labels_path);
    check_payload(lab, 8, n_lab, labels_path);
    if (n_img != n_lab) {
        throw ParseError("IDX count mismatch at byte offset 4: " + std::to_string(n_img) + " images vs " +
                             std::to_string(n_lab) + " labels",
                         4);
    }

    LabeledDataset out;
    const std::size_t d = rows * cols;
    out.features = Tensor(Shape{n_img, d});
    auto px = out.features.data();
    for (std::size_t i = 0; i < n_img * d; ++i) px[i] = static_cast<double>(img[16 + i]) / 255.0;

    std::set<int> raw;
    for (std::size_t i = 0; i < n_lab; ++i) raw.insert(lab[8 + i]);
    std::map<int, int> remap;
    for (int r : raw) {
        remap[r] = static_cast<int>(out.class_names.size());
        out.class_names.push_back(std::to_string(r));
    }
    out.labels.reserve(n_lab);
    for (std::size_t i = 0; i < n_lab; ++i) out.labels.push_back(remap[lab[8 + i]]);
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

LabeledDataset read_csv_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw ParseError(path.string() + ":1: empty file", 1);
    const auto header = split_commas(trim(line));
    if (trim(header[0]) != "label" || header.size() < 2) {
        throw ParseError(path.string() + ":1: header must be label,f0,f1,...", 1);
    }
    const std::size_t d = header.size() - 1;

    LabeledDataset out;
    std::vector<double> values;
    std::map<std::string, int, std::less<>> remap;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty()) continue;
        const auto cells = split_commas(t);
        if (cells.size() != header.size()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()),
                             line_no);
        }
        const std::string label(trim(cells[0]));
        auto it = remap.find(label);
        if (it == remap.end()) {
            it = remap.emplace(label, static_cast<int>(out.class_names.size())).first;
            out.class_names.push_back(label);
        }
        out.labels.push_back(it->second);
        for (std::size_t k = 1; k < cells.size(); ++k) {
            const auto cell = trim(cells[k]);
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                                     std::string(cell) + "' in column " + std::to_string(k + 1),
                                 line_no);
            }
            values.push_back(v);
        }
    }
    if (out.labels.empty()) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": no data rows", line_no);
    out.features = Tensor(Shape{out.labels.size(), d}, std::move(values));
    return out;
}

void write_csv_dataset(const LabeledDataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "label";
    for (std::size_t k = 0; k < data.dim(); ++k) out << ",f" << k;
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int y = data.labels[i];
        out << (static_cast<std::size_t>(y) < data.class_names.size() ? data.class_names[static_cast<std::size_t>(y)]
                                                                        : std::to_string(y));
        for (double v : data.features.row(i)) {
            const auto res = std::to_chars(buf, buf + sizeof(buf), v);
            out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
        }
        out << '\n';
    }
}

TrainTestSplit stratified_split(const LabeledDataset& data, double test_fraction, std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0) {
        throw std::invalid_argument("stratified_split: test_fraction must lie in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    std::vector<bool> is_test(data.size(), false);
    std::set<int> classes(data.labels.begin(), data.labels.end());
    for (int c : classes) {
        auto idx = data.indices_of(c);
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < n_test && i < idx.size(); ++i) is_test[idx[i]] = true;
    }
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < data.size(); ++i) (is_test[i] ? te : tr).push_back(i);
    return {data.subset(tr), data.subset(te)};
}

}  // namespace driftlab
