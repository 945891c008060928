#include <doctest.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "driftlab/data.hpp"
#include "driftlab/error.hpp"
#include "tempdir.hpp"

using namespace driftlab;
using namespace driftlab::nn;

namespace {

using Bytes = std::vector<unsigned char>;

void put_be32(Bytes& b, std::uint32_t v) {
    b.push_back(static_cast<unsigned char>(v >> 24));
    b.push_back(static_cast<unsigned char>(v >> 16));
    b.push_back(static_cast<unsigned char>(v >> 8));
    b.push_back(static_cast<unsigned char>(v));
}

Bytes idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols, const Bytes& pixels) {
    Bytes b;
    put_be32(b, 0x00000803u);
    put_be32(b, n);
    put_be32(b, rows);
    put_be32(b, cols);
    b.insert(b.end(), pixels.begin(), pixels.end());
    return b;
}

Bytes idx_labels(const Bytes& labels) {
    Bytes b;
    put_be32(b, 0x00000801u);
    put_be32(b, static_cast<std::uint32_t>(labels.size()));
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

void write_bytes(const std::filesystem::path& p, const Bytes& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void write_gz(const std::filesystem::path& p, const Bytes& b) {
    gzFile f = gzopen(p.string().c_str(), "wb");
    REQUIRE(f != nullptr);
    gzwrite(f, b.data(), static_cast<unsigned>(b.size()));
    gzclose(f);
}

// plain zlib read with no IDX interpretation at all
Bytes gunzip(const std::filesystem::path& p) {
    gzFile f = gzopen(p.string().c_str(), "rb");
    REQUIRE(f != nullptr);
    Bytes out;
    unsigned char buf[4096];
    int got = 0;
    while ((got = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + got);
    gzclose(f);
    return out;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p);
    out << s;
}

std::size_t parse_position(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ParseError& e) {
        return e.position();
    }
    FAIL("expected ParseError");
    return 0;
}

const std::filesystem::path kMnist = std::filesystem::path(DRIFTLAB_DATA_DIR) / "mnist5k";

}  // namespace

TEST_CASE("gaussian clusters: shape, labels and determinism") {
    const auto a = gen_gaussian_clusters(4, 25, 3, 0.2, 11);
    const auto b = gen_gaussian_clusters(4, 25, 3, 0.2, 11);
    const auto c = gen_gaussian_clusters(4, 25, 3, 0.2, 12);
    CHECK(a.size() == 100);
    CHECK(a.dim() == 3);
    CHECK(a.num_classes() == 4);
    for (int k = 0; k < 4; ++k) CHECK(a.indices_of(k).size() == 25);
    CHECK(a.features.same_values(b.features));
    CHECK(a.labels == b.labels);
    CHECK_FALSE(a.features.same_values(c.features));
}

TEST_CASE("gaussian clusters with zero spread sit on their centres") {
    const auto data = gen_gaussian_clusters(3, 5, 4, 0.0, 3);
    const auto centers = gaussian_cluster_centers(3, 4, 3);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& c = centers[static_cast<std::size_t>(data.labels[i])];
        for (std::size_t k = 0; k < 4; ++k) CHECK(data.features.at(i, k) == c[k]);
    }
    for (const auto& c : centers) {
        double sq = 0.0;
        for (double v : c) sq += v * v;
        CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("gaussian cluster sample means approach the centres") {
    const std::size_t n = 4000;
    const double spread = 0.5;
    const auto data = gen_gaussian_clusters(3, n, 2, spread, 5);
    const auto centers = gaussian_cluster_centers(3, 2, 5);
    const double bound = 3.0 * spread / std::sqrt(static_cast<double>(n));
    for (int c = 0; c < 3; ++c) {
        for (std::size_t k = 0; k < 2; ++k) {
            double sum = 0.0;
            for (auto i : data.indices_of(c)) sum += data.features.at(i, k);
            CHECK(std::abs(sum / static_cast<double>(n) - centers[static_cast<std::size_t>(c)][k]) < bound);
        }
    }
}

TEST_CASE("gaussian clusters reject bad arguments") {
    CHECK_THROWS_AS((void)gen_gaussian_clusters(0, 5, 2, 0.1, 0), std::invalid_argument);
    CHECK_THROWS_AS((void)gen_gaussian_clusters(2, 0, 2, 0.1, 0), std::invalid_argument);
    CHECK_THROWS_AS((void)gen_gaussian_clusters(2, 5, 0, 0.1, 0), std::invalid_argument);
    CHECK_THROWS_AS((void)gen_gaussian_clusters(2, 5, 2, -0.1, 0), std::invalid_argument);
}

TEST_CASE("idx: raw and gzip files decode identically") {
    TempDir dir;
    const Bytes pixels{0, 255, 51, 102, 7, 8, 9, 10, 11, 12, 13, 14};
    const auto img = idx_images(3, 2, 2, pixels);
    const auto lab = idx_labels({9, 2, 9});
    write_bytes(dir / "img", img);
    write_bytes(dir / "lab", lab);
    write_gz(dir / "img.gz", img);
    write_gz(dir / "lab.gz", lab);

    const auto raw = read_idx(dir / "img", dir / "lab");
    const auto gz = read_idx(dir / "img.gz", dir / "lab.gz");
    CHECK(raw.size() == 3);
    CHECK(raw.dim() == 4);
    for (std::size_t i = 0; i < pixels.size(); ++i) CHECK(raw.features[i] == static_cast<double>(pixels[i]) / 255.0);
    CHECK(raw.features[1] == 1.0);
    // ascending remap of raw labels
    CHECK(raw.labels == std::vector<int>{1, 0, 1});
    CHECK(raw.class_names == std::vector<std::string>{"2", "9"});
    CHECK(gz.features.same_values(raw.features));
    CHECK(gz.labels == raw.labels);
}

TEST_CASE("idx: truncated payload names the byte offset") {
    TempDir dir;
    auto img = idx_images(3, 2, 2, Bytes(12, 1));
    img.resize(16 + 10);
    write_bytes(dir / "img", img);
    write_bytes(dir / "lab", idx_labels({0, 1, 2}));
    const auto pos = parse_position([&] { (void)read_idx(dir / "img", dir / "lab"); });
    CHECK(pos == 26);
    try {
        (void)read_idx(dir / "img", dir / "lab");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("26") != std::string::npos);
    }
}

TEST_CASE("idx: truncated header") {
    TempDir dir;
    auto img = idx_images(1, 1, 1, {5});
    img.resize(6);
    write_bytes(dir / "img", img);
    write_bytes(dir / "lab", idx_labels({0}));
    CHECK(parse_position([&] { (void)read_idx(dir / "img", dir / "lab"); }) == 6);
}

TEST_CASE("idx: bad magic is reported at offset 0") {
    TempDir dir;
    auto img = idx_images(1, 1, 1, {5});
    img[3] = 0x01;
    write_bytes(dir / "img", img);
    write_bytes(dir / "lab", idx_labels({0}));
    CHECK(parse_position([&] { (void)read_idx(dir / "img", dir / "lab"); }) == 0);

    // little-endian magic is not accepted
    Bytes le{0x03, 0x08, 0x00, 0x00};
    const auto good = idx_images(1, 1, 1, {5});
    le.insert(le.end(), good.begin() + 4, good.end());
    write_bytes(dir / "img_le", le);
    CHECK(parse_position([&] { (void)read_idx(dir / "img_le", dir / "lab"); }) == 0);

    // labels file swapped for images file
    write_bytes(dir / "img", good);
    CHECK(parse_position([&] { (void)read_idx(dir / "img", dir / "img"); }) == 0);
}

TEST_CASE("idx: image and label counts must agree") {
    TempDir dir;
    write_bytes(dir / "img", idx_images(2, 1, 1, {1, 2}));
    write_bytes(dir / "lab", idx_labels({0, 1, 1}));
    CHECK(parse_position([&] { (void)read_idx(dir / "img", dir / "lab"); }) == 4);
}

TEST_CASE("idx: missing file") {
    TempDir dir;
    CHECK_THROWS((void)read_idx(dir / "nope", dir / "nada"));
}

TEST_CASE("idx: bundled digit subset") {
    const auto train_img = kMnist / "train-images-idx3-ubyte.gz";
    const auto train_lab = kMnist / "train-labels-idx1-ubyte.gz";
    const auto train = read_idx(train_img, train_lab);
    CHECK(train.size() == 4000);
    CHECK(train.dim() == 784);
    CHECK(train.num_classes() == 10);
    for (int k = 0; k < 10; ++k) {
        CHECK(train.class_names[static_cast<std::size_t>(k)] == std::to_string(k));
        CHECK(train.indices_of(k).size() == 400);
    }

    // compare against the bytes straight out of the gzip stream
    const auto raw_img = gunzip(train_img);
    const auto raw_lab = gunzip(train_lab);
    REQUIRE(raw_img.size() == 16 + 4000u * 784u);
    REQUIRE(raw_lab.size() == 8 + 4000u);
    for (std::size_t i : {std::size_t{0}, std::size_t{1}, std::size_t{1234}, std::size_t{3999}}) {
        CHECK(train.labels[i] == static_cast<int>(raw_lab[8 + i]));
        for (std::size_t k = 0; k < 784; ++k) {
            CHECK(train.features.at(i, k) == static_cast<double>(raw_img[16 + i * 784 + k]) / 255.0);
        }
    }
    double lo = 1.0, hi = 0.0;
    for (double v : train.features.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);

    const auto test = read_idx(kMnist / "t10k-images-idx3-ubyte.gz", kMnist / "t10k-labels-idx1-ubyte.gz");
    CHECK(test.size() == 1000);
    for (int k = 0; k < 10; ++k) CHECK(test.indices_of(k).size() == 100);
}

TEST_CASE("csv: labels remapped by first appearance") {
    TempDir dir;
    write_text(dir / "a.csv", "label,f0,f1\n7,1.5,2\n7,0,-1e-3\n3,4,5\n");
    const auto d = read_csv_dataset(dir / "a.csv");
    CHECK(d.labels == std::vector<int>{0, 0, 1});
    CHECK(d.class_names == std::vector<std::string>{"7", "3"});
    CHECK(d.dim() == 2);
    CHECK(d.features.at(1, 1) == -1e-3);
    CHECK(d.features.at(2, 0) == 4.0);
}

TEST_CASE("csv: write then read round trip") {
    TempDir dir;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal(0.0, 3.0);
    LabeledDataset d;
    d.features = Tensor(Shape{40, 5});
    for (auto& v : d.features.data()) v = normal(rng);
    d.class_names = {"cat", "dog", "7"};
    for (std::size_t i = 0; i < 40; ++i) d.labels.push_back(static_cast<int>(i % 3));
    write_csv_dataset(d, dir / "r.csv");
    const auto back = read_csv_dataset(dir / "r.csv");
    REQUIRE(back.size() == 40);
    CHECK(back.labels == d.labels);
    CHECK(back.class_names == d.class_names);
    for (std::size_t i = 0; i < d.features.size(); ++i) CHECK(std::abs(back.features[i] - d.features[i]) <= 1e-9);
}

TEST_CASE("csv: errors carry line numbers") {
    TempDir dir;
    write_text(dir / "ragged.csv", "label,f0,f1\n1,2,3\n1,2\n");
    CHECK(parse_position([&] { (void)read_csv_dataset(dir / "ragged.csv"); }) == 3);

    write_text(dir / "text.csv", "label,f0\n1,2\n1,2\n0,abc\n");
    CHECK(parse_position([&] { (void)read_csv_dataset(dir / "text.csv"); }) == 4);

    write_text(dir / "empty.csv", "");
    CHECK(parse_position([&] { (void)read_csv_dataset(dir / "empty.csv"); }) == 1);

    write_text(dir / "header.csv", "x,f0\n1,2\n");
    CHECK(parse_position([&] { (void)read_csv_dataset(dir / "header.csv"); }) == 1);

    write_text(dir / "cell.csv", "label,f0,f1\n1,,2\n");
    CHECK(parse_position([&] { (void)read_csv_dataset(dir / "cell.csv"); }) == 2);
}

TEST_CASE("stratified split keeps class shares and covers the data once") {
    const auto data = gen_gaussian_clusters(3, 20, 2, 0.1, 1);
    const auto s = stratified_split(data, 0.25, 4);
    CHECK(s.train.size() + s.test.size() == data.size());
    for (int c = 0; c < 3; ++c) {
        CHECK(s.test.indices_of(c).size() == 5);
        CHECK(s.train.indices_of(c).size() == 15);
    }
    // every row lands in exactly one side
    std::multiset<std::vector<double>> all, parts;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = data.features.row(i);
        all.emplace(r.begin(), r.end());
    }
    for (const auto* side : {&s.train, &s.test}) {
        for (std::size_t i = 0; i < side->size(); ++i) {
            const auto r = side->features.row(i);
            parts.emplace(r.begin(), r.end());
        }
    }
    CHECK(all == parts);

    const auto again = stratified_split(data, 0.25, 4);
    CHECK(again.test.features.same_values(s.test.features));
    CHECK_THROWS_AS((void)stratified_split(data, 0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS((void)stratified_split(data, 1.0, 4), std::invalid_argument);
}

TEST_CASE("subset, filter and concat") {
    const auto data = gen_gaussian_clusters(4, 3, 2, 0.1, 2);
    const std::vector<int> keep{1, 3};
    const auto f = data.filter_classes(keep);
    CHECK(f.size() == 6);
    for (int y : f.labels) CHECK((y == 1 || y == 3));
    CHECK(f.num_classes() == 4);
    const std::vector<LabeledDataset> parts{data.filter_classes(std::vector<int>{0}), f};
    const auto joined = concat(parts);
    CHECK(joined.size() == 9);
    CHECK(joined.features.row(0)[0] == data.features.row(0)[0]);
}
