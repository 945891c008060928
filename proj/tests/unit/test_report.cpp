#include <doctest.h>
#include <json.hpp>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "driftlab/error.hpp"
#include "driftlab/record.hpp"
#include "driftlab/report/cli.hpp"
#include "driftlab/report/compare.hpp"
#include "driftlab/report/config.hpp"
#include "driftlab/report/plot.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace driftlab;
using namespace driftlab::report;
namespace pt = boost::property_tree;
namespace fs = std::filesystem;

namespace {

const char* kDataset = R"([dataset]
source = synthetic
classes = 4
per_class = 30
dim = 8
spread = 0.2
data_seed = 3
tasks = 2
)";

const char* kSmall = R"(epochs = 3
lr = 1e-3
batch_size = 16
hidden = 16
)";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const TempDir& dir, const std::string& name, const std::string& body) {
    const auto path = dir / name;
    std::ofstream(path) << body;
    return path;
}

std::string experiment(const fs::path& out, const std::string& seeds, const std::string& methods) {
    return "[experiment]\noutput = " + out.string() + "\nseeds = " + seeds + "\n" + kDataset + "[defaults]\n" +
           kSmall + methods;
}

pt::ptree parse_svg(const std::string& svg) {
    std::istringstream in(svg);
    pt::ptree tree;
    pt::read_xml(in, tree);
    return tree;
}

// depth-first visit of every element with its attributes
template <class Fn>
void each_element(const pt::ptree& node, const std::string& name, Fn&& fn) {
    for (const auto& [tag, child] : node) {
        if (tag == "<xmlattr>") continue;
        if (tag == name) fn(child);
        each_element(child, name, fn);
    }
}

std::string attr(const pt::ptree& el, const std::string& name) { return el.get<std::string>("<xmlattr>." + name); }

}  // namespace

TEST_CASE("config parses sections, defaults and methods") {
    const auto cfg = parse_experiment_config(std::string(R"([experiment]
output = out
seeds = 1, 2
[dataset]
source = synthetic
classes = 6
tasks = 3
[defaults]
epochs = 7
[method.a]
method = E-EWC
sdc = true
gamma = 5
[method.b]
method = FT*
hidden = 32,16
)"),
                                             "/base");
    CHECK(cfg.output == fs::path("/base/out"));
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(cfg.dataset.classes == 6);
    CHECK(cfg.dataset.tasks == 3);
    REQUIRE(cfg.methods.size() == 2);
    CHECK(cfg.methods[0].method == Method::EEWC);
    CHECK(cfg.methods[0].sdc);
    CHECK(cfg.methods[0].effective_gamma() == 5.0);
    CHECK(cfg.methods[0].epochs == 7);
    CHECK(cfg.methods[0].display_label() == "a");
    CHECK(cfg.methods[1].method == Method::FTStar);
    CHECK(cfg.methods[1].hidden == std::vector<std::size_t>{32, 16});
}

TEST_CASE("config errors name the key") {
    auto key_of = [](const std::string& text) -> std::string {
        try {
            (void)parse_experiment_config(text);
        } catch (const ConfigError& e) {
            return e.key();
        }
        return "<none>";
    };
    const std::string ds = "[dataset]\nsource = synthetic\n";
    CHECK(key_of(ds + "[method.x]\nmethod = E-FT\nlr = fast\n") == "method.x.lr");
    CHECK(key_of(ds + "[method.x]\nmethod = E-FT\ncolour = red\n") == "method.x.colour");
    CHECK(key_of(ds + "[method.x]\nmethod = E-XYZ\n") == "method.x.method");
    CHECK(key_of(ds + "[method.x]\nsdc = true\n") == "method.x.method");
    CHECK(key_of(ds + "[method.x]\nmethod = FT\nsdc = true\n").find("sdc") != std::string::npos);
    CHECK(key_of(ds) == "method");
    CHECK(key_of("[dataset]\nsource = tape\n[method.x]\nmethod = E-FT\n") == "dataset.source");
    CHECK(key_of(ds + "[experiment]\nseeds = 1,x\n[method.x]\nmethod = E-FT\n") == "experiment.seeds");
    CHECK(key_of(ds + "[bogus]\nk = 1\n[method.x]\nmethod = E-FT\n") == "bogus");
    CHECK(key_of("[dataset\nsource = synthetic\n").rfind("line", 0) == 0);
}

TEST_CASE("seed override from the environment") {
    TempDir dir;
    const auto path = write_config(dir, "c.ini", experiment(dir / "out", "0", "[method.e]\nmethod = E-FT\n"));
    ::setenv("DRIFTLAB_SEED_OVERRIDE", "4,5", 1);
    const auto cfg = load_experiment_config(path);
    ::unsetenv("DRIFTLAB_SEED_OVERRIDE");
    CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(load_experiment_config(path).seeds == std::vector<std::uint64_t>{0});
}

TEST_CASE("label directories are filesystem safe") {
    CHECK(label_directory("FT*") == "FT-star");
    CHECK(label_directory("E-FT+SDC") == "E-FT+SDC");
    CHECK(label_directory("a/b c") == "a_b_c");
}

TEST_CASE("run: happy path, files, and byte-identical rerun") {
    TempDir dir;
    const auto out = dir / "results";
    const auto path = write_config(dir, "c.ini", experiment(out, "0", "[method.E-FT]\nmethod = E-FT\n"));
    std::ostringstream o1, e1;
    REQUIRE(cli_run(path, o1, e1) == kExitOk);
    const auto run = out / "E-FT" / "0";
    for (const char* f : {"a_matrix.csv", "record.json", "prototypes.json"}) CHECK(fs::exists(run / f));
    CHECK(o1.str().find("| E-FT | 1 |") != std::string::npos);
    const auto first = slurp(run / "a_matrix.csv");

    std::ostringstream o2, e2;
    REQUIRE(cli_run(path, o2, e2) == kExitOk);
    CHECK(slurp(run / "a_matrix.csv") == first);
    CHECK(o2.str() == o1.str());
}

TEST_CASE("run: malformed config exits 2 with the key") {
    TempDir dir;
    const auto path = write_config(dir, "bad.ini", experiment(dir / "o", "0", "[method.x]\nmethod = E-FT\nsigma = -1\n"));
    std::ostringstream out, err;
    CHECK(cli_run(path, out, err) == kExitConfig);
    CHECK(err.str().find("sigma") != std::string::npos);

    std::ostringstream out2, err2;
    CHECK(cli_run(dir / "missing.ini", out2, err2) == kExitConfig);
}

TEST_CASE("run: a failing run does not stop the others") {
    TempDir dir;
    // E-Pre-substitute without held-out classes fails, E-FT still completes
    const auto path = write_config(dir, "c.ini",
                                   experiment(dir / "o", "0", "[method.pre]\nmethod = E-Pre-substitute\n"
                                                              "[method.ft]\nmethod = E-FT\n"));
    std::ostringstream out, err;
    CHECK(cli_run(path, out, err) == kExitFailure);
    CHECK(fs::exists(dir / "o" / "ft" / "0" / "a_matrix.csv"));
    CHECK_FALSE(fs::exists(dir / "o" / "pre" / "0" / "a_matrix.csv"));
}

TEST_CASE("compare: table equals recomputation from the csv files") {
    TempDir dir;
    const auto out = dir / "o";
    const auto path = write_config(dir, "c.ini",
                                   experiment(out, "0,1", "[method.ft]\nmethod = E-FT\n[method.mas]\nmethod = E-MAS\n"));
    std::ostringstream o, e;
    REQUIRE(cli_run(path, o, e) == kExitOk);

    const auto runs = collect_runs({out});
    REQUIRE(runs.size() == 4);
    const auto table = build_compare_table(runs);
    REQUIRE(table.rows.size() == 2);
    CHECK(table.tasks == 2);
    for (const auto& row : table.rows) {
        CHECK(row.runs == 2);
        const auto dir_name = label_directory(row.label);
        for (std::size_t k = 1; k <= 2; ++k) {
            std::vector<double> a_k;
            for (const char* seed : {"0", "1"}) {
                // recompute from the raw file text
                std::istringstream in(slurp(out / dir_name / seed / "a_matrix.csv"));
                std::string line;
                std::getline(in, line);
                double sum = 0.0;
                std::size_t n = 0;
                while (std::getline(in, line)) {
                    std::size_t kk = 0, jj = 0;
                    double v = 0.0;
                    char c1 = 0, c2 = 0;
                    std::istringstream ls(line);
                    ls >> kk >> c1 >> jj >> c2 >> v;
                    if (kk == k) {
                        sum += v;
                        ++n;
                    }
                }
                REQUIRE(n == k);
                a_k.push_back(sum / static_cast<double>(k));
            }
            const double mean = (a_k[0] + a_k[1]) / 2.0;
            const double sd = std::abs(a_k[0] - a_k[1]) / std::sqrt(2.0);
            CHECK(std::abs(row.mean[k - 1] - mean) < 1e-12);
            CHECK(std::abs(row.stddev[k - 1] - sd) < 1e-12);
        }
    }
    const auto md = table.markdown();
    CHECK(md.rfind("| Method | Runs | A_1 | A_2 |", 0) == 0);
    CHECK(md.find("±") != std::string::npos);

    std::ostringstream co, ce;
    CHECK(cli_compare({out}, co, ce) == kExitOk);
    CHECK(co.str() == md);
}

TEST_CASE("compare: single run and inconsistent task counts") {
    AccuracyMatrix a(2);
    a.set(1, 1, 0.9);
    a.set(2, 1, 0.5);
    a.set(2, 2, 0.7);
    const auto one = build_compare_table({{"m", a}});
    CHECK(one.rows[0].mean[0] == doctest::Approx(0.9));
    CHECK(one.rows[0].mean[1] == doctest::Approx(0.6));
    CHECK(one.markdown().find("| m | 1 | 90.00 | 60.00 |") != std::string::npos);

    AccuracyMatrix b(3);
    CHECK_THROWS_AS((void)build_compare_table({{"m", a}, {"n", b}}), std::invalid_argument);

    // Joint-style rows print a dash where no A_k exists
    AccuracyMatrix j(2);
    j.set(2, 1, 1.0);
    j.set(2, 2, 0.5);
    const auto t = build_compare_table({{"Joint", j}});
    CHECK(std::isnan(t.rows[0].mean[0]));
    CHECK(t.markdown().find("| Joint | 1 | - | 75.00 |") != std::string::npos);
}

TEST_CASE("plot: embedding arrows match prototypes.json") {
    TempDir dir;
    const auto out = dir / "o";
    const auto path = write_config(dir, "c.ini",
                                   experiment(out, "0", "[method.sdc]\nmethod = E-FT\nsdc = true\nembedding_dim = 2\n"));
    std::ostringstream o, e;
    REQUIRE(cli_run(path, o, e) == kExitOk);
    std::ostringstream po, pe;
    REQUIRE(cli_plot(out, "embedding", po, pe) == kExitOk);

    const auto run = out / "sdc" / "0";
    const auto svg_path = run / "plots" / "embedding_task2.svg";
    REQUIRE(fs::exists(svg_path));
    const auto svg = slurp(svg_path);
    const auto tree = parse_svg(svg);
    const auto& root = tree.get_child("svg");
    PlotTransform tf;
    tf.x0 = std::stod(attr(root, "data-x0"));
    tf.y0 = std::stod(attr(root, "data-y0"));
    tf.scale = std::stod(attr(root, "data-scale"));
    tf.left = std::stod(attr(root, "data-left"));
    tf.top = std::stod(attr(root, "data-top"));

    const auto doc = nlohmann::json::parse(slurp(run / "prototypes.json"));
    const auto& transition = doc.at("transitions").at(0);
    CHECK(transition.at("task") == 2);
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> expected;
    for (const auto& c : transition.at("classes")) {
        expected[c.at("class_id").get<int>()] = {c.at("before").get<std::vector<double>>(),
                                                 c.at("drift").get<std::vector<double>>()};
    }
    REQUIRE(expected.size() == 2);

    // coordinates are printed with 3 decimals
    const double tol = 1e-3 / tf.scale;
    std::size_t arrows = 0, circles = 0, triangles = 0, stars = 0;
    each_element(root, "line", [&](const pt::ptree& el) {
        if (el.get<std::string>("<xmlattr>.class", "") != "drift-arrow") return;
        ++arrows;
        const auto& [before, drift] = expected.at(std::stoi(attr(el, "data-class")));
        const auto [bx, by] = tf.invert(std::stod(attr(el, "x1")), std::stod(attr(el, "y1")));
        const auto [ex, ey] = tf.invert(std::stod(attr(el, "x2")), std::stod(attr(el, "y2")));
        CHECK(std::abs(bx - before[0]) < tol);
        CHECK(std::abs(by - before[1]) < tol);
        CHECK(std::abs(ex - (before[0] + drift[0])) < tol);
        CHECK(std::abs(ey - (before[1] + drift[1])) < tol);
        CHECK(attr(el, "stroke-dasharray") != "");
    });
    each_element(root, "circle", [&](const pt::ptree& el) {
        if (el.get<std::string>("<xmlattr>.class", "") == "prototype") ++circles;
    });
    each_element(root, "polygon", [&](const pt::ptree& el) {
        const auto cls = el.get<std::string>("<xmlattr>.class", "");
        triangles += cls == "compensated";
        stars += cls == "true-mean";
    });
    CHECK(arrows == 2);
    CHECK(circles == 2);
    CHECK(triangles == 2);
    CHECK(stars == 2);

    // deterministic per input
    REQUIRE(cli_plot(out, "embedding", po, pe) == kExitOk);
    CHECK(slurp(svg_path) == svg);
}

TEST_CASE("plot: embedding needs a 2-D run") {
    TempDir dir;
    const auto out = dir / "o";
    const auto path = write_config(dir, "c.ini", experiment(out, "0", "[method.e]\nmethod = E-FT\nsdc = true\n"));
    std::ostringstream o, e;
    REQUIRE(cli_run(path, o, e) == kExitOk);
    std::ostringstream po, pe;
    CHECK(cli_plot(out, "embedding", po, pe) == kExitFailure);
    CHECK(cli_plot(out, "pie", po, pe) == kExitConfig);
    CHECK(cli_plot(dir / "nothing", "curves", po, pe) != kExitOk);
}

TEST_CASE("plot: curves for three methods and confusion heatmaps") {
    TempDir dir;
    const auto out = dir / "o";
    const auto path = write_config(dir, "c.ini",
                                   experiment(out, "0", "[method.a]\nmethod = E-FT\n[method.b]\nmethod = E-LwF\n"
                                                        "[method.c]\nmethod = FT\n"));
    std::ostringstream o, e;
    REQUIRE(cli_run(path, o, e) == kExitOk);
    std::ostringstream po, pe;
    REQUIRE(cli_plot(out, "curves", po, pe) == kExitOk);
    const auto tree = parse_svg(slurp(out / "curves.svg"));
    std::vector<std::string> labels;
    each_element(tree, "g", [&](const pt::ptree& el) {
        if (el.get<std::string>("<xmlattr>.class", "") == "series") labels.push_back(attr(el, "data-label"));
    });
    CHECK(labels == std::vector<std::string>{"a", "b", "c"});

    REQUIRE(cli_plot(out, "confusion", po, pe) == kExitOk);
    const auto run = out / "a" / "0";
    const auto rec = nlohmann::json::parse(slurp(run / "record.json"));
    for (int k = 1; k <= 2; ++k) {
        const auto p = run / "plots" / ("confusion_task" + std::to_string(k) + ".svg");
        REQUIRE(fs::exists(p));
        const auto svg = parse_svg(slurp(p));
        const auto& counts = rec.at("confusion").at(k - 1).at("counts");
        const auto& classes = rec.at("confusion").at(k - 1).at("classes");
        std::size_t cells = 0;
        each_element(svg, "rect", [&](const pt::ptree& el) {
            if (el.get<std::string>("<xmlattr>.class", "") != "cell") return;
            ++cells;
            const int t = std::stoi(attr(el, "data-true"));
            const int pr = std::stoi(attr(el, "data-pred"));
            std::size_t ti = 0, pi = 0;
            for (std::size_t i = 0; i < classes.size(); ++i) {
                if (classes[i] == t) ti = i;
                if (classes[i] == pr) pi = i;
            }
            CHECK(std::stoul(attr(el, "data-count")) == counts[ti][pi].get<std::size_t>());
        });
        CHECK(cells == classes.size() * classes.size());
    }
}

TEST_CASE("svg primitives are well-formed xml") {
    CurveSeries s{"x & <y>", {0.5, std::nan(""), 0.25}};
    CHECK_NOTHROW((void)parse_svg(curves_svg({s}, "A_k \"title\"")));
    const auto cm = build_confusion(1, {0, 1}, {0, 1, 1}, {0, 0, 1});
    CHECK_NOTHROW((void)parse_svg(confusion_svg(cm, "c")));
}
