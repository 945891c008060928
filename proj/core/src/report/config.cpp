#include "driftlab/report/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "driftlab/error.hpp"

namespace driftlab::report {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::uint64_t to_u64(const std::string& text, const std::string& key) {
    std::uint64_t v = 0;
    const auto s = trim(text);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        throw ConfigError(key, "expected a nonnegative integer, got '" + text + "'");
    }
    return v;
}

std::size_t to_size(const std::string& text, const std::string& key) {
    return static_cast<std::size_t>(to_u64(text, key));
}

double to_double(const std::string& text, const std::string& key) {
    double v = 0.0;
    const auto s = trim(text);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        throw ConfigError(key, "expected a number, got '" + text + "'");
    }
    return v;
}

bool to_bool(const std::string& text, const std::string& key) {
    const auto s = trim(text);
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    throw ConfigError(key, "expected true/false, got '" + text + "'");
}

std::filesystem::path to_path(const std::string& text, const std::filesystem::path& base) {
    std::filesystem::path p(trim(text));
    if (p.is_relative() && !base.empty()) p = base / p;
    return p;
}

// Applies one method-level key. Returns false for unknown keys.
bool apply_method_key(MethodConfig& m, const std::string& name, const std::string& value, const std::string& key) {
    if (name == "method") {
        try {
            m.method = parse_method(trim(value));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(key, e.what());
        }
    } else if (name == "sdc") {
        m.sdc = to_bool(value, key);
    } else if (name == "gamma") {
        m.gamma = to_double(value, key);
    } else if (name == "sigma") {
        m.sigma = to_double(value, key);
    } else if (name == "margin") {
        m.margin = to_double(value, key);
    } else if (name == "lr") {
        m.lr = to_double(value, key);
    } else if (name == "epochs") {
        m.epochs = to_size(value, key);
    } else if (name == "batch_size") {
        m.batch_size = to_size(value, key);
    } else if (name == "embedding_dim") {
        m.embedding_dim = to_size(value, key);
    } else if (name == "hidden") {
        m.hidden.clear();
        if (!trim(value).empty()) {
            for (const auto& h : split_list(value)) m.hidden.push_back(to_size(h, key));
        }
    } else if (name == "mining") {
        try {
            m.mining = parse_mining(trim(value));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(key, e.what());
        }
    } else if (name == "importance") {
        const auto v = trim(value);
        if (v == "running_mean") m.accumulation = ImportanceAccumulation::RunningMean;
        else if (v == "recompute") m.accumulation = ImportanceAccumulation::Recompute;
        else throw ConfigError(key, "expected running_mean or recompute, got '" + v + "'");
    } else if (name == "fisher") {
        const auto v = trim(value);
        if (v == "triplet") m.fisher_variant = FisherVariant::TripletLoss;
        else if (v == "output_norm") m.fisher_variant = FisherVariant::OutputNorm;
        else throw ConfigError(key, "expected triplet or output_norm, got '" + v + "'");
    } else if (name == "renormalize") {
        m.renormalize_prototypes = to_bool(value, key);
    } else if (name == "pretrain_epochs") {
        m.pretrain_epochs = to_size(value, key);
    } else if (name == "label") {
        m.label = trim(value);
    } else {
        return false;
    }
    return true;
}

void apply_dataset_key(DatasetSpec& d, const std::string& name, const std::string& value, const std::string& key,
                       const std::filesystem::path& base) {
    if (name == "source") {
        d.source = trim(value);
        if (d.source != "synthetic" && d.source != "idx" && d.source != "csv") {
            throw ConfigError(key, "expected synthetic, idx or csv, got '" + d.source + "'");
        }
    } else if (name == "classes") {
        d.classes = to_size(value, key);
    } else if (name == "per_class") {
        d.per_class = to_size(value, key);
    } else if (name == "dim") {
        d.dim = to_size(value, key);
    } else if (name == "spread") {
        d.spread = to_double(value, key);
    } else if (name == "data_seed") {
        d.data_seed = to_u64(value, key);
    } else if (name == "train_images") {
        d.train_images = to_path(value, base);
    } else if (name == "train_labels") {
        d.train_labels = to_path(value, base);
    } else if (name == "test_images") {
        d.test_images = to_path(value, base);
    } else if (name == "test_labels") {
        d.test_labels = to_path(value, base);
    } else if (name == "path") {
        d.path = to_path(value, base);
    } else if (name == "test_path") {
        d.test_path = to_path(value, base);
    } else if (name == "test_fraction") {
        d.test_fraction = to_double(value, key);
    } else if (name == "tasks") {
        d.tasks = to_size(value, key);
    } else if (name == "first_task_fraction") {
        d.first_task_fraction = to_double(value, key);
    } else if (name == "holdout_classes") {
        d.holdout_classes = to_size(value, key);
    } else if (name == "split_seed") {
        d.split_seed = to_u64(value, key);
    } else {
        throw ConfigError(key, "unknown key");
    }
}

void check_dataset(const DatasetSpec& d) {
    if (d.tasks == 0) throw ConfigError("dataset.tasks", "must be positive");
    if (d.first_task_fraction < 0.0 || d.first_task_fraction >= 1.0) {
        throw ConfigError("dataset.first_task_fraction", "must lie in [0, 1)");
    }
    if (d.source == "synthetic") {
        if (d.classes == 0) throw ConfigError("dataset.classes", "must be positive");
        if (d.per_class < 2) throw ConfigError("dataset.per_class", "must be at least 2");
        if (d.dim == 0) throw ConfigError("dataset.dim", "must be positive");
        if (d.spread < 0.0) throw ConfigError("dataset.spread", "must be nonnegative");
    } else if (d.source == "idx") {
        if (d.train_images.empty()) throw ConfigError("dataset.train_images", "required for source = idx");
        if (d.train_labels.empty()) throw ConfigError("dataset.train_labels", "required for source = idx");
        if (d.test_images.empty()) throw ConfigError("dataset.test_images", "required for source = idx");
        if (d.test_labels.empty()) throw ConfigError("dataset.test_labels", "required for source = idx");
    } else if (d.path.empty()) {
        throw ConfigError("dataset.path", "required for source = csv");
    }
    if ((d.source == "synthetic" || (d.source == "csv" && d.test_path.empty())) &&
        !(d.test_fraction > 0.0 && d.test_fraction < 1.0)) {
        throw ConfigError("dataset.test_fraction", "must lie in (0, 1)");
    }
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text, const std::string& key) {
    std::vector<std::uint64_t> seeds;
    for (const auto& s : split_list(text)) seeds.push_back(to_u64(s, key));
    if (seeds.empty()) throw ConfigError(key, "needs at least one seed");
    std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size()) throw ConfigError(key, "duplicate seed");
    return seeds;
}

ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("line " + std::to_string(e.line()), e.message());
    }

    ExperimentConfig cfg;
    MethodConfig defaults;
    std::vector<std::pair<std::string, const pt::ptree*>> method_sections;

    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(section, "key outside of any section");
        }
        if (section == "experiment") {
            for (const auto& [name, v] : body) {
                const std::string key = "experiment." + name;
                if (name == "output") cfg.output = to_path(v.data(), base_dir);
                else if (name == "seeds") cfg.seeds = parse_seed_list(v.data(), key);
                else if (name == "threads") cfg.threads = std::max<std::size_t>(1, to_size(v.data(), key));
                else throw ConfigError(key, "unknown key");
            }
        } else if (section == "dataset") {
            for (const auto& [name, v] : body) apply_dataset_key(cfg.dataset, name, v.data(), "dataset." + name, base_dir);
        } else if (section == "defaults") {
            for (const auto& [name, v] : body) {
                const std::string key = "defaults." + name;
                if (name == "method" || name == "label") throw ConfigError(key, "not allowed in [defaults]");
                if (!apply_method_key(defaults, name, v.data(), key)) throw ConfigError(key, "unknown key");
            }
        } else if (section.rfind("method.", 0) == 0 && section.size() > 7) {
            method_sections.emplace_back(section, &body);
        } else {
            throw ConfigError(section, "unknown section");
        }
    }

    std::set<std::string> labels;
    for (const auto& [section, body] : method_sections) {
        MethodConfig m = defaults;
        m.label = section.substr(7);
        if (!body->get_child_optional("method")) throw ConfigError(section + ".method", "missing");
        for (const auto& [name, v] : *body) {
            const std::string key = section + "." + name;
            if (!apply_method_key(m, name, v.data(), key)) throw ConfigError(key, "unknown key");
        }
        try {
            m.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(section + "." + e.key(), e.what());
        }
        if (!labels.insert(m.label).second) throw ConfigError(section + ".label", "duplicate label '" + m.label + "'");
        cfg.methods.push_back(std::move(m));
    }
    if (cfg.methods.empty()) throw ConfigError("method", "config defines no [method.<label>] section");
    check_dataset(cfg.dataset);
    return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir) {
    std::istringstream in(text);
    return parse_experiment_config(in, base_dir);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path.string());
    ExperimentConfig cfg = parse_experiment_config(in, path.parent_path());
    if (const char* env = std::getenv("DRIFTLAB_SEED_OVERRIDE"); env && *env) {
        cfg.seeds = parse_seed_list(env, "DRIFTLAB_SEED_OVERRIDE");
    }
    return cfg;
}

LoadedData load_dataset(const DatasetSpec& spec) {
    if (spec.source == "synthetic") {
        const auto all = gen_gaussian_clusters(spec.classes, spec.per_class, spec.dim, spec.spread, spec.data_seed);
        auto split = stratified_split(all, spec.test_fraction, spec.data_seed);
        return {std::move(split.train), std::move(split.test)};
    }
    if (spec.source == "idx") {
        return {read_idx(spec.train_images, spec.train_labels), read_idx(spec.test_images, spec.test_labels)};
    }
    if (spec.source == "csv") {
        auto all = read_csv_dataset(spec.path);
        if (spec.test_path.empty()) {
            auto split = stratified_split(all, spec.test_fraction, spec.data_seed);
            return {std::move(split.train), std::move(split.test)};
        }
        auto test = read_csv_dataset(spec.test_path);
        if (test.class_names != all.class_names) {
            throw ConfigError("dataset.test_path", "test labels must appear in the same order as in the training file");
        }
        return {std::move(all), std::move(test)};
    }
    throw ConfigError("dataset.source", "unknown source '" + spec.source + "'");
}

TaskSequence make_sequence(const DatasetSpec& spec, const LoadedData& data, std::uint64_t run_seed) {
    try {
        return split_tasks(data.train, data.test, spec.tasks, spec.first_task_fraction, spec.split_seed.value_or(run_seed),
                           spec.holdout_classes);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("dataset.tasks", e.what());
    }
}

std::string label_directory(const std::string& label) {
    std::string out;
    for (char c : label) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '+' || c == '.') out += c;
        else if (c == '*') out += "-star";
        else out += '_';
    }
    if (out.empty() || out == "." || out == "..") out = "_" + out;
    return out;
}

}  // namespace driftlab::report
