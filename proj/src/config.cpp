#include "spindrop/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace spindrop {

HyperParams ExperimentConfig::hyper_params() const {
    HyperParams hp;
    hp.rho = rho;
    hp.lambda = lambda;
    hp.mc_samples = mc_samples;
    hp.validate();
    return hp;
}

PlacementMode ExperimentConfig::placement_mode() const {
    if (placement == "none") return PlacementMode::kNone;
    if (placement == "layer-wise") return PlacementMode::kLayerWise;
    if (placement == "topology-wise") return PlacementMode::kTopologyWise;
    throw ConfigError("unknown placement '" + placement + "'");
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.learning_rate = learning_rate;
    tc.momentum = momentum;
    tc.seed = seed;
    tc.seed_set = true;
    tc.validate();
    return tc;
}

void ExperimentConfig::validate() const {
    hyper_params();
    placement_mode();
    train_config();
    if (topology != "lenet" && topology != "blob2")
        throw ConfigError("unknown topology '" + topology + "'");
    if (data_source != "synthetic" && data_source != "idx" && data_source != "cifar")
        throw ConfigError("unknown data source '" + data_source + "'");
    if (strategy != 1 && strategy != 2) throw ConfigError("strategy must be 1 or 2");
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

struct KvReader {
    std::map<std::string, std::string> kv;  // "section.key" -> raw value

    std::string raw(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError("config is missing required key '" + key + "'");
        return it->second;
    }
    std::string str(const std::string& key) const {
        std::string v = raw(key);
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
        throw ConfigError("config key '" + key + "' must be a quoted string");
    }
    long long integer(const std::string& key) const {
        const std::string v = raw(key);
        try {
            std::size_t used = 0;
            const long long out = std::stoll(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' must be an integer, got '" + v + "'");
        }
    }
    double real(const std::string& key) const {
        const std::string v = raw(key);
        try {
            std::size_t used = 0;
            const double out = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' must be a number, got '" + v + "'");
        }
    }
};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    KvReader r;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
        if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
        if (!r.kv.emplace(section + "." + key, value).second)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + section + "." +
                              key + "'");
    }

    ExperimentConfig c;
    c.name = r.str("experiment.name");
    c.seed = static_cast<std::uint64_t>(r.integer("experiment.seed"));
    c.out_dir = r.str("experiment.out_dir");
    c.topology = r.str("topology.name");
    c.input_c = static_cast<int>(r.integer("topology.input_c"));
    c.input_h = static_cast<int>(r.integer("topology.input_h"));
    c.input_w = static_cast<int>(r.integer("topology.input_w"));
    c.classes = static_cast<int>(r.integer("topology.classes"));
    c.conv1_channels = static_cast<int>(r.integer("topology.conv1_channels"));
    c.conv2_channels = static_cast<int>(r.integer("topology.conv2_channels"));
    c.fc_dim = static_cast<int>(r.integer("topology.fc_dim"));
    c.rho = r.real("hyperparams.rho");
    c.lambda = r.real("hyperparams.lambda");
    c.mc_samples = static_cast<int>(r.integer("hyperparams.mc_samples"));
    c.placement = r.str("placement.mode");
    c.epochs = static_cast<int>(r.integer("train.epochs"));
    c.batch_size = static_cast<int>(r.integer("train.batch_size"));
    c.learning_rate = r.real("train.learning_rate");
    c.momentum = r.real("train.momentum");
    c.train_n = static_cast<int>(r.integer("train.train_n"));
    c.data_source = r.str("data.source");
    c.images_path = r.str("data.images");
    c.labels_path = r.str("data.labels");
    c.synthetic_n = static_cast<int>(r.integer("data.synthetic_n"));
    c.strategy = static_cast<int>(r.integer("simulate.strategy"));
    return c;
}

std::string emit_config(const ExperimentConfig& c) {
    std::ostringstream out;
    out << "[experiment]\n";
    out << "name = \"" << c.name << "\"\n";
    out << "seed = " << c.seed << "\n";
    out << "out_dir = \"" << c.out_dir << "\"\n\n";
    out << "[topology]\n";
    out << "name = \"" << c.topology << "\"\n";
    out << "input_c = " << c.input_c << "\n";
    out << "input_h = " << c.input_h << "\n";
    out << "input_w = " << c.input_w << "\n";
    out << "classes = " << c.classes << "\n";
    out << "conv1_channels = " << c.conv1_channels << "\n";
    out << "conv2_channels = " << c.conv2_channels << "\n";
    out << "fc_dim = " << c.fc_dim << "\n\n";
    out << "[hyperparams]\n";
    out << "rho = " << fmt_double(c.rho) << "\n";
    out << "lambda = " << fmt_double(c.lambda) << "\n";
    out << "mc_samples = " << c.mc_samples << "\n\n";
    out << "[placement]\n";
    out << "mode = \"" << c.placement << "\"\n\n";
    out << "[train]\n";
    out << "epochs = " << c.epochs << "\n";
    out << "batch_size = " << c.batch_size << "\n";
    out << "learning_rate = " << fmt_double(c.learning_rate) << "\n";
    out << "momentum = " << fmt_double(c.momentum) << "\n";
    out << "train_n = " << c.train_n << "\n\n";
    out << "[data]\n";
    out << "source = \"" << c.data_source << "\"\n";
    out << "images = \"" << c.images_path << "\"\n";
    out << "labels = \"" << c.labels_path << "\"\n";
    out << "synthetic_n = " << c.synthetic_n << "\n\n";
    out << "[simulate]\n";
    out << "strategy = " << c.strategy << "\n";
    return out.str();
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open config file");
    std::ostringstream buf;
    buf << f.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void save_config_file(const std::string& path, const ExperimentConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw ConfigError(path + ": cannot open for writing");
    f << emit_config(cfg);
}

}  // namespace spindrop
