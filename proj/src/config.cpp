#include "fect/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fect/errors.hpp"

namespace fect {

namespace {

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

template <typename T>
T parse_num(const std::string& v);

template <>
double parse_num<double>(const std::string& v) { return std::stod(v); }
template <>
std::size_t parse_num<std::size_t>(const std::string& v) { return std::stoul(v); }
template <>
int parse_num<int>(const std::string& v) { return std::stoi(v); }

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"seed", [](PipelineConfig& c, const std::string& v) { c.seed = std::stoull(v); }},
        {"jobs", [](PipelineConfig& c, const std::string& v) { c.jobs = parse_num<int>(v); }},
        {"image_size", [](PipelineConfig& c, const std::string& v) { c.image_size = parse_num<std::size_t>(v); }},
        {"samples_per_class", [](PipelineConfig& c, const std::string& v) { c.samples_per_class = parse_num<std::size_t>(v); }},
        {"train_frac", [](PipelineConfig& c, const std::string& v) { c.train_frac = parse_num<double>(v); }},
        {"val_frac", [](PipelineConfig& c, const std::string& v) { c.val_frac = parse_num<double>(v); }},
        {"max_cells", [](PipelineConfig& c, const std::string& v) { c.max_cells = parse_num<std::size_t>(v); }},
        {"spacing", [](PipelineConfig& c, const std::string& v) { c.spacing = parse_num<double>(v); }},
        {"min_points", [](PipelineConfig& c, const std::string& v) { c.min_points = parse_num<std::size_t>(v); }},
        {"max_points", [](PipelineConfig& c, const std::string& v) { c.max_points = parse_num<std::size_t>(v); }},
        {"knn_k", [](PipelineConfig& c, const std::string& v) { c.knn_k = parse_num<std::size_t>(v); }},
        {"pooled_dim", [](PipelineConfig& c, const std::string& v) { c.pooled_dim = parse_num<std::size_t>(v); }},
        {"heads", [](PipelineConfig& c, const std::string& v) { c.heads = parse_num<std::size_t>(v); }},
        {"landmarks", [](PipelineConfig& c, const std::string& v) { c.landmarks = parse_num<std::size_t>(v); }},
        {"pinv_iters", [](PipelineConfig& c, const std::string& v) { c.pinv_iters = parse_num<int>(v); }},
        {"epochs", [](PipelineConfig& c, const std::string& v) { c.epochs = parse_num<std::size_t>(v); }},
        {"batch_size", [](PipelineConfig& c, const std::string& v) { c.batch_size = parse_num<std::size_t>(v); }},
        {"lr0", [](PipelineConfig& c, const std::string& v) { c.lr0 = parse_num<double>(v); }},
        {"momentum", [](PipelineConfig& c, const std::string& v) { c.momentum = parse_num<double>(v); }},
        {"halve_every", [](PipelineConfig& c, const std::string& v) { c.halve_every = parse_num<std::size_t>(v); }},
        {"svm_c", [](PipelineConfig& c, const std::string& v) { c.svm_c = parse_num<double>(v); }},
        {"svm_tol", [](PipelineConfig& c, const std::string& v) { c.svm_tol = parse_num<double>(v); }},
        {"svm_max_sweeps", [](PipelineConfig& c, const std::string& v) { c.svm_max_sweeps = parse_num<std::size_t>(v); }},
        {"alpha", [](PipelineConfig& c, const std::string& v) { c.alpha = parse_num<double>(v); }},
        {"beta", [](PipelineConfig& c, const std::string& v) { c.beta = parse_num<double>(v); }},
        {"gamma", [](PipelineConfig& c, const std::string& v) { c.gamma = parse_num<double>(v); }},
        {"report_dir", [](PipelineConfig& c, const std::string& v) { c.report_dir = v; }},
    };
    return table;
}

} // namespace

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("config: cannot open " + path);

    PipelineConfig config;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);

        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config: expected key=value at " + path + ":" +
                             std::to_string(lineno));
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        const auto it = setters().find(key);
        if (it == setters().end())
            throw ParseError("config: unknown key \"" + key + "\" at " + path + ":" +
                             std::to_string(lineno));
        try {
            it->second(config, value);
        } catch (const std::exception&) {
            throw ParseError("config: bad value for \"" + key + "\" at " + path + ":" +
                             std::to_string(lineno));
        }
    }
    return config;
}

void apply_env_overrides(PipelineConfig& config) {
    if (const char* dir = std::getenv("FECT_REPORT_DIR"); dir && *dir)
        config.report_dir = dir;
}

std::string describe_config(const PipelineConfig& c) {
    std::ostringstream os;
    os << "seed=" << c.seed << " jobs=" << c.jobs << " image_size=" << c.image_size
       << " samples_per_class=" << c.samples_per_class << " train_frac=" << c.train_frac
       << " val_frac=" << c.val_frac << " max_cells=" << c.max_cells
       << " spacing=" << c.spacing << " min_points=" << c.min_points
       << " max_points=" << c.max_points << " knn_k=" << c.knn_k
       << " pooled_dim=" << c.pooled_dim << " heads=" << c.heads
       << " landmarks=" << c.landmarks << " pinv_iters=" << c.pinv_iters
       << " epochs=" << c.epochs << " batch_size=" << c.batch_size << " lr0=" << c.lr0
       << " momentum=" << c.momentum << " halve_every=" << c.halve_every
       << " svm_c=" << c.svm_c << " svm_tol=" << c.svm_tol
       << " svm_max_sweeps=" << c.svm_max_sweeps << " alpha=" << c.alpha
       << " beta=" << c.beta << " gamma=" << c.gamma << " report_dir=" << c.report_dir;
    return os.str();
}

} // namespace fect
