#include "tsdfslam/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tsdfslam {

void PipelineConfig::Sync() {
    mask.truncation = volume.truncation;
    volume.Validate();
    if (!(mask.gamma > 0)) throw std::invalid_argument("gamma must be positive");
    if (!(mask.theta > 0)) throw std::invalid_argument("theta must be positive");
    if (mask.erode_radius < 0 || mask.dilate_radius < 0) {
        throw std::invalid_argument("morphology radii must be non-negative");
    }
    if (mask.connectivity != 4 && mask.connectivity != 8) {
        throw std::invalid_argument("connectivity must be 4 or 8");
    }
    if (!(registration.color_weight >= 0)) {
        throw std::invalid_argument("color_weight must be non-negative");
    }
    if (registration.pyramid_levels < 1) {
        throw std::invalid_argument("pyramid_levels must be >= 1");
    }
    if (registration.max_iterations < 1) {
        throw std::invalid_argument("max_iterations must be >= 1");
    }
    if (!(registration.lm_lambda_init > 0) || !(registration.lm_lambda_up > 1) ||
        !(registration.lm_lambda_down > 1)) {
        throw std::invalid_argument("invalid LM damping schedule");
    }
    if (!(registration.convergence_eps > 0)) {
        throw std::invalid_argument("convergence_eps must be positive");
    }
    if (registration.min_valid_residuals < 1) {
        throw std::invalid_argument("min_valid_residuals must be >= 1");
    }
    if (refinement.window < 1) throw std::invalid_argument("refine_window must be >= 1");
    if (!(refinement.far_value > volume.max_depth)) {
        throw std::invalid_argument("far_value must exceed max_depth");
    }
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (!(max_dt > 0)) throw std::invalid_argument("max_dt must be positive");
}

namespace {

bool ParseBool(const std::string& value, const std::string& key) {
    if (value == "1" || value == "true" || value == "on") return true;
    if (value == "0" || value == "false" || value == "off") return false;
    throw std::invalid_argument("expected boolean for " + key + ", got '" + value + "'");
}

// Strict conversions: the whole token must be consumed.
double ToDouble(const std::string& value) {
    std::size_t pos = 0;
    const double out = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return out;
}

int ToInt(const std::string& value) {
    std::size_t pos = 0;
    const int out = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return out;
}

std::size_t ToSize(const std::string& value) {
    std::size_t pos = 0;
    const unsigned long out = std::stoul(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::size_t>(out);
}

}  // namespace

PipelineConfig ParseConfig(const std::string& text, const std::string& source_name) {
    PipelineConfig config;
    const std::map<std::string, std::function<void(const std::string&)>> setters = {
        {"voxel_size", [&](const std::string& v) { config.volume.voxel_size = ToDouble(v); }},
        {"truncation", [&](const std::string& v) { config.volume.truncation = ToDouble(v); }},
        {"block_side", [&](const std::string& v) { config.volume.block_side = ToInt(v); }},
        {"max_weight", [&](const std::string& v) { config.volume.max_weight = ToInt(v); }},
        {"carve_weight", [&](const std::string& v) { config.volume.carve_weight = ToInt(v); }},
        {"min_depth", [&](const std::string& v) { config.volume.min_depth = ToDouble(v); }},
        {"max_depth", [&](const std::string& v) { config.volume.max_depth = ToDouble(v); }},
        {"carve_clip", [&](const std::string& v) { config.volume.carve_clip = ToDouble(v); }},
        {"max_blocks", [&](const std::string& v) { config.volume.max_blocks = ToSize(v); }},
        {"color_weight",
         [&](const std::string& v) { config.registration.color_weight = ToDouble(v); }},
        {"pyramid_levels",
         [&](const std::string& v) { config.registration.pyramid_levels = ToInt(v); }},
        {"max_iterations",
         [&](const std::string& v) { config.registration.max_iterations = ToInt(v); }},
        {"lm_lambda_init",
         [&](const std::string& v) { config.registration.lm_lambda_init = ToDouble(v); }},
        {"lm_lambda_up",
         [&](const std::string& v) { config.registration.lm_lambda_up = ToDouble(v); }},
        {"lm_lambda_down",
         [&](const std::string& v) { config.registration.lm_lambda_down = ToDouble(v); }},
        {"convergence_eps",
         [&](const std::string& v) { config.registration.convergence_eps = ToDouble(v); }},
        {"min_valid_residuals",
         [&](const std::string& v) { config.registration.min_valid_residuals = ToInt(v); }},
        {"gamma", [&](const std::string& v) { config.mask.gamma = ToDouble(v); }},
        {"theta", [&](const std::string& v) { config.mask.theta = ToDouble(v); }},
        {"erode_radius", [&](const std::string& v) { config.mask.erode_radius = ToInt(v); }},
        {"dilate_radius", [&](const std::string& v) { config.mask.dilate_radius = ToInt(v); }},
        {"connectivity", [&](const std::string& v) { config.mask.connectivity = ToInt(v); }},
        {"refine_depth",
         [&](const std::string& v) { config.refinement.enabled = ParseBool(v, "refine_depth"); }},
        {"refine_window", [&](const std::string& v) { config.refinement.window = ToInt(v); }},
        {"far_value", [&](const std::string& v) { config.refinement.far_value = ToDouble(v); }},
        {"dynamics",
         [&](const std::string& v) { config.dynamics_enabled = ParseBool(v, "dynamics"); }},
        {"threads", [&](const std::string& v) { config.threads = ToInt(v); }},
        {"max_dt", [&](const std::string& v) { config.max_dt = ToDouble(v); }},
    };

    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = source_name + ":" + std::to_string(line_no);
        const std::size_t comment = line.find('#');
        if (comment != std::string::npos) line.erase(comment);
        const std::size_t eq = line.find('=');
        std::string key = line.substr(0, eq == std::string::npos ? line.size() : eq);
        key.erase(0, key.find_first_not_of(" \t\r"));
        key.erase(key.find_last_not_of(" \t\r") + 1);
        if (key.empty()) {
            continue;
        }
        if (eq == std::string::npos) {
            throw std::invalid_argument(where + ": expected key = value");
        }
        std::string value = line.substr(eq + 1);
        value.erase(0, value.find_first_not_of(" \t\r"));
        value.erase(value.find_last_not_of(" \t\r") + 1);
        const auto it = setters.find(key);
        if (it == setters.end()) {
            throw std::invalid_argument(where + ": unknown key '" + key + "'");
        }
        try {
            it->second(value);
        } catch (const std::exception&) {
            throw std::invalid_argument(where + ": bad value '" + value + "' for " + key);
        }
    }
    config.Sync();
    return config;
}

PipelineConfig ParseConfigFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return ParseConfig(text.str(), path);
}

void WriteConfigFile(const std::string& path, const PipelineConfig& config) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "voxel_size = " << config.volume.voxel_size << "\n";
    out << "truncation = " << config.volume.truncation << "\n";
    out << "block_side = " << config.volume.block_side << "\n";
    out << "max_weight = " << config.volume.max_weight << "\n";
    out << "carve_weight = " << config.volume.carve_weight << "\n";
    out << "min_depth = " << config.volume.min_depth << "\n";
    out << "max_depth = " << config.volume.max_depth << "\n";
    out << "carve_clip = " << config.volume.carve_clip << "\n";
    out << "max_blocks = " << config.volume.max_blocks << "\n";
    out << "color_weight = " << config.registration.color_weight << "\n";
    out << "pyramid_levels = " << config.registration.pyramid_levels << "\n";
    out << "max_iterations = " << config.registration.max_iterations << "\n";
    out << "lm_lambda_init = " << config.registration.lm_lambda_init << "\n";
    out << "lm_lambda_up = " << config.registration.lm_lambda_up << "\n";
    out << "lm_lambda_down = " << config.registration.lm_lambda_down << "\n";
    out << "convergence_eps = " << config.registration.convergence_eps << "\n";
    out << "min_valid_residuals = " << config.registration.min_valid_residuals << "\n";
    out << "gamma = " << config.mask.gamma << "\n";
    out << "theta = " << config.mask.theta << "\n";
    out << "erode_radius = " << config.mask.erode_radius << "\n";
    out << "dilate_radius = " << config.mask.dilate_radius << "\n";
    out << "connectivity = " << config.mask.connectivity << "\n";
    out << "refine_depth = " << (config.refinement.enabled ? 1 : 0) << "\n";
    out << "refine_window = " << config.refinement.window << "\n";
    out << "far_value = " << config.refinement.far_value << "\n";
    out << "dynamics = " << (config.dynamics_enabled ? 1 : 0) << "\n";
    out << "threads = " << config.threads << "\n";
    out << "max_dt = " << config.max_dt << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace tsdfslam
