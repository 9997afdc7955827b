// Config-driven experiment runner: scenarios, manifests, peak extraction.
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "concentra/ansatz.hpp"
#include "concentra/reduced.hpp"

namespace concentra::cli {

struct ExperimentConfig {
    nlohmann::json raw;
    std::string scenario;
    unsigned seed = 0;

    static ExperimentConfig parse_file(const std::string& path);
    static ExperimentConfig parse_string(const std::string& text, const std::string& origin);
};

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0;
    std::string detail;
};

struct RunManifest {
    std::string config_hash;
    std::string scenario;
    std::vector<std::string> files;
    std::vector<CheckResult> checks;
    double wall_seconds = 0;
    bool passed = false;
    nlohmann::json to_json() const;
};

// Executes the scenario, writes artifacts + manifest.json under out_dir, returns the manifest.
RunManifest run(const ExperimentConfig& config, const std::string& out_dir, bool serial = false);

// Peak extraction: local maxima of |u| above 10x the RMS value, refined per axis by
// quadratic interpolation. delta_hat = (alpha_n / height)^{2/(n-2)}.
struct Peak {
    Vec3 position;
    double height = 0;       // signed value at the refined maximum of |u|
    double delta_hat = 0;
};
std::vector<Peak> extract_peaks(const fd::GridField& u, int expected = -1);

// Shared builders (config sub-objects -> domain/weight).
std::shared_ptr<geom::DomainModel> domain_from_json(const nlohmann::json& j);
geom::WeightField weight_from_json(const nlohmann::json& j, const geom::DomainModel& dom);

std::string fnv1a_hash(const std::string& text);

}  // namespace concentra::cli
