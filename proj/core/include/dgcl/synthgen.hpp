#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgcl/featurebank.hpp"

namespace dgcl {

struct SynthConfig {
    std::uint32_t classes = 10;
    std::uint32_t domains = 4;
    bool unseen_domain = false;
    std::uint32_t tasks = 5;
    std::uint32_t m = 64;
    std::uint32_t L = 6;
    std::uint32_t train_per_class = 100;
    std::uint32_t test_per_class_domain = 50;

    double domain_shift = 100.0;     // s_dom: norm of each domain's style offset
    double semantic_separation = 8.0;  // s_sem: minimum pairwise anchor distance
    double anchor_scale = 1.1;       // per-coordinate std of class anchors
    double noise = 0.5;              // σ_n
    double code_scale = 3.0;         // per-sample layer code amplitude
    double style_noise = 4.0;        // per-sample jitter inside the style subspace
    double offset = 3.0;             // constant shift keeping features mostly positive
    double alpha_peak = 0.8;
    double alpha_final = 0.1;
    std::vector<double> alpha;       // explicit per-layer profile; empty uses the default
    std::uint32_t max_rejection_attempts = 10000;
    std::uint64_t seed = 0;

    // Default α_l = alpha_peak·sin²(πl/L) with α_L = alpha_final.
    std::vector<double> alpha_profile() const;

    nlohmann::json to_json() const;
    // Unknown keys and invalid values are reported together as one config error.
    static SynthConfig from_json(const nlohmann::json& j);
    // Lists every violated field; empty when valid.
    std::vector<std::string> violations() const;
};

FeatureBank generate(const SynthConfig& config);

struct BankSummary {
    std::uint32_t m = 0, L = 0;
    std::size_t records = 0, train_records = 0, test_records = 0;
    std::size_t num_classes = 0, num_domains = 0, num_tasks = 0;
    std::vector<DomainId> seen_domains, unseen_domains;
    struct TaskRow {
        std::vector<ClassId> classes;
        DomainId train_domain = 0;
        std::size_t train = 0, test = 0;
    };
    std::vector<TaskRow> tasks;
    std::vector<std::size_t> per_domain_train, per_domain_test;
    std::vector<std::size_t> per_class_train, per_class_test;
    std::vector<std::string> flags;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

BankSummary describe(const FeatureBank& bank);

}  // namespace dgcl
