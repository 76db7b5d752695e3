#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgcl/featurebank.hpp"

namespace dgcl {

// a_{t,d}^{(i)}: accuracy of task t on domain d after checkpoint i (0-based).
class AccuracyTensor {
public:
    AccuracyTensor() = default;
    AccuracyTensor(std::vector<DomainId> train_domains, std::vector<DomainId> domains,
                   std::optional<DomainId> unseen_domain);

    std::size_t num_tasks() const { return train_domains_.size(); }
    const std::vector<DomainId>& train_domains() const { return train_domains_; }
    // Every evaluated domain, including the unseen one.
    const std::vector<DomainId>& domains() const { return domains_; }
    // S: distinct training domains, ascending.
    std::vector<DomainId> seen_domains() const;
    std::optional<DomainId> unseen_domain() const { return unseen_; }

    void set(std::size_t task, DomainId domain, std::size_t checkpoint, double value);
    std::optional<double> get(std::size_t task, DomainId domain, std::size_t checkpoint) const;
    // Throws a protocol error when the cell is undefined.
    double at(std::size_t task, DomainId domain, std::size_t checkpoint) const;

    nlohmann::json to_json() const;
    static AccuracyTensor from_json(const nlohmann::json& j);

private:
    std::size_t index(std::size_t task, std::size_t dom_index, std::size_t checkpoint) const;
    std::size_t domain_index(DomainId d) const;

    std::vector<DomainId> train_domains_;
    std::vector<DomainId> domains_;
    std::optional<DomainId> unseen_;
    std::vector<std::optional<double>> values_;
};

double a_all(const AccuracyTensor& a);
double a_in(const AccuracyTensor& a);
double a_out(const AccuracyTensor& a);
double w_out(const AccuracyTensor& a);
double a_un(const AccuracyTensor& a);
double f_all(const AccuracyTensor& a);
double f_un(const AccuracyTensor& a);

struct MetricValues {
    std::optional<double> a_all, a_in, a_out, w_out, a_un, f_all, f_un;
};

inline constexpr const char* kMetricNames[] = {"A_all", "A_in", "A_out", "W_out", "A_un", "F_all", "F_un"};

// Metrics whose preconditions fail are left empty.
MetricValues compute_metrics(const AccuracyTensor& a);
std::optional<double> metric_by_name(const MetricValues& v, std::string_view name);

struct SeedMetrics {
    std::uint64_t seed = 0;
    MetricValues values;
};

struct MetricsReport {
    std::vector<SeedMetrics> runs;
    nlohmann::json config = nlohmann::json::object();

    // Mean and sample standard deviation over runs, when defined for all.
    std::optional<std::pair<double, double>> aggregate(std::string_view metric) const;
    nlohmann::json to_json() const;
    std::string to_table() const;
};

}  // namespace dgcl
