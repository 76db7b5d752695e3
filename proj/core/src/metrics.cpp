#include "dgcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "dgcl/error.hpp"

namespace dgcl {

AccuracyTensor::AccuracyTensor(std::vector<DomainId> train_domains, std::vector<DomainId> domains,
                               std::optional<DomainId> unseen_domain)
    : train_domains_(std::move(train_domains)), domains_(std::move(domains)), unseen_(unseen_domain) {
    if (train_domains_.empty()) fail(ErrorKind::protocol, "accuracy tensor needs at least one task");
    for (DomainId d : train_domains_)
        if (std::find(domains_.begin(), domains_.end(), d) == domains_.end())
            fail(ErrorKind::protocol, "training domain " + std::to_string(d) + " is not an evaluated domain");
    if (unseen_) {
        if (std::find(domains_.begin(), domains_.end(), *unseen_) == domains_.end())
            fail(ErrorKind::protocol, "unseen domain is not an evaluated domain");
        if (std::find(train_domains_.begin(), train_domains_.end(), *unseen_) != train_domains_.end())
            fail(ErrorKind::protocol, "unseen domain is also a training domain");
    }
    const std::size_t T = train_domains_.size();
    values_.assign(T * domains_.size() * T, std::nullopt);
}

std::vector<DomainId> AccuracyTensor::seen_domains() const {
    std::set<DomainId> s(train_domains_.begin(), train_domains_.end());
    return {s.begin(), s.end()};
}

std::size_t AccuracyTensor::domain_index(DomainId d) const {
    auto it = std::find(domains_.begin(), domains_.end(), d);
    if (it == domains_.end()) fail(ErrorKind::protocol, "domain " + std::to_string(d) + " not in accuracy tensor");
    return static_cast<std::size_t>(it - domains_.begin());
}

std::size_t AccuracyTensor::index(std::size_t task, std::size_t dom_index, std::size_t checkpoint) const {
    const std::size_t T = num_tasks();
    if (task >= T || checkpoint >= T) fail(ErrorKind::protocol, "task or checkpoint index out of range");
    return (checkpoint * T + task) * domains_.size() + dom_index;
}

void AccuracyTensor::set(std::size_t task, DomainId domain, std::size_t checkpoint, double value) {
    if (checkpoint < task) fail(ErrorKind::protocol, "accuracy is undefined before the task is learned");
    if (!(value >= 0.0 && value <= 1.0)) fail(ErrorKind::protocol, "accuracy outside [0, 1]");
    values_[index(task, domain_index(domain), checkpoint)] = value;
}

std::optional<double> AccuracyTensor::get(std::size_t task, DomainId domain, std::size_t checkpoint) const {
    return values_[index(task, domain_index(domain), checkpoint)];
}

double AccuracyTensor::at(std::size_t task, DomainId domain, std::size_t checkpoint) const {
    auto v = get(task, domain, checkpoint);
    if (!v)
        fail(ErrorKind::protocol, "missing accuracy cell (task " + std::to_string(task) + ", domain " +
                                      std::to_string(domain) + ", checkpoint " + std::to_string(checkpoint) + ")");
    return *v;
}

nlohmann::json AccuracyTensor::to_json() const {
    using json = nlohmann::json;
    const std::size_t T = num_tasks();
    json checkpoints = json::array();
    for (std::size_t i = 0; i < T; ++i) {
        json rows = json::array();
        for (std::size_t t = 0; t < T; ++t) {
            json row = json::array();
            for (std::size_t k = 0; k < domains_.size(); ++k) {
                const auto& v = values_[index(t, k, i)];
                row.push_back(v ? json(*v) : json(nullptr));
            }
            rows.push_back(row);
        }
        checkpoints.push_back(rows);
    }
    return {{"num_tasks", T},
            {"domains", domains_},
            {"train_domains", train_domains_},
            {"unseen_domain", unseen_ ? json(*unseen_) : json(nullptr)},
            {"accuracy", checkpoints}};
}

AccuracyTensor AccuracyTensor::from_json(const nlohmann::json& j) {
    try {
        std::optional<DomainId> unseen;
        if (j.contains("unseen_domain") && !j.at("unseen_domain").is_null()) unseen = j.at("unseen_domain").get<DomainId>();
        AccuracyTensor a(j.at("train_domains").get<std::vector<DomainId>>(), j.at("domains").get<std::vector<DomainId>>(),
                         unseen);
        const std::size_t T = a.num_tasks();
        if (j.at("num_tasks").get<std::size_t>() != T) fail(ErrorKind::protocol, "num_tasks disagrees with train_domains");
        const auto& acc = j.at("accuracy");
        if (acc.size() != T) fail(ErrorKind::protocol, "accuracy must have one entry per checkpoint");
        for (std::size_t i = 0; i < T; ++i) {
            if (acc[i].size() != T) fail(ErrorKind::protocol, "checkpoint must list every task");
            for (std::size_t t = 0; t < T; ++t) {
                if (acc[i][t].size() != a.domains_.size()) fail(ErrorKind::protocol, "task row must list every domain");
                for (std::size_t k = 0; k < a.domains_.size(); ++k) {
                    const auto& v = acc[i][t][k];
                    if (v.is_null()) continue;
                    a.set(t, a.domains_[k], i, v.get<double>());
                }
            }
        }
        return a;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::protocol, std::string("malformed accuracy tensor: ") + e.what());
    }
}

namespace {

std::vector<DomainId> complement(const std::vector<DomainId>& S, DomainId d, std::size_t task) {
    std::vector<DomainId> out;
    for (DomainId x : S)
        if (x != d) out.push_back(x);
    if (out.empty())
        fail(ErrorKind::protocol, "task " + std::to_string(task) + " has no out-domain: |S| must be at least 2");
    return out;
}

DomainId require_unseen(const AccuracyTensor& a) {
    if (!a.unseen_domain()) fail(ErrorKind::protocol, "no unseen domain recorded");
    return *a.unseen_domain();
}

double forgetting(const AccuracyTensor& a, std::size_t t, DomainId d) {
    const std::size_t last = a.num_tasks() - 1;
    double best = a.at(t, d, t);
    for (std::size_t i = t + 1; i <= last; ++i) best = std::max(best, a.at(t, d, i));
    return best - a.at(t, d, last);
}

}  // namespace

double a_all(const AccuracyTensor& a) {
    const std::size_t T = a.num_tasks(), last = T - 1;
    const auto S = a.seen_domains();
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        double s = 0.0;
        for (DomainId d : S) s += a.at(t, d, last);
        total += s / static_cast<double>(S.size());
    }
    return total / static_cast<double>(T);
}

double a_in(const AccuracyTensor& a) {
    const std::size_t T = a.num_tasks(), last = T - 1;
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) total += a.at(t, a.train_domains()[t], last);
    return total / static_cast<double>(T);
}

double a_out(const AccuracyTensor& a) {
    const std::size_t T = a.num_tasks(), last = T - 1;
    const auto S = a.seen_domains();
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        auto out = complement(S, a.train_domains()[t], t);
        double s = 0.0;
        for (DomainId d : out) s += a.at(t, d, last);
        total += s / static_cast<double>(out.size());
    }
    return total / static_cast<double>(T);
}

double w_out(const AccuracyTensor& a) {
    const std::size_t T = a.num_tasks(), last = T - 1;
    const auto S = a.seen_domains();
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        auto out = complement(S, a.train_domains()[t], t);
        double worst = 1.0;
        for (DomainId d : out) worst = std::min(worst, a.at(t, d, last));
        total += worst;
    }
    return total / static_cast<double>(T);
}

double a_un(const AccuracyTensor& a) {
    const DomainId u = require_unseen(a);
    const std::size_t T = a.num_tasks();
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) total += a.at(t, u, T - 1);
    return total / static_cast<double>(T);
}

double f_all(const AccuracyTensor& a) {
    const std::size_t T = a.num_tasks();
    const auto S = a.seen_domains();
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        double s = 0.0;
        for (DomainId d : S) s += forgetting(a, t, d);
        total += s / static_cast<double>(S.size());
    }
    return total / static_cast<double>(T);
}

double f_un(const AccuracyTensor& a) {
    const DomainId u = require_unseen(a);
    const std::size_t T = a.num_tasks();
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) total += forgetting(a, t, u);
    return total / static_cast<double>(T);
}

MetricValues compute_metrics(const AccuracyTensor& a) {
    auto attempt = [&](double (*f)(const AccuracyTensor&)) -> std::optional<double> {
        try {
            return f(a);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::protocol) throw;
            return std::nullopt;
        }
    };
    MetricValues v;
    v.a_all = a_all(a);
    v.a_in = a_in(a);
    v.a_out = attempt(a_out);
    v.w_out = attempt(w_out);
    v.f_all = f_all(a);
    if (a.unseen_domain()) {
        v.a_un = a_un(a);
        v.f_un = f_un(a);
    }
    return v;
}

std::optional<double> metric_by_name(const MetricValues& v, std::string_view name) {
    if (name == "A_all") return v.a_all;
    if (name == "A_in") return v.a_in;
    if (name == "A_out") return v.a_out;
    if (name == "W_out") return v.w_out;
    if (name == "A_un") return v.a_un;
    if (name == "F_all") return v.f_all;
    if (name == "F_un") return v.f_un;
    fail(ErrorKind::contract, "unknown metric " + std::string(name));
}

std::optional<std::pair<double, double>> MetricsReport::aggregate(std::string_view metric) const {
    if (runs.empty()) return std::nullopt;
    std::vector<double> xs;
    for (const auto& r : runs) {
        auto v = metric_by_name(r.values, metric);
        if (!v) return std::nullopt;
        xs.push_back(*v);
    }
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    return std::make_pair(mean, sd);
}

nlohmann::json MetricsReport::to_json() const {
    using json = nlohmann::json;
    json per_seed = json::array();
    for (const auto& r : runs) {
        json m = json::object();
        for (const char* name : kMetricNames) {
            auto v = metric_by_name(r.values, name);
            m[name] = v ? json(*v) : json(nullptr);
        }
        per_seed.push_back({{"seed", r.seed}, {"metrics", m}});
    }
    json agg = json::object();
    for (const char* name : kMetricNames) {
        auto s = aggregate(name);
        agg[name] = s ? json{{"mean", s->first}, {"std", s->second}} : json(nullptr);
    }
    return {{"config", config}, {"runs", per_seed}, {"aggregate", agg}};
}

std::string MetricsReport::to_table() const {
    std::vector<std::string> cols;
    for (const char* name : kMetricNames)
        if (aggregate(name)) cols.push_back(name);
    std::string out = fmt::format("{:<10}", "seed");
    for (const auto& c : cols) out += fmt::format(" {:>15}", c);
    out += '\n';
    for (const auto& r : runs) {
        out += fmt::format("{:<10}", r.seed);
        for (const auto& c : cols) out += fmt::format(" {:>15.2f}", 100.0 * *metric_by_name(r.values, c));
        out += '\n';
    }
    out += fmt::format("{:<10}", "mean±std");
    for (const auto& c : cols) {
        auto s = *aggregate(c);
        out += fmt::format(" {:>15}", fmt::format("{:.2f} ± {:.2f}", 100.0 * s.first, 100.0 * s.second));
    }
    out += '\n';
    return out;
}

}  // namespace dgcl
