#include "dgcl/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dgcl/error.hpp"

namespace dgcl {

std::size_t storage_floats_per_class(CovarianceMode mode, std::size_t m) {
    return mode == CovarianceMode::full ? m + m * m : 2 * m;
}

ClassGaussian fit_class_gaussian(ClassId class_id, const Tensor& features, CovarianceMode mode) {
    const std::size_t n = features.empty() ? 0 : features.rows();
    if (mode == CovarianceMode::full && n < 2)
        fail(ErrorKind::degenerate_input, "full covariance needs at least 2 samples, got " + std::to_string(n));
    if (n < 1) fail(ErrorKind::degenerate_input, "class Gaussian needs at least 1 sample");
    if (!features.all_finite()) fail(ErrorKind::degenerate_input, "non-finite feature in class " + std::to_string(class_id));

    const std::size_t m = features.cols();
    ClassGaussian g;
    g.class_id = class_id;
    g.mode = mode;
    g.sample_count = n;
    g.mean = Tensor(1, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g.mean[j] += features(i, j);
    for (std::size_t j = 0; j < m; ++j) g.mean[j] /= static_cast<double>(n);

    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    if (mode == CovarianceMode::diagonal) {
        g.covariance = Tensor(1, m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                double d = features(i, j) - g.mean[j];
                g.covariance[j] += d * d;
            }
        for (std::size_t j = 0; j < m; ++j) g.covariance[j] /= denom;
        return g;
    }

    Tensor centered = features;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) centered(i, j) -= g.mean[j];
    g.covariance = scale(matmul(transpose(centered), centered), 1.0 / denom);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            double s = 0.5 * (g.covariance(i, j) + g.covariance(j, i));
            g.covariance(i, j) = g.covariance(j, i) = s;
        }
    return g;
}

GaussianSampler::GaussianSampler(const ClassGaussian& g) : mode_(g.mode) {
    const auto m = static_cast<Eigen::Index>(g.dim());
    mean_ = Eigen::Map<const Eigen::VectorXd>(g.mean.data(), m);
    if (mode_ == CovarianceMode::diagonal) {
        stddev_.resize(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            double v = g.covariance[static_cast<std::size_t>(j)];
            if (v < 0.0) fail(ErrorKind::numeric, "negative variance in class Gaussian");
            stddev_[j] = std::sqrt(v + kCovarianceJitter);
        }
        return;
    }
    Eigen::MatrixXd cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        g.covariance.data(), m, m);
    cov.diagonal().array() += kCovarianceJitter;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        fail(ErrorKind::numeric, "Cholesky factorisation failed for class " + std::to_string(g.class_id));
    lower_ = llt.matrixL();
}

Tensor GaussianSampler::sample(std::size_t n, Rng& rng) const {
    const auto m = static_cast<std::size_t>(mean_.size());
    Tensor out(n, m);
    Eigen::VectorXd z(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) z[static_cast<Eigen::Index>(j)] = rng.normal();
        Eigen::VectorXd x = mode_ == CovarianceMode::diagonal
                                ? Eigen::VectorXd(mean_ + stddev_.cwiseProduct(z))
                                : Eigen::VectorXd(mean_ + lower_.triangularView<Eigen::Lower>() * z);
        std::copy(x.data(), x.data() + m, out.row_ptr(i));
    }
    return out;
}

Tensor sample_class(const ClassGaussian& g, std::size_t n, Rng& rng) { return GaussianSampler(g).sample(n, rng); }

DomainPrototypeSet select_prototypes(DomainId domain, const std::vector<const Tensor*>& candidates,
                                     std::size_t K, PrototypeSelection mode, Rng& rng) {
    if (K == 0) fail(ErrorKind::contract, "K must be positive");
    if (candidates.size() < K)
        fail(ErrorKind::degenerate_input, "domain " + std::to_string(domain) + " has " +
                                              std::to_string(candidates.size()) + " candidates, fewer than K=" +
                                              std::to_string(K));
    DomainPrototypeSet out;
    out.domain_id = domain;
    out.mode = mode;
    std::vector<std::size_t> chosen;
    if (mode == PrototypeSelection::random) {
        chosen = rng.choose(candidates.size(), K);
    } else {
        const Tensor& first = *candidates.front();
        std::vector<double> center(first.size(), 0.0);
        for (const Tensor* c : candidates)
            for (std::size_t i = 0; i < c->size(); ++i) center[i] += (*c)[i];
        for (double& v : center) v /= static_cast<double>(candidates.size());
        std::vector<double> dist(candidates.size(), 0.0);
        for (std::size_t k = 0; k < candidates.size(); ++k)
            for (std::size_t i = 0; i < center.size(); ++i) {
                double d = (*candidates[k])[i] - center[i];
                dist[k] += d * d;
            }
        chosen.resize(candidates.size());
        std::iota(chosen.begin(), chosen.end(), std::size_t{0});
        std::stable_sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
        chosen.resize(K);
    }
    for (std::size_t idx : chosen) out.prototypes.push_back(*candidates[idx]);
    return out;
}

const Tensor& sample_domain(const DomainPrototypeSet& p, Rng& rng) {
    if (p.prototypes.empty()) fail(ErrorKind::contract, "empty prototype set");
    return p.prototypes[static_cast<std::size_t>(rng.below(p.prototypes.size()))];
}

std::string_view to_string(CovarianceMode mode) { return mode == CovarianceMode::full ? "full" : "diagonal"; }
std::string_view to_string(PrototypeSelection mode) { return mode == PrototypeSelection::random ? "random" : "knn"; }

CovarianceMode parse_covariance_mode(std::string_view s) {
    if (s == "full") return CovarianceMode::full;
    if (s == "diagonal" || s == "diag") return CovarianceMode::diagonal;
    throw Error(ErrorKind::config, "unknown covariance mode '" + std::string(s) + "'", {"covariance"});
}

PrototypeSelection parse_prototype_selection(std::string_view s) {
    if (s == "random") return PrototypeSelection::random;
    if (s == "knn") return PrototypeSelection::knn;
    throw Error(ErrorKind::config, "unknown prototype selection '" + std::string(s) + "'", {"prototype_selection"});
}

namespace {

nlohmann::json tensor_json(const Tensor& t) {
    return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.values()}};
}

Tensor tensor_from(const nlohmann::json& j) {
    return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

}  // namespace

nlohmann::json memory_to_json(const SemanticMemory& H, const DomainMemory& P) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& [c, g] : H)
        classes.push_back({{"class_id", c},
                           {"mode", to_string(g.mode)},
                           {"sample_count", g.sample_count},
                           {"mean", tensor_json(g.mean)},
                           {"covariance", tensor_json(g.covariance)}});
    nlohmann::json domains = nlohmann::json::array();
    for (const auto& [d, p] : P) {
        nlohmann::json protos = nlohmann::json::array();
        for (const auto& t : p.prototypes) protos.push_back(tensor_json(t));
        domains.push_back({{"domain_id", d}, {"mode", to_string(p.mode)}, {"prototypes", protos}});
    }
    return {{"format", "DGFB-memory"}, {"version", 1}, {"classes", classes}, {"domains", domains}};
}

void memory_from_json(const nlohmann::json& j, SemanticMemory& H, DomainMemory& P) {
    try {
        H.clear();
        P.clear();
        for (const auto& c : j.at("classes")) {
            ClassGaussian g;
            g.class_id = c.at("class_id").get<ClassId>();
            g.mode = parse_covariance_mode(c.at("mode").get<std::string>());
            g.sample_count = c.at("sample_count").get<std::size_t>();
            g.mean = tensor_from(c.at("mean"));
            g.covariance = tensor_from(c.at("covariance"));
            H.emplace(g.class_id, std::move(g));
        }
        for (const auto& d : j.at("domains")) {
            DomainPrototypeSet p;
            p.domain_id = d.at("domain_id").get<DomainId>();
            p.mode = parse_prototype_selection(d.at("mode").get<std::string>());
            for (const auto& t : d.at("prototypes")) p.prototypes.push_back(tensor_from(t));
            P.emplace(p.domain_id, std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::invariant, std::string("malformed memory sidecar: ") + e.what());
    }
}

void write_memory_sidecar(const std::filesystem::path& path, const SemanticMemory& H, const DomainMemory& P) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    f << memory_to_json(H, P).dump() << '\n';
}

void read_memory_sidecar(const std::filesystem::path& path, SemanticMemory& H, DomainMemory& P) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::io, "cannot open " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::invariant, std::string("malformed memory sidecar: ") + e.what());
    }
    memory_from_json(j, H, P);
}

}  // namespace dgcl
