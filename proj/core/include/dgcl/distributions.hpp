#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dgcl/featurebank.hpp"
#include "dgcl/rng.hpp"
#include "dgcl/tensor.hpp"

namespace dgcl {

enum class CovarianceMode { full, diagonal };
enum class PrototypeSelection { random, knn };

inline constexpr double kCovarianceJitter = 1e-6;

struct ClassGaussian {
    ClassId class_id = 0;
    CovarianceMode mode = CovarianceMode::diagonal;
    Tensor mean;        // 1×m
    Tensor covariance;  // m×m (full) or 1×m variances (diagonal)
    std::size_t sample_count = 0;

    std::size_t dim() const { return mean.cols(); }
    // Floats retained for this class: mean plus covariance entries.
    std::size_t stored_floats() const { return mean.size() + covariance.size(); }
};

std::size_t storage_floats_per_class(CovarianceMode mode, std::size_t m);

// features: n×m, one sample per row.
ClassGaussian fit_class_gaussian(ClassId class_id, const Tensor& features, CovarianceMode mode);

// Holds the factorisation of Σ+εI so repeated draws skip refactoring.
class GaussianSampler {
public:
    explicit GaussianSampler(const ClassGaussian& g);
    Tensor sample(std::size_t n, Rng& rng) const;  // n×m

private:
    CovarianceMode mode_;
    Eigen::VectorXd mean_;
    Eigen::VectorXd stddev_;
    Eigen::MatrixXd lower_;
};

Tensor sample_class(const ClassGaussian& g, std::size_t n, Rng& rng);

struct DomainPrototypeSet {
    DomainId domain_id = 0;
    PrototypeSelection mode = PrototypeSelection::random;
    std::vector<Tensor> prototypes;  // K stacks, each L×m
};

DomainPrototypeSet select_prototypes(DomainId domain, const std::vector<const Tensor*>& candidates,
                                     std::size_t K, PrototypeSelection mode, Rng& rng);

const Tensor& sample_domain(const DomainPrototypeSet& p, Rng& rng);

using SemanticMemory = std::map<ClassId, ClassGaussian>;
using DomainMemory = std::map<DomainId, DomainPrototypeSet>;

// Checkpoint sidecar: JSON with full-precision doubles.
nlohmann::json memory_to_json(const SemanticMemory& H, const DomainMemory& P);
void memory_from_json(const nlohmann::json& j, SemanticMemory& H, DomainMemory& P);
void write_memory_sidecar(const std::filesystem::path& path, const SemanticMemory& H, const DomainMemory& P);
void read_memory_sidecar(const std::filesystem::path& path, SemanticMemory& H, DomainMemory& P);

std::string_view to_string(CovarianceMode mode);
std::string_view to_string(PrototypeSelection mode);
CovarianceMode parse_covariance_mode(std::string_view s);
PrototypeSelection parse_prototype_selection(std::string_view s);

}  // namespace dgcl
