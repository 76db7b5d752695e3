#include <cmath>
#include <filesystem>
#include <map>

#include <gtest/gtest.h>

#include "dgcl/distributions.hpp"
#include "expect_error.hpp"
#include "oracles.hpp"

using namespace dgcl;

namespace {

Tensor correlated_samples(std::size_t n, std::size_t m, Rng& rng, Tensor* mean_out = nullptr) {
    Tensor A = oracle::random_tensor(m, m, rng, 0.5);
    Tensor mu(1, m);
    for (std::size_t j = 0; j < m; ++j) mu[j] = 2.0 + 2.0 * rng.uniform();
    Tensor z = oracle::random_tensor(n, m, rng);
    Tensor x = add_row(matmul(z, A), mu);
    if (mean_out) *mean_out = mu;
    return x;
}

struct Moments {
    Tensor mean, cov;
};

Moments moments(const Tensor& x) {
    const std::size_t n = x.rows(), m = x.cols();
    Tensor mu(1, m), cov(m, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) mu[j] += x(i, j) / n;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = 0; b < m; ++b) cov(a, b) += (x(i, a) - mu[a]) * (x(i, b) - mu[b]) / (n - 1);
    return {mu, cov};
}

}  // namespace

TEST(ClassGaussian, HandCovariance) {
    Tensor x{{0, 0}, {2, 2}};
    auto g = fit_class_gaussian(4, x, CovarianceMode::diagonal);
    EXPECT_EQ(g.class_id, 4u);
    EXPECT_EQ(g.sample_count, 2u);
    EXPECT_EQ(g.mean, (Tensor{{1, 1}}));
    EXPECT_EQ(g.covariance, (Tensor{{2, 2}}));
    auto f = fit_class_gaussian(4, x, CovarianceMode::full);
    EXPECT_EQ(f.covariance, (Tensor{{2, 2}, {2, 2}}));
}

TEST(ClassGaussian, IdenticalSamplesGiveZeroVariance) {
    Tensor x(5, 3, 1.25);
    auto g = fit_class_gaussian(0, x, CovarianceMode::diagonal);
    EXPECT_EQ(g.mean, Tensor(1, 3, 1.25));
    EXPECT_EQ(g.covariance, Tensor(1, 3, 0.0));
    Rng rng(1);
    Tensor s = sample_class(g, 1000, rng);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LE(std::abs(s[i] - 1.25), 5 * std::sqrt(kCovarianceJitter));
}

TEST(ClassGaussian, DegenerateInputs) {
    EXPECT_DGCL_ERROR(fit_class_gaussian(0, Tensor(1, 3), CovarianceMode::full), ErrorKind::degenerate_input);
    EXPECT_NO_THROW(fit_class_gaussian(0, Tensor(1, 3), CovarianceMode::diagonal));
}

TEST(ClassGaussian, FullCovarianceIsExactlySymmetric) {
    Rng rng(3);
    auto g = fit_class_gaussian(0, correlated_samples(50, 6, rng), CovarianceMode::full);
    for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = 0; b < 6; ++b) EXPECT_EQ(g.covariance(a, b), g.covariance(b, a));
}

TEST(ClassGaussian, MonteCarloRecoversKnown3d) {
    Rng rng(4);
    Tensor truth_mu{{1.0, -2.0, 0.5}};
    Tensor x(10000, 3);
    const double sd[3] = {1.0, 0.5, 0.8};
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = truth_mu[j] + sd[j] * rng.normal();
    auto g = fit_class_gaussian(0, x, CovarianceMode::diagonal);
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_NEAR(g.mean[j], truth_mu[j], 0.05);
        EXPECT_NEAR(g.covariance[j], sd[j] * sd[j], 0.1);
    }
}

TEST(ClassGaussian, SamplingFidelity) {
    Rng rng(5);
    auto full = fit_class_gaussian(0, correlated_samples(300, 8, rng), CovarianceMode::full);
    Rng draw(6);
    auto mo = moments(sample_class(full, 100000, draw));
    for (std::size_t a = 0; a < 8; ++a) {
        EXPECT_LE(std::abs(mo.mean[a] - full.mean[a]), 0.01 * std::abs(full.mean[a]));
        for (std::size_t b = 0; b < 8; ++b) {
            const double scale = std::sqrt(full.covariance(a, a) * full.covariance(b, b));
            EXPECT_LE(std::abs(mo.cov(a, b) - full.covariance(a, b)), 0.05 * scale);
        }
    }
    auto diag = fit_class_gaussian(0, correlated_samples(300, 8, rng), CovarianceMode::diagonal);
    mo = moments(sample_class(diag, 100000, draw));
    for (std::size_t a = 0; a < 8; ++a) {
        EXPECT_LE(std::abs(mo.mean[a] - diag.mean[a]), 0.01 * std::abs(diag.mean[a]));
        EXPECT_LE(std::abs(mo.cov(a, a) - diag.covariance[a]), 0.05 * diag.covariance[a]);
    }
}

TEST(ClassGaussian, SamplingIsDeterministic) {
    Rng rng(7);
    auto g = fit_class_gaussian(0, correlated_samples(40, 5, rng), CovarianceMode::full);
    Rng a(11), b(11);
    EXPECT_EQ(sample_class(g, 20, a), sample_class(g, 20, b));
}

TEST(ClassGaussian, NonPositiveCovarianceIsNumericError) {
    ClassGaussian g;
    g.mode = CovarianceMode::full;
    g.mean = Tensor(1, 2);
    g.covariance = Tensor{{1.0, 0.0}, {0.0, -5.0}};
    g.sample_count = 2;
    EXPECT_DGCL_ERROR(GaussianSampler{g}, ErrorKind::numeric);
}

TEST(ClassGaussian, StorageAccounting) {
    EXPECT_EQ(storage_floats_per_class(CovarianceMode::diagonal, 768), 1536u);
    EXPECT_EQ(storage_floats_per_class(CovarianceMode::full, 768), 768u + 768u * 768u);
    Rng rng(8);
    auto x = correlated_samples(10, 6, rng);
    EXPECT_EQ(fit_class_gaussian(0, x, CovarianceMode::diagonal).stored_floats(),
              storage_floats_per_class(CovarianceMode::diagonal, 6));
    EXPECT_EQ(fit_class_gaussian(0, x, CovarianceMode::full).stored_floats(),
              storage_floats_per_class(CovarianceMode::full, 6));
}

namespace {

std::vector<Tensor> stacks(std::size_t n, Rng& rng) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(oracle::random_tensor(3, 4, rng));
    return out;
}

std::vector<const Tensor*> ptrs(const std::vector<Tensor>& v) {
    std::vector<const Tensor*> out;
    for (const auto& t : v) out.push_back(&t);
    return out;
}

}  // namespace

TEST(Prototypes, KEqualsCandidateCountKeepsAll) {
    Rng rng(1);
    auto c = stacks(5, rng);
    for (auto mode : {PrototypeSelection::random, PrototypeSelection::knn}) {
        auto set = select_prototypes(2, ptrs(c), 5, mode, rng);
        ASSERT_EQ(set.prototypes.size(), 5u);
        EXPECT_EQ(set.domain_id, 2u);
        for (const auto& t : c) EXPECT_NE(std::find(set.prototypes.begin(), set.prototypes.end(), t), set.prototypes.end());
    }
}

TEST(Prototypes, KnnExcludesOutlier) {
    Rng rng(2);
    auto c = stacks(6, rng);
    c[3] = Tensor(3, 4, 100.0);
    auto set = select_prototypes(0, ptrs(c), 5, PrototypeSelection::knn, rng);
    EXPECT_EQ(std::find(set.prototypes.begin(), set.prototypes.end(), c[3]), set.prototypes.end());
}

TEST(Prototypes, RandomSelectionIsDeterministic) {
    Rng rng(3);
    auto c = stacks(20, rng);
    Rng a(5), b(5);
    EXPECT_EQ(select_prototypes(0, ptrs(c), 4, PrototypeSelection::random, a).prototypes,
              select_prototypes(0, ptrs(c), 4, PrototypeSelection::random, b).prototypes);
}

TEST(Prototypes, TooFewCandidates) {
    Rng rng(4);
    auto c = stacks(3, rng);
    EXPECT_DGCL_ERROR(select_prototypes(0, ptrs(c), 4, PrototypeSelection::random, rng), ErrorKind::degenerate_input);
}

TEST(Prototypes, SampleDomainIsUniform) {
    Rng rng(5);
    auto c = stacks(4, rng);
    auto set = select_prototypes(0, ptrs(c), 4, PrototypeSelection::knn, rng);
    std::map<const Tensor*, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) counts[&sample_domain(set, rng)]++;
    ASSERT_EQ(counts.size(), 4u);
    const double sigma = std::sqrt(n * 0.25 * 0.75);
    for (auto& [p, k] : counts) EXPECT_LE(std::abs(k - n * 0.25), 4.9 * sigma);

    auto one = select_prototypes(0, {&c[0]}, 1, PrototypeSelection::random, rng);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_domain(one, rng), c[0]);
}

TEST(Memory, SidecarRoundTrip) {
    Rng rng(6);
    SemanticMemory H;
    H[3] = fit_class_gaussian(3, correlated_samples(10, 4, rng), CovarianceMode::full);
    H[7] = fit_class_gaussian(7, correlated_samples(10, 4, rng), CovarianceMode::diagonal);
    DomainMemory P;
    auto c = stacks(6, rng);
    P[1] = select_prototypes(1, ptrs(c), 3, PrototypeSelection::random, rng);
    auto path = std::filesystem::temp_directory_path() / "dgcl_memory_sidecar.json";
    write_memory_sidecar(path, H, P);
    SemanticMemory H2;
    DomainMemory P2;
    read_memory_sidecar(path, H2, P2);
    std::filesystem::remove(path);
    ASSERT_EQ(H2.size(), 2u);
    EXPECT_EQ(H2.at(3).covariance, H.at(3).covariance);
    EXPECT_EQ(H2.at(7).mean, H.at(7).mean);
    EXPECT_EQ(H2.at(7).mode, CovarianceMode::diagonal);
    EXPECT_EQ(P2.at(1).prototypes, P.at(1).prototypes);
}
