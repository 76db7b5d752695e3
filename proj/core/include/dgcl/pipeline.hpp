#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgcl/distributions.hpp"
#include "dgcl/dot_transform.hpp"
#include "dgcl/featurebank.hpp"
#include "dgcl/metrics.hpp"
#include "dgcl/objectives.hpp"

namespace dgcl {

enum class AlignSchedule { per_task, final_only };

struct EpisodeConfig {
    std::size_t e_dot = 10;
    std::size_t e_oa = 3;
    std::size_t k_prototypes = 16;
    double lambda = 0.5;
    double tau = 0.1;
    std::size_t heads = 4;
    std::size_t m_proj = 0;  // 0 means m
    CovarianceMode covariance = CovarianceMode::diagonal;
    PrototypeSelection prototype_selection = PrototypeSelection::random;
    bool no_dot = false;
    AlignSchedule align_schedule = AlignSchedule::per_task;
    AttentionScale scale = AttentionScale::per_head;
    bool normalize_projections = true;
    PositiveReduction positive_reduction = PositiveReduction::sum;
    Activation activation = Activation::relu;
    ReadoutInit readout_init = ReadoutInit::zero;

    std::size_t phase1_epochs = 20;
    std::size_t phase1_batch = 32;
    double learning_rate = 1e-3;
    std::size_t pool_per_class = 2;     // pool draws per seen class per DoT step
    std::size_t samples_per_pair = 32;  // alignment draws per (domain, class) pair
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static EpisodeConfig from_json(const nlohmann::json& j);
    std::vector<std::string> violations() const;
};

struct EpisodeState {
    EpisodeConfig config;
    std::uint32_t m = 0;
    std::uint32_t L = 0;
    SemanticMemory H;
    DomainMemory P;
    // Training domain of the task that introduced each class.
    std::map<ClassId, DomainId> class_domain;
    OutputHead head;
    std::size_t next_task = 0;

    // Floats of historical information retained (Gaussians plus prototypes).
    std::size_t retained_floats() const;
};

EpisodeState make_episode(const FeatureBank& bank, const EpisodeConfig& config);

// Phase 1 for task t: head rows, cross-entropy training, H and P updates.
void learn_task(EpisodeState& state, const FeatureBank& bank, std::size_t t);

struct DotTrainResult {
    DotParameters params;
    std::vector<double> loss_trace;  // mean loss per epoch
};

// Phase 2. Requires at least two classes in H and one domain in P.
DotTrainResult train_dot(const EpisodeState& state);

// Phase 3. With params == nullptr only the real-feature term is used.
void align_head(EpisodeState& state, const DotParameters* params);

// Argmax head predictions over the final-layer features of `records`.
std::vector<ClassId> predict(const OutputHead& head, const RecordView& records);

// Fills a_{t,d}^{(checkpoint)} for every learned task and evaluated domain.
void evaluate(const EpisodeState& state, const FeatureBank& bank, std::size_t checkpoint, AccuracyTensor& out);

AccuracyTensor empty_accuracy_tensor(const FeatureBank& bank);

struct EpisodeResult {
    EpisodeState state;
    AccuracyTensor accuracy;
    std::vector<std::vector<double>> dot_traces;  // one per DoT training round
};

EpisodeResult run_episode(const FeatureBank& bank, const EpisodeConfig& config);

std::string_view to_string(AlignSchedule s);
AlignSchedule parse_align_schedule(std::string_view s);

}  // namespace dgcl
