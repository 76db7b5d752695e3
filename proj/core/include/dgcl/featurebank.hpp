#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgcl/tensor.hpp"

namespace dgcl {

using ClassId = std::uint32_t;
using DomainId = std::uint32_t;

enum class Split : std::uint8_t { train = 0, test = 1 };

struct FeatureRecord {
    ClassId class_id = 0;
    DomainId domain_id = 0;
    Split split = Split::train;
    Tensor layers;  // L×m; row L-1 is the final-layer feature

    Tensor final_layer() const { return slice_rows(layers, layers.rows() - 1, layers.rows()); }
};

struct TaskSpec {
    std::vector<ClassId> classes;
    DomainId train_domain = 0;
};

struct FeatureBank {
    std::uint32_t m = 0;
    std::uint32_t L = 0;
    std::vector<std::string> class_names;
    std::vector<std::string> domain_names;
    std::vector<TaskSpec> tasks;
    std::vector<DomainId> unseen_domains;
    std::string pooling;
    // Free-form producer provenance (generator config, exporter spec).
    nlohmann::json producer = nlohmann::json::object();
    std::vector<FeatureRecord> records;

    std::size_t num_tasks() const { return tasks.size(); }
    // Domains that are some task's training domain, ascending.
    std::vector<DomainId> seen_domains() const;
    bool is_unseen(DomainId d) const;
    // Task index owning a class, if any.
    std::optional<std::size_t> task_of(ClassId c) const;
};

// Throws ErrorKind::invariant naming the first violation.
void validate(const FeatureBank& bank);

inline constexpr char kBankMagic[4] = {'D', 'G', 'F', 'B'};
inline constexpr std::uint16_t kBankVersion = 1;
// Fixed header after the magic: version u16, m u32, L u32, count u64.
inline constexpr std::size_t kBankFixedHeaderBytes = 18;

std::size_t record_payload_bytes(std::uint32_t m, std::uint32_t L);

nlohmann::json bank_metadata(const FeatureBank& bank);
std::vector<std::uint8_t> encode_bank(const FeatureBank& bank);
FeatureBank decode_bank(const std::vector<std::uint8_t>& bytes);

void write_bank(const FeatureBank& bank, const std::filesystem::path& path);
FeatureBank read_bank(const std::filesystem::path& path);

struct RecordFilter {
    std::optional<std::size_t> task = std::nullopt;
    std::optional<ClassId> class_id = std::nullopt;
    std::optional<DomainId> domain = std::nullopt;
    std::optional<Split> split = std::nullopt;
};

// Pointers into bank.records in bank order; the bank must outlive the view.
using RecordView = std::vector<const FeatureRecord*>;
RecordView select(const FeatureBank& bank, const RecordFilter& filter = {});

std::string_view to_string(Split s);

}  // namespace dgcl
