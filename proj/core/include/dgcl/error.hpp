#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dgcl {

enum class ErrorKind {
    dimension,
    domain,
    contract,
    numeric,
    degenerate_input,
    io,
    bad_magic,
    version_mismatch,
    truncated,
    invariant,
    protocol,
    config,
    separation_infeasible,
    task_order,
    missing_records,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::vector<std::string> fields = {});

    ErrorKind kind() const noexcept { return kind_; }
    // Per-field violations, populated for config errors.
    const std::vector<std::string>& fields() const noexcept { return fields_; }

private:
    ErrorKind kind_;
    std::vector<std::string> fields_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace dgcl
