#include "dgcl/error.hpp"

namespace dgcl {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::domain: return "domain";
        case ErrorKind::contract: return "contract";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::degenerate_input: return "degenerate_input";
        case ErrorKind::io: return "io";
        case ErrorKind::bad_magic: return "bad_magic";
        case ErrorKind::version_mismatch: return "version_mismatch";
        case ErrorKind::truncated: return "truncated";
        case ErrorKind::invariant: return "invariant";
        case ErrorKind::protocol: return "protocol";
        case ErrorKind::config: return "config";
        case ErrorKind::separation_infeasible: return "separation_infeasible";
        case ErrorKind::task_order: return "task_order";
        case ErrorKind::missing_records: return "missing_records";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message, std::vector<std::string> fields)
    : std::runtime_error(message), kind_(kind), fields_(std::move(fields)) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace dgcl
