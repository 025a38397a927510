#include "accelmap/error.hpp"

namespace accelmap {

std::string to_string(const Diagnostic& d) {
    const char* level = d.severity == Severity::error ? "error" : d.severity == Severity::warning ? "warning" : "notice";
    std::string out = std::string(level) + ": ";
    if (!d.field.empty()) out += d.field + ": ";
    out += d.message;
    if (!d.rule.empty()) out += " [" + d.rule + "]";
    return out;
}

std::string join_diagnostics(const std::vector<Diagnostic>& diags) {
    std::string out;
    for (const auto& d : diags) {
        if (!out.empty()) out += "; ";
        out += to_string(d);
    }
    return out;
}

}  // namespace accelmap
