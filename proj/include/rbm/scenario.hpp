#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace rbm {

inline constexpr const char* kToolVersion = "0.1.0";

// Raised on any scenario schema or invariant problem; `field` is the JSON
// pointer-ish location of the offending entry.
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct RunOptions {
    std::string out_dir;  // empty = scenario "out" field, else "."
    std::optional<unsigned> workers;
    std::optional<std::uint64_t> seed;
};

// Exit codes: 0 all declared checks pass, 1 a check failed, 2 validation
// failure, 3 numerical failure.
int run_scenario_file(const std::string& path, const RunOptions& options, std::ostream& log);

// Parses and validates without computing; 0 or 2.
int validate_scenario_file(const std::string& path, std::ostream& log);

// Human-readable schema of the scenario JSON format.
const char* scenario_schema_text();

// FNV-1a 64-bit hash of the raw scenario bytes, hex-encoded.
std::string file_hash_hex(const std::string& path);

}  // namespace rbm
