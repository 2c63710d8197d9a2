#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace perpcli {

using nlohmann::json;

struct OutputPaths {
    std::string json;
    std::string csv;
    std::string svg;
};

struct ExperimentSpec {
    std::string command;
    json model;                        // factor model or ensemble descriptor
    json parameters = json::object();  // command specific, defaults filled by resolve()
    OutputPaths output;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::string format = "json";  // json | csv, for whatever goes to stdout
};

// Bad spec. Maps to exit code 2.
class SpecError : public std::runtime_error {
public:
    explicit SpecError(const std::string& msg, std::string status = "invalid_argument")
        : std::runtime_error(msg), status_(std::move(status)) {}
    const std::string& status() const { return status_; }

private:
    std::string status_;
};

const std::vector<std::string>& commands();

json spec_to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const json& j);
ExperimentSpec spec_from_string(const std::string& text);

// Fills in parameter defaults and validates keys. Throws SpecError.
ExperimentSpec resolve(ExperimentSpec spec);

struct RunOptions {
    bool timestamp = true;  // "# generated ..." comment in CSV output
};

struct RunResult {
    int exit_code = 0;
    std::string out;  // what goes to stdout
    std::string err;  // what goes to stderr (JSON on failure)
};

RunResult run(const ExperimentSpec& spec, const RunOptions& opts = {});

// temp file + rename
void write_atomic(const std::string& path, const std::string& content);

unsigned default_workers();

}  // namespace perpcli
