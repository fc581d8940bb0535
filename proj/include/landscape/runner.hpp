#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "landscape/config.hpp"

namespace landscape {

inline constexpr const char* kArtifactVersion = "1.0.0";

struct Table {
  std::string name;  // file stem
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct RunRecord {
  nlohmann::ordered_json json;  // config, version, wall_clock_s, results
  std::vector<Table> tables;
};

// Dispatches on cfg.command. Module errors propagate (NumericError and
// friends); the caller turns them into an error record.
RunRecord run(const ExperimentConfig& cfg);

// Record for a failed run: config snapshot plus {"error": {kind, message}}.
nlohmann::ordered_json error_record(const ExperimentConfig& cfg,
                                    const std::string& kind,
                                    const std::string& message);

// CSV text: header, rows, then one "# config <compact json>" line.
std::string to_csv(const Table& t, const ExperimentConfig& cfg);

// Writes <dir>/<command>.json and <dir>/<table>.csv; returns the paths.
std::vector<std::string> write_outputs(const RunRecord& rec,
                                       const ExperimentConfig& cfg);
void write_error(const nlohmann::ordered_json& err, const ExperimentConfig& cfg);

std::string format_real(double x);

}  // namespace landscape
