#pragma once

#include <iosfwd>
#include <string>

#include "cli/run_config.hpp"

namespace fusionest::cli {

/// Runs the configured command. Returns 0 on success, 1 on a validation
/// error, 2 on a runtime failure.
int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Learners for `estimate` after filling the automatic choices from the data.
CrossFitSpec estimate_learners(const RunConfig& config, const Dataset& data);

/// JSON summary document of a benchmark.
std::string summary_json(const BenchmarkResult& result, const std::string& generated_at);

/// UTC time as ISO-8601.
std::string utc_timestamp();

}  // namespace fusionest::cli
