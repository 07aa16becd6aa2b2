// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corematch/cost.hpp"
#include "corematch/criteria.hpp"
#include "corematch/engine.hpp"

namespace corematch::report {

using nlohmann::json;

/// Bumped whenever a JSON or CSV layout below changes.
inline constexpr int kSchemaVersion = 1;

/// Shortest text that reads back to the same double ("%.17g").
std::string format_double(double x);

json to_json(const cost::CostReport& r);
json to_json(const cost::MemoryReport& r);
json to_json(const criteria::ValidationSummary& s);
json to_json(const criteria::Observation1Report& r);
json to_json(const sparsity::CoreTokenSelection& s);
json to_json(const engine::GenerationResult& g);
json to_json(const engine::TokenCountStats& s);

/// One row per token: "layer,position,attention,exact_projection,approx_projection,intersection".
void write_scores_csv(std::ostream& out, const criteria::CriterionReport& r);

/// Binned plot data: "validator,layer,x_lo,x_hi,x_mean,y_mean,count".
void write_bins_csv_header(std::ostream& out);
void write_bins_csv_rows(std::ostream& out, const criteria::ValidationSummary& s);

/// Writes text to path, throwing IoError on failure.
void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace corematch::report
