//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <string>

#include <json.hpp>

#include "hdmm/error_analysis.hpp"
#include "hdmm/mechanism.hpp"
#include "hdmm/workload.hpp"

namespace hdmm {

// Stable key order for diffable output.
using Json = nlohmann::ordered_json;

// Workload document:
// {"schema":[{"name":"age","size":115},...],
//  "terms":[{"weight":1.0,"blocks":{"age":"prefix","sex":"identity"}},...]}
// Block values: "identity" | "total" | "prefix" | "allrange",
// {"range_width": 32}, {"dense": [[...]]}, {"permuted_range": {"seed": 7}}.
// Omitted attributes mean "total". Generator shorthand replaces "terms":
// {"generate":{"kind":"up_to_kway_marginals","k":3}}.
LogicalWorkload workload_from_json(const Json& j);
Json workload_to_json(const LogicalWorkload& w);

Schema schema_from_json(const Json& j);
Json schema_to_json(const Schema& s);

// Strategy documents:
// {"kind":"kron","factors":[{"theta":[[...]]},...]}
// {"kind":"union","terms":[{"share":0.5,"factors":[...]},...]}
// {"kind":"marginals","theta":[...],"domain":[...]}
Strategy strategy_from_json(const Json& j);
Json strategy_to_json(const Strategy& s);

Json error_report_to_json(const ErrorReport& r);

Json private_answer_to_json(const PrivateAnswer& a, const LogicalWorkload& w);

Json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const Json& j);

}  // namespace hdmm
