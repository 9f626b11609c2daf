//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <istream>

#include "hdmm/mechanism.hpp"
#include "hdmm/workload.hpp"

namespace hdmm {

// Builds the data vector from CSV rows (multiset semantics: duplicates
// accumulate). The header must cover every schema attribute; cells map to
// domain indices through the attribute's value list, integer range, or raw
// indices in [0, size). Unmappable values report the 1-based data row.
DataVector ingest_csv(const Schema& schema, std::istream& in);

}  // namespace hdmm
