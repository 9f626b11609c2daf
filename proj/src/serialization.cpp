//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hdmm/serialization.hpp"

#include <fstream>

namespace hdmm {

namespace {

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty())
    throw DomainError("expected a nonempty array of rows");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j.at(r);
    if (static_cast<Index>(row.size()) != cols)
      throw DomainError("ragged matrix rows");
    for (Index c = 0; c < cols; ++c) m(r, c) = row.at(c).get<double>();
  }
  return m;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const Json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

BuildingBlock block_from_json(const Json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "identity") return IdentityBlock{};
    if (s == "total") return TotalBlock{};
    if (s == "prefix") return PrefixBlock{};
    if (s == "allrange") return AllRangeBlock{};
    throw DomainError("unknown block '" + s + "'");
  }
  if (j.is_object()) {
    if (j.contains("range_width"))
      return RangeWidthBlock{j.at("range_width").get<Index>()};
    if (j.contains("dense")) return CustomDenseBlock{matrix_from_json(j.at("dense"))};
    if (j.contains("permuted_range")) {
      const auto& p = j.at("permuted_range");
      return PermutedRangeBlock{p.is_object()
                                    ? p.value("seed", std::uint64_t{0})
                                    : p.get<std::uint64_t>()};
    }
  }
  throw DomainError("unrecognized block value");
}

Json block_to_json(const BuildingBlock& b) {
  return std::visit(
      [](const auto& block) -> Json {
        using T = std::decay_t<decltype(block)>;
        if constexpr (std::is_same_v<T, IdentityBlock>) {
          return "identity";
        } else if constexpr (std::is_same_v<T, TotalBlock>) {
          return "total";
        } else if constexpr (std::is_same_v<T, PrefixBlock>) {
          return "prefix";
        } else if constexpr (std::is_same_v<T, AllRangeBlock>) {
          return "allrange";
        } else if constexpr (std::is_same_v<T, RangeWidthBlock>) {
          return Json{{"range_width", block.width}};
        } else if constexpr (std::is_same_v<T, PermutedRangeBlock>) {
          return Json{{"permuted_range", Json{{"seed", block.seed}}}};
        } else {
          return Json{{"dense", matrix_to_json(block.entries)}};
        }
      },
      b);
}

LogicalWorkload generated_workload(const Schema& schema, const Json& g) {
  const std::string kind = g.at("kind").get<std::string>();
  if (kind == "all_kway_marginals")
    return all_kway_marginals(schema, g.at("k").get<Index>());
  if (kind == "up_to_kway_marginals")
    return up_to_kway_marginals(schema, g.at("k").get<Index>(),
                                g.value("include_total", false));
  if (kind == "prefix_product") return prefix_product(schema);
  if (kind == "allrange_product") return allrange_product(schema);
  if (kind == "range_width")
    return range_width_workload(schema, g.at("width").get<Index>());
  if (kind == "permuted_range")
    return permuted_range(schema, g.value("seed", std::uint64_t{0}));
  throw DomainError("unknown generator kind '" + kind + "'");
}

}  // namespace

Schema schema_from_json(const Json& j) {
  Schema s;
  for (const auto& a : j) {
    Attribute attr;
    attr.name = a.at("name").get<std::string>();
    attr.size = a.at("size").get<Index>();
    if (a.contains("values"))
      attr.values = a.at("values").get<std::vector<std::string>>();
    if (a.contains("range"))
      attr.range = std::make_pair(a.at("range").at(0).get<long>(),
                                  a.at("range").at(1).get<long>());
    s.attributes.push_back(std::move(attr));
  }
  s.validate();
  return s;
}

Json schema_to_json(const Schema& s) {
  Json arr = Json::array();
  for (const auto& a : s.attributes) {
    Json attr{{"name", a.name}, {"size", a.size}};
    if (!a.values.empty()) attr["values"] = a.values;
    if (a.range) attr["range"] = Json::array({a.range->first, a.range->second});
    arr.push_back(std::move(attr));
  }
  return arr;
}

LogicalWorkload workload_from_json(const Json& j) {
  Schema schema = schema_from_json(j.at("schema"));
  if (j.contains("generate")) return generated_workload(schema, j.at("generate"));
  LogicalWorkload w;
  w.schema = std::move(schema);
  for (const auto& t : j.at("terms")) {
    ProductTerm term;
    term.weight = t.value("weight", 1.0);
    if (t.contains("blocks"))
      for (const auto& [name, block] : t.at("blocks").items())
        term.blocks[name] = block_from_json(block);
    w.terms.push_back(std::move(term));
  }
  w.validate();
  return w;
}

Json workload_to_json(const LogicalWorkload& w) {
  Json j;
  j["schema"] = schema_to_json(w.schema);
  Json terms = Json::array();
  for (const auto& t : w.terms) {
    Json term;
    term["weight"] = t.weight;
    Json blocks = Json::object();
    for (const auto& [name, block] : t.blocks) blocks[name] = block_to_json(block);
    term["blocks"] = std::move(blocks);
    terms.push_back(std::move(term));
  }
  j["terms"] = std::move(terms);
  return j;
}

Strategy strategy_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "kron") {
    KronStrategy s;
    for (const auto& f : j.at("factors"))
      s.factors.push_back({matrix_from_json(f.at("theta"))});
    return Strategy(std::move(s));
  }
  if (kind == "union") {
    UnionStrategy s;
    for (const auto& t : j.at("terms")) {
      UnionStrategy::Term term;
      term.budget_share = t.at("share").get<double>();
      for (const auto& f : t.at("factors"))
        term.strategy.factors.push_back({matrix_from_json(f.at("theta"))});
      s.terms.push_back(std::move(term));
    }
    return Strategy(std::move(s));
  }
  if (kind == "marginals") {
    MarginalsStrategy s;
    s.theta = vector_from_json(j.at("theta"));
    s.domain = j.at("domain").get<std::vector<Index>>();
    return Strategy(std::move(s));
  }
  throw DomainError("unknown strategy kind '" + kind + "'");
}

Json strategy_to_json(const Strategy& s) {
  return std::visit(
      [](const auto& impl) -> Json {
        using T = std::decay_t<decltype(impl)>;
        Json j;
        if constexpr (std::is_same_v<T, KronStrategy>) {
          j["kind"] = "kron";
          Json factors = Json::array();
          for (const auto& f : impl.factors)
            factors.push_back(Json{{"theta", matrix_to_json(f.theta)}});
          j["factors"] = std::move(factors);
        } else if constexpr (std::is_same_v<T, UnionStrategy>) {
          j["kind"] = "union";
          Json terms = Json::array();
          for (const auto& t : impl.terms) {
            Json term;
            term["share"] = t.budget_share;
            Json factors = Json::array();
            for (const auto& f : t.strategy.factors)
              factors.push_back(Json{{"theta", matrix_to_json(f.theta)}});
            term["factors"] = std::move(factors);
            terms.push_back(std::move(term));
          }
          j["terms"] = std::move(terms);
        } else {
          j["kind"] = "marginals";
          j["theta"] = vector_to_json(impl.theta);
          j["domain"] = impl.domain;
        }
        return j;
      },
      s.impl());
}

Json error_report_to_json(const ErrorReport& r) {
  Json j;
  j["workload"] = r.workload;
  j["epsilon"] = r.epsilon;
  j["domain_size"] = r.domain_size;
  j["terms"] = r.term_count;
  j["queries"] = r.query_count;
  Json arr = Json::array();
  for (const auto& s : r.strategies) {
    arr.push_back(Json{{"name", s.name},
                       {"error", s.error},
                       {"root_error", s.root_error},
                       {"ratio_vs_hdmm", s.ratio_vs_hdmm}});
  }
  j["strategies"] = std::move(arr);
  return j;
}

Json private_answer_to_json(const PrivateAnswer& a, const LogicalWorkload& w) {
  Json j;
  j["epsilon"] = a.epsilon;
  j["seed"] = a.seed;
  j["noisy_measurements"] = vector_to_json(a.noisy_measurements);
  j["reconstructed"] = vector_to_json(a.reconstructed);
  Json answers = Json::array();
  Index at = 0;
  for (Index t = 0; t < static_cast<Index>(w.terms.size()); ++t) {
    Index rows = 1;
    for (Index i = 0; i < w.schema.dimensions(); ++i)
      rows *= block_stats(w.block_for(w.terms[t], i),
                          w.schema.attributes[i].size)
                  .rows;
    answers.push_back(
        Json{{"term", t},
             {"values", vector_to_json(a.workload_answers.segment(at, rows))}});
    at += rows;
  }
  j["answers"] = std::move(answers);
  return j;
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError("invalid JSON in '" + path + "': " + e.what());
  }
  return j;
}

void save_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

}  // namespace hdmm
