#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "walkability/csv.hpp"
#include "walkability/graph.hpp"

namespace walkability::graph {

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string node_key(const NodeInfo& n) { return std::string(to_string(n.kind)) + ":" + n.id; }

inline NodeClass parse_class(std::string_view s) {
  if (s == "poi") return NodeClass::poi;
  if (s == "cell") return NodeClass::cell;
  throw FormatError("unknown node class '" + std::string(s) + "'");
}

inline BipartiteGraph assemble(std::vector<NodeInfo> nodes,
                               const std::vector<std::tuple<std::string, std::string, double>>& edges) {
  std::vector<NodeInfo> pois, cells;
  std::unordered_map<std::string, std::uint32_t> local;
  for (auto& n : nodes) {
    auto& bucket = n.kind == NodeClass::poi ? pois : cells;
    local.emplace(node_key(n), static_cast<std::uint32_t>(bucket.size()));
    bucket.push_back(std::move(n));
  }
  std::vector<BipartiteGraph::Edge> list;
  list.reserve(edges.size());
  for (const auto& [a, b, w] : edges) {
    auto ia = local.find(a), ib = local.find(b);
    if (ia == local.end() || ib == local.end()) throw ConsistencyError("edge references unknown node " + a + "/" + b);
    const bool a_poi = a.rfind("poi:", 0) == 0, b_poi = b.rfind("poi:", 0) == 0;
    if (a_poi == b_poi) throw ConsistencyError("edge " + a + "-" + b + " does not join a POI and a cell");
    list.push_back(a_poi ? BipartiteGraph::Edge{ia->second, ib->second, w}
                         : BipartiteGraph::Edge{ib->second, ia->second, w});
  }
  return BipartiteGraph(std::move(pois), std::move(cells), std::move(list));
}

}  // namespace detail

/// GEXF 1.2 export. Node ids are "<class>:<id>". When community labels are
/// given (one per node) they are written as an extra "community" attribute.
inline void write_gexf(std::ostream& out, const BipartiteGraph& g,
                       std::optional<std::span<const int>> community = std::nullopt) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<gexf xmlns=\"http://gexf.net/1.2\" version=\"1.2\">\n"
      << "  <graph defaultedgetype=\"undirected\" mode=\"static\">\n"
      << "    <attributes class=\"node\">\n"
      << "      <attribute id=\"class\" title=\"class\" type=\"string\"/>\n"
      << "      <attribute id=\"district\" title=\"district\" type=\"string\"/>\n"
      << "      <attribute id=\"category\" title=\"category\" type=\"string\"/>\n"
      << "      <attribute id=\"n_v\" title=\"n_v\" type=\"long\"/>\n"
      << "      <attribute id=\"lat\" title=\"lat\" type=\"double\"/>\n"
      << "      <attribute id=\"lon\" title=\"lon\" type=\"double\"/>\n"
      << "      <attribute id=\"official_attraction\" title=\"official_attraction\" type=\"boolean\"/>\n";
  if (community) out << "      <attribute id=\"community\" title=\"community\" type=\"integer\"/>\n";
  out << "    </attributes>\n    <nodes>\n";
  for (std::uint32_t v = 0; v < g.node_count(); ++v) {
    const auto& n = g.node(v);
    auto att = [&](const char* key, const std::string& value) {
      out << "          <attvalue for=\"" << key << "\" value=\"" << detail::xml_escape(value) << "\"/>\n";
    };
    out << "      <node id=\"" << detail::xml_escape(detail::node_key(n)) << "\" label=\"" << detail::xml_escape(n.id)
        << "\">\n        <attvalues>\n";
    att("class", to_string(n.kind));
    att("district", n.district);
    att("category", n.category);
    att("n_v", std::to_string(n.n_v));
    att("lat", csv::exact(n.location.lat));
    att("lon", csv::exact(n.location.lon));
    att("official_attraction", n.official_attraction ? "true" : "false");
    if (community) att("community", std::to_string((*community)[v]));
    out << "        </attvalues>\n      </node>\n";
  }
  out << "    </nodes>\n    <edges>\n";
  std::size_t id = 0;
  for (const auto& e : g.edges()) {
    out << "      <edge id=\"" << id++ << "\" source=\"" << detail::xml_escape(detail::node_key(g.node(e.poi)))
        << "\" target=\"" << detail::xml_escape(detail::node_key(g.node(e.cell))) << "\" weight=\""
        << csv::exact(e.weight) << "\"/>\n";
  }
  out << "    </edges>\n  </graph>\n</gexf>\n";
}

inline BipartiteGraph read_gexf(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw FormatError(std::string("gexf: ") + e.what());
  }
  const auto& graph = tree.get_child("gexf.graph");
  std::vector<NodeInfo> nodes;
  if (auto ns = graph.get_child_optional("nodes")) {
    for (const auto& [tag, node] : *ns) {
      if (tag != "node") continue;
      NodeInfo n;
      n.id = node.get<std::string>("<xmlattr>.label");
      std::unordered_map<std::string, std::string> att;
      if (auto avs = node.get_child_optional("attvalues")) {
        for (const auto& [t, av] : *avs) {
          if (t == "attvalue") att[av.get<std::string>("<xmlattr>.for")] = av.get<std::string>("<xmlattr>.value");
        }
      }
      n.kind = detail::parse_class(att["class"]);
      n.district = att["district"];
      n.category = att["category"];
      n.n_v = csv::to_int<std::uint64_t>(att["n_v"]).value_or(0);
      n.location = {csv::to_double(att["lat"]).value_or(0.0), csv::to_double(att["lon"]).value_or(0.0)};
      n.official_attraction = att["official_attraction"] == "true";
      nodes.push_back(std::move(n));
    }
  }
  std::vector<std::tuple<std::string, std::string, double>> edges;
  if (auto es = graph.get_child_optional("edges")) {
    for (const auto& [tag, edge] : *es) {
      if (tag != "edge") continue;
      auto w = csv::to_double(edge.get<std::string>("<xmlattr>.weight", "1"));
      if (!w) throw FormatError("gexf: bad edge weight");
      edges.emplace_back(edge.get<std::string>("<xmlattr>.source"), edge.get<std::string>("<xmlattr>.target"), *w);
    }
  }
  return detail::assemble(std::move(nodes), edges);
}

/// Delimited export: a node table plus an edge list (poi_id, cell_id, weight).
inline void write_node_table(std::ostream& out, const BipartiteGraph& g) {
  csv::write_row(out, {"node_id", "node_class", "district", "category", "n_v", "lat", "lon", "official_attraction"});
  for (const auto& n : g.nodes()) {
    csv::write_row(out, {n.id, to_string(n.kind), n.district, n.category, std::to_string(n.n_v),
                         csv::exact(n.location.lat), csv::exact(n.location.lon),
                         n.official_attraction ? "True" : "False"});
  }
}

inline void write_edge_list(std::ostream& out, const BipartiteGraph& g) {
  csv::write_row(out, {"poi_id", "cell_id", "weight"});
  for (const auto& e : g.edges()) csv::write_row(out, {g.node(e.poi).id, g.node(e.cell).id, csv::exact(e.weight)});
}

inline BipartiteGraph read_edge_list(std::istream& node_table, std::istream& edge_list) {
  csv::Reader nr(node_table);
  csv::Row row;
  if (!nr.next(row)) throw FormatError("node table: missing header");
  csv::Header nh(row);
  const auto c_id = nh.require("node_id", "node table"), c_cls = nh.require("node_class", "node table"),
             c_d = nh.require("district", "node table"), c_cat = nh.require("category", "node table"),
             c_nv = nh.require("n_v", "node table"), c_lat = nh.require("lat", "node table"),
             c_lon = nh.require("lon", "node table"), c_off = nh.require("official_attraction", "node table");
  std::vector<NodeInfo> nodes;
  while (nr.next(row)) {
    if (row.size() < 8) throw FormatError("node table line " + std::to_string(nr.record_line()));
    NodeInfo n;
    n.id = row[c_id];
    n.kind = detail::parse_class(row[c_cls]);
    n.district = row[c_d];
    n.category = row[c_cat];
    n.n_v = csv::to_int<std::uint64_t>(row[c_nv]).value_or(0);
    n.location = {csv::to_double(row[c_lat]).value_or(0.0), csv::to_double(row[c_lon]).value_or(0.0)};
    n.official_attraction = csv::lower(row[c_off]) == "true";
    nodes.push_back(std::move(n));
  }
  csv::Reader er(edge_list);
  if (!er.next(row)) throw FormatError("edge list: missing header");
  csv::Header eh(row);
  const auto c_p = eh.require("poi_id", "edge list"), c_c = eh.require("cell_id", "edge list"),
             c_w = eh.require("weight", "edge list");
  std::vector<std::tuple<std::string, std::string, double>> edges;
  while (er.next(row)) {
    auto w = row.size() > c_w ? csv::to_double(row[c_w]) : std::nullopt;
    if (!w) throw FormatError("edge list line " + std::to_string(er.record_line()));
    edges.emplace_back("poi:" + row[c_p], "cell:" + row[c_c], *w);
  }
  return detail::assemble(std::move(nodes), edges);
}

}  // namespace walkability::graph
