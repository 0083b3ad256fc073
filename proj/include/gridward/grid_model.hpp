#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridward/core.hpp"

namespace gridward {

enum class GeneratorKind { dispatchable, wind, solar };

inline std::string_view to_string(GeneratorKind k)
{
   switch(k) {
      case GeneratorKind::dispatchable: return "dispatchable";
      case GeneratorKind::wind: return "wind";
      case GeneratorKind::solar: return "solar";
   }
   return "?";
}

inline bool is_renewable(GeneratorKind k) { return k != GeneratorKind::dispatchable; }

struct Zone {
   std::string name;
};

struct Substation {
   std::string name;
   ZoneId zone;
};

struct Line {
   std::string name;
   SubstationId from_sub;
   SubstationId to_sub;
   double reactance = 0.0;   // per unit on base_mva
   double resistance = 0.0;  // per unit on base_mva
   double thermal_limit = 0.0;  // MW
};

struct Generator {
   std::string name;
   SubstationId substation;
   GeneratorKind kind = GeneratorKind::dispatchable;
   double p_min = 0.0;
   double p_max = 0.0;
   double ramp = 0.0;  // MW per step
   double marginal_cost = 0.0;  // currency per MWh
   bool slack = false;
};

struct Load {
   std::string name;
   SubstationId substation;
   double peak = 0.0;  // MW, default peak used by the scenario generator
};

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------
enum class ElementKind { line_or, line_ex, generator, load };

struct ElementRef {
   ElementKind kind = ElementKind::generator;
   int index = -1;

   friend auto operator<=>(const ElementRef&, const ElementRef&) = default;
};

/// Busbar (1 or 2) of every element plus the agent-controlled status of every
/// line. Forced outages (attacks, maintenance) are not part of the topology.
struct Topology {
   std::vector<int> line_or_bus;
   std::vector<int> line_ex_bus;
   std::vector<int> gen_bus;
   std::vector<int> load_bus;
   std::vector<bool> line_connected;

   [[nodiscard]] int busbar(ElementRef e) const
   {
      return slot(e);
   }

   int& busbar(ElementRef e) { return const_cast<int&>(std::as_const(*this).slot(e)); }

   friend bool operator==(const Topology&, const Topology&) = default;

  private:
   [[nodiscard]] const int& slot(ElementRef e) const
   {
      const std::vector<int>* v = nullptr;
      switch(e.kind) {
         case ElementKind::line_or: v = &line_or_bus; break;
         case ElementKind::line_ex: v = &line_ex_bus; break;
         case ElementKind::generator: v = &gen_bus; break;
         case ElementKind::load: v = &load_bus; break;
      }
      if(e.index < 0 || static_cast<std::size_t>(e.index) >= v->size())
         throw Error("unknown element index " + std::to_string(e.index));
      return (*v)[static_cast<std::size_t>(e.index)];
   }
};

struct BusAssignment {
   ElementRef element;
   int busbar = 1;

   friend bool operator==(const BusAssignment&, const BusAssignment&) = default;
};

struct LineStatusChange {
   LineId line;
   bool connected = true;

   friend bool operator==(const LineStatusChange&, const LineStatusChange&) = default;
};

struct TopologyAction {
   std::vector<BusAssignment> set_bus;
   std::vector<LineStatusChange> set_line;

   [[nodiscard]] bool empty() const { return set_bus.empty() && set_line.empty(); }

   friend bool operator==(const TopologyAction&, const TopologyAction&) = default;
};

// ---------------------------------------------------------------------------
// GridCase
// ---------------------------------------------------------------------------
struct GridCase {
   std::string name;
   double base_mva = 100.0;
   int step_minutes = 5;
   std::vector<Zone> zones;
   std::vector<Substation> substations;
   std::vector<Line> lines;
   std::vector<Generator> generators;
   std::vector<Load> loads;
   std::vector<LineId> attackable_lines;
   Topology reference_topology;

   [[nodiscard]] std::size_t n_lines() const { return lines.size(); }
   [[nodiscard]] std::size_t n_subs() const { return substations.size(); }
   [[nodiscard]] std::size_t n_gens() const { return generators.size(); }
   [[nodiscard]] std::size_t n_loads() const { return loads.size(); }

   [[nodiscard]] const Line& line(LineId id) const { return lines.at(id.index()); }
   [[nodiscard]] const Generator& generator(GeneratorId id) const
   {
      return generators.at(id.index());
   }

   [[nodiscard]] GeneratorId slack_generator() const
   {
      for(std::size_t g = 0; g < generators.size(); ++g)
         if(generators[g].slack)
            return GeneratorId{g};
      return {};
   }

   [[nodiscard]] std::optional<LineId> find_line(std::string_view n) const
   {
      return find_by_name<LineId>(lines, n);
   }
   [[nodiscard]] std::optional<GeneratorId> find_generator(std::string_view n) const
   {
      return find_by_name<GeneratorId>(generators, n);
   }
   [[nodiscard]] std::optional<LoadId> find_load(std::string_view n) const
   {
      return find_by_name<LoadId>(loads, n);
   }
   [[nodiscard]] std::optional<SubstationId> find_substation(std::string_view n) const
   {
      return find_by_name<SubstationId>(substations, n);
   }

   [[nodiscard]] SubstationId substation_of(ElementRef e) const
   {
      const auto i = static_cast<std::size_t>(e.index);
      switch(e.kind) {
         case ElementKind::line_or: return lines.at(i).from_sub;
         case ElementKind::line_ex: return lines.at(i).to_sub;
         case ElementKind::generator: return generators.at(i).substation;
         case ElementKind::load: return loads.at(i).substation;
      }
      return {};
   }

   /// Elements of one substation in canonical order: line origins, line
   /// extremities, generators, loads, each by ascending index.
   [[nodiscard]] std::vector<ElementRef> elements_at(SubstationId sub) const
   {
      std::vector<ElementRef> out;
      for(std::size_t l = 0; l < lines.size(); ++l)
         if(lines[l].from_sub == sub)
            out.push_back({ElementKind::line_or, static_cast<int>(l)});
      for(std::size_t l = 0; l < lines.size(); ++l)
         if(lines[l].to_sub == sub)
            out.push_back({ElementKind::line_ex, static_cast<int>(l)});
      for(std::size_t g = 0; g < generators.size(); ++g)
         if(generators[g].substation == sub)
            out.push_back({ElementKind::generator, static_cast<int>(g)});
      for(std::size_t d = 0; d < loads.size(); ++d)
         if(loads[d].substation == sub)
            out.push_back({ElementKind::load, static_cast<int>(d)});
      return out;
   }

   /// Zones touched by a line (one or two).
   [[nodiscard]] std::vector<ZoneId> zones_of_line(LineId id) const
   {
      const auto& l = line(id);
      const ZoneId a = substations.at(l.from_sub.index()).zone;
      const ZoneId b = substations.at(l.to_sub.index()).zone;
      if(a == b)
         return {a};
      return {std::min(a, b), std::max(a, b)};
   }

   [[nodiscard]] std::string element_name(ElementRef e) const
   {
      const auto i = static_cast<std::size_t>(e.index);
      switch(e.kind) {
         case ElementKind::line_or: return "line_or:" + lines.at(i).name;
         case ElementKind::line_ex: return "line_ex:" + lines.at(i).name;
         case ElementKind::generator: return "gen:" + generators.at(i).name;
         case ElementKind::load: return "load:" + loads.at(i).name;
      }
      return "?";
   }

  private:
   template <class Id, class Container>
   static std::optional<Id> find_by_name(const Container& c, std::string_view n)
   {
      for(std::size_t i = 0; i < c.size(); ++i)
         if(c[i].name == n)
            return Id{i};
      return std::nullopt;
   }
};

inline Topology all_busbar_one(std::size_t n_lines, std::size_t n_gens, std::size_t n_loads)
{
   Topology t;
   t.line_or_bus.assign(n_lines, 1);
   t.line_ex_bus.assign(n_lines, 1);
   t.gen_bus.assign(n_gens, 1);
   t.load_bus.assign(n_loads, 1);
   t.line_connected.assign(n_lines, true);
   return t;
}

/// Every violated invariant of a case, in a stable order. Empty means valid.
inline std::vector<std::string> case_violations(const GridCase& c)
{
   std::vector<std::string> v;
   const auto n_sub = static_cast<int>(c.substations.size());
   const auto sub_ok = [&](SubstationId s) { return s.value >= 0 && s.value < n_sub; };

   if(c.zones.size() != 3)
      v.push_back("expected exactly 3 zones, found " + std::to_string(c.zones.size()));
   if(c.substations.empty())
      v.push_back("case has no substations");
   if(!(c.base_mva > 0.0))
      v.push_back("base_mva must be positive");
   if(c.step_minutes <= 0)
      v.push_back("step_minutes must be positive");

   for(const auto& s : c.substations)
      if(s.zone.value < 0 || s.zone.index() >= c.zones.size())
         v.push_back("substation " + s.name + " has no valid zone");

   for(const auto& l : c.lines) {
      if(!sub_ok(l.from_sub) || !sub_ok(l.to_sub))
         v.push_back("line " + l.name + " references an unknown substation");
      else if(l.from_sub == l.to_sub)
         v.push_back("line " + l.name + " connects a substation to itself");
      if(!(l.reactance > 0.0))
         v.push_back("line " + l.name + " reactance must be positive");
      if(!(l.resistance >= 0.0))
         v.push_back("line " + l.name + " resistance must be non-negative");
      if(!(l.thermal_limit > 0.0))
         v.push_back("line " + l.name + " thermal limit must be positive");
   }

   int n_slack = 0;
   for(const auto& g : c.generators) {
      if(!sub_ok(g.substation))
         v.push_back("generator " + g.name + " references an unknown substation");
      if(!(g.p_min >= 0.0 && g.p_min <= g.p_max))
         v.push_back("generator " + g.name + " requires 0 <= p_min <= p_max");
      if(!(g.ramp >= 0.0))
         v.push_back("generator " + g.name + " ramp must be non-negative");
      if(g.slack) {
         ++n_slack;
         if(g.kind != GeneratorKind::dispatchable)
            v.push_back("slack generator " + g.name + " must be dispatchable");
      }
   }
   if(n_slack != 1)
      v.push_back("expected exactly one slack generator, found " + std::to_string(n_slack));

   for(const auto& d : c.loads)
      if(!sub_ok(d.substation))
         v.push_back("load " + d.name + " references an unknown substation");

   if(c.attackable_lines.empty())
      v.push_back("attackable_lines must be non-empty");
   for(auto id : c.attackable_lines)
      if(id.value < 0 || id.index() >= c.lines.size())
         v.push_back("attackable line index " + std::to_string(id.value) + " is not a line");

   std::set<std::string> seen;
   const auto unique_names = [&](const auto& items, const char* what) {
      seen.clear();
      for(const auto& it : items)
         if(!seen.insert(it.name).second)
            v.push_back(std::string("duplicate ") + what + " name " + it.name);
   };
   unique_names(c.substations, "substation");
   unique_names(c.lines, "line");
   unique_names(c.generators, "generator");
   unique_names(c.loads, "load");

   const auto& t = c.reference_topology;
   if(t.line_or_bus.size() != c.lines.size() || t.line_ex_bus.size() != c.lines.size()
      || t.line_connected.size() != c.lines.size() || t.gen_bus.size() != c.generators.size()
      || t.load_bus.size() != c.loads.size()) {
      v.push_back("reference topology does not cover every element");
   } else {
      const auto all_one = [](const std::vector<int>& b) {
         return std::all_of(b.begin(), b.end(), [](int x) { return x == 1; });
      };
      if(!all_one(t.line_or_bus) || !all_one(t.line_ex_bus) || !all_one(t.gen_bus)
         || !all_one(t.load_bus))
         v.push_back("reference topology must assign every element to busbar 1");
   }
   return v;
}

inline void validate_case(const GridCase& c)
{
   auto v = case_violations(c);
   if(!v.empty())
      throw ValidationError(std::move(v));
}

namespace detail {

inline void reject_unknown_keys(
   const nlohmann::json& obj,
   std::initializer_list<std::string_view> allowed,
   const std::string& where)
{
   if(!obj.is_object())
      throw ParseError(where + ": expected a JSON object");
   for(const auto& [key, _] : obj.items())
      if(std::find(allowed.begin(), allowed.end(), key) == allowed.end())
         throw ParseError(where + ": unknown key '" + key + "'");
}

template <class T>
T field(const nlohmann::json& obj, const char* key, const std::string& where)
{
   if(!obj.contains(key))
      throw ParseError(where + ": missing field '" + key + "'");
   try {
      return obj.at(key).get<T>();
   } catch(const nlohmann::json::exception& e) {
      throw ParseError(where + ": field '" + key + "': " + e.what());
   }
}

template <class T>
T field_or(const nlohmann::json& obj, const char* key, T fallback, const std::string& where)
{
   if(!obj.contains(key))
      return fallback;
   return field<T>(obj, key, where);
}

}  // namespace detail

/// Parses a case document. Name references that do not resolve are reported
/// together with every other invariant violation.
inline GridCase parse_case(const nlohmann::json& doc)
{
   using detail::field;
   using detail::field_or;
   detail::reject_unknown_keys(
      doc,
      {"name", "notes", "base_mva", "step_minutes", "zones", "substations", "lines",
       "generators", "loads", "attackable_lines", "reference_topology"},
      "case");

   GridCase c;
   c.name = field_or<std::string>(doc, "name", "unnamed", "case");
   c.base_mva = field_or<double>(doc, "base_mva", 100.0, "case");
   c.step_minutes = field<int>(doc, "step_minutes", "case");

   std::vector<std::string> unresolved;
   std::map<std::string, int> sub_index;

   const auto array = [&](const char* key) -> const nlohmann::json& {
      if(!doc.contains(key) || !doc.at(key).is_array())
         throw ParseError(std::string("case: '") + key + "' must be an array");
      return doc.at(key);
   };

   for(const auto& [i, z] : array("zones").items()) {
      const std::string where = "zones[" + i + "]";
      detail::reject_unknown_keys(z, {"name", "notes"}, where);
      c.zones.push_back({field<std::string>(z, "name", where)});
   }
   for(const auto& [i, s] : array("substations").items()) {
      const std::string where = "substations[" + i + "]";
      detail::reject_unknown_keys(s, {"name", "zone"}, where);
      Substation sub{field<std::string>(s, "name", where), ZoneId{field<int>(s, "zone", where)}};
      sub_index.emplace(sub.name, static_cast<int>(c.substations.size()));
      c.substations.push_back(std::move(sub));
   }
   const auto resolve_sub = [&](const std::string& name, const std::string& owner) {
      auto it = sub_index.find(name);
      if(it == sub_index.end()) {
         unresolved.push_back(owner + " references unknown substation '" + name + "'");
         return SubstationId{};
      }
      return SubstationId{it->second};
   };

   for(const auto& [i, l] : array("lines").items()) {
      const std::string where = "lines[" + i + "]";
      detail::reject_unknown_keys(l, {"name", "from", "to", "x", "r", "limit"}, where);
      Line line;
      line.name = field<std::string>(l, "name", where);
      line.from_sub = resolve_sub(field<std::string>(l, "from", where), "line " + line.name);
      line.to_sub = resolve_sub(field<std::string>(l, "to", where), "line " + line.name);
      line.reactance = field<double>(l, "x", where);
      line.resistance = field_or<double>(l, "r", 0.0, where);
      line.thermal_limit = field<double>(l, "limit", where);
      c.lines.push_back(std::move(line));
   }
   for(const auto& [i, g] : array("generators").items()) {
      const std::string where = "generators[" + i + "]";
      detail::reject_unknown_keys(
         g, {"name", "sub", "kind", "p_min", "p_max", "ramp", "cost", "slack"}, where);
      Generator gen;
      gen.name = field<std::string>(g, "name", where);
      gen.substation = resolve_sub(field<std::string>(g, "sub", where), "generator " + gen.name);
      const auto kind = field<std::string>(g, "kind", where);
      if(kind == "dispatchable")
         gen.kind = GeneratorKind::dispatchable;
      else if(kind == "wind")
         gen.kind = GeneratorKind::wind;
      else if(kind == "solar")
         gen.kind = GeneratorKind::solar;
      else
         throw ParseError(where + ": unknown generator kind '" + kind + "'");
      gen.p_min = field_or<double>(g, "p_min", 0.0, where);
      gen.p_max = field<double>(g, "p_max", where);
      gen.ramp = field_or<double>(g, "ramp", 0.0, where);
      gen.marginal_cost = field_or<double>(g, "cost", 0.0, where);
      gen.slack = field_or<bool>(g, "slack", false, where);
      c.generators.push_back(std::move(gen));
   }
   for(const auto& [i, d] : array("loads").items()) {
      const std::string where = "loads[" + i + "]";
      detail::reject_unknown_keys(d, {"name", "sub", "peak"}, where);
      Load load;
      load.name = field<std::string>(d, "name", where);
      load.substation = resolve_sub(field<std::string>(d, "sub", where), "load " + load.name);
      load.peak = field_or<double>(d, "peak", 0.0, where);
      c.loads.push_back(std::move(load));
   }
   for(const auto& name : array("attackable_lines")) {
      if(!name.is_string())
         throw ParseError("attackable_lines: expected line names");
      auto id = c.find_line(name.get<std::string>());
      if(!id)
         unresolved.push_back(
            "attackable line '" + name.get<std::string>() + "' is not a line of the case");
      else
         c.attackable_lines.push_back(*id);
   }

   c.reference_topology = all_busbar_one(c.lines.size(), c.generators.size(), c.loads.size());
   if(doc.contains("reference_topology")) {
      const auto& rt = doc.at("reference_topology");
      detail::reject_unknown_keys(rt, {"busbar", "disconnected_lines"}, "reference_topology");
      if(rt.contains("busbar") && rt.at("busbar") != "all_1")
         throw ParseError("reference_topology: busbar must be \"all_1\"");
      if(rt.contains("disconnected_lines"))
         for(const auto& name : rt.at("disconnected_lines")) {
            auto id = c.find_line(name.get<std::string>());
            if(!id)
               unresolved.push_back(
                  "reference_topology disconnects unknown line '" + name.get<std::string>()
                  + "'");
            else
               c.reference_topology.line_connected[id->index()] = false;
         }
   }

   auto violations = unresolved;
   for(auto& s : case_violations(c)) {
      // Unresolved references already reported by name.
      if(!unresolved.empty() && s.find("unknown substation") != std::string::npos)
         continue;
      violations.push_back(std::move(s));
   }
   if(!violations.empty())
      throw ValidationError(std::move(violations));
   return c;
}

inline GridCase load_case(const std::filesystem::path& path)
{
   std::ifstream in(path);
   if(!in)
      throw ParseError("cannot open case file " + path.string());
   nlohmann::json doc;
   try {
      doc = nlohmann::json::parse(in);
   } catch(const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what());
   }
   try {
      return parse_case(doc);
   } catch(const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what());
   }
}

// ---------------------------------------------------------------------------
// Topology manipulation
// ---------------------------------------------------------------------------

/// Returns a copy of `t` with the requested busbar and status changes applied.
inline Topology apply_topology(const Topology& t, const TopologyAction& a)
{
   Topology out = t;
   for(const auto& b : a.set_bus) {
      if(b.busbar != 1 && b.busbar != 2)
         throw Error("busbar must be 1 or 2, got " + std::to_string(b.busbar));
      out.busbar(b.element) = b.busbar;
   }
   for(const auto& s : a.set_line) {
      if(s.line.value < 0 || s.line.index() >= out.line_connected.size())
         throw Error("unknown line index " + std::to_string(s.line.value));
      out.line_connected[s.line.index()] = s.connected;
   }
   return out;
}

/// Substations whose busbar assignment differs between two topologies.
inline std::vector<SubstationId>
changed_substations(const GridCase& c, const Topology& a, const Topology& b)
{
   std::set<SubstationId> subs;
   for(std::size_t l = 0; l < c.lines.size(); ++l) {
      if(a.line_or_bus[l] != b.line_or_bus[l])
         subs.insert(c.lines[l].from_sub);
      if(a.line_ex_bus[l] != b.line_ex_bus[l])
         subs.insert(c.lines[l].to_sub);
   }
   for(std::size_t g = 0; g < c.generators.size(); ++g)
      if(a.gen_bus[g] != b.gen_bus[g])
         subs.insert(c.generators[g].substation);
   for(std::size_t d = 0; d < c.loads.size(); ++d)
      if(a.load_bus[d] != b.load_bus[d])
         subs.insert(c.loads[d].substation);
   return {subs.begin(), subs.end()};
}

// ---------------------------------------------------------------------------
// Electrical node graph
// ---------------------------------------------------------------------------
struct ElectricalNode {
   SubstationId substation;
   int busbar = 1;

   friend bool operator==(const ElectricalNode&, const ElectricalNode&) = default;
};

struct GraphEdge {
   LineId line;
   int from_node = -1;
   int to_node = -1;
};

struct NodeGraph {
   std::vector<ElectricalNode> nodes;
   std::vector<GraphEdge> edges;
   std::vector<int> gen_node;   // per generator
   std::vector<int> load_node;  // per load
   std::vector<int> line_from_node;  // -1 when the line is disconnected
   std::vector<int> line_to_node;
   int slack_node = -1;
};

/// Builds the electrical node graph. A (substation, busbar) pair becomes a
/// node iff it holds a generator, a load, or an end of a connected line.
/// Nodes are numbered by ascending substation, busbar 1 before busbar 2.
inline NodeGraph electrical_nodes(const GridCase& c, const Topology& t)
{
   const std::size_t n_sub = c.substations.size();
   std::vector<std::array<bool, 2>> used(n_sub, {false, false});
   const auto mark = [&](SubstationId s, int bus) { used[s.index()][bus - 1] = true; };

   for(std::size_t l = 0; l < c.lines.size(); ++l) {
      if(!t.line_connected[l])
         continue;
      mark(c.lines[l].from_sub, t.line_or_bus[l]);
      mark(c.lines[l].to_sub, t.line_ex_bus[l]);
   }
   for(std::size_t g = 0; g < c.generators.size(); ++g)
      mark(c.generators[g].substation, t.gen_bus[g]);
   for(std::size_t d = 0; d < c.loads.size(); ++d)
      mark(c.loads[d].substation, t.load_bus[d]);

   NodeGraph graph;
   std::vector<std::array<int, 2>> node_id(n_sub, {-1, -1});
   for(std::size_t s = 0; s < n_sub; ++s)
      for(int b = 0; b < 2; ++b)
         if(used[s][b]) {
            node_id[s][b] = static_cast<int>(graph.nodes.size());
            graph.nodes.push_back({SubstationId{s}, b + 1});
         }

   graph.line_from_node.assign(c.lines.size(), -1);
   graph.line_to_node.assign(c.lines.size(), -1);
   for(std::size_t l = 0; l < c.lines.size(); ++l) {
      if(!t.line_connected[l])
         continue;
      const int f = node_id[c.lines[l].from_sub.index()][t.line_or_bus[l] - 1];
      const int to = node_id[c.lines[l].to_sub.index()][t.line_ex_bus[l] - 1];
      graph.line_from_node[l] = f;
      graph.line_to_node[l] = to;
      graph.edges.push_back({LineId{l}, f, to});
   }
   graph.gen_node.resize(c.generators.size());
   for(std::size_t g = 0; g < c.generators.size(); ++g) {
      graph.gen_node[g] = node_id[c.generators[g].substation.index()][t.gen_bus[g] - 1];
      if(c.generators[g].slack)
         graph.slack_node = graph.gen_node[g];
   }
   graph.load_node.resize(c.loads.size());
   for(std::size_t d = 0; d < c.loads.size(); ++d)
      graph.load_node[d] = node_id[c.loads[d].substation.index()][t.load_bus[d] - 1];
   return graph;
}

struct Component {
   std::vector<int> nodes;  // ascending
   bool main = false;       // holds the slack generator
};

/// Partition of the graph's nodes into connected components, ordered by their
/// smallest node index.
inline std::vector<Component> connected_components(const NodeGraph& graph)
{
   const std::size_t n = graph.nodes.size();
   std::vector<std::vector<int>> adjacency(n);
   for(const auto& e : graph.edges) {
      adjacency[static_cast<std::size_t>(e.from_node)].push_back(e.to_node);
      adjacency[static_cast<std::size_t>(e.to_node)].push_back(e.from_node);
   }
   std::vector<int> label(n, -1);
   std::vector<Component> out;
   for(std::size_t start = 0; start < n; ++start) {
      if(label[start] >= 0)
         continue;
      const int id = static_cast<int>(out.size());
      Component comp;
      std::vector<int> stack{static_cast<int>(start)};
      label[start] = id;
      while(!stack.empty()) {
         const int u = stack.back();
         stack.pop_back();
         comp.nodes.push_back(u);
         for(int v : adjacency[static_cast<std::size_t>(u)])
            if(label[static_cast<std::size_t>(v)] < 0) {
               label[static_cast<std::size_t>(v)] = id;
               stack.push_back(v);
            }
      }
      std::sort(comp.nodes.begin(), comp.nodes.end());
      comp.main = graph.slack_node >= 0 && label[static_cast<std::size_t>(graph.slack_node)] == id;
      out.push_back(std::move(comp));
   }
   return out;
}

}  // namespace gridward
