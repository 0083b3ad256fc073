#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gridward/chronics.hpp"
#include "gridward/grid_model.hpp"

namespace gridward {

struct Redispatch {
   GeneratorId gen;
   double delta_mw = 0.0;

   friend bool operator==(const Redispatch&, const Redispatch&) = default;
};

struct Curtailment {
   GeneratorId gen;
   double cap_mw = 0.0;

   friend bool operator==(const Curtailment&, const Curtailment&) = default;
};

struct Action {
   TopologyAction topology;
   std::vector<Redispatch> redispatch;
   std::vector<Curtailment> curtailment;

   [[nodiscard]] bool is_noop() const
   {
      return topology.empty() && redispatch.empty() && curtailment.empty();
   }

   friend bool operator==(const Action&, const Action&) = default;
};

struct Alarm {
   std::vector<ZoneId> zones;  // sorted, unique
   int step_raised = -1;

   friend bool operator==(const Alarm&, const Alarm&) = default;
};

inline Alarm make_alarm(std::vector<ZoneId> zones, int step = -1)
{
   std::sort(zones.begin(), zones.end());
   zones.erase(std::unique(zones.begin(), zones.end()), zones.end());
   return {std::move(zones), step};
}

// ---------------------------------------------------------------------------
// Text grammar
//
//   action := "noop" | clause (";" clause)*
//   clause := "bus" element "=" ("1" | "2")
//           | "line" LINE "=" ("on" | "off")
//           | "redispatch" GEN "=" MW
//           | "curtail" GEN "=" MW
//   element := ("line_or" | "line_ex" | "gen" | "load") ":" NAME
//
// Names are the element names of the case. Whitespace around tokens is free.
// ---------------------------------------------------------------------------
namespace detail {

inline std::string trim(std::string s)
{
   const auto ws = [](unsigned char ch) { return std::isspace(ch) != 0; };
   while(!s.empty() && ws(static_cast<unsigned char>(s.back())))
      s.pop_back();
   std::size_t i = 0;
   while(i < s.size() && ws(static_cast<unsigned char>(s[i])))
      ++i;
   return s.substr(i);
}

}  // namespace detail

inline Action parse_action(const GridCase& c, const std::string& text)
{
   Action a;
   const std::string body = detail::trim(text);
   if(body.empty() || body == "noop")
      return a;

   std::istringstream clauses(body);
   std::string clause;
   while(std::getline(clauses, clause, ';')) {
      clause = detail::trim(clause);
      if(clause.empty())
         continue;
      const auto sp = clause.find_first_of(" \t");
      const auto eq = clause.find('=');
      if(sp == std::string::npos || eq == std::string::npos || eq < sp)
         throw ParseError("malformed action clause '" + clause + "'");
      const std::string verb = clause.substr(0, sp);
      const std::string target = detail::trim(clause.substr(sp, eq - sp));
      const std::string value = detail::trim(clause.substr(eq + 1));

      const auto need = [&](auto opt, const char* what) {
         if(!opt)
            throw ParseError(std::string("unknown ") + what + " '" + target + "' in '" + clause + "'");
         return *opt;
      };

      if(verb == "bus") {
         const auto colon = target.find(':');
         if(colon == std::string::npos)
            throw ParseError("bus clause needs kind:name, got '" + target + "'");
         const std::string kind = target.substr(0, colon);
         const std::string name = target.substr(colon + 1);
         ElementRef e;
         if(kind == "line_or" || kind == "line_ex") {
            auto id = c.find_line(name);
            if(!id)
               throw ParseError("unknown line '" + name + "' in '" + clause + "'");
            e = {kind == "line_or" ? ElementKind::line_or : ElementKind::line_ex, id->value};
         } else if(kind == "gen") {
            auto id = c.find_generator(name);
            if(!id)
               throw ParseError("unknown generator '" + name + "' in '" + clause + "'");
            e = {ElementKind::generator, id->value};
         } else if(kind == "load") {
            auto id = c.find_load(name);
            if(!id)
               throw ParseError("unknown load '" + name + "' in '" + clause + "'");
            e = {ElementKind::load, id->value};
         } else {
            throw ParseError("unknown element kind '" + kind + "'");
         }
         if(value != "1" && value != "2")
            throw ParseError("busbar must be 1 or 2 in '" + clause + "'");
         a.topology.set_bus.push_back({e, value == "1" ? 1 : 2});
      } else if(verb == "line") {
         const LineId id = need(c.find_line(target), "line");
         if(value != "on" && value != "off")
            throw ParseError("line status must be on or off in '" + clause + "'");
         a.topology.set_line.push_back({id, value == "on"});
      } else if(verb == "redispatch") {
         const GeneratorId id = need(c.find_generator(target), "generator");
         a.redispatch.push_back({id, detail::parse_number(value, clause)});
      } else if(verb == "curtail") {
         const GeneratorId id = need(c.find_generator(target), "generator");
         a.curtailment.push_back({id, detail::parse_number(value, clause)});
      } else {
         throw ParseError("unknown action verb '" + verb + "'");
      }
   }
   return a;
}

inline std::string format_action(const GridCase& c, const Action& a)
{
   if(a.is_noop())
      return "noop";
   std::string out;
   const auto sep = [&] {
      if(!out.empty())
         out += "; ";
   };
   for(const auto& b : a.topology.set_bus) {
      sep();
      out += "bus " + c.element_name(b.element) + "=" + std::to_string(b.busbar);
   }
   for(const auto& s : a.topology.set_line) {
      sep();
      out += "line " + c.lines.at(s.line.index()).name + (s.connected ? "=on" : "=off");
   }
   for(const auto& r : a.redispatch) {
      sep();
      out += "redispatch " + c.generators.at(r.gen.index()).name + "="
             + detail::format_number(r.delta_mw);
   }
   for(const auto& r : a.curtailment) {
      sep();
      out += "curtail " + c.generators.at(r.gen.index()).name + "="
             + detail::format_number(r.cap_mw);
   }
   return out;
}

/// One action per line; blank lines and '#' comments ignored.
inline std::vector<Action> load_action_file(const GridCase& c, const std::filesystem::path& path)
{
   std::ifstream in(path);
   if(!in)
      throw ParseError("cannot open action file " + path.string());
   std::vector<Action> out;
   std::string line;
   int row = 0;
   while(std::getline(in, line)) {
      ++row;
      if(auto hash = line.find('#'); hash != std::string::npos)
         line.erase(hash);
      line = detail::trim(line);
      if(line.empty())
         continue;
      try {
         out.push_back(parse_action(c, line));
      } catch(const ParseError& e) {
         throw ParseError(path.filename().string() + ":" + std::to_string(row) + ": " + e.what());
      }
   }
   return out;
}

}  // namespace gridward
