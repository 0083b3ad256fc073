#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridward/core.hpp"
#include "gridward/grid_model.hpp"

namespace gridward {

struct MaintenanceWindow {
   LineId line;
   int start_step = 0;
   int duration_steps = 0;

   [[nodiscard]] bool covers(int step) const
   {
      return step >= start_step && step < start_step + duration_steps;
   }
   friend bool operator==(const MaintenanceWindow&, const MaintenanceWindow&) = default;
};

/// Per-step loads and generator availability. For dispatchable units gen_p is
/// the scheduled setpoint, for renewables the available power.
struct Scenario {
   std::string name;
   int n_steps = 0;
   std::size_t n_loads = 0;
   std::size_t n_gens = 0;
   std::vector<double> load_p;  // row-major [step][load]
   std::vector<double> gen_p;   // row-major [step][gen]
   std::vector<MaintenanceWindow> maintenance;

   [[nodiscard]] double load(int step, std::size_t d) const
   {
      return load_p[static_cast<std::size_t>(step) * n_loads + d];
   }
   [[nodiscard]] double gen(int step, std::size_t g) const
   {
      return gen_p[static_cast<std::size_t>(step) * n_gens + g];
   }
   [[nodiscard]] double total_load(int step) const
   {
      double s = 0.0;
      for(std::size_t d = 0; d < n_loads; ++d)
         s += load(step, d);
      return s;
   }
   [[nodiscard]] bool in_maintenance(LineId line, int step) const
   {
      return std::any_of(maintenance.begin(), maintenance.end(), [&](const auto& m) {
         return m.line == line && m.covers(step);
      });
   }

   friend bool operator==(const Scenario&, const Scenario&) = default;
};

inline constexpr int kWeekSteps = 2016;

inline std::vector<std::string> scenario_violations(const GridCase& c, const Scenario& s)
{
   std::vector<std::string> v;
   if(s.n_steps <= 0)
      v.push_back("scenario has no steps");
   if(s.n_loads != c.loads.size())
      v.push_back("load column count does not match the case");
   if(s.n_gens != c.generators.size())
      v.push_back("generator column count does not match the case");
   if(s.load_p.size() != static_cast<std::size_t>(s.n_steps) * s.n_loads)
      v.push_back("load series length does not match n_steps");
   if(s.gen_p.size() != static_cast<std::size_t>(s.n_steps) * s.n_gens)
      v.push_back("generator series length does not match n_steps");
   if(!v.empty())
      return v;
   for(int t = 0; t < s.n_steps; ++t) {
      for(std::size_t d = 0; d < s.n_loads; ++d)
         if(!(s.load(t, d) >= 0.0)) {
            v.push_back("negative load " + c.loads[d].name + " at step " + std::to_string(t));
            return v;
         }
      for(std::size_t g = 0; g < s.n_gens; ++g) {
         const double p = s.gen(t, g);
         if(!(p >= 0.0 && p <= c.generators[g].p_max + 1e-9)) {
            v.push_back(
               "generator " + c.generators[g].name + " outside [0, p_max] at step "
               + std::to_string(t));
            return v;
         }
      }
   }
   for(const auto& m : s.maintenance) {
      if(m.line.value < 0 || m.line.index() >= c.lines.size())
         v.push_back("maintenance references an unknown line");
      else if(m.start_step < 0 || m.duration_steps <= 0 || m.start_step + m.duration_steps > s.n_steps)
         v.push_back("maintenance window of " + c.lines[m.line.index()].name + " outside the scenario");
   }
   return v;
}

// ---------------------------------------------------------------------------
// CSV chronics directory
// ---------------------------------------------------------------------------
namespace detail {

inline std::vector<std::string> split_csv(const std::string& line)
{
   std::vector<std::string> out;
   std::string cell;
   std::istringstream in(line);
   while(std::getline(in, cell, ','))
      out.push_back(cell);
   if(!line.empty() && line.back() == ',')
      out.emplace_back();
   for(auto& c : out) {
      while(!c.empty() && (c.back() == '\r' || c.back() == ' '))
         c.pop_back();
      while(!c.empty() && c.front() == ' ')
         c.erase(c.begin());
   }
   return out;
}

inline double parse_number(const std::string& cell, const std::string& where)
{
   double value = 0.0;
   const auto* end = cell.data() + cell.size();
   auto [ptr, ec] = std::from_chars(cell.data(), end, value);
   if(ec != std::errc{} || ptr != end)
      throw ParseError(where + ": not a number '" + cell + "'");
   return value;
}

inline std::string format_number(double v)
{
   char buf[64];
   auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
   return {buf, ptr};
}

/// Reads a named-column series; the columns are mapped onto `names` order.
inline std::vector<double> read_series(
   const std::filesystem::path& path,
   const std::vector<std::string>& names,
   int expected_rows)
{
   std::ifstream in(path);
   if(!in)
      throw ParseError("cannot open " + path.string());
   std::string line;
   if(!std::getline(in, line))
      throw ParseError(path.string() + ": empty file");
   const auto header = split_csv(line);
   std::vector<std::size_t> column_of(header.size());
   std::vector<bool> seen(names.size(), false);
   for(std::size_t c = 0; c < header.size(); ++c) {
      auto it = std::find(names.begin(), names.end(), header[c]);
      if(it == names.end())
         throw ValidationError({path.filename().string() + ": unknown id '" + header[c] + "'"});
      column_of[c] = static_cast<std::size_t>(it - names.begin());
      if(seen[column_of[c]])
         throw ValidationError({path.filename().string() + ": duplicate column '" + header[c] + "'"});
      seen[column_of[c]] = true;
   }
   for(std::size_t i = 0; i < names.size(); ++i)
      if(!seen[i])
         throw ValidationError({path.filename().string() + ": missing column '" + names[i] + "'"});

   std::vector<double> data;
   int row = 0;
   while(std::getline(in, line)) {
      if(line.empty() || line == "\r")
         continue;
      const auto cells = split_csv(line);
      const std::string where = path.filename().string() + ":" + std::to_string(row + 2);
      if(cells.size() != header.size())
         throw ParseError(where + ": expected " + std::to_string(header.size()) + " columns");
      data.resize(data.size() + names.size());
      double* out = data.data() + data.size() - names.size();
      for(std::size_t c = 0; c < cells.size(); ++c)
         out[column_of[c]] = parse_number(cells[c], where);
      ++row;
   }
   if(row != expected_rows)
      throw ValidationError(
         {path.filename().string() + ": expected " + std::to_string(expected_rows)
          + " rows, found " + std::to_string(row)});
   return data;
}

}  // namespace detail

/// Loads a chronics directory: load_p.csv, gen_p.csv, optional
/// maintenance.csv and optional scenario.json ({"name", "n_steps"}). Without a
/// scenario.json the scenario is one week long.
inline Scenario load_scenario(const GridCase& c, const std::filesystem::path& dir)
{
   Scenario s;
   s.name = dir.filename().string();
   if(s.name.empty())
      s.name = dir.parent_path().filename().string();
   s.n_steps = kWeekSteps;
   if(std::filesystem::exists(dir / "scenario.json")) {
      std::ifstream in(dir / "scenario.json");
      nlohmann::json meta;
      try {
         meta = nlohmann::json::parse(in);
      } catch(const nlohmann::json::parse_error& e) {
         throw ParseError((dir / "scenario.json").string() + ": " + e.what());
      }
      detail::reject_unknown_keys(meta, {"name", "n_steps", "notes"}, "scenario.json");
      s.name = detail::field_or<std::string>(meta, "name", s.name, "scenario.json");
      s.n_steps = detail::field_or<int>(meta, "n_steps", s.n_steps, "scenario.json");
   }
   std::vector<std::string> load_names, gen_names;
   for(const auto& d : c.loads)
      load_names.push_back(d.name);
   for(const auto& g : c.generators)
      gen_names.push_back(g.name);
   s.n_loads = load_names.size();
   s.n_gens = gen_names.size();
   s.load_p = detail::read_series(dir / "load_p.csv", load_names, s.n_steps);
   s.gen_p = detail::read_series(dir / "gen_p.csv", gen_names, s.n_steps);

   const auto maint = dir / "maintenance.csv";
   if(std::filesystem::exists(maint)) {
      std::ifstream in(maint);
      std::string line;
      std::getline(in, line);
      const auto header = detail::split_csv(line);
      if(header != std::vector<std::string>{"line_id", "start_step", "duration_steps"})
         throw ParseError("maintenance.csv: expected header line_id,start_step,duration_steps");
      int row = 1;
      while(std::getline(in, line)) {
         ++row;
         if(line.empty() || line == "\r")
            continue;
         const auto cells = detail::split_csv(line);
         const std::string where = "maintenance.csv:" + std::to_string(row);
         if(cells.size() != 3)
            throw ParseError(where + ": expected 3 columns");
         auto id = c.find_line(cells[0]);
         if(!id)
            throw ValidationError({where + ": unknown line id '" + cells[0] + "'"});
         s.maintenance.push_back(
            {*id, static_cast<int>(detail::parse_number(cells[1], where)),
             static_cast<int>(detail::parse_number(cells[2], where))});
      }
   }
   auto v = scenario_violations(c, s);
   if(!v.empty())
      throw ValidationError(std::move(v));
   return s;
}

inline void
write_scenario(const GridCase& c, const Scenario& s, const std::filesystem::path& dir)
{
   std::filesystem::create_directories(dir);
   const auto write = [&](const char* file, const auto& items, const std::vector<double>& data) {
      std::ofstream out(dir / file);
      for(std::size_t i = 0; i < items.size(); ++i)
         out << (i ? "," : "") << items[i].name;
      out << '\n';
      const std::size_t w = items.size();
      for(int t = 0; t < s.n_steps; ++t) {
         for(std::size_t i = 0; i < w; ++i)
            out << (i ? "," : "") << detail::format_number(data[static_cast<std::size_t>(t) * w + i]);
         out << '\n';
      }
   };
   write("load_p.csv", c.loads, s.load_p);
   write("gen_p.csv", c.generators, s.gen_p);
   std::ofstream maint(dir / "maintenance.csv");
   maint << "line_id,start_step,duration_steps\n";
   for(const auto& m : s.maintenance)
      maint << c.lines[m.line.index()].name << ',' << m.start_step << ',' << m.duration_steps << '\n';
   nlohmann::json meta{{"name", s.name}, {"n_steps", s.n_steps}};
   std::ofstream(dir / "scenario.json") << meta.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------
struct ScenarioConfig {
   std::string name = "generated";
   std::uint64_t seed = 0;
   int n_steps = kWeekSteps;
   std::vector<double> peak_load;  // per load; empty uses the case's load peaks
   double renewable_share_target = 0.2;
   double load_noise = 0.03;        // lognormal sigma per step
   double season_spread = 0.15;     // scenario-level load scale drawn in [1 - spread, 1]
   double solar_noise = 0.15;
   double wind_mean = 0.4;          // fraction of p_max
   double wind_reversion = 0.02;    // per step
   double wind_volatility = 0.03;   // per step
   double loss_margin = 0.01;       // dispatch covers load * (1 + margin)
   std::vector<MaintenanceWindow> maintenance;
};

inline double renewable_share(const Scenario& s, const GridCase& c)
{
   double renew = 0.0, load = 0.0;
   for(int t = 0; t < s.n_steps; ++t) {
      load += s.total_load(t);
      for(std::size_t g = 0; g < s.n_gens; ++g)
         if(is_renewable(c.generators[g].kind))
            renew += s.gen(t, g);
   }
   return load > 0.0 ? renew / load : 0.0;
}

/// Parametric weekly profiles. Loads follow a daily sinusoid peaking mid
/// afternoon, a weekend reduction and lognormal noise. Solar is a bell curve
/// between 06:00 and 20:00, wind a mean-reverting AR(1) process. Renewables
/// are scaled to the requested energy share; dispatchable setpoints split the
/// residual demand in proportion to p_max.
inline Scenario generate_scenario(const GridCase& c, const ScenarioConfig& cfg)
{
   if(!(cfg.renewable_share_target >= 0.0 && cfg.renewable_share_target <= 1.0))
      throw Error("renewable_share_target must lie in [0, 1]");
   if(cfg.n_steps <= 0)
      throw Error("n_steps must be positive");

   std::vector<double> peak = cfg.peak_load;
   if(peak.empty())
      for(const auto& d : c.loads)
         peak.push_back(d.peak);
   if(peak.size() != c.loads.size())
      throw Error("peak_load must list one value per load");

   double dispatch_cap = 0.0, dispatch_min = 0.0;
   for(const auto& g : c.generators)
      if(g.kind == GeneratorKind::dispatchable) {
         dispatch_cap += g.p_max;
         dispatch_min += g.p_min;
      }
   double total_peak = 0.0;
   for(double p : peak)
      total_peak += p;
   if(total_peak > dispatch_cap)
      throw Error("infeasible scenario config: peak load exceeds dispatchable capacity");

   Rng rng(derive_seed(cfg.seed, "chronics"));
   const std::size_t n_l = c.loads.size(), n_g = c.generators.size();
   const auto n_t = static_cast<std::size_t>(cfg.n_steps);
   const double minutes = c.step_minutes;

   Scenario s;
   s.name = cfg.name;
   s.n_steps = cfg.n_steps;
   s.n_loads = n_l;
   s.n_gens = n_g;
   s.load_p.assign(n_t * n_l, 0.0);
   s.gen_p.assign(n_t * n_g, 0.0);
   s.maintenance = cfg.maintenance;

   const double season = 1.0 - cfg.season_spread * rng.uniform();
   const double phase = rng.uniform();  // shifts the daily peak by up to 2 h
   for(std::size_t t = 0; t < n_t; ++t) {
      const double minute = static_cast<double>(t) * minutes;
      const double hour = std::fmod(minute / 60.0, 24.0);
      const int day = static_cast<int>(minute / 1440.0) % 7;
      const double daily =
         0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * (hour - 9.0 - 2.0 * phase) / 24.0);
      const double weekly = day >= 5 ? 0.9 : 1.0;
      for(std::size_t d = 0; d < n_l; ++d) {
         const double noise = std::exp(cfg.load_noise * rng.normal());
         s.load_p[t * n_l + d] = peak[d] * season * daily * weekly * noise;
      }
   }

   // Raw renewable profiles in [0, p_max].
   std::vector<double> raw(n_t * n_g, 0.0);
   for(std::size_t g = 0; g < n_g; ++g) {
      const auto& gen = c.generators[g];
      if(gen.kind == GeneratorKind::solar) {
         for(std::size_t t = 0; t < n_t; ++t) {
            const double hour = std::fmod(static_cast<double>(t) * minutes / 60.0, 24.0);
            if(hour < 6.0 || hour > 20.0)
               continue;
            const double bell = std::pow(std::sin(std::numbers::pi * (hour - 6.0) / 14.0), 2.0);
            const double noise = std::exp(cfg.solar_noise * rng.normal());
            raw[t * n_g + g] = std::min(gen.p_max, gen.p_max * bell * noise);
         }
      } else if(gen.kind == GeneratorKind::wind) {
         double x = cfg.wind_mean;
         for(std::size_t t = 0; t < n_t; ++t) {
            x += cfg.wind_reversion * (cfg.wind_mean - x) + cfg.wind_volatility * rng.normal();
            x = std::clamp(x, 0.0, 1.0);
            raw[t * n_g + g] = gen.p_max * x;
         }
      }
   }

   double load_energy = 0.0;
   for(std::size_t t = 0; t < n_t; ++t)
      load_energy += s.total_load(static_cast<int>(t));

   // Renewable output for a scale factor, capped by p_max and by what the
   // demand can absorb above the dispatchable minimum.
   const auto realize = [&](double scale, std::vector<double>& out) {
      double energy = 0.0;
      for(std::size_t t = 0; t < n_t; ++t) {
         double step_total = 0.0;
         for(std::size_t g = 0; g < n_g; ++g) {
            const auto& gen = c.generators[g];
            if(!is_renewable(gen.kind))
               continue;
            out[t * n_g + g] = std::min(gen.p_max, scale * raw[t * n_g + g]);
            step_total += out[t * n_g + g];
         }
         const double room =
            std::max(0.0, s.total_load(static_cast<int>(t)) * (1.0 + cfg.loss_margin) - dispatch_min);
         if(step_total > room && step_total > 0.0) {
            const double k = room / step_total;
            for(std::size_t g = 0; g < n_g; ++g)
               if(is_renewable(c.generators[g].kind))
                  out[t * n_g + g] *= k;
            step_total = room;
         }
         energy += step_total;
      }
      return energy;
   };

   const double target = cfg.renewable_share_target * load_energy;
   double lo = 0.0, hi = 1.0;
   std::vector<double> scratch(n_t * n_g, 0.0);
   if(target > 0.0) {
      while(realize(hi, scratch) < target && hi < 1e6)
         hi *= 2.0;
      for(int it = 0; it < 80; ++it) {
         const double mid = 0.5 * (lo + hi);
         if(realize(mid, scratch) < target)
            lo = mid;
         else
            hi = mid;
      }
      realize(hi, s.gen_p);
   }

   for(std::size_t t = 0; t < n_t; ++t) {
      double renew = 0.0;
      for(std::size_t g = 0; g < n_g; ++g)
         if(is_renewable(c.generators[g].kind))
            renew += s.gen_p[t * n_g + g];
      const double residual = s.total_load(static_cast<int>(t)) * (1.0 + cfg.loss_margin) - renew;
      if(residual > dispatch_cap)
         throw Error(
            "infeasible scenario config: residual load exceeds dispatchable capacity at step "
            + std::to_string(t));
      for(std::size_t g = 0; g < n_g; ++g) {
         const auto& gen = c.generators[g];
         if(gen.kind != GeneratorKind::dispatchable)
            continue;
         s.gen_p[t * n_g + g] = std::clamp(residual * gen.p_max / dispatch_cap, gen.p_min, gen.p_max);
      }
   }

   auto v = scenario_violations(c, s);
   if(!v.empty())
      throw ValidationError(std::move(v));
   return s;
}

}  // namespace gridward
