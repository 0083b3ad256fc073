#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridward/environment.hpp"

namespace gridward {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Parameter records (JSON), used by log headers and config files.
// ---------------------------------------------------------------------------
inline ojson params_to_json(const EnvParams& p)
{
   return ojson{
      {"substation_cooldown_steps", p.substation_cooldown_steps},
      {"line_cooldown_steps", p.line_cooldown_steps},
      {"line_failure_cooldown_steps", p.line_failure_cooldown_steps},
      {"overload_trip_steps", p.overload_trip_steps},
      {"hard_overload_rho", p.hard_overload_rho},
      {"max_substations_changed_per_step", p.max_substations_changed_per_step},
      {"max_lines_changed_per_step", p.max_lines_changed_per_step},
      {"kappa", p.kappa},
      {"mu_per_day", p.mu_per_day},
      {"budget_cap", p.budget_cap},
      {"steps_per_day", p.steps_per_day},
      {"t_opt_steps", p.t_opt_steps},
      {"t_width_steps", p.t_width_steps},
      {"redispatch_tolerance_mw", p.redispatch_tolerance_mw},
      {"opponent_enabled", p.opponent_enabled},
      {"opponent",
       {{"mean_inter_attack_steps", p.opponent.mean_inter_attack_steps},
        {"mean_duration_steps", p.opponent.mean_duration_steps},
        {"min_duration_steps", p.opponent.min_duration_steps},
        {"max_duration_steps", p.opponent.max_duration_steps},
        {"max_weight_ratio", p.opponent.max_weight_ratio},
        {"weight_floor", p.opponent.weight_floor}}}};
}

/// Fields absent from `j` keep their defaults; unknown fields are rejected.
inline EnvParams params_from_json(const nlohmann::json& j, EnvParams p = {})
{
   detail::reject_unknown_keys(
      j,
      {"substation_cooldown_steps", "line_cooldown_steps", "line_failure_cooldown_steps",
       "overload_trip_steps", "hard_overload_rho", "max_substations_changed_per_step",
       "max_lines_changed_per_step", "kappa", "mu_per_day", "budget_cap", "steps_per_day",
       "t_opt_steps", "t_width_steps", "redispatch_tolerance_mw", "opponent_enabled", "opponent"},
      "params");
   const auto get = [&](const char* key, auto& slot) {
      slot = detail::field_or(j, key, slot, "params");
   };
   get("substation_cooldown_steps", p.substation_cooldown_steps);
   get("line_cooldown_steps", p.line_cooldown_steps);
   get("line_failure_cooldown_steps", p.line_failure_cooldown_steps);
   get("overload_trip_steps", p.overload_trip_steps);
   get("hard_overload_rho", p.hard_overload_rho);
   get("max_substations_changed_per_step", p.max_substations_changed_per_step);
   get("max_lines_changed_per_step", p.max_lines_changed_per_step);
   get("kappa", p.kappa);
   get("mu_per_day", p.mu_per_day);
   get("budget_cap", p.budget_cap);
   get("steps_per_day", p.steps_per_day);
   get("t_opt_steps", p.t_opt_steps);
   get("t_width_steps", p.t_width_steps);
   get("redispatch_tolerance_mw", p.redispatch_tolerance_mw);
   get("opponent_enabled", p.opponent_enabled);
   if(j.contains("opponent")) {
      const auto& o = j.at("opponent");
      detail::reject_unknown_keys(
         o,
         {"mean_inter_attack_steps", "mean_duration_steps", "min_duration_steps",
          "max_duration_steps", "max_weight_ratio", "weight_floor"},
         "params.opponent");
      const auto oget = [&](const char* key, auto& slot) {
         slot = detail::field_or(o, key, slot, "params.opponent");
      };
      oget("mean_inter_attack_steps", p.opponent.mean_inter_attack_steps);
      oget("mean_duration_steps", p.opponent.mean_duration_steps);
      oget("min_duration_steps", p.opponent.min_duration_steps);
      oget("max_duration_steps", p.opponent.max_duration_steps);
      oget("max_weight_ratio", p.opponent.max_weight_ratio);
      oget("weight_floor", p.opponent.weight_floor);
   }
   return p;
}

inline ojson scenario_config_to_json(const ScenarioConfig& c)
{
   ojson maint = ojson::array();
   for(const auto& m : c.maintenance)
      maint.push_back({m.line.value, m.start_step, m.duration_steps});
   return ojson{
      {"name", c.name},
      {"seed", c.seed},
      {"n_steps", c.n_steps},
      {"peak_load", c.peak_load},
      {"renewable_share_target", c.renewable_share_target},
      {"load_noise", c.load_noise},
      {"season_spread", c.season_spread},
      {"solar_noise", c.solar_noise},
      {"wind_mean", c.wind_mean},
      {"wind_reversion", c.wind_reversion},
      {"wind_volatility", c.wind_volatility},
      {"loss_margin", c.loss_margin},
      {"maintenance", maint}};
}

inline ScenarioConfig scenario_config_from_json(const nlohmann::json& j)
{
   detail::reject_unknown_keys(
      j,
      {"name", "seed", "n_steps", "peak_load", "renewable_share_target", "load_noise",
       "season_spread", "solar_noise", "wind_mean", "wind_reversion", "wind_volatility",
       "loss_margin", "maintenance"},
      "scenario config");
   ScenarioConfig c;
   const auto get = [&](const char* key, auto& slot) {
      slot = detail::field_or(j, key, slot, "scenario config");
   };
   get("name", c.name);
   get("seed", c.seed);
   get("n_steps", c.n_steps);
   get("peak_load", c.peak_load);
   get("renewable_share_target", c.renewable_share_target);
   get("load_noise", c.load_noise);
   get("season_spread", c.season_spread);
   get("solar_noise", c.solar_noise);
   get("wind_mean", c.wind_mean);
   get("wind_reversion", c.wind_reversion);
   get("wind_volatility", c.wind_volatility);
   get("loss_margin", c.loss_margin);
   if(j.contains("maintenance"))
      for(const auto& m : j.at("maintenance"))
         c.maintenance.push_back({LineId{m.at(0).get<int>()}, m.at(1).get<int>(), m.at(2).get<int>()});
   return c;
}

// ---------------------------------------------------------------------------
// Episode log records
// ---------------------------------------------------------------------------
struct LogHeader {
   std::string format = "gridward-episode/1";
   std::string case_path;
   nlohmann::json scenario_source;  // {"dir": path} or {"generate": config}
   std::string scenario_name;
   std::uint64_t seed = 0;
   std::string agent;
   EnvParams params;
   std::optional<AttackSchedule> pinned_schedule;
   int n_steps = 0;
   int steps_per_day = 288;
};

struct StepRecord {
   int step = 0;
   std::string action = "noop";  // as requested; see flags for illegal
   std::optional<std::vector<int>> alarm;  // zones, null when no alarm was raised
   bool alarm_accepted = false;
   bool alarm_rejected = false;
   double alpha = 0.0;
   std::vector<double> rho;
   std::vector<int> attacked;
   std::vector<int> tripped;
   std::vector<std::string> flags;
   int topo_dist = 0;
   double losses_mw = 0.0;
   double redispatch_mw = 0.0;
   double redispatch_cost = 0.0;
   double curtailed_mw = 0.0;
   double demand_mw = 0.0;
   std::string hash;

   [[nodiscard]] bool has_flag(std::string_view f) const
   {
      return std::find(flags.begin(), flags.end(), f) != flags.end();
   }
   friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EndRecord {
   bool survived = true;
   int t_bar = -1;
   int failure_zone = -1;
   std::string cause;
   double blackout_mwh = 0.0;  // demand not served from t_bar to the end
   nlohmann::json scores = nlohmann::json::object();
};

struct EpisodeLog {
   LogHeader header;
   std::vector<StepRecord> steps;  // steps[0] is the reset record
   std::optional<EndRecord> end;
};

inline std::string hex64(std::uint64_t v)
{
   char buf[17];
   std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
   return buf;
}

inline StepRecord reset_record(const Environment& env)
{
   const auto& o = env.observation();
   StepRecord r;
   r.step = o.step;
   r.alpha = o.alpha;
   r.rho = o.rho;
   for(std::size_t l = 0; l < o.attacked.size(); ++l)
      if(o.attacked[l])
         r.attacked.push_back(static_cast<int>(l));
   r.flags.push_back("reset");
   r.topo_dist = o.topology_distance;
   r.demand_mw = env.scenario().total_load(o.step);
   r.losses_mw = losses_proxy(env.grid(), env.solution());
   r.hash = hex64(env.state_hash());
   return r;
}

inline StepRecord step_record(const Environment& env, const StepResult& res)
{
   const auto& o = res.observation;
   const auto& info = res.info;
   StepRecord r;
   r.step = o.step;
   r.action = format_action(env.grid(), info.requested);
   if(info.alarm) {
      std::vector<int> zones;
      for(auto z : info.alarm->zones)
         zones.push_back(z.value);
      r.alarm = zones;
   }
   r.alarm_accepted = info.alarm_accepted;
   r.alarm_rejected = info.alarm_rejected;
   r.alpha = o.alpha;
   r.rho = o.rho;
   for(std::size_t l = 0; l < o.attacked.size(); ++l)
      if(o.attacked[l])
         r.attacked.push_back(static_cast<int>(l));
   for(auto id : info.tripped)
      r.tripped.push_back(id.value);
   if(info.illegal)
      r.flags.push_back("illegal");
   if(info.attack_started)
      r.flags.push_back("attack_start");
   if(info.attack_ended)
      r.flags.push_back("attack_end");
   if(res.game_over)
      r.flags.push_back("game_over");
   r.topo_dist = o.topology_distance;
   r.losses_mw = info.losses_mw;
   r.redispatch_mw = info.redispatch_mw;
   r.redispatch_cost = info.redispatch_cost;
   r.curtailed_mw = info.curtailed_mw;
   r.demand_mw = info.demand_mw;
   r.hash = hex64(env.state_hash());
   return r;
}

inline ojson to_json(const LogHeader& h)
{
   ojson j{
      {"type", "header"},
      {"format", h.format},
      {"case", h.case_path},
      {"scenario", ojson::parse(h.scenario_source.dump())},
      {"scenario_name", h.scenario_name},
      {"seed", h.seed},
      {"agent", h.agent},
      {"n_steps", h.n_steps},
      {"steps_per_day", h.steps_per_day},
      {"params", params_to_json(h.params)}};
   if(h.pinned_schedule) {
      ojson s = ojson::array();
      for(const auto& a : *h.pinned_schedule)
         s.push_back({a.start_step, a.duration_steps});
      j["attack_schedule"] = s;
   } else {
      j["attack_schedule"] = nullptr;
   }
   return j;
}

inline ojson to_json(const StepRecord& r)
{
   ojson j{{"type", "step"}, {"step", r.step}, {"action", r.action}};
   j["alarm"] = r.alarm ? ojson(*r.alarm) : ojson(nullptr);
   j["alarm_accepted"] = r.alarm_accepted;
   j["alarm_rejected"] = r.alarm_rejected;
   j["alpha"] = r.alpha;
   j["rho"] = r.rho;
   j["attacked"] = r.attacked;
   j["tripped"] = r.tripped;
   j["flags"] = r.flags;
   j["topo_dist"] = r.topo_dist;
   j["cost"] = {
      {"losses_mw", r.losses_mw},
      {"redispatch_mw", r.redispatch_mw},
      {"redispatch_cost", r.redispatch_cost},
      {"curtailed_mw", r.curtailed_mw},
      {"demand_mw", r.demand_mw}};
   j["hash"] = r.hash;
   return j;
}

inline ojson to_json(const EndRecord& e)
{
   ojson j{{"type", "end"}, {"outcome", e.survived ? "survived" : "failed"}};
   j["t_bar"] = e.survived ? ojson(nullptr) : ojson(e.t_bar);
   j["failure_zone"] = e.survived ? ojson(nullptr) : ojson(e.failure_zone);
   j["cause"] = e.survived ? ojson(nullptr) : ojson(e.cause);
   j["blackout_mwh"] = e.blackout_mwh;
   j["scores"] = ojson::parse(e.scores.dump());
   return j;
}

inline std::string to_jsonl(const EpisodeLog& log)
{
   std::string out = to_json(log.header).dump() + "\n";
   for(const auto& r : log.steps)
      out += to_json(r).dump() + "\n";
   if(log.end)
      out += to_json(*log.end).dump() + "\n";
   return out;
}

inline void write_log(const EpisodeLog& log, const std::filesystem::path& path)
{
   if(path.has_parent_path())
      std::filesystem::create_directories(path.parent_path());
   std::ofstream out(path, std::ios::binary);
   if(!out)
      throw Error("cannot write log " + path.string());
   out << to_jsonl(log);
}

inline StepRecord step_record_from_json(const nlohmann::json& j)
{
   StepRecord r;
   r.step = j.at("step").get<int>();
   r.action = j.at("action").get<std::string>();
   if(!j.at("alarm").is_null())
      r.alarm = j.at("alarm").get<std::vector<int>>();
   r.alarm_accepted = j.at("alarm_accepted").get<bool>();
   r.alarm_rejected = j.at("alarm_rejected").get<bool>();
   r.alpha = j.at("alpha").get<double>();
   r.rho = j.at("rho").get<std::vector<double>>();
   r.attacked = j.at("attacked").get<std::vector<int>>();
   r.tripped = j.at("tripped").get<std::vector<int>>();
   r.flags = j.at("flags").get<std::vector<std::string>>();
   r.topo_dist = j.at("topo_dist").get<int>();
   const auto& c = j.at("cost");
   r.losses_mw = c.at("losses_mw").get<double>();
   r.redispatch_mw = c.at("redispatch_mw").get<double>();
   r.redispatch_cost = c.at("redispatch_cost").get<double>();
   r.curtailed_mw = c.at("curtailed_mw").get<double>();
   r.demand_mw = c.at("demand_mw").get<double>();
   r.hash = j.at("hash").get<std::string>();
   return r;
}

inline EpisodeLog parse_log(std::istream& in, const std::string& origin = "log")
{
   EpisodeLog log;
   std::string line;
   int row = 0;
   bool have_header = false;
   while(std::getline(in, line)) {
      ++row;
      if(line.empty())
         continue;
      const std::string where = origin + ":" + std::to_string(row);
      nlohmann::json j;
      try {
         j = nlohmann::json::parse(line);
         const auto type = j.at("type").get<std::string>();
         if(type == "header") {
            auto& h = log.header;
            h.format = j.at("format").get<std::string>();
            if(h.format != "gridward-episode/1")
               throw ParseError(where + ": unsupported log format " + h.format);
            h.case_path = j.at("case").get<std::string>();
            h.scenario_source = j.at("scenario");
            h.scenario_name = j.at("scenario_name").get<std::string>();
            h.seed = j.at("seed").get<std::uint64_t>();
            h.agent = j.at("agent").get<std::string>();
            h.n_steps = j.at("n_steps").get<int>();
            h.steps_per_day = j.at("steps_per_day").get<int>();
            h.params = params_from_json(j.at("params"));
            if(!j.at("attack_schedule").is_null()) {
               AttackSchedule s;
               for(const auto& a : j.at("attack_schedule"))
                  s.push_back({a.at(0).get<int>(), a.at(1).get<int>()});
               h.pinned_schedule = s;
            }
            have_header = true;
         } else if(type == "step") {
            log.steps.push_back(step_record_from_json(j));
         } else if(type == "end") {
            EndRecord e;
            e.survived = j.at("outcome").get<std::string>() == "survived";
            if(!e.survived) {
               e.t_bar = j.at("t_bar").get<int>();
               e.failure_zone = j.at("failure_zone").get<int>();
               e.cause = j.at("cause").get<std::string>();
            }
            e.blackout_mwh = j.at("blackout_mwh").get<double>();
            e.scores = j.at("scores");
            log.end = e;
         } else {
            throw ParseError(where + ": unknown record type " + type);
         }
      } catch(const nlohmann::json::exception& e) {
         throw ParseError(where + ": " + e.what());
      }
   }
   if(!have_header)
      throw ParseError(origin + ": missing header record");
   return log;
}

inline EpisodeLog read_log(const std::filesystem::path& path)
{
   std::ifstream in(path, std::ios::binary);
   if(!in)
      throw ParseError("cannot open log " + path.string());
   return parse_log(in, path.filename().string());
}

/// Every *.jsonl file of a directory, in name order.
inline std::vector<std::filesystem::path> list_logs(const std::filesystem::path& dir)
{
   std::vector<std::filesystem::path> out;
   if(!std::filesystem::is_directory(dir))
      throw Error("not a directory: " + dir.string());
   for(const auto& e : std::filesystem::recursive_directory_iterator(dir))
      if(e.is_regular_file() && e.path().extension() == ".jsonl")
         out.push_back(e.path());
   std::sort(out.begin(), out.end());
   return out;
}

}  // namespace gridward
