#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridward/episode_log.hpp"

namespace gridward {

// ---------------------------------------------------------------------------
// Alarm score
// ---------------------------------------------------------------------------
struct AlarmRecord {
   int step = 0;
   std::vector<ZoneId> zones;
   bool accepted = true;
};

struct EpisodeOutcome {
   bool survived = true;
   int t_bar = -1;
   ZoneId failure_zone;
};

struct AlarmScoreParams {
   int t_opt_steps = 7;
   int t_width_steps = 5;
   double wrong_zone_factor = 2.0 / 3.0;
   double survived_score = 100.0;
   double missed_score = -200.0;

   static AlarmScoreParams from(const EnvParams& p)
   {
      AlarmScoreParams out;
      out.t_opt_steps = p.t_opt_steps;
      out.t_width_steps = p.t_width_steps;
      return out;
   }
};

struct AlarmScore {
   double score = 0.0;
   std::optional<int> best_lead;  // t_bar - t_a of the alarm that scored
};

/// Score of one alarm raised `lead` steps before the failure; nullopt when the
/// alarm lies outside the valid window (T_opt - T_width, T_opt + T_width].
inline std::optional<double>
alarm_value(int lead, bool zone_hit, const AlarmScoreParams& p = {})
{
   const int lo = p.t_opt_steps - p.t_width_steps;
   const int hi = p.t_opt_steps + p.t_width_steps;
   if(lead <= lo || lead > hi)
      return std::nullopt;
   const double timing =
      1.0 - std::abs(static_cast<double>(p.t_opt_steps - lead)) / p.t_width_steps;
   return 100.0 * timing * (zone_hit ? 1.0 : p.wrong_zone_factor);
}

inline AlarmScore alarm_score(
   const std::vector<AlarmRecord>& alarms,
   const EpisodeOutcome& outcome,
   const AlarmScoreParams& p = {})
{
   if(outcome.survived)
      return {p.survived_score, std::nullopt};
   AlarmScore best{p.missed_score, std::nullopt};
   bool found = false;
   for(const auto& a : alarms) {
      if(!a.accepted)
         continue;
      const int lead = outcome.t_bar - a.step;
      const bool hit =
         std::find(a.zones.begin(), a.zones.end(), outcome.failure_zone) != a.zones.end();
      const auto v = alarm_value(lead, hit, p);
      if(v && (!found || *v > best.score)) {
         best = {*v, lead};
         found = true;
      }
   }
   return best;
}

/// Maps the raw alarm score range [-200, 100] onto [-100, 100].
inline double rescale_alarm_score(double raw) { return (2.0 * raw + 100.0) / 3.0; }

inline double combined_score(double alarm_raw, double operation)
{
   return 0.3 * rescale_alarm_score(alarm_raw) + 0.7 * operation;
}

// ---------------------------------------------------------------------------
// Operation cost score
// ---------------------------------------------------------------------------
struct Pricing {
   double loss_price = 40.0;         // per MWh of losses
   double curtailment_price = 100.0; // per MWh curtailed
   double ceiling_price = 3000.0;    // per MWh of demand not served after a blackout
   double lower_bound_loss_factor = 0.8;
};

inline Pricing pricing_from_json(const nlohmann::json& j)
{
   detail::reject_unknown_keys(
      j, {"loss_price", "curtailment_price", "ceiling_price", "lower_bound_loss_factor", "notes"},
      "pricing");
   Pricing p;
   p.loss_price = detail::field_or(j, "loss_price", p.loss_price, "pricing");
   p.curtailment_price = detail::field_or(j, "curtailment_price", p.curtailment_price, "pricing");
   p.ceiling_price = detail::field_or(j, "ceiling_price", p.ceiling_price, "pricing");
   p.lower_bound_loss_factor =
      detail::field_or(j, "lower_bound_loss_factor", p.lower_bound_loss_factor, "pricing");
   if(!(p.loss_price >= 0) || !(p.curtailment_price >= 0) || !(p.ceiling_price > 0)
      || !(p.lower_bound_loss_factor > 0 && p.lower_bound_loss_factor < 1))
      throw ValidationError({"pricing: prices must be non-negative and 0 < lower_bound_loss_factor < 1"});
   return p;
}

inline Pricing load_pricing(const std::filesystem::path& path)
{
   std::ifstream in(path);
   if(!in)
      throw ParseError("cannot open pricing file " + path.string());
   try {
      return pricing_from_json(nlohmann::json::parse(in));
   } catch(const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
   }
}

inline double hours_per_step(int steps_per_day) { return 24.0 / steps_per_day; }

inline double step_cost(const StepRecord& r, const Pricing& p, double h)
{
   return r.losses_mw * h * p.loss_price + r.redispatch_cost * h
          + r.curtailed_mw * h * p.curtailment_price;
}

/// Operating cost of a logged episode plus the blackout penalty on the
/// demand left unserved after a failure. The reset record carries no cost.
inline double episode_cost(const EpisodeLog& log, const Pricing& p)
{
   const double h = hours_per_step(log.header.steps_per_day);
   double total = 0.0;
   for(const auto& r : log.steps)
      if(!r.has_flag("reset"))
         total += step_cost(r, p, h);
   if(log.end && !log.end->survived)
      total += log.end->blackout_mwh * p.ceiling_price;
   return total;
}

/// Energy (MWh) of the demand from `from_step` to the end of the scenario.
inline double remaining_demand_mwh(const Scenario& s, int from_step, int steps_per_day)
{
   const double h = hours_per_step(steps_per_day);
   double e = 0.0;
   for(int t = std::max(0, from_step); t < s.n_steps; ++t)
      e += s.total_load(t) * h;
   return e;
}

struct CostBaselines {
   double lower_bound = 0.0;   // maps to +100
   double do_nothing = 0.0;    // maps to 0
   double blackout = 0.0;      // maps to -100
};

/// Losses of the reference topology over the whole scenario with no outage,
/// priced and scaled by the lower-bound factor.
inline double lower_bound_cost(
   const GridCase& c, const Scenario& s, const Pricing& p, int steps_per_day)
{
   const double h = hours_per_step(steps_per_day);
   double total = 0.0;
   Topology t = c.reference_topology;
   for(int step = 0; step < s.n_steps; ++step) {
      Injections inj;
      inj.p_gen.resize(c.generators.size());
      inj.p_load.resize(c.loads.size());
      for(std::size_t g = 0; g < c.generators.size(); ++g)
         inj.p_gen[g] = s.gen(step, g);
      for(std::size_t d = 0; d < c.loads.size(); ++d)
         inj.p_load[d] = s.load(step, d);
      total += losses_proxy(c, solve_dc(c, t, inj)) * h * p.loss_price;
   }
   return total * p.lower_bound_loss_factor;
}

inline double blackout_cost(const Scenario& s, const Pricing& p, int steps_per_day)
{
   return remaining_demand_mwh(s, 0, steps_per_day) * p.ceiling_price;
}

/// Piecewise-linear: lower bound -> 100, do-nothing -> 0, blackout -> -100,
/// clamped to [-100, 100].
inline double operation_cost_score(double cost, const CostBaselines& b)
{
   if(!(b.lower_bound < b.do_nothing) || !(b.do_nothing < b.blackout))
      throw Error("degenerate cost baselines: need lower_bound < do_nothing < blackout");
   double s = 0.0;
   if(cost <= b.do_nothing)
      s = 100.0 * (b.do_nothing - cost) / (b.do_nothing - b.lower_bound);
   else
      s = -100.0 * (cost - b.do_nothing) / (b.blackout - b.do_nothing);
   return std::clamp(s, -100.0, 100.0);
}

inline double operation_cost_score(const EpisodeLog& log, const CostBaselines& b, const Pricing& p)
{
   return operation_cost_score(episode_cost(log, p), b);
}

// ---------------------------------------------------------------------------
// Scores from logs
// ---------------------------------------------------------------------------
inline std::vector<AlarmRecord> alarms_of(const EpisodeLog& log)
{
   std::vector<AlarmRecord> out;
   for(const auto& r : log.steps)
      if(r.alarm) {
         AlarmRecord a;
         a.step = r.step;
         for(int z : *r.alarm)
            a.zones.push_back(ZoneId{z});
         a.accepted = r.alarm_accepted;
         out.push_back(std::move(a));
      }
   return out;
}

inline EpisodeOutcome outcome_of(const EpisodeLog& log)
{
   if(!log.end)
      throw Error("episode log has no end record");
   EpisodeOutcome o;
   o.survived = log.end->survived;
   if(!o.survived) {
      o.t_bar = log.end->t_bar;
      o.failure_zone = ZoneId{log.end->failure_zone};
   }
   return o;
}

inline AlarmScore alarm_score(const EpisodeLog& log)
{
   return alarm_score(alarms_of(log), outcome_of(log), AlarmScoreParams::from(log.header.params));
}

/// Lead (t_a - t_bar) to report for a failed episode: the scoring alarm if
/// any, else the last accepted alarm at or before the failure.
inline std::optional<int> reported_alarm_offset(const EpisodeLog& log)
{
   const auto out = outcome_of(log);
   if(out.survived)
      return std::nullopt;
   const auto s = alarm_score(log);
   if(s.best_lead)
      return -*s.best_lead;
   std::optional<int> last;
   for(const auto& a : alarms_of(log))
      if(a.accepted && a.step <= out.t_bar)
         last = a.step - out.t_bar;
   return last;
}

struct ScoreRow {
   std::string scenario;
   std::string agent;
   std::uint64_t seed = 0;
   bool survived = true;
   std::optional<int> t_bar;
   std::optional<int> alarm_offset;  // t_a - t_bar
   double alarm_raw = 0.0;
   double alarm_rescaled = 0.0;
   double operation = 0.0;
   double combined = 0.0;
   int steps_played = 0;
};

/// Scores stored in a log's end record (written by the runner).
inline ScoreRow score_row(const EpisodeLog& log)
{
   ScoreRow row;
   row.scenario = log.header.scenario_name;
   row.agent = log.header.agent;
   row.seed = log.header.seed;
   const auto out = outcome_of(log);
   row.survived = out.survived;
   if(!out.survived)
      row.t_bar = out.t_bar;
   row.alarm_offset = reported_alarm_offset(log);
   row.alarm_raw = alarm_score(log).score;
   row.alarm_rescaled = rescale_alarm_score(row.alarm_raw);
   const auto& sc = log.end->scores;
   if(sc.contains("operation")) {
      row.operation = sc.at("operation").get<double>();
   }
   row.combined = combined_score(row.alarm_raw, row.operation);
   row.steps_played = static_cast<int>(log.steps.size()) - 1;
   return row;
}

inline double suite_score(const std::vector<ScoreRow>& rows)
{
   if(rows.empty())
      return 0.0;
   double s = 0.0;
   for(const auto& r : rows)
      s += r.combined;
   return s / static_cast<double>(rows.size());
}

/// Attention budget rebuilt from the accepted-alarm flags of a log, one value
/// per record.
inline std::vector<double> budget_trace(const EpisodeLog& log)
{
   const auto& p = log.header.params;
   std::vector<double> out;
   double alpha = p.budget_cap;
   for(const auto& r : log.steps) {
      if(!r.has_flag("reset")) {
         if(r.alarm_accepted)
            alpha -= p.kappa;
         else
            alpha = std::min(p.budget_cap, alpha + p.regen_per_step());
      }
      out.push_back(alpha);
   }
   return out;
}

// ---------------------------------------------------------------------------
// Behavior statistics
// ---------------------------------------------------------------------------
struct BehaviorStats {
   int episodes = 0;
   double days_played = 0.0;
   double alarms_per_day = 0.0;   // accepted alarms
   double mean_budget = 0.0;
   double frac_budget_below_kappa = 0.0;
   double mean_actions_per_episode = 0.0;
   int max_actions_per_episode = 0;
   double mean_topology_distance = 0.0;
   int survived = 0;
};

inline BehaviorStats episode_stats(const std::vector<EpisodeLog>& logs)
{
   BehaviorStats st;
   std::size_t records = 0;
   int alarms = 0;
   int below = 0;
   double alpha_sum = 0.0;
   double dist_sum = 0.0;
   int actions_total = 0;
   for(const auto& log : logs) {
      ++st.episodes;
      const double kappa = log.header.params.kappa;
      int actions = 0;
      for(const auto& r : log.steps) {
         ++records;
         alpha_sum += r.alpha;
         dist_sum += r.topo_dist;
         below += r.alpha < kappa;
         if(r.has_flag("reset"))
            continue;
         alarms += r.alarm_accepted;
         actions += r.action != "noop" && !r.has_flag("illegal");
      }
      // A log of n records covers n chronics steps, the reset included.
      st.days_played += static_cast<double>(log.steps.size()) / log.header.steps_per_day;
      actions_total += actions;
      st.max_actions_per_episode = std::max(st.max_actions_per_episode, actions);
      if(log.end && log.end->survived)
         ++st.survived;
   }
   if(records > 0) {
      st.mean_budget = alpha_sum / static_cast<double>(records);
      st.frac_budget_below_kappa = static_cast<double>(below) / static_cast<double>(records);
      st.mean_topology_distance = dist_sum / static_cast<double>(records);
   }
   if(st.days_played > 0)
      st.alarms_per_day = alarms / st.days_played;
   if(st.episodes > 0)
      st.mean_actions_per_episode = static_cast<double>(actions_total) / st.episodes;
   return st;
}

inline nlohmann::ordered_json to_json(const BehaviorStats& s)
{
   return {
      {"episodes", s.episodes},
      {"survived", s.survived},
      {"days_played", s.days_played},
      {"alarms_per_day", s.alarms_per_day},
      {"mean_budget", s.mean_budget},
      {"frac_budget_below_kappa", s.frac_budget_below_kappa},
      {"mean_actions_per_episode", s.mean_actions_per_episode},
      {"max_actions_per_episode", s.max_actions_per_episode},
      {"mean_topology_distance", s.mean_topology_distance}};
}

}  // namespace gridward
