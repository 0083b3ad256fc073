#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gridward/chronics.hpp"
#include "gridward/core.hpp"
#include "gridward/grid_model.hpp"

namespace gridward {

struct OpponentParams {
   double mean_inter_attack_steps = 288.0;  // about one attack per day
   double mean_duration_steps = 48.0;       // four hours
   int min_duration_steps = 24;
   int max_duration_steps = 96;
   double max_weight_ratio = 4.0;
   double weight_floor = 1e-3;
};

struct AttackEvent {
   LineId line;
   int start_step = 0;
   int duration_steps = 0;

   [[nodiscard]] int end_step() const { return start_step + duration_steps; }
   [[nodiscard]] bool covers(int step) const { return step >= start_step && step < end_step(); }

   friend bool operator==(const AttackEvent&, const AttackEvent&) = default;
};

/// Attack start time and duration; shared across agents for fair comparison.
struct ScheduledAttack {
   int start_step = 0;
   int duration_steps = 0;

   friend bool operator==(const ScheduledAttack&, const ScheduledAttack&) = default;
};

using AttackSchedule = std::vector<ScheduledAttack>;

/// Geometric waiting time on {1, 2, ...} with the given mean.
inline int sample_inter_attack(Rng& rng, double mean = 288.0)
{
   const double p = 1.0 / mean;
   const double u = rng.uniform_open0();
   const double k = std::ceil(std::log(u) / std::log1p(-p));
   return std::max(1, static_cast<int>(std::min(k, 1e9)));
}

/// Exponential duration rounded to whole steps, redrawn until it falls in
/// [min_duration_steps, max_duration_steps].
inline int sample_duration(Rng& rng, const OpponentParams& p = {})
{
   for(;;) {
      const double d = std::round(rng.exponential(p.mean_duration_steps));
      if(d >= p.min_duration_steps && d <= p.max_duration_steps)
         return static_cast<int>(d);
   }
}

/// Load-factor weighted target distribution. Weights are rho clamped to
/// [w_min, ratio * w_min] with w_min the smallest positive rho among available
/// lines (at least `floor`). Unavailable lines get probability 0. Returns all
/// zeros when no line is available.
inline std::vector<double> attack_probabilities(
   const std::vector<double>& rho,
   const std::vector<bool>& available,
   double ratio = 4.0,
   double floor = 1e-3)
{
   std::vector<double> p(rho.size(), 0.0);
   double w_min = std::numeric_limits<double>::infinity();
   bool any = false;
   for(std::size_t i = 0; i < rho.size(); ++i) {
      if(!available[i])
         continue;
      any = true;
      if(rho[i] > 0.0)
         w_min = std::min(w_min, rho[i]);
   }
   if(!any)
      return p;
   if(!std::isfinite(w_min))
      w_min = floor;
   w_min = std::max(w_min, floor);
   double total = 0.0;
   for(std::size_t i = 0; i < rho.size(); ++i)
      if(available[i]) {
         p[i] = std::clamp(rho[i], w_min, ratio * w_min);
         total += p[i];
      }
   for(double& x : p)
      x /= total;
   return p;
}

/// Attack windows for one episode. Consecutive attacks never overlap: the
/// next start is the later of (start + waiting time) and the current end.
inline AttackSchedule
generate_attack_schedule(Rng& rng, int n_steps, const OpponentParams& p = {})
{
   AttackSchedule out;
   int start = sample_inter_attack(rng, p.mean_inter_attack_steps);
   while(start < n_steps) {
      const int duration = sample_duration(rng, p);
      out.push_back({start, duration});
      const int gap = sample_inter_attack(rng, p.mean_inter_attack_steps);
      start = std::max(start + gap, start + duration);
   }
   return out;
}

inline std::vector<std::string>
schedule_violations(const AttackSchedule& s, const OpponentParams& p = {})
{
   std::vector<std::string> v;
   for(std::size_t i = 0; i < s.size(); ++i) {
      const auto& a = s[i];
      const std::string where = "attack " + std::to_string(i);
      if(a.start_step < 1)
         v.push_back(where + ": start_step must be >= 1");
      if(a.duration_steps < p.min_duration_steps || a.duration_steps > p.max_duration_steps)
         v.push_back(where + ": duration outside the allowed range");
      if(i > 0 && a.start_step < s[i - 1].start_step + s[i - 1].duration_steps)
         v.push_back(where + ": overlaps the previous attack");
   }
   return v;
}

/// CSV with header start_step,duration_steps.
inline AttackSchedule load_attack_schedule(const std::filesystem::path& path)
{
   std::ifstream in(path);
   if(!in)
      throw ParseError("cannot open attack schedule " + path.string());
   std::string line;
   std::getline(in, line);
   if(detail::split_csv(line) != std::vector<std::string>{"start_step", "duration_steps"})
      throw ParseError(path.string() + ": expected header start_step,duration_steps");
   AttackSchedule s;
   int row = 1;
   while(std::getline(in, line)) {
      ++row;
      if(line.empty() || line == "\r")
         continue;
      const auto cells = detail::split_csv(line);
      const std::string where = path.filename().string() + ":" + std::to_string(row);
      if(cells.size() != 2)
         throw ParseError(where + ": expected 2 columns");
      s.push_back(
         {static_cast<int>(detail::parse_number(cells[0], where)),
          static_cast<int>(detail::parse_number(cells[1], where))});
   }
   auto v = schedule_violations(s);
   if(!v.empty())
      throw ValidationError(std::move(v));
   return s;
}

inline void write_attack_schedule(const AttackSchedule& s, const std::filesystem::path& path)
{
   std::ofstream out(path);
   out << "start_step,duration_steps\n";
   for(const auto& a : s)
      out << a.start_step << ',' << a.duration_steps << '\n';
}

struct OpponentState {
   AttackSchedule schedule;
   std::size_t next_index = 0;
   std::optional<AttackEvent> active;
   Rng target_rng;
   int attacks_started = 0;

   [[nodiscard]] int next_attack_step() const
   {
      return next_index < schedule.size() ? schedule[next_index].start_step
                                          : std::numeric_limits<int>::max();
   }

   void hash_into(StateHasher& h) const
   {
      h.add(next_index);
      h.add(active.has_value());
      if(active) {
         h.add(active->line.value);
         h.add(active->start_step);
         h.add(active->duration_steps);
      }
      h.add(target_rng.seed());
      h.add(target_rng.draws());
      h.add(attacks_started);
      h.add(schedule.size());
      for(const auto& a : schedule) {
         h.add(a.start_step);
         h.add(a.duration_steps);
      }
   }
};

struct OpponentStep {
   std::vector<bool> attacked;  // per line of the case
   std::optional<AttackEvent> started;
   std::optional<AttackEvent> ended;
};

/// Advances the opponent to `step`. `rho` and `available` are per case line
/// and describe the state the attack decision is taken on.
inline OpponentStep step_opponent(
   OpponentState& state,
   const GridCase& c,
   const std::vector<double>& rho,
   const std::vector<bool>& available,
   int step,
   const OpponentParams& params = {})
{
   OpponentStep out;
   out.attacked.assign(c.lines.size(), false);
   if(state.active && step >= state.active->end_step()) {
      out.ended = state.active;
      state.active.reset();
   }
   // Entries that can no longer start (start passed, or an attack is still
   // running) are dropped.
   while(state.next_index < state.schedule.size()
         && (state.schedule[state.next_index].start_step < step
             || (state.active && state.schedule[state.next_index].start_step == step)))
      ++state.next_index;

   if(!state.active && state.next_attack_step() == step) {
      const auto& slot = state.schedule[state.next_index];
      ++state.next_index;
      std::vector<double> cand_rho;
      std::vector<bool> cand_ok;
      for(auto id : c.attackable_lines) {
         cand_rho.push_back(rho[id.index()]);
         cand_ok.push_back(available[id.index()]);
      }
      const auto probs =
         attack_probabilities(cand_rho, cand_ok, params.max_weight_ratio, params.weight_floor);
      const std::size_t pick = state.target_rng.categorical(probs);
      if(pick < probs.size()) {
         state.active = AttackEvent{c.attackable_lines[pick], step, slot.duration_steps};
         ++state.attacks_started;
         out.started = state.active;
      }
   }
   if(state.active)
      out.attacked[state.active->line.index()] = true;
   return out;
}

}  // namespace gridward
