#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gridward/action.hpp"
#include "gridward/chronics.hpp"
#include "gridward/grid_model.hpp"
#include "gridward/opponent.hpp"
#include "gridward/power_flow.hpp"

namespace gridward {

/// Operating rules and attention-budget constants. Every value here is a
/// calibration knob; defaults follow the 5-minute-step competition setting.
struct EnvParams {
   int substation_cooldown_steps = 3;
   int line_cooldown_steps = 3;
   int line_failure_cooldown_steps = 288;
   int overload_trip_steps = 3;
   double hard_overload_rho = 2.0;
   int max_substations_changed_per_step = 1;
   int max_lines_changed_per_step = 1;

   double kappa = 1.0;        // alarm cost
   double mu_per_day = 1.5;   // budget regeneration per day
   double budget_cap = 3.0;   // A
   int steps_per_day = 288;
   int t_opt_steps = 7;
   int t_width_steps = 5;

   double redispatch_tolerance_mw = 1e-6;
   bool opponent_enabled = true;
   OpponentParams opponent;

   [[nodiscard]] double regen_per_step() const { return mu_per_day / steps_per_day; }
   [[nodiscard]] CascadeParams cascade() const { return {overload_trip_steps, hard_overload_rho}; }
};

inline std::vector<std::string> params_violations(const EnvParams& p)
{
   std::vector<std::string> v;
   if(p.substation_cooldown_steps < 0 || p.line_cooldown_steps < 0 || p.line_failure_cooldown_steps < 0)
      v.push_back("cooldowns must be non-negative");
   if(p.overload_trip_steps <= 0)
      v.push_back("overload_trip_steps must be positive");
   if(!(p.hard_overload_rho > 1.0))
      v.push_back("hard_overload_rho must exceed 1");
   if(!(p.kappa > 0.0) || !(p.mu_per_day > 0.0) || !(p.budget_cap > 0.0))
      v.push_back("kappa, mu and the budget cap must be positive");
   if(p.t_width_steps <= 0 || p.t_width_steps >= p.t_opt_steps)
      v.push_back("T_width must be positive and below T_opt");
   return v;
}

struct Observation {
   int step = 0;
   bool is_prediction = false;
   bool prediction_illegal = false;  // the simulated action was replaced by do-nothing

   std::vector<double> rho;
   std::vector<double> p_flow;
   std::vector<bool> line_status;  // effective: topology status and no forced outage
   std::vector<bool> attacked;
   std::vector<bool> in_maintenance;
   std::vector<int> sub_cooldown;
   std::vector<int> line_cooldown;
   std::vector<int> line_failure_cooldown;
   std::vector<int> overload_steps;

   std::vector<double> gen_p;          // realized output
   std::vector<double> gen_setpoint;   // scheduled setpoint or available renewable power
   std::vector<double> gen_redispatch; // cumulative redispatch
   std::vector<double> gen_curtail_cap;
   std::vector<double> load_p;

   Topology topology;
   double alpha = 0.0;
   int steps_since_attack = -1;       // -1 when no attack happened yet
   int steps_since_maintenance = -1;  // -1 when no maintenance happened yet
   int topology_distance = 0;
   bool all_load_served = true;

   [[nodiscard]] double max_rho() const
   {
      return rho.empty() ? 0.0 : *std::max_element(rho.begin(), rho.end());
   }
   [[nodiscard]] bool any_line_out() const
   {
      return std::any_of(line_status.begin(), line_status.end(), [](bool b) { return !b; });
   }
   [[nodiscard]] bool any_attacked() const
   {
      return std::any_of(attacked.begin(), attacked.end(), [](bool b) { return b; });
   }
};

struct Legality {
   bool legal = true;
   std::vector<std::string> reasons;

   explicit operator bool() const { return legal; }
};

enum class FailureCause { cascade, islanded_load, non_convergence };

inline std::string_view to_string(FailureCause c)
{
   switch(c) {
      case FailureCause::cascade: return "cascade";
      case FailureCause::islanded_load: return "islanded_load";
      case FailureCause::non_convergence: return "non_convergence";
   }
   return "?";
}

struct GameOverInfo {
   int t_bar = 0;
   ZoneId failure_zone;
   FailureCause cause = FailureCause::cascade;
   std::vector<SubstationId> lost_load_substations;
};

struct StepInfo {
   Action requested;
   Action applied;
   bool illegal = false;
   std::vector<std::string> illegal_reasons;
   std::optional<Alarm> alarm;  // as requested, stamped with the step
   bool alarm_accepted = false;
   bool alarm_rejected = false;
   std::vector<LineId> tripped;
   std::optional<AttackEvent> attack_started;
   std::optional<AttackEvent> attack_ended;
   double losses_mw = 0.0;
   double redispatch_mw = 0.0;  // sum over generators of |realized - setpoint|
   double redispatch_cost = 0.0;  // currency per hour at the realized deviation
   double curtailed_mw = 0.0;
   double demand_mw = 0.0;
};

struct StepResult {
   Observation observation;
   StepInfo info;
   std::optional<GameOverInfo> game_over;
};

/// Zone of the substation with the largest lost load; ties go to the lowest
/// zone index.
inline ZoneId determine_failure_zone(const GridCase& c, const CascadeResult& cascade)
{
   if(!cascade.load_lost || cascade.lost_load_substations.empty())
      throw Error("determine_failure_zone: no load was lost");
   ZoneId best;
   double best_mw = -std::numeric_limits<double>::infinity();
   for(std::size_t i = 0; i < cascade.lost_load_substations.size(); ++i) {
      const ZoneId z = c.substations.at(cascade.lost_load_substations[i].index()).zone;
      const double mw = cascade.lost_load_mw.at(i);
      if(mw > best_mw || (mw == best_mw && z < best)) {
         best = z;
         best_mw = mw;
      }
   }
   return best;
}

/// Elements away from their reference busbar plus lines whose agent-side
/// status differs from the reference. Forced outages are not counted.
inline int topology_distance(const GridCase& c, const Topology& t)
{
   const auto& ref = c.reference_topology;
   int d = 0;
   const auto count = [&](const std::vector<int>& a, const std::vector<int>& b) {
      for(std::size_t i = 0; i < a.size(); ++i)
         d += a[i] != b[i];
   };
   count(t.line_or_bus, ref.line_or_bus);
   count(t.line_ex_bus, ref.line_ex_bus);
   count(t.gen_bus, ref.gen_bus);
   count(t.load_bus, ref.load_bus);
   for(std::size_t l = 0; l < t.line_connected.size(); ++l)
      d += t.line_connected[l] != ref.line_connected[l];
   return d;
}

inline int topology_distance(const GridCase& c, const Observation& obs)
{
   return topology_distance(c, obs.topology);
}

/// Legality of an action against the state described by an observation.
inline Legality
check_legal(const GridCase& c, const EnvParams& p, const Observation& obs, const Action& a)
{
   Legality out;
   const auto fail = [&](std::string why) {
      out.legal = false;
      out.reasons.push_back(std::move(why));
   };

   std::set<SubstationId> subs;
   for(const auto& b : a.topology.set_bus) {
      const auto& e = b.element;
      std::size_t size = 0;
      switch(e.kind) {
         case ElementKind::line_or:
         case ElementKind::line_ex: size = c.lines.size(); break;
         case ElementKind::generator: size = c.generators.size(); break;
         case ElementKind::load: size = c.loads.size(); break;
      }
      if(e.index < 0 || static_cast<std::size_t>(e.index) >= size) {
         fail("unknown element");
         continue;
      }
      if(b.busbar != 1 && b.busbar != 2)
         fail("busbar must be 1 or 2");
      subs.insert(c.substation_of(e));
   }
   if(static_cast<int>(subs.size()) > p.max_substations_changed_per_step)
      fail("max " + std::to_string(p.max_substations_changed_per_step) + " substation per step");
   for(auto s : subs)
      if(obs.sub_cooldown[s.index()] > 0)
         fail("substation " + c.substations[s.index()].name + " in cooldown");

   std::set<LineId> lines;
   for(const auto& s : a.topology.set_line) {
      if(s.line.value < 0 || s.line.index() >= c.lines.size()) {
         fail("unknown line");
         continue;
      }
      lines.insert(s.line);
      const auto l = s.line.index();
      const auto& name = c.lines[l].name;
      if(obs.line_cooldown[l] > 0)
         fail("line " + name + " in cooldown");
      if(s.connected) {
         if(obs.attacked[l])
            fail("line " + name + " is under attack");
         if(obs.in_maintenance[l])
            fail("line " + name + " is in maintenance");
         if(obs.line_failure_cooldown[l] > 0)
            fail("line " + name + " recovering from an overload trip");
      }
   }
   if(static_cast<int>(lines.size()) > p.max_lines_changed_per_step)
      fail("max " + std::to_string(p.max_lines_changed_per_step) + " line status change per step");

   for(const auto& r : a.redispatch) {
      if(r.gen.value < 0 || r.gen.index() >= c.generators.size()) {
         fail("unknown generator");
         continue;
      }
      const auto g = r.gen.index();
      const auto& gen = c.generators[g];
      if(gen.kind != GeneratorKind::dispatchable || gen.slack) {
         fail("generator " + gen.name + " cannot be redispatched");
         continue;
      }
      if(!std::isfinite(r.delta_mw)) {
         fail("redispatch of " + gen.name + " is not finite");
         continue;
      }
      if(std::abs(r.delta_mw) > gen.ramp + p.redispatch_tolerance_mw)
         fail("redispatch of " + gen.name + " exceeds its ramp");
      const double target = obs.gen_setpoint[g] + obs.gen_redispatch[g] + r.delta_mw;
      if(target < gen.p_min - p.redispatch_tolerance_mw
         || target > gen.p_max + p.redispatch_tolerance_mw)
         fail("redispatch of " + gen.name + " leaves [p_min, p_max]");
   }
   for(const auto& cu : a.curtailment) {
      if(cu.gen.value < 0 || cu.gen.index() >= c.generators.size()) {
         fail("unknown generator");
         continue;
      }
      const auto& gen = c.generators[cu.gen.index()];
      if(!is_renewable(gen.kind))
         fail("generator " + gen.name + " cannot be curtailed");
      else if(!(cu.cap_mw >= 0.0) || std::isnan(cu.cap_mw))
         fail("curtailment cap of " + gen.name + " must be non-negative");
   }
   return out;
}

/// One episode of grid operation. Single-threaded; copyable so callers can
/// branch a state.
class Environment {
  public:
   Environment(
      std::shared_ptr<const GridCase> grid,
      std::shared_ptr<const Scenario> scenario,
      EnvParams params = {})
       : case_(std::move(grid)), scenario_(std::move(scenario)), params_(std::move(params))
   {
      auto v = case_violations(*case_);
      auto sv = scenario_violations(*case_, *scenario_);
      v.insert(v.end(), sv.begin(), sv.end());
      auto pv = params_violations(params_);
      v.insert(v.end(), pv.begin(), pv.end());
      if(!v.empty())
         throw ValidationError(std::move(v));
   }

   /// Starts an episode. `pinned` replaces the seed-derived attack schedule.
   const Observation& reset(std::uint64_t seed, std::optional<AttackSchedule> pinned = std::nullopt)
   {
      const auto& c = *case_;
      seed_ = seed;
      step_ = 0;
      done_ = false;
      game_over_.reset();
      topology_ = c.reference_topology;
      sub_cooldown_.assign(c.substations.size(), 0);
      line_cooldown_.assign(c.lines.size(), 0);
      line_failure_cooldown_.assign(c.lines.size(), 0);
      timers_ = OverloadTimers::zeros(c.lines.size());
      redispatch_.assign(c.generators.size(), 0.0);
      curtail_cap_.assign(c.generators.size(), std::numeric_limits<double>::infinity());
      alpha_ = params_.budget_cap;
      attacked_.assign(c.lines.size(), false);
      last_attack_step_ = -1;
      last_maintenance_step_ = -1;

      opponent_ = OpponentState{};
      opponent_.target_rng = Rng(derive_seed(seed, "opponent-target"));
      if(pinned) {
         auto v = schedule_violations(*pinned, params_.opponent);
         if(!v.empty())
            throw ValidationError(std::move(v));
         opponent_.schedule = *pinned;
      } else if(params_.opponent_enabled) {
         Rng schedule_rng(derive_seed(seed, "opponent-schedule"));
         opponent_.schedule =
            generate_attack_schedule(schedule_rng, scenario_->n_steps, params_.opponent);
      }

      update_maintenance(0);
      const auto inj = injections(0, redispatch_, curtail_cap_);
      solution_ = solve_dc(c, effective_topology(), inj);
      if(!solution_.all_load_served())
         throw ValidationError({"initial state of the scenario does not serve every load"});
      obs_ = make_observation(solution_, inj, false);
      return obs_;
   }

   [[nodiscard]] Legality check_legal(const Action& a) const
   {
      return gridward::check_legal(*case_, params_, obs_, a);
   }

   StepResult step(const Action& action, const std::optional<Alarm>& alarm = std::nullopt)
   {
      if(done_)
         throw Error("step called on a finished episode");
      const auto& c = *case_;
      StepResult result;
      auto& info = result.info;
      info.requested = action;

      // (1) legality
      auto verdict = check_legal(action);
      info.illegal = !verdict.legal;
      info.illegal_reasons = std::move(verdict.reasons);
      info.applied = info.illegal ? Action{} : action;
      const Action& a = info.applied;

      // (2) apply the action; cooldowns start on touched assets
      topology_ = apply_topology(topology_, a.topology);
      for(auto s : changed_or_touched_substations(a))
         sub_cooldown_[s.index()] = params_.substation_cooldown_steps;
      for(const auto& s : a.topology.set_line)
         line_cooldown_[s.line.index()] = params_.line_cooldown_steps;
      for(const auto& r : a.redispatch) {
         const auto& gen = c.generators[r.gen.index()];
         redispatch_[r.gen.index()] += std::clamp(r.delta_mw, -gen.ramp, gen.ramp);
      }
      for(const auto& cu : a.curtailment)
         curtail_cap_[cu.gen.index()] = cu.cap_mw;

      const int s = step_ + 1;
      const auto tick = [](std::vector<int>& v) {
         for(auto& x : v)
            x = std::max(0, x - 1);
      };
      tick(sub_cooldown_);
      tick(line_cooldown_);
      tick(line_failure_cooldown_);

      // (3) forced outages
      update_maintenance(s);
      const auto opp =
         step_opponent(opponent_, c, obs_.rho, obs_.line_status, s, params_.opponent);
      attacked_ = opp.attacked;
      info.attack_started = opp.started;
      info.attack_ended = opp.ended;
      if(opp.started)
         last_attack_step_ = s;

      // (4) chronics and (5) protection
      const auto inj = injections(s, redispatch_, curtail_cap_);
      auto [cascade, timers] = run_cascade(c, effective_topology(), inj, timers_, params_.cascade());
      timers_ = std::move(timers);
      for(auto id : cascade.tripped_lines) {
         topology_.line_connected[id.index()] = false;
         line_failure_cooldown_[id.index()] = params_.line_failure_cooldown_steps;
      }
      info.tripped = cascade.tripped_lines;
      solution_ = cascade.final_solution;
      step_ = s;

      // (6) attention budget
      if(alarm) {
         Alarm stamped = make_alarm(alarm->zones, s);
         const bool zones_ok =
            !stamped.zones.empty()
            && std::all_of(stamped.zones.begin(), stamped.zones.end(), [&](ZoneId z) {
                  return z.value >= 0 && z.index() < c.zones.size();
               });
         info.alarm = stamped;
         if(zones_ok && alpha_ >= params_.kappa) {
            alpha_ -= params_.kappa;
            info.alarm_accepted = true;
         } else {
            info.alarm_rejected = true;
         }
      }
      if(!info.alarm_accepted)
         alpha_ = std::min(params_.budget_cap, alpha_ + params_.regen_per_step());

      // costs of the realized step
      info.losses_mw = losses_proxy(c, solution_);
      info.demand_mw = scenario_->total_load(s);
      for(std::size_t g = 0; g < c.generators.size(); ++g) {
         const auto& gen = c.generators[g];
         if(gen.kind == GeneratorKind::dispatchable && !gen.slack) {
            const double dev = std::abs(inj.p_gen[g] - scenario_->gen(s, g));
            info.redispatch_mw += dev;
            info.redispatch_cost += dev * gen.marginal_cost;
         } else if(is_renewable(gen.kind)) {
            info.curtailed_mw += scenario_->gen(s, g) - inj.p_gen[g];
         }
      }

      // (7) game over
      if(cascade.load_lost) {
         GameOverInfo over;
         over.t_bar = s;
         over.failure_zone = determine_failure_zone(c, cascade);
         over.lost_load_substations = cascade.lost_load_substations;
         if(cascade.non_converged)
            over.cause = FailureCause::non_convergence;
         else if(!cascade.tripped_lines.empty())
            over.cause = FailureCause::cascade;
         else
            over.cause = FailureCause::islanded_load;
         game_over_ = over;
         result.game_over = over;
         done_ = true;
      } else if(s >= scenario_->n_steps - 1) {
         done_ = true;
      }

      obs_ = make_observation(solution_, inj, false);
      result.observation = obs_;
      return result;
   }

   /// One-step lookahead on the current injections; no events, no budget
   /// change, no mutation. Illegal actions are predicted as do-nothing.
   [[nodiscard]] Observation simulate(const Action& action) const
   {
      const auto& c = *case_;
      const bool legal = check_legal(action).legal;
      const Action a = legal ? action : Action{};
      Topology topo = apply_topology(topology_, a.topology);
      auto red = redispatch_;
      auto caps = curtail_cap_;
      for(const auto& r : a.redispatch) {
         const auto& gen = c.generators[r.gen.index()];
         red[r.gen.index()] += std::clamp(r.delta_mw, -gen.ramp, gen.ramp);
      }
      for(const auto& cu : a.curtailment)
         caps[cu.gen.index()] = cu.cap_mw;
      const auto inj = injections(step_, red, caps);
      const auto sol = solve_dc(c, effective(topo), inj);

      Observation pred = make_observation(sol, inj, true);
      pred.prediction_illegal = !legal;
      pred.topology = topo;
      pred.topology_distance = topology_distance(c, topo);
      return pred;
   }

   /// Flows on the current state after losing one line.
   [[nodiscard]] FlowSolution simulate_n1(LineId line) const
   {
      return gridward::simulate_n1(
         *case_, effective_topology(), injections(step_, redispatch_, curtail_cap_), line);
   }

   [[nodiscard]] Injections current_injections() const
   {
      return injections(step_, redispatch_, curtail_cap_);
   }

   [[nodiscard]] Topology effective_topology() const { return effective(topology_); }

   /// Hash of the complete mutable state (not of the observation).
   [[nodiscard]] std::uint64_t state_hash() const
   {
      StateHasher h;
      h.add(seed_);
      h.add(step_);
      h.add(done_);
      h.add_range(topology_.line_or_bus);
      h.add_range(topology_.line_ex_bus);
      h.add_range(topology_.gen_bus);
      h.add_range(topology_.load_bus);
      h.add_range(topology_.line_connected);
      h.add_range(sub_cooldown_);
      h.add_range(line_cooldown_);
      h.add_range(line_failure_cooldown_);
      h.add_range(timers_.steps_overloaded);
      h.add_range(redispatch_);
      h.add_range(curtail_cap_);
      h.add(alpha_);
      h.add_range(attacked_);
      h.add(last_attack_step_);
      h.add(last_maintenance_step_);
      opponent_.hash_into(h);
      return h.value();
   }

   [[nodiscard]] const Observation& observation() const { return obs_; }
   [[nodiscard]] const FlowSolution& solution() const { return solution_; }
   [[nodiscard]] bool done() const { return done_; }
   [[nodiscard]] int current_step() const { return step_; }
   [[nodiscard]] double alpha() const { return alpha_; }
   [[nodiscard]] const std::optional<GameOverInfo>& game_over() const { return game_over_; }
   [[nodiscard]] const GridCase& grid() const { return *case_; }
   [[nodiscard]] const std::shared_ptr<const GridCase>& grid_ptr() const { return case_; }
   [[nodiscard]] const Scenario& scenario() const { return *scenario_; }
   [[nodiscard]] const std::shared_ptr<const Scenario>& scenario_ptr() const { return scenario_; }
   [[nodiscard]] const EnvParams& params() const { return params_; }
   [[nodiscard]] const AttackSchedule& attack_schedule() const { return opponent_.schedule; }
   [[nodiscard]] const std::optional<AttackEvent>& active_attack() const { return opponent_.active; }
   [[nodiscard]] std::uint64_t seed() const { return seed_; }

  private:
   [[nodiscard]] std::vector<SubstationId> changed_or_touched_substations(const Action& a) const
   {
      std::set<SubstationId> subs;
      for(const auto& b : a.topology.set_bus)
         subs.insert(case_->substation_of(b.element));
      return {subs.begin(), subs.end()};
   }

   void update_maintenance(int s)
   {
      in_maintenance_.assign(case_->lines.size(), false);
      for(const auto& m : scenario_->maintenance)
         if(m.covers(s)) {
            in_maintenance_[m.line.index()] = true;
            if(m.start_step == s || last_maintenance_step_ < 0)
               last_maintenance_step_ = s;
         }
   }

   [[nodiscard]] Topology effective(Topology t) const
   {
      for(std::size_t l = 0; l < t.line_connected.size(); ++l)
         if(attacked_[l] || in_maintenance_[l])
            t.line_connected[l] = false;
      return t;
   }

   [[nodiscard]] Injections injections(
      int s, const std::vector<double>& redispatch, const std::vector<double>& caps) const
   {
      const auto& c = *case_;
      Injections inj;
      inj.p_gen.resize(c.generators.size());
      inj.p_load.resize(c.loads.size());
      for(std::size_t g = 0; g < c.generators.size(); ++g) {
         const auto& gen = c.generators[g];
         const double setpoint = scenario_->gen(s, g);
         if(gen.kind == GeneratorKind::dispatchable)
            inj.p_gen[g] = gen.slack ? setpoint + redispatch[g]
                                     : std::clamp(setpoint + redispatch[g], gen.p_min, gen.p_max);
         else
            inj.p_gen[g] = std::min(setpoint, caps[g]);
      }
      for(std::size_t d = 0; d < c.loads.size(); ++d)
         inj.p_load[d] = scenario_->load(s, d);
      return inj;
   }

   [[nodiscard]] Observation
   make_observation(const FlowSolution& sol, const Injections& inj, bool prediction) const
   {
      const auto& c = *case_;
      Observation o;
      o.step = step_;
      o.is_prediction = prediction;
      o.rho = sol.rho;
      o.p_flow = sol.p_flow;
      o.line_status.resize(c.lines.size());
      for(std::size_t l = 0; l < c.lines.size(); ++l)
         o.line_status[l] = sol.graph.line_from_node[l] >= 0;
      o.attacked = attacked_;
      o.in_maintenance = in_maintenance_;
      o.sub_cooldown = sub_cooldown_;
      o.line_cooldown = line_cooldown_;
      o.line_failure_cooldown = line_failure_cooldown_;
      o.overload_steps = timers_.steps_overloaded;
      o.gen_p = sol.gen_p;
      o.gen_setpoint.resize(c.generators.size());
      for(std::size_t g = 0; g < c.generators.size(); ++g)
         o.gen_setpoint[g] = scenario_->gen(step_, g);
      o.gen_redispatch = redispatch_;
      o.gen_curtail_cap = curtail_cap_;
      o.load_p = inj.p_load;
      o.topology = topology_;
      o.alpha = alpha_;
      o.steps_since_attack = last_attack_step_ < 0 ? -1 : step_ - last_attack_step_;
      o.steps_since_maintenance = last_maintenance_step_ < 0 ? -1 : step_ - last_maintenance_step_;
      o.topology_distance = topology_distance(c, topology_);
      o.all_load_served = sol.all_load_served();
      return o;
   }

   std::shared_ptr<const GridCase> case_;
   std::shared_ptr<const Scenario> scenario_;
   EnvParams params_;

   std::uint64_t seed_ = 0;
   int step_ = 0;
   bool done_ = true;
   std::optional<GameOverInfo> game_over_;
   Topology topology_;
   std::vector<int> sub_cooldown_;
   std::vector<int> line_cooldown_;
   std::vector<int> line_failure_cooldown_;
   OverloadTimers timers_;
   std::vector<double> redispatch_;
   std::vector<double> curtail_cap_;
   double alpha_ = 0.0;
   std::vector<bool> attacked_;
   std::vector<bool> in_maintenance_;
   int last_attack_step_ = -1;
   int last_maintenance_step_ = -1;
   OpponentState opponent_;
   FlowSolution solution_;
   Observation obs_;
};

}  // namespace gridward
