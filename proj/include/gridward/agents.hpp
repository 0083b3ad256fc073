#pragma once

#include <algorithm>
#include <bit>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gridward/environment.hpp"

namespace gridward {

struct AgentDecision {
   Action action;
   std::optional<Alarm> alarm;
};

struct RbA2Params {
   double t_h = 1.0;
   int d_steps = 7;
};

/// Zones touched by any line whose value exceeds `threshold`.
inline std::vector<ZoneId>
zones_over(const GridCase& c, const std::vector<double>& rho, double threshold)
{
   std::set<ZoneId> zones;
   for(std::size_t l = 0; l < rho.size(); ++l)
      if(rho[l] > threshold)
         for(auto z : c.zones_of_line(LineId{static_cast<int>(l)}))
            zones.insert(z);
   return {zones.begin(), zones.end()};
}

inline Action do_nothing_agent(const Observation&) { return {}; }

inline std::optional<Alarm> rba1_alarm(const GridCase& c, const Observation& obs)
{
   if(!obs.any_line_out() && !obs.any_attacked())
      return std::nullopt;
   auto zones = zones_over(c, obs.rho, 1.0);
   if(zones.empty())
      return std::nullopt;
   return make_alarm(std::move(zones), obs.step);
}

using N1Oracle = std::function<FlowSolution(LineId)>;

inline std::optional<Alarm> rba2_alarm(
   const GridCase& c,
   const Observation& obs,
   const N1Oracle& n1,
   const RbA2Params& p,
   int last_alarm_step)
{
   if(auto a = rba1_alarm(c, obs))
      return a;
   // Attacks never overlap, so no line can be attacked while one is.
   if(obs.any_attacked())
      return std::nullopt;
   if(static_cast<long long>(obs.step) - last_alarm_step < p.d_steps)
      return std::nullopt;
   std::vector<double> worst(c.lines.size(), 0.0);
   bool over = false;
   for(auto id : c.attackable_lines) {
      if(!obs.line_status[id.index()])
         continue;
      const auto sol = n1(id);
      for(std::size_t l = 0; l < worst.size(); ++l) {
         worst[l] = std::max(worst[l], sol.rho[l]);
         over = over || sol.rho[l] > p.t_h;
      }
   }
   if(!over)
      return std::nullopt;
   return make_alarm(zones_over(c, worst, p.t_h), obs.step);
}

using Simulator = std::function<Observation(const Action&)>;

inline constexpr double kSieActivation = 0.95;

/// Predicted max rho of a simulated action; infinite when the prediction
/// leaves load unserved.
inline double predicted_severity(const Observation& pred)
{
   return pred.all_load_served ? pred.max_rho() : std::numeric_limits<double>::infinity();
}

/// Index into `candidates` of the chosen action.
inline std::size_t sie_choose(
   const Observation& obs,
   const std::vector<Action>& candidates,
   const Simulator& simulate,
   double activation = kSieActivation)
{
   if(candidates.empty())
      throw Error("sie_act: empty candidate list");
   std::size_t noop = candidates.size();
   for(std::size_t i = 0; i < candidates.size(); ++i)
      if(candidates[i].is_noop()) {
         noop = i;
         break;
      }
   if(noop == candidates.size())
      throw Error("sie_act: candidate list must contain do-nothing");

   const auto base = simulate(candidates[noop]);
   if(obs.max_rho() < activation && base.max_rho() < activation && base.all_load_served)
      return noop;

   std::size_t best = noop;
   double best_score = predicted_severity(base);
   for(std::size_t i = 0; i < candidates.size(); ++i) {
      if(i == noop)
         continue;
      const auto pred = simulate(candidates[i]);
      if(pred.prediction_illegal)
         continue;
      const double score = predicted_severity(pred);
      if(score < best_score) {
         best = i;
         best_score = score;
      }
   }
   return best;
}

inline Action sie_act(
   const Observation& obs,
   const std::vector<Action>& candidates,
   const Simulator& simulate,
   double activation = kSieActivation)
{
   return candidates[sie_choose(obs, candidates, simulate, activation)];
}

/// Steps back toward the reference topology on a quiet grid: the first legal
/// substation reset or line reconnection whose simulated max rho stays below
/// `activation` with every load served.
inline std::optional<Action> recovery_action(
   const GridCase& c,
   const Observation& obs,
   const Simulator& simulate,
   double activation = kSieActivation)
{
   const auto& ref = c.reference_topology;
   const auto ok = [&](const Action& a) {
      const auto pred = simulate(a);
      return !pred.prediction_illegal && pred.all_load_served && pred.max_rho() < activation;
   };
   for(std::size_t s = 0; s < c.substations.size(); ++s) {
      const SubstationId sid{static_cast<int>(s)};
      if(obs.sub_cooldown[s] > 0)
         continue;
      Action a;
      bool differs = false;
      for(const auto& e : c.elements_at(sid)) {
         const int want = ref.busbar(e);
         differs = differs || obs.topology.busbar(e) != want;
         a.topology.set_bus.push_back({e, want});
      }
      if(differs && ok(a))
         return a;
   }
   for(std::size_t l = 0; l < c.lines.size(); ++l) {
      if(!ref.line_connected[l] || obs.topology.line_connected[l])
         continue;
      Action a;
      a.topology.set_line.push_back({LineId{static_cast<int>(l)}, true});
      if(ok(a))
         return a;
   }
   return std::nullopt;
}

/// Do-nothing, then for every substation each reassignment moving 1 to
/// `max_moved` elements to busbar 2 (electrically equivalent splits listed
/// once) plus a reset of the substation to busbar 1, then one reconnection
/// per line.
inline std::vector<Action> sie_candidates(const GridCase& c, int max_moved = 4)
{
   std::vector<Action> out;
   out.push_back({});
   for(std::size_t s = 0; s < c.substations.size(); ++s) {
      const auto elems = c.elements_at(SubstationId{static_cast<int>(s)});
      const std::size_t n = elems.size();
      if(n < 2 || n > 20)
         continue;
      const std::uint32_t full = (1u << n) - 1;
      std::set<std::uint32_t> seen;
      for(std::uint32_t mask = 1; mask < full; ++mask) {
         const int moved = std::popcount(mask);
         if(moved > max_moved)
            continue;
         const std::uint32_t canon = (mask & 1u) ? (full & ~mask) : mask;
         if(!seen.insert(canon).second)
            continue;
         Action a;
         for(std::size_t i = 0; i < n; ++i)
            a.topology.set_bus.push_back({elems[i], (mask >> i) & 1u ? 2 : 1});
         out.push_back(std::move(a));
      }
      Action reset;
      for(const auto& e : elems)
         reset.topology.set_bus.push_back({e, 1});
      out.push_back(std::move(reset));
   }
   for(std::size_t l = 0; l < c.lines.size(); ++l) {
      Action a;
      a.topology.set_line.push_back({LineId{static_cast<int>(l)}, true});
      out.push_back(std::move(a));
   }
   return out;
}

// ---------------------------------------------------------------------------
// Composable agents
// ---------------------------------------------------------------------------
class ActionMaker {
  public:
   virtual ~ActionMaker() = default;
   virtual Action act(const Environment& env) = 0;
   virtual void reset() {}
   [[nodiscard]] virtual std::string name() const = 0;
};

class AlarmMaker {
  public:
   virtual ~AlarmMaker() = default;
   virtual std::optional<Alarm> alarm(const Environment& env) = 0;
   virtual void reset() {}
   [[nodiscard]] virtual std::string name() const = 0;
};

class DoNothingAction final : public ActionMaker {
  public:
   Action act(const Environment& env) override { return do_nothing_agent(env.observation()); }
   [[nodiscard]] std::string name() const override { return "dn"; }
};

class SieAction final : public ActionMaker {
  public:
   SieAction(std::vector<Action> candidates, double activation = kSieActivation)
       : candidates_(std::move(candidates)), activation_(activation)
   {
      if(candidates_.empty() || !candidates_.front().is_noop())
         candidates_.insert(candidates_.begin(), Action{});
   }

   Action act(const Environment& env) override
   {
      const auto& obs = env.observation();
      const Simulator sim = [&](const Action& a) { return env.simulate(a); };
      Action a = sie_act(obs, candidates_, sim, activation_);
      if(a.is_noop() && obs.max_rho() < activation_) {
         const bool away = obs.topology_distance > 0;
         if(away)
            if(auto r = recovery_action(env.grid(), obs, sim, activation_))
               return *r;
      }
      return a;
   }
   [[nodiscard]] std::string name() const override { return "sie"; }
   [[nodiscard]] const std::vector<Action>& candidates() const { return candidates_; }

  private:
   std::vector<Action> candidates_;
   double activation_;
};

class NoAlarm final : public AlarmMaker {
  public:
   std::optional<Alarm> alarm(const Environment&) override { return std::nullopt; }
   [[nodiscard]] std::string name() const override { return "none"; }
};

class RbA1Alarm final : public AlarmMaker {
  public:
   std::optional<Alarm> alarm(const Environment& env) override
   {
      return rba1_alarm(env.grid(), env.observation());
   }
   [[nodiscard]] std::string name() const override { return "rba1"; }
};

class RbA2Alarm final : public AlarmMaker {
  public:
   explicit RbA2Alarm(RbA2Params p = {}) : params_(p) {}

   std::optional<Alarm> alarm(const Environment& env) override
   {
      auto a = rba2_alarm(
         env.grid(), env.observation(), [&](LineId l) { return env.simulate_n1(l); }, params_,
         last_alarm_step_);
      if(a)
         last_alarm_step_ = env.observation().step;
      return a;
   }
   void reset() override { last_alarm_step_ = std::numeric_limits<int>::min() / 2; }
   [[nodiscard]] std::string name() const override { return "rba2"; }

  private:
   RbA2Params params_;
   int last_alarm_step_ = std::numeric_limits<int>::min() / 2;
};

class Agent {
  public:
   Agent(std::string name, std::unique_ptr<ActionMaker> act, std::unique_ptr<AlarmMaker> alarm)
       : name_(std::move(name)), act_(std::move(act)), alarm_(std::move(alarm))
   {
   }

   AgentDecision decide(const Environment& env)
   {
      AgentDecision d;
      d.action = act_->act(env);
      d.alarm = alarm_->alarm(env);
      return d;
   }

   void reset()
   {
      act_->reset();
      alarm_->reset();
   }

   [[nodiscard]] const std::string& name() const { return name_; }

  private:
   std::string name_;
   std::unique_ptr<ActionMaker> act_;
   std::unique_ptr<AlarmMaker> alarm_;
};

struct AgentOptions {
   RbA2Params rba2;
   double sie_activation = kSieActivation;
   std::optional<std::vector<Action>> sie_candidates;  // curated list; generated when empty
};

inline const std::vector<std::string>& agent_names()
{
   static const std::vector<std::string> names{
      "do-nothing", "dn+rba1", "dn+rba2", "sie", "sie+rba1", "sie+rba2"};
   return names;
}

inline bool is_agent_name(const std::string& name)
{
   const auto& n = agent_names();
   return std::find(n.begin(), n.end(), name) != n.end();
}

inline Agent make_agent(const std::string& name, const GridCase& c, const AgentOptions& opt = {})
{
   if(!is_agent_name(name))
      throw Error("unknown agent '" + name + "'");
   const auto plus = name.find('+');
   const std::string act = plus == std::string::npos ? name : name.substr(0, plus);
   const std::string alarm = plus == std::string::npos ? "" : name.substr(plus + 1);

   std::unique_ptr<ActionMaker> a;
   if(act == "sie")
      a = std::make_unique<SieAction>(
         opt.sie_candidates ? *opt.sie_candidates : sie_candidates(c), opt.sie_activation);
   else
      a = std::make_unique<DoNothingAction>();

   std::unique_ptr<AlarmMaker> m;
   if(alarm == "rba1")
      m = std::make_unique<RbA1Alarm>();
   else if(alarm == "rba2")
      m = std::make_unique<RbA2Alarm>(opt.rba2);
   else
      m = std::make_unique<NoAlarm>();
   return Agent(name, std::move(a), std::move(m));
}

}  // namespace gridward
