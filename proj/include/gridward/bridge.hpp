#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridward/agents.hpp"
#include "gridward/episode_log.hpp"
#include "gridward/runner.hpp"
#include "gridward/scoring.hpp"

namespace gridward::bridge {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

/// Error carrying the HTTP status the service answers with.
class BridgeError : public Error {
  public:
   BridgeError(int status, const std::string& msg) : Error(msg), status_(status) {}
   [[nodiscard]] int status() const { return status_; }

  private:
   int status_;
};

enum class Mode { assistant_drives, human_drives };

inline std::string_view to_string(Mode m)
{
   return m == Mode::assistant_drives ? "assistant-drives" : "human-drives";
}

inline Mode parse_mode(const std::string& s)
{
   if(s == "assistant-drives")
      return Mode::assistant_drives;
   if(s == "human-drives")
      return Mode::human_drives;
   throw BridgeError(400, "mode must be assistant-drives or human-drives");
}

struct Event {
   std::uint64_t seq = 0;
   std::string type;  // step | alarm | attack | gameover
   json payload;

   [[nodiscard]] json to_json() const { return {{"seq", seq}, {"type", type}, {"payload", payload}}; }
};

struct ManagerOptions {
   std::filesystem::path data_dir = GRIDWARD_DATA_DIR;
   std::size_t capacity = 16;
   std::chrono::milliseconds idle_timeout{std::chrono::minutes(30)};
   std::optional<std::filesystem::path> log_dir;
   EnvParams params;
   Pricing pricing;
};

inline json observation_json(const GridCase& c, const Observation& o)
{
   json lines = json::array();
   for(std::size_t l = 0; l < c.lines.size(); ++l) {
      json zones = json::array();
      for(auto z : c.zones_of_line(LineId{static_cast<int>(l)}))
         zones.push_back(z.value);
      lines.push_back(
         {{"name", c.lines[l].name},
          {"from", c.substations[c.lines[l].from_sub.index()].name},
          {"to", c.substations[c.lines[l].to_sub.index()].name},
          {"rho", o.rho[l]},
          {"p_mw", o.p_flow[l]},
          {"connected", static_cast<bool>(o.line_status[l])},
          {"attacked", static_cast<bool>(o.attacked[l])},
          {"in_maintenance", static_cast<bool>(o.in_maintenance[l])},
          {"cooldown", o.line_cooldown[l]},
          {"zones", zones}});
   }
   json subs = json::array();
   for(std::size_t s = 0; s < c.substations.size(); ++s) {
      json elems = json::array();
      for(const auto& e : c.elements_at(SubstationId{static_cast<int>(s)}))
         elems.push_back({{"element", c.element_name(e)}, {"busbar", o.topology.busbar(e)}});
      subs.push_back(
         {{"name", c.substations[s].name},
          {"zone", c.substations[s].zone.value},
          {"cooldown", o.sub_cooldown[s]},
          {"elements", elems}});
   }
   json zones = json::array();
   for(const auto& z : c.zones)
      zones.push_back(z.name);
   return {
      {"step", o.step},
      {"max_rho", o.max_rho()},
      {"alpha", o.alpha},
      {"topology_distance", o.topology_distance},
      {"all_load_served", o.all_load_served},
      {"zones", zones},
      {"lines", lines},
      {"substations", subs},
      {"gen_p", o.gen_p},
      {"load_p", o.load_p}};
}

inline json alarm_json(const std::optional<Alarm>& a)
{
   if(!a)
      return nullptr;
   json zones = json::array();
   for(auto z : a->zones)
      zones.push_back(z.value);
   return zones;
}

class Session {
  public:
   Session(
      std::string id,
      Mode mode,
      std::unique_ptr<Environment> env,
      Agent assistant,
      EpisodeInputs inputs)
       : id_(std::move(id)),
         mode_(mode),
         env_(std::move(env)),
         assistant_(std::move(assistant)),
         inputs_(std::move(inputs)),
         last_used_(Clock::now())
   {
   }

   std::string id_;
   Mode mode_;
   std::unique_ptr<Environment> env_;
   Agent assistant_;
   EpisodeInputs inputs_;
   EpisodeLog log_;
   std::optional<AgentDecision> cached_;  // assistant decision for the current step
   std::map<std::string, json> idempotent_;
   std::vector<Event> events_;
   bool closed_ = false;
   Clock::time_point last_used_;

   std::mutex mutex_;              // serializes requests
   std::mutex event_mutex_;        // guards events_ and closed_ for readers
   std::condition_variable event_cv_;
};

class SessionManager {
  public:
   explicit SessionManager(ManagerOptions opt = {}) : opt_(std::move(opt)), rng_(std::random_device{}()) {}

   SessionManager(const SessionManager&) = delete;
   SessionManager& operator=(const SessionManager&) = delete;

   /// Body: {case, scenario: {dir}|{generate}, seed, assistant, mode}.
   json create(const json& req)
   {
      sweep();
      const auto str = [&](const char* key, const char* fallback) -> std::string {
         if(!req.contains(key))
            return fallback;
         if(!req.at(key).is_string())
            throw BridgeError(400, std::string(key) + " must be a string");
         return req.at(key).get<std::string>();
      };
      const std::string case_ref = str("case", "toy5");
      const std::string assistant = str("assistant", "sie+rba2");
      const Mode mode = parse_mode(str("mode", "assistant-drives"));
      if(!is_agent_name(assistant))
         throw BridgeError(400, "unknown agent '" + assistant + "'");
      std::uint64_t seed = 0;
      if(req.contains("seed")) {
         const auto& j = req.at("seed");
         if(!j.is_number_integer() || (!j.is_number_unsigned() && j.get<std::int64_t>() < 0))
            throw BridgeError(400, "seed must be a non-negative integer");
         seed = req.at("seed").get<std::uint64_t>();
      }

      {
         std::lock_guard lock(mutex_);
         if(sessions_.size() >= opt_.capacity)
            throw BridgeError(503, "session capacity exceeded");
      }

      EpisodeInputs in;
      ScenarioSource src;
      try {
         const auto loaded = load_case_shared(resolve(case_ref, "cases", ".json"));
         in.grid = loaded.grid;
         in.case_path = loaded.path;
         src = scenario_source(req.contains("scenario") ? req.at("scenario") : json(nullptr));
         in.scenario = std::make_shared<const Scenario>(src.materialize(*in.grid));
      } catch(const BridgeError&) {
         throw;
      } catch(const std::exception& e) {
         throw BridgeError(400, e.what());
      }
      in.scenario_source = src.to_json();
      in.params = opt_.params;
      in.seed = seed;

      auto env = std::make_unique<Environment>(in.grid, in.scenario, in.params);
      env->reset(seed);
      auto agent = make_agent(assistant, *in.grid);

      const std::string id = new_id();
      auto s = std::make_shared<Session>(id, mode, std::move(env), std::move(agent), in);
      auto& h = s->log_.header;
      h.case_path = in.case_path;
      h.scenario_source = in.scenario_source;
      h.scenario_name = in.scenario->name;
      h.seed = seed;
      h.agent = "session:" + assistant;
      h.params = in.params;
      h.n_steps = in.scenario->n_steps;
      h.steps_per_day = in.params.steps_per_day;
      s->log_.steps.push_back(reset_record(*s->env_));
      publish(*s, "step", {{"observation", observation_json(*in.grid, s->env_->observation())},
                           {"illegal", false},
                           {"action", "noop"}});
      {
         std::lock_guard lock(mutex_);
         if(sessions_.size() >= opt_.capacity)
            throw BridgeError(503, "session capacity exceeded");
         sessions_.emplace(id, s);
      }
      return {
         {"id", id},
         {"mode", to_string(mode)},
         {"assistant", assistant},
         {"seed", seed},
         {"scenario", in.scenario->name},
         {"n_steps", in.scenario->n_steps},
         {"observation", observation_json(*in.grid, s->env_->observation())}};
   }

   json observation(const std::string& id)
   {
      auto s = get(id);
      std::lock_guard lock(s->mutex_);
      touch(*s);
      auto o = observation_json(s->env_->grid(), s->env_->observation());
      o["done"] = s->env_->done();
      return o;
   }

   /// Assistant decision for the current observation with a simulated preview
   /// of its action. Does not advance the episode or spend budget.
   json suggestion(const std::string& id)
   {
      auto s = get(id);
      std::lock_guard lock(s->mutex_);
      touch(*s);
      if(s->env_->done())
         throw BridgeError(409, "session has finished");
      const auto& d = decision(*s);
      const auto pred = s->env_->simulate(d.action);
      return {
         {"step", s->env_->current_step()},
         {"action", format_action(s->env_->grid(), d.action)},
         {"alarm", alarm_json(d.alarm)},
         {"current_max_rho", s->env_->observation().max_rho()},
         {"predicted_max_rho", pred.max_rho()},
         {"predicted_all_load_served", pred.all_load_served},
         {"prediction_illegal", pred.prediction_illegal}};
   }

   /// Body: {source: human|accept-assistant, action, alarm, idempotency_key}.
   json step(const std::string& id, const json& req)
   {
      auto s = get(id);
      std::lock_guard lock(s->mutex_);
      touch(*s);

      std::optional<std::string> key;
      if(req.contains("idempotency_key")) {
         key = req.at("idempotency_key").get<std::string>();
         if(auto it = s->idempotent_.find(*key); it != s->idempotent_.end())
            return it->second;
      }
      if(s->env_->done())
         throw BridgeError(409, "session has finished");

      const auto& grid = s->env_->grid();
      std::string source =
         s->mode_ == Mode::assistant_drives ? "accept-assistant" : "human";
      if(req.contains("source"))
         source = req.at("source").get<std::string>();

      Action action;
      std::optional<Alarm> alarm;
      if(source == "accept-assistant") {
         const auto& d = decision(*s);
         action = d.action;
         alarm = d.alarm;
      } else if(source == "human") {
         try {
            if(req.contains("action"))
               action = parse_action(grid, req.at("action").get<std::string>());
         } catch(const std::exception& e) {
            throw BridgeError(400, std::string("malformed action: ") + e.what());
         }
         if(req.contains("alarm") && !req.at("alarm").is_null()) {
            std::vector<ZoneId> zones;
            for(const auto& z : req.at("alarm")) {
               if(!z.is_number_integer())
                  throw BridgeError(400, "alarm zones must be integers");
               zones.push_back(ZoneId{z.get<int>()});
            }
            alarm = make_alarm(zones);
         }
         decision(*s);  // keep the assistant's memory in step with the episode
      } else {
         throw BridgeError(400, "source must be human or accept-assistant");
      }

      const auto res = s->env_->step(action, alarm);
      s->cached_.reset();
      s->log_.steps.push_back(step_record(*s->env_, res));
      const auto& info = res.info;

      if(info.attack_started || info.attack_ended) {
         json p;
         if(info.attack_started)
            p["started"] = {{"line", grid.lines[info.attack_started->line.index()].name},
                            {"start_step", info.attack_started->start_step},
                            {"duration_steps", info.attack_started->duration_steps}};
         if(info.attack_ended)
            p["ended"] = {{"line", grid.lines[info.attack_ended->line.index()].name},
                          {"end_step", info.attack_ended->end_step()}};
         publish(*s, "attack", p);
      }
      if(info.alarm)
         publish(*s, "alarm", {{"step", res.observation.step},
                               {"zones", alarm_json(info.alarm)},
                               {"accepted", info.alarm_accepted},
                               {"alpha", res.observation.alpha}});
      json step_payload{
         {"source", source},
         {"action", format_action(grid, info.requested)},
         {"applied", format_action(grid, info.applied)},
         {"illegal", info.illegal},
         {"illegal_reasons", info.illegal_reasons},
         {"alarm", alarm_json(info.alarm)},
         {"alarm_accepted", info.alarm_accepted},
         {"tripped", json::array()},
         {"observation", observation_json(grid, res.observation)}};
      for(auto l : info.tripped)
         step_payload["tripped"].push_back(grid.lines[l.index()].name);
      const auto step_seq = publish(*s, "step", step_payload);

      json resp = step_payload;
      resp["seq"] = step_seq;
      resp["done"] = s->env_->done();
      if(s->env_->done())
         resp["gameover"] = finish(*s);
      if(key)
         s->idempotent_.emplace(*key, resp);
      return resp;
   }

   void remove(const std::string& id)
   {
      std::shared_ptr<Session> s;
      {
         std::lock_guard lock(mutex_);
         auto it = sessions_.find(id);
         if(it == sessions_.end())
            throw BridgeError(404, "no session " + id);
         s = it->second;
         sessions_.erase(it);
      }
      std::lock_guard lock(s->mutex_);
      close(*s);
   }

   /// Events with seq > `after`; waits up to `wait` when none are available.
   /// `closed` is set once the stream ended and every event was returned.
   std::vector<Event> events(
      const std::string& id, std::uint64_t after, std::chrono::milliseconds wait, bool& closed)
   {
      auto s = get(id);
      std::unique_lock lock(s->event_mutex_);
      const auto ready = [&] { return s->closed_ || s->events_.size() > after; };
      if(!ready())
         s->event_cv_.wait_for(lock, wait, ready);
      std::vector<Event> out;
      for(std::size_t i = after; i < s->events_.size(); ++i)
         out.push_back(s->events_[i]);
      closed = s->closed_;
      return out;
   }

   [[nodiscard]] std::uint64_t state_hash(const std::string& id)
   {
      auto s = get(id);
      std::lock_guard lock(s->mutex_);
      return s->env_->state_hash();
   }

   [[nodiscard]] std::size_t size()
   {
      std::lock_guard lock(mutex_);
      return sessions_.size();
   }

   /// Closes sessions idle for longer than the configured timeout.
   void sweep()
   {
      std::vector<std::shared_ptr<Session>> expired;
      {
         std::lock_guard lock(mutex_);
         const auto now = Clock::now();
         for(auto it = sessions_.begin(); it != sessions_.end();) {
            if(now - it->second->last_used_ > opt_.idle_timeout) {
               expired.push_back(it->second);
               it = sessions_.erase(it);
            } else {
               ++it;
            }
         }
      }
      for(auto& s : expired) {
         std::lock_guard lock(s->mutex_);
         close(*s);
      }
   }

   [[nodiscard]] const ManagerOptions& options() const { return opt_; }

  private:
   std::shared_ptr<Session> get(const std::string& id)
   {
      std::lock_guard lock(mutex_);
      auto it = sessions_.find(id);
      if(it == sessions_.end())
         throw BridgeError(404, "no session " + id);
      return it->second;
   }

   static void touch(Session& s) { s.last_used_ = Clock::now(); }

   const AgentDecision& decision(Session& s)
   {
      if(!s.cached_)
         s.cached_ = s.assistant_.decide(*s.env_);
      return *s.cached_;
   }

   std::uint64_t publish(Session& s, std::string type, json payload)
   {
      std::lock_guard lock(s.event_mutex_);
      Event e{s.events_.size() + 1, std::move(type), std::move(payload)};
      s.events_.push_back(std::move(e));
      s.event_cv_.notify_all();
      return s.events_.back().seq;
   }

   json finish(Session& s)
   {
      const auto& env = *s.env_;
      EndRecord end;
      json p{{"outcome", "survived"}, {"t_bar", nullptr}, {"failure_zone", nullptr}};
      if(const auto& over = env.game_over()) {
         end.survived = false;
         end.t_bar = over->t_bar;
         end.failure_zone = over->failure_zone.value;
         end.cause = std::string(gridward::to_string(over->cause));
         end.blackout_mwh =
            remaining_demand_mwh(env.scenario(), over->t_bar, s.inputs_.params.steps_per_day);
         p["outcome"] = "failed";
         p["t_bar"] = over->t_bar;
         p["failure_zone"] = over->failure_zone.value;
         p["cause"] = end.cause;
      }
      s.log_.end = end;
      try {
         attach_scores(s.log_, compute_baselines(s.inputs_, opt_.pricing), opt_.pricing);
         p["scores"] = s.log_.end->scores;
      } catch(const std::exception& e) {
         p["scores"] = nullptr;
         p["score_error"] = e.what();
      }
      if(opt_.log_dir)
         write_log(s.log_, *opt_.log_dir / (s.id_ + ".jsonl"));
      publish(s, "gameover", p);
      close(s);
      return p;
   }

   void close(Session& s)
   {
      std::lock_guard lock(s.event_mutex_);
      s.closed_ = true;
      s.event_cv_.notify_all();
   }

   std::filesystem::path resolve(const std::string& ref, const char* sub, const char* ext) const
   {
      std::filesystem::path p(ref);
      if(p.is_absolute() || std::filesystem::exists(p))
         return p;
      auto q = opt_.data_dir / sub / ref;
      if(!std::filesystem::exists(q) && ext[0] != '\0')
         q += ext;
      if(!std::filesystem::exists(q))
         throw BridgeError(400, "cannot resolve '" + ref + "'");
      return q;
   }

   ScenarioSource scenario_source(const json& j) const
   {
      if(j.is_null())
         return ScenarioSource::from_dir(resolve("toy5_week_flat", "scenarios", ""));
      if(j.is_string())
         return ScenarioSource::from_dir(resolve(j.get<std::string>(), "scenarios", ""));
      if(j.contains("dir"))
         return ScenarioSource::from_dir(resolve(j.at("dir").get<std::string>(), "scenarios", ""));
      if(j.contains("generate"))
         return ScenarioSource::from_config(scenario_config_from_json(j.at("generate")));
      throw BridgeError(400, "scenario needs 'dir' or 'generate'");
   }

   std::string new_id()
   {
      std::lock_guard lock(mutex_);
      char buf[17];
      std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(rng_()));
      return buf;
   }

   ManagerOptions opt_;
   std::mutex mutex_;
   std::map<std::string, std::shared_ptr<Session>> sessions_;
   std::mt19937_64 rng_;
};

}  // namespace gridward::bridge
