#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gridward/agents.hpp"
#include "gridward/episode_log.hpp"
#include "gridward/scoring.hpp"

namespace gridward {

// ---------------------------------------------------------------------------
// Scenario sources
// ---------------------------------------------------------------------------
struct ScenarioSource {
   std::optional<std::filesystem::path> dir;
   std::optional<ScenarioConfig> config;

   static ScenarioSource from_dir(std::filesystem::path d) { return {std::move(d), std::nullopt}; }
   static ScenarioSource from_config(ScenarioConfig c) { return {std::nullopt, std::move(c)}; }

   [[nodiscard]] nlohmann::json to_json() const
   {
      if(dir)
         return {{"dir", std::filesystem::absolute(*dir).lexically_normal().string()}};
      return {{"generate", nlohmann::json::parse(scenario_config_to_json(*config).dump())}};
   }

   static ScenarioSource from_json(const nlohmann::json& j)
   {
      if(j.contains("dir"))
         return from_dir(j.at("dir").get<std::string>());
      if(j.contains("generate"))
         return from_config(scenario_config_from_json(j.at("generate")));
      throw ParseError("scenario source needs 'dir' or 'generate'");
   }

   [[nodiscard]] Scenario materialize(const GridCase& c) const
   {
      return dir ? load_scenario(c, *dir) : generate_scenario(c, *config);
   }
};

/// Configs for `count` generated week-long scenarios named gen_000, gen_001, ...
inline std::vector<ScenarioConfig> generated_suite(
   std::uint64_t suite_seed, int count, const ScenarioConfig& base = {})
{
   std::vector<ScenarioConfig> out;
   for(int i = 0; i < count; ++i) {
      ScenarioConfig c = base;
      char name[32];
      std::snprintf(name, sizeof(name), "gen_%03d", i);
      c.name = name;
      c.seed = derive_seed(suite_seed, c.name);
      out.push_back(std::move(c));
   }
   return out;
}

/// A pinned generated suite: case, generator seed and count, base generator
/// settings and the agent seed.
struct SuiteSpec {
   std::string name;
   std::filesystem::path case_path;
   std::uint64_t generate_seed = 0;
   int count = 0;
   ScenarioConfig base;
   std::uint64_t seed = 0;

   [[nodiscard]] std::vector<ScenarioSource> sources() const
   {
      std::vector<ScenarioSource> out;
      for(auto& c : generated_suite(generate_seed, count, base))
         out.push_back(ScenarioSource::from_config(std::move(c)));
      return out;
   }
};

/// Reads a suite file. A relative case path resolves against the file's
/// directory.
inline SuiteSpec load_suite(const std::filesystem::path& path)
{
   std::ifstream in(path);
   if(!in)
      throw ParseError("cannot open suite " + path.string());
   nlohmann::json j;
   try {
      j = nlohmann::json::parse(in);
   } catch(const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
   }
   detail::reject_unknown_keys(j, {"name", "case", "generate_seed", "count", "base", "seed", "notes"}, "suite");
   SuiteSpec s;
   s.name = j.value("name", path.stem().string());
   s.case_path = j.at("case").get<std::string>();
   if(s.case_path.is_relative())
      s.case_path = (path.parent_path() / s.case_path).lexically_normal();
   s.generate_seed = j.at("generate_seed").get<std::uint64_t>();
   s.count = j.at("count").get<int>();
   if(s.count < 1)
      throw ParseError("suite count must be positive");
   if(j.contains("base"))
      s.base = scenario_config_from_json(j.at("base"));
   s.seed = j.value("seed", std::uint64_t{0});
   return s;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------
struct RunConfig {
   std::filesystem::path case_path;
   std::vector<ScenarioSource> scenarios;
   std::string agent = "do-nothing";
   std::vector<std::uint64_t> seeds{0};
   std::optional<std::filesystem::path> out_dir;
   int jobs = 1;
   std::optional<AttackSchedule> attack_schedule;
   EnvParams params;
   Pricing pricing;
   AgentOptions agent_options;
   bool write_svg = true;
};

inline std::vector<std::string> config_violations(const RunConfig& cfg)
{
   std::vector<std::string> v;
   if(cfg.scenarios.empty())
      v.push_back("at least one scenario is required");
   if(cfg.seeds.empty())
      v.push_back("at least one seed is required");
   if(!is_agent_name(cfg.agent))
      v.push_back("unknown agent '" + cfg.agent + "'");
   if(cfg.jobs < 1)
      v.push_back("jobs must be at least 1");
   return v;
}

/// Episode seed of a scenario within a suite; independent of the other
/// scenarios of the suite.
inline std::uint64_t episode_seed(std::uint64_t suite_seed, const std::string& scenario_name)
{
   return derive_seed(suite_seed, "scenario:" + scenario_name);
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------
struct EpisodeInputs {
   std::shared_ptr<const GridCase> grid;
   std::shared_ptr<const Scenario> scenario;
   std::string case_path;
   nlohmann::json scenario_source;
   EnvParams params;
   std::optional<AttackSchedule> attack_schedule;
   std::uint64_t seed = 0;
};

/// Plays one episode with `agent` and records it. No scores are attached.
inline EpisodeLog play_episode(const EpisodeInputs& in, Agent& agent)
{
   Environment env(in.grid, in.scenario, in.params);
   env.reset(in.seed, in.attack_schedule);
   agent.reset();

   EpisodeLog log;
   auto& h = log.header;
   h.case_path = in.case_path;
   h.scenario_source = in.scenario_source;
   h.scenario_name = in.scenario->name;
   h.seed = in.seed;
   h.agent = agent.name();
   h.params = in.params;
   h.pinned_schedule = in.attack_schedule;
   h.n_steps = in.scenario->n_steps;
   h.steps_per_day = in.params.steps_per_day;

   log.steps.push_back(reset_record(env));
   while(!env.done()) {
      const auto d = agent.decide(env);
      const auto res = env.step(d.action, d.alarm);
      log.steps.push_back(step_record(env, res));
   }

   EndRecord end;
   if(const auto& over = env.game_over()) {
      end.survived = false;
      end.t_bar = over->t_bar;
      end.failure_zone = over->failure_zone.value;
      end.cause = std::string(to_string(over->cause));
      end.blackout_mwh = remaining_demand_mwh(*in.scenario, over->t_bar, in.params.steps_per_day);
   }
   log.end = end;
   return log;
}

inline CostBaselines compute_baselines(const EpisodeInputs& in, const Pricing& pricing)
{
   CostBaselines b;
   auto dn = make_agent("do-nothing", *in.grid);
   b.do_nothing = episode_cost(play_episode(in, dn), pricing);
   b.lower_bound = lower_bound_cost(*in.grid, *in.scenario, pricing, in.params.steps_per_day);
   b.blackout = blackout_cost(*in.scenario, pricing, in.params.steps_per_day);
   return b;
}

/// Writes the scores into the end record.
inline void attach_scores(EpisodeLog& log, const CostBaselines& b, const Pricing& pricing)
{
   const auto alarm = alarm_score(log);
   const double op = operation_cost_score(log, b, pricing);
   nlohmann::json s;
   s["alarm"] = alarm.score;
   s["alarm_rescaled"] = rescale_alarm_score(alarm.score);
   s["operation"] = op;
   s["combined"] = combined_score(alarm.score, op);
   s["cost"] = episode_cost(log, pricing);
   s["baselines"] = {
      {"lower_bound", b.lower_bound}, {"do_nothing", b.do_nothing}, {"blackout", b.blackout}};
   log.end->scores = s;
}

inline std::string log_file_name(const EpisodeLog& log)
{
   return log.header.scenario_name + "_" + log.header.agent + "_" + hex64(log.header.seed) + ".jsonl";
}

struct LoadedCase {
   std::shared_ptr<const GridCase> grid;
   std::string path;
};

inline LoadedCase load_case_shared(const std::filesystem::path& path)
{
   return {
      std::make_shared<const GridCase>(load_case(path)),
      std::filesystem::absolute(path).lexically_normal().string()};
}

/// Plays, scores and (with an output directory) writes one episode.
inline EpisodeLog run_episode(
   const RunConfig& cfg,
   const LoadedCase& grid,
   const ScenarioSource& src,
   std::shared_ptr<const Scenario> scenario,
   std::uint64_t seed)
{
   EpisodeInputs in;
   in.grid = grid.grid;
   in.case_path = grid.path;
   in.scenario = std::move(scenario);
   in.scenario_source = src.to_json();
   in.params = cfg.params;
   in.attack_schedule = cfg.attack_schedule;
   in.seed = seed;

   auto agent = make_agent(cfg.agent, *grid.grid, cfg.agent_options);
   auto log = play_episode(in, agent);
   attach_scores(log, compute_baselines(in, cfg.pricing), cfg.pricing);
   if(cfg.out_dir)
      write_log(log, *cfg.out_dir / "logs" / log_file_name(log));
   return log;
}

inline EpisodeLog run_episode(const RunConfig& cfg, const ScenarioSource& src, std::uint64_t seed)
{
   const auto grid = load_case_shared(cfg.case_path);
   auto scenario = std::make_shared<const Scenario>(src.materialize(*grid.grid));
   return run_episode(cfg, grid, src, std::move(scenario), seed);
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------
struct SuiteResult {
   std::vector<ScoreRow> rows;
   std::vector<EpisodeLog> logs;
   BehaviorStats stats;
   std::vector<std::string> errors;
   double mean_combined = 0.0;
};

inline std::string scenario_label(const ScenarioSource& s)
{
   if(s.config)
      return s.config->name;
   return s.dir->filename().string();
}

inline SuiteResult run_suite(const RunConfig& cfg)
{
   auto v = config_violations(cfg);
   if(!v.empty())
      throw ValidationError(std::move(v));
   const auto grid = load_case_shared(cfg.case_path);

   struct Job {
      const ScenarioSource* src;
      std::uint64_t suite_seed;
   };
   std::vector<Job> jobs;
   for(auto seed : cfg.seeds)
      for(const auto& s : cfg.scenarios)
         jobs.push_back({&s, seed});

   std::vector<std::optional<EpisodeLog>> logs(jobs.size());
   std::vector<std::string> errors(jobs.size());
   std::atomic<std::size_t> next{0};
   const auto worker = [&] {
      for(std::size_t i = next++; i < jobs.size(); i = next++) {
         const auto& job = jobs[i];
         try {
            auto scenario = std::make_shared<const Scenario>(job.src->materialize(*grid.grid));
            const auto seed = episode_seed(job.suite_seed, scenario->name);
            logs[i] = run_episode(cfg, grid, *job.src, std::move(scenario), seed);
         } catch(const std::exception& e) {
            errors[i] = scenario_label(*job.src) + ": " + e.what();
         }
      }
   };
   const int n_threads = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(jobs.size())));
   if(n_threads == 1) {
      worker();
   } else {
      std::vector<std::thread> pool;
      for(int t = 0; t < n_threads; ++t)
         pool.emplace_back(worker);
      for(auto& t : pool)
         t.join();
   }

   SuiteResult out;
   for(std::size_t i = 0; i < jobs.size(); ++i) {
      if(logs[i]) {
         out.rows.push_back(score_row(*logs[i]));
         out.logs.push_back(std::move(*logs[i]));
      } else {
         out.errors.push_back(errors[i]);
      }
   }
   out.stats = episode_stats(out.logs);
   out.mean_combined = suite_score(out.rows);
   return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------
inline std::string fmt_fixed(double v, int digits = 2)
{
   std::ostringstream s;
   s << std::fixed << std::setprecision(digits) << v;
   return s.str();
}

inline std::vector<std::string> score_columns()
{
   return {"scenario", "agent", "seed", "outcome", "t_bar", "ta_minus_tbar",
           "alarm", "alarm_rescaled", "operation", "combined"};
}

inline std::vector<std::vector<std::string>> score_cells(const std::vector<ScoreRow>& rows)
{
   std::vector<std::vector<std::string>> out;
   for(const auto& r : rows)
      out.push_back(
         {r.scenario,
          r.agent,
          hex64(r.seed),
          r.survived ? "survived" : "failed",
          r.t_bar ? std::to_string(*r.t_bar) : "-",
          r.alarm_offset ? std::to_string(*r.alarm_offset) : "-",
          fmt_fixed(r.alarm_raw),
          fmt_fixed(r.alarm_rescaled),
          fmt_fixed(r.operation),
          fmt_fixed(r.combined)});
   return out;
}

inline std::string score_csv(const std::vector<ScoreRow>& rows)
{
   std::string out;
   const auto cols = score_columns();
   for(std::size_t i = 0; i < cols.size(); ++i)
      out += (i ? "," : "") + cols[i];
   out += "\n";
   for(const auto& row : score_cells(rows)) {
      for(std::size_t i = 0; i < row.size(); ++i)
         out += (i ? "," : "") + row[i];
      out += "\n";
   }
   return out;
}

inline std::string score_text(const std::vector<ScoreRow>& rows)
{
   const auto cols = score_columns();
   auto cells = score_cells(rows);
   std::vector<std::size_t> width(cols.size());
   for(std::size_t i = 0; i < cols.size(); ++i)
      width[i] = cols[i].size();
   for(const auto& row : cells)
      for(std::size_t i = 0; i < row.size(); ++i)
         width[i] = std::max(width[i], row[i].size());
   std::ostringstream s;
   const auto line = [&](const std::vector<std::string>& row) {
      for(std::size_t i = 0; i < row.size(); ++i) {
         if(i)
            s << "  ";
         if(i < 4)
            s << std::left << std::setw(static_cast<int>(width[i])) << row[i];
         else
            s << std::right << std::setw(static_cast<int>(width[i])) << row[i];
      }
      s << "\n";
   };
   line(cols);
   for(const auto& row : cells)
      line(row);
   s << "mean combined: " << fmt_fixed(suite_score(rows)) << " over " << rows.size()
     << " episode(s)\n";
   return s.str();
}

inline std::string stats_text(const BehaviorStats& st)
{
   std::ostringstream s;
   s << "episodes                " << st.episodes << " (" << st.survived << " survived)\n"
     << "days played             " << fmt_fixed(st.days_played, 3) << "\n"
     << "alarms per day          " << fmt_fixed(st.alarms_per_day, 3) << "\n"
     << "mean budget             " << fmt_fixed(st.mean_budget, 3) << "\n"
     << "budget below kappa      " << fmt_fixed(100.0 * st.frac_budget_below_kappa, 2) << "%\n"
     << "actions per episode     " << fmt_fixed(st.mean_actions_per_episode, 2) << " (max "
     << st.max_actions_per_episode << ")\n"
     << "mean topology distance  " << fmt_fixed(st.mean_topology_distance, 3) << "\n";
   return s.str();
}

/// Timeline of one episode: budget, topology distance, attack windows,
/// alarms and the failure step.
inline std::string timeline_svg(const EpisodeLog& log)
{
   const double W = 960, left = 60, right = 20, panel = 120, gap = 30, top = 30;
   const double plot_w = W - left - right;
   const int n = std::max(1, log.header.n_steps - 1);
   const double cap = log.header.params.budget_cap;
   int max_dist = 1;
   for(const auto& r : log.steps)
      max_dist = std::max(max_dist, r.topo_dist);
   const double H = top + 3 * panel + 2 * gap + 40;
   const auto x = [&](int step) { return left + plot_w * step / n; };

   std::ostringstream s;
   s << std::fixed << std::setprecision(2);
   s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
   s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
   s << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << log.header.scenario_name
     << " / " << log.header.agent << "</text>\n";

   const auto frame = [&](double y0, const std::string& label) {
      s << "<rect x=\"" << left << "\" y=\"" << y0 << "\" width=\"" << plot_w << "\" height=\""
        << panel << "\" fill=\"none\" stroke=\"#888\"/>\n";
      s << "<text x=\"4\" y=\"" << y0 + panel / 2 << "\">" << label << "</text>\n";
   };
   const auto polyline = [&](double y0, double vmax, auto value, const char* color) {
      s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
      for(const auto& r : log.steps)
         s << x(r.step) << "," << y0 + panel - panel * std::min(1.0, value(r) / vmax) << " ";
      s << "\"/>\n";
   };

   const double y_alpha = top, y_dist = top + panel + gap, y_att = top + 2 * (panel + gap);
   frame(y_alpha, "budget");
   polyline(y_alpha, cap, [](const StepRecord& r) { return r.alpha; }, "#1f77b4");
   frame(y_dist, "topo dist");
   polyline(y_dist, max_dist, [](const StepRecord& r) { return double(r.topo_dist); }, "#2ca02c");
   frame(y_att, "attacks");

   int run_start = -1;
   const auto flush = [&](int end_step) {
      if(run_start >= 0)
         s << "<rect x=\"" << x(run_start) << "\" y=\"" << y_att + 10 << "\" width=\""
           << std::max(1.0, x(end_step) - x(run_start)) << "\" height=\"" << panel - 20
           << "\" fill=\"#d62728\" fill-opacity=\"0.35\"/>\n";
      run_start = -1;
   };
   int last = 0;
   for(const auto& r : log.steps) {
      const bool under = !r.attacked.empty();
      if(under && run_start < 0)
         run_start = r.step;
      if(!under)
         flush(r.step);
      last = r.step;
   }
   flush(last);

   for(const auto& r : log.steps)
      if(r.alarm)
         s << "<line x1=\"" << x(r.step) << "\" x2=\"" << x(r.step) << "\" y1=\"" << y_alpha
           << "\" y2=\"" << y_alpha + panel << "\" stroke=\""
           << (r.alarm_accepted ? "#ff7f0e" : "#bbb") << "\"/>\n";
   if(log.end && !log.end->survived)
      s << "<line x1=\"" << x(log.end->t_bar) << "\" x2=\"" << x(log.end->t_bar) << "\" y1=\""
        << top << "\" y2=\"" << y_att + panel << "\" stroke=\"black\" stroke-dasharray=\"4 3\"/>\n";
   s << "<text x=\"" << left << "\" y=\"" << H - 12 << "\">step 0</text>\n";
   s << "<text x=\"" << W - right - 60 << "\" y=\"" << H - 12 << "\">step " << n << "</text>\n";
   s << "</svg>\n";
   return s.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
   if(path.has_parent_path())
      std::filesystem::create_directories(path.parent_path());
   std::ofstream out(path, std::ios::binary);
   if(!out)
      throw Error("cannot write " + path.string());
   out << text;
}

inline void write_suite_reports(const SuiteResult& r, const std::filesystem::path& out_dir, bool svg)
{
   write_text(out_dir / "scores.csv", score_csv(r.rows));
   write_text(out_dir / "scores.txt", score_text(r.rows));
   write_text(out_dir / "stats.json", to_json(r.stats).dump(2) + "\n");
   if(svg)
      for(const auto& log : r.logs) {
         auto name = log_file_name(log);
         name.replace(name.size() - 6, 6, ".svg");
         write_text(out_dir / "timelines" / name, timeline_svg(log));
      }
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------
struct ReplayVerdict {
   bool ok = true;
   int step = -1;
   std::string field;
   std::string detail;
   int steps_checked = 0;
};

/// First field that differs between two records, empty when equal.
inline std::string first_difference(const StepRecord& a, const StepRecord& b)
{
   if(a.step != b.step) return "step";
   if(a.action != b.action) return "action";
   if(a.alarm != b.alarm) return "alarm";
   if(a.alarm_accepted != b.alarm_accepted) return "alarm_accepted";
   if(a.alarm_rejected != b.alarm_rejected) return "alarm_rejected";
   if(a.alpha != b.alpha) return "alpha";
   if(a.rho != b.rho) return "rho";
   if(a.attacked != b.attacked) return "attacked";
   if(a.tripped != b.tripped) return "tripped";
   if(a.flags != b.flags) return "flags";
   if(a.topo_dist != b.topo_dist) return "topo_dist";
   if(a.losses_mw != b.losses_mw) return "cost.losses_mw";
   if(a.redispatch_mw != b.redispatch_mw) return "cost.redispatch_mw";
   if(a.redispatch_cost != b.redispatch_cost) return "cost.redispatch_cost";
   if(a.curtailed_mw != b.curtailed_mw) return "cost.curtailed_mw";
   if(a.demand_mw != b.demand_mw) return "cost.demand_mw";
   if(a.hash != b.hash) return "hash";
   return {};
}

/// Re-executes the logged actions and alarms under the logged seed and
/// compares every record.
inline ReplayVerdict replay(const EpisodeLog& log, std::optional<std::filesystem::path> case_override = {})
{
   ReplayVerdict v;
   const auto fail = [&](int step, std::string field, std::string detail) {
      v.ok = false;
      v.step = step;
      v.field = std::move(field);
      v.detail = std::move(detail);
      return v;
   };
   if(log.steps.empty())
      return fail(0, "steps", "log has no records");

   const auto grid = std::make_shared<const GridCase>(
      load_case(case_override ? *case_override : std::filesystem::path(log.header.case_path)));
   const auto src = ScenarioSource::from_json(log.header.scenario_source);
   const auto scenario = std::make_shared<const Scenario>(src.materialize(*grid));
   Environment env(grid, scenario, log.header.params);
   env.reset(log.header.seed, log.header.pinned_schedule);

   const auto expect0 = reset_record(env);
   if(auto f = first_difference(expect0, log.steps[0]); !f.empty())
      return fail(log.steps[0].step, f, "reset record differs");
   v.steps_checked = 1;

   for(std::size_t i = 1; i < log.steps.size(); ++i) {
      const auto& rec = log.steps[i];
      if(env.done())
         return fail(rec.step, "step", "log continues after the episode ended");
      Action a;
      try {
         a = parse_action(*grid, rec.action);
      } catch(const ParseError& e) {
         return fail(rec.step, "action", e.what());
      }
      std::optional<Alarm> alarm;
      if(rec.alarm) {
         std::vector<ZoneId> zones;
         for(int z : *rec.alarm)
            zones.push_back(ZoneId{z});
         alarm = make_alarm(zones);
      }
      const auto res = env.step(a, alarm);
      const auto expect = step_record(env, res);
      if(auto f = first_difference(expect, rec); !f.empty())
         return fail(rec.step, f, "record differs from re-execution");
      ++v.steps_checked;
   }
   if(!env.done())
      return fail(env.current_step(), "end", "log ends before the episode finished");
   if(log.end) {
      const auto& over = env.game_over();
      if(log.end->survived != !over.has_value())
         return fail(env.current_step(), "outcome", "outcome differs");
      if(over && (log.end->t_bar != over->t_bar || log.end->failure_zone != over->failure_zone.value))
         return fail(over->t_bar, "failure", "t_bar or failure zone differs");
   }
   return v;
}

inline ReplayVerdict replay(const std::filesystem::path& path)
{
   return replay(read_log(path));
}

}  // namespace gridward
