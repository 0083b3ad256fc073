// gridward command-line runner: episodes, suites, scoring, statistics, replay.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gridward/runner.hpp"

namespace fs = std::filesystem;
using namespace gridward;

namespace {

nlohmann::json read_json(const fs::path& p)
{
   std::ifstream in(p);
   if(!in)
      throw ParseError("cannot open " + p.string());
   try {
      return nlohmann::json::parse(in);
   } catch(const nlohmann::json::exception& e) {
      throw ParseError(p.string() + ": " + e.what());
   }
}

std::vector<EpisodeLog> read_logs(const fs::path& dir)
{
   std::vector<EpisodeLog> logs;
   for(const auto& p : list_logs(dir))
      logs.push_back(read_log(p));
   if(logs.empty())
      throw Error("no *.jsonl logs under " + dir.string());
   return logs;
}

}  // namespace

int main(int argc, char** argv)
{
   CLI::App app{"gridward: grid operation episodes under attack, with alarms and scoring"};
   app.require_subcommand(1);

   // run
   auto* run = app.add_subcommand("run", "Run an agent over one or more scenarios");
   std::string case_path;
   std::vector<std::string> scenario_dirs;
   int generate_count = 0;
   std::uint64_t generate_seed = 0;
   std::string agent = "do-nothing";
   std::vector<std::uint64_t> seeds;
   std::string attack_schedule, out_dir, params_file, pricing_file, candidates_file;
   int jobs = 1;
   bool no_svg = false;
   double rba2_th = RbA2Params{}.t_h;
   int rba2_d = RbA2Params{}.d_steps;
   std::string suite_file;
   run->add_option("--case", case_path, "Case JSON file")->envname("GRIDWARD_CASE");
   run->add_option("--suite", suite_file, "Suite file pinning case, generated scenarios and seed")
      ->check(CLI::ExistingFile);
   run->add_option("--scenario", scenario_dirs, "Chronics directories")->check(CLI::ExistingDirectory);
   run->add_option("--generate", generate_count, "Also run N generated week-long scenarios")
      ->envname("GRIDWARD_GENERATE");
   run->add_option("--generate-seed", generate_seed, "Seed of the generated scenarios")
      ->envname("GRIDWARD_GENERATE_SEED");
   run->add_option("--agent", agent, "Agent name")
      ->check(CLI::IsMember(agent_names()))
      ->envname("GRIDWARD_AGENT");
   run->add_option("--seed", seeds, "Suite seed(s)")->envname("GRIDWARD_SEED");
   run->add_option("--attack-schedule", attack_schedule, "Pinned attack schedule CSV")
      ->check(CLI::ExistingFile);
   run->add_option("--out", out_dir, "Output directory")->envname("GRIDWARD_OUT");
   run->add_option("--jobs", jobs, "Parallel episodes")->check(CLI::PositiveNumber)->envname("GRIDWARD_JOBS");
   run->add_option("--params", params_file, "Environment parameter JSON")
      ->check(CLI::ExistingFile)
      ->envname("GRIDWARD_PARAMS");
   run->add_option("--pricing", pricing_file, "Pricing JSON")
      ->check(CLI::ExistingFile)
      ->envname("GRIDWARD_PRICING");
   run->add_option("--candidates", candidates_file, "Curated SiE action file")->check(CLI::ExistingFile);
   run->add_option("--rba2-threshold", rba2_th, "RbA-II predicted rho threshold");
   run->add_option("--rba2-spacing", rba2_d, "RbA-II minimum steps between alarms");
   run->add_flag("--no-svg", no_svg, "Skip timeline plots");

   // score / stats
   std::string logs_dir;
   bool csv = false;
   auto* score = app.add_subcommand("score", "Score table of a directory of episode logs");
   score->add_option("--logs", logs_dir, "Log directory")->required()->check(CLI::ExistingDirectory);
   score->add_flag("--csv", csv, "CSV instead of an aligned table");
   auto* stats = app.add_subcommand("stats", "Behavior statistics of a directory of episode logs");
   stats->add_option("--logs", logs_dir, "Log directory")->required()->check(CLI::ExistingDirectory);
   bool stats_json = false;
   stats->add_flag("--json", stats_json, "JSON output");

   // replay
   std::string log_file;
   auto* rep = app.add_subcommand("replay", "Re-execute a log and verify every step");
   rep->add_option("--log", log_file, "Episode log")->required()->check(CLI::ExistingFile);

   // generate
   auto* gen = app.add_subcommand("generate", "Write generated scenarios as chronics directories");
   std::string gen_case, gen_out;
   int gen_count = 1;
   std::uint64_t gen_seed = 0;
   double renewable_share = ScenarioConfig{}.renewable_share_target;
   gen->add_option("--case", gen_case, "Case JSON file")->required()->envname("GRIDWARD_CASE");
   gen->add_option("--count", gen_count, "Number of scenarios")->check(CLI::PositiveNumber);
   gen->add_option("--seed", gen_seed, "Suite seed");
   gen->add_option("--renewable-share", renewable_share, "Target renewable energy share");
   gen->add_option("--out", gen_out, "Output directory")->required();

   // schedule
   auto* sched = app.add_subcommand("schedule", "Write an attack schedule CSV for pinning");
   std::uint64_t sched_seed = 0;
   int sched_steps = kWeekSteps;
   std::string sched_out;
   sched->add_option("--seed", sched_seed, "Episode seed");
   sched->add_option("--steps", sched_steps, "Episode length")->check(CLI::PositiveNumber);
   sched->add_option("--out", sched_out, "Output CSV")->required();

   CLI11_PARSE(app, argc, argv);

   try {
      if(*run) {
         RunConfig cfg;
         std::optional<SuiteSpec> suite;
         if(!suite_file.empty())
            suite = load_suite(suite_file);
         if(case_path.empty() && !suite) {
            std::cerr << "error: give --case or --suite\n";
            return 2;
         }
         cfg.case_path = case_path.empty() ? suite->case_path : fs::path(case_path);
         if(suite)
            for(auto& s : suite->sources())
               cfg.scenarios.push_back(std::move(s));
         for(const auto& d : scenario_dirs)
            cfg.scenarios.push_back(ScenarioSource::from_dir(d));
         for(auto& c : generated_suite(generate_seed, generate_count))
            cfg.scenarios.push_back(ScenarioSource::from_config(std::move(c)));
         cfg.agent = agent;
         if(!seeds.empty())
            cfg.seeds = seeds;
         else
            cfg.seeds = {suite ? suite->seed : 0};
         cfg.jobs = jobs;
         if(!out_dir.empty())
            cfg.out_dir = out_dir;
         if(!attack_schedule.empty())
            cfg.attack_schedule = load_attack_schedule(attack_schedule);
         if(!params_file.empty())
            cfg.params = params_from_json(read_json(params_file));
         if(!pricing_file.empty())
            cfg.pricing = load_pricing(pricing_file);
         cfg.agent_options.rba2 = {rba2_th, rba2_d};
         if(!candidates_file.empty())
            cfg.agent_options.sie_candidates = load_action_file(load_case(cfg.case_path), candidates_file);
         cfg.write_svg = !no_svg;
         if(cfg.scenarios.empty()) {
            std::cerr << "error: give at least one --scenario, --suite or --generate N\n";
            return 2;
         }

         const auto result = run_suite(cfg);
         std::cout << score_text(result.rows) << "\n" << stats_text(result.stats);
         if(cfg.out_dir)
            write_suite_reports(result, *cfg.out_dir, cfg.write_svg);
         for(const auto& e : result.errors)
            std::cerr << "error: " << e << "\n";
         return result.errors.empty() ? 0 : 1;
      }
      if(*score) {
         std::vector<ScoreRow> rows;
         for(const auto& log : read_logs(logs_dir))
            rows.push_back(score_row(log));
         std::cout << (csv ? score_csv(rows) : score_text(rows));
         return 0;
      }
      if(*stats) {
         const auto st = episode_stats(read_logs(logs_dir));
         std::cout << (stats_json ? to_json(st).dump(2) + "\n" : stats_text(st));
         return 0;
      }
      if(*rep) {
         const auto v = replay(fs::path(log_file));
         if(v.ok) {
            std::cout << "ok: " << v.steps_checked << " records verified\n";
            return 0;
         }
         std::cout << "divergence at step " << v.step << ": field " << v.field << " (" << v.detail
                   << ")\n";
         return 1;
      }
      if(*gen) {
         const auto grid = load_case(gen_case);
         ScenarioConfig base;
         base.renewable_share_target = renewable_share;
         for(const auto& c : generated_suite(gen_seed, gen_count, base)) {
            write_scenario(grid, generate_scenario(grid, c), fs::path(gen_out) / c.name);
            std::cout << (fs::path(gen_out) / c.name).string() << "\n";
         }
         return 0;
      }
      if(*sched) {
         Rng rng(derive_seed(sched_seed, "opponent-schedule"));
         write_attack_schedule(generate_attack_schedule(rng, sched_steps), sched_out);
         return 0;
      }
   } catch(const ValidationError& e) {
      std::cerr << "error: " << e.what() << "\n";
      for(const auto& v : e.violations())
         std::cerr << "  " << v << "\n";
      return 2;
   } catch(const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
   }
   return 0;
}
