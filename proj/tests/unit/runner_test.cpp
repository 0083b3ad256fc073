#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "../support/fixtures.hpp"

using namespace gridward;
using fixtures::data_path;
using fixtures::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p)
{
   std::ifstream in(p, std::ios::binary);
   std::stringstream ss;
   ss << in.rdbuf();
   return ss.str();
}

RunConfig flat_config()
{
   RunConfig cfg;
   cfg.case_path = data_path("cases/toy5.json");
   cfg.scenarios = {ScenarioSource::from_dir(data_path("scenarios/toy5_week_flat"))};
   return cfg;
}

struct CliResult {
   int code = 0;
   std::string out;
};

CliResult cli(const std::string& args)
{
   TempDir tmp;
   const auto out = tmp.path() / "out.txt";
   const std::string cmd = std::string(GRIDWARD_CLI) + " " + args + " > " + out.string() + " 2>&1";
   const int status = std::system(cmd.c_str());
   return {WEXITSTATUS(status), slurp(out)};
}

}  // namespace

// ---------------------------------------------------------------------------
// episodes and logs
// ---------------------------------------------------------------------------
TEST(Runner, BenignWeekSurvives)
{
   const auto cfg = flat_config();
   const auto log = run_episode(cfg, cfg.scenarios[0], 1);
   EXPECT_EQ(log.steps.size(), 2016u);
   ASSERT_TRUE(log.end);
   EXPECT_TRUE(log.end->survived);
   for(const auto& r : log.steps)
      ASSERT_DOUBLE_EQ(r.alpha, 3.0);
   EXPECT_TRUE(log.steps[0].has_flag("reset"));
   const auto row = score_row(log);
   EXPECT_DOUBLE_EQ(row.alarm_raw, 100.0);
   EXPECT_EQ(row.steps_played, 2015);
}

TEST(Runner, LogJsonlRoundTrip)
{
   auto cfg = flat_config();
   cfg.agent = "dn+rba2";
   const auto log = run_episode(cfg, cfg.scenarios[0], 9);
   const auto text = to_jsonl(log);
   std::istringstream in(text);
   const auto back = parse_log(in);
   EXPECT_EQ(to_jsonl(back), text);
   EXPECT_EQ(back.steps, log.steps);
}

TEST(Runner, MalformedLogsAreRejected)
{
   std::istringstream no_header(R"({"type":"step"})" "\n");
   EXPECT_THROW(parse_log(no_header), ParseError);
   std::istringstream garbage("{not json\n");
   EXPECT_THROW(parse_log(garbage), ParseError);
}

TEST(Runner, ReplayAcceptsAndDetectsTampering)
{
   TempDir tmp;
   auto cfg = flat_config();
   cfg.agent = "sie+rba1";
   auto log = run_episode(cfg, cfg.scenarios[0], 3);
   EXPECT_TRUE(replay(log).ok);

   log.steps[100].alpha = 2.5;
   const auto v = replay(log);
   EXPECT_FALSE(v.ok);
   EXPECT_EQ(v.step, 100);
   EXPECT_EQ(v.field, "alpha");

   log = run_episode(cfg, cfg.scenarios[0], 3);
   log.steps[40].action = "line L1=off";
   EXPECT_FALSE(replay(log).ok);

   log = run_episode(cfg, cfg.scenarios[0], 3);
   log.steps.pop_back();
   EXPECT_EQ(replay(log).field, "end");
}

TEST(Runner, SuiteIsIndependentOfParallelism)
{
   RunConfig cfg;
   cfg.case_path = data_path("cases/toy5.json");
   for(auto& c : generated_suite(3, 3))
      cfg.scenarios.push_back(ScenarioSource::from_config(c));
   cfg.agent = "dn+rba1";
   cfg.seeds = {1, 2};
   const auto serial = run_suite(cfg);
   cfg.jobs = 3;
   const auto parallel = run_suite(cfg);
   ASSERT_TRUE(serial.errors.empty());
   ASSERT_EQ(serial.logs.size(), 6u);
   for(std::size_t i = 0; i < serial.logs.size(); ++i)
      EXPECT_EQ(to_jsonl(serial.logs[i]), to_jsonl(parallel.logs[i]));
   EXPECT_EQ(serial.stats.episodes, 6);
}

TEST(Runner, ConfigValidation)
{
   RunConfig cfg;
   cfg.case_path = data_path("cases/toy5.json");
   EXPECT_THROW(run_suite(cfg), ValidationError);
   cfg = flat_config();
   cfg.agent = "random";
   EXPECT_THROW(run_suite(cfg), ValidationError);
   cfg = flat_config();
   cfg.seeds.clear();
   EXPECT_THROW(run_suite(cfg), ValidationError);
}

TEST(Runner, ReportsAreWritten)
{
   TempDir tmp;
   auto cfg = flat_config();
   cfg.out_dir = tmp.path();
   const auto r = run_suite(cfg);
   write_suite_reports(r, tmp.path(), true);
   for(const char* f : {"scores.csv", "scores.txt", "stats.json"})
      EXPECT_TRUE(std::filesystem::exists(tmp.path() / f)) << f;
   EXPECT_EQ(list_logs(tmp.path() / "logs").size(), 1u);
   EXPECT_EQ(std::distance(std::filesystem::directory_iterator(tmp.path() / "timelines"), {}), 1);
   const auto csv = score_csv(r.rows);
   EXPECT_EQ(csv.substr(0, csv.find(',')), "scenario");
   const auto svg = timeline_svg(r.logs[0]);
   EXPECT_EQ(svg.rfind("<svg", 0), 0u);
}

TEST(Runner, SeedsAndSuites)
{
   EXPECT_EQ(episode_seed(7, "gen_000"), episode_seed(7, "gen_000"));
   EXPECT_NE(episode_seed(7, "gen_000"), episode_seed(7, "gen_001"));
   const auto gen = generated_suite(5, 3);
   ASSERT_EQ(gen.size(), 3u);
   EXPECT_EQ(gen[2].name, "gen_002");
   EXPECT_NE(gen[0].seed, gen[1].seed);

   const auto s = load_suite(data_path("suites/case14_attack24.json"));
   EXPECT_EQ(s.count, 24);
   EXPECT_EQ(s.seed, 7u);
   EXPECT_EQ(s.generate_seed, 2024u);
   EXPECT_DOUBLE_EQ(s.base.season_spread, 0.05);
   EXPECT_TRUE(std::filesystem::exists(s.case_path));
   EXPECT_EQ(s.sources().size(), 24u);

   TempDir tmp;
   std::ofstream(tmp.path() / "bad.json") << R"({"case": "x.json", "generate_seed": 1, "count": 2, "colour": 1})";
   EXPECT_THROW(load_suite(tmp.path() / "bad.json"), ParseError);
   std::ofstream(tmp.path() / "zero.json") << R"({"case": "x.json", "generate_seed": 1, "count": 0})";
   EXPECT_THROW(load_suite(tmp.path() / "zero.json"), ParseError);
}

TEST(Runner, ScenarioSourceJson)
{
   ScenarioConfig c;
   c.name = "x";
   c.seed = 12;
   c.season_spread = 0.07;
   c.maintenance.push_back({LineId{2}, 5, 10});
   const auto back = ScenarioSource::from_json(ScenarioSource::from_config(c).to_json());
   ASSERT_TRUE(back.config);
   EXPECT_EQ(back.config->seed, 12u);
   EXPECT_DOUBLE_EQ(back.config->season_spread, 0.07);
   EXPECT_EQ(back.config->maintenance, c.maintenance);
   EXPECT_THROW(ScenarioSource::from_json(nlohmann::json::object()), ParseError);
}

// ---------------------------------------------------------------------------
// command line
// ---------------------------------------------------------------------------
TEST(Cli, InvalidAgentIsAUsageError)
{
   const auto r = cli("run --case " + data_path("cases/toy5.json").string() + " --scenario "
                      + data_path("scenarios/toy5_week_flat").string() + " --agent random");
   EXPECT_NE(r.code, 0);
   EXPECT_NE(r.out.find("random"), std::string::npos);
}

TEST(Cli, MissingCaseIsAUsageError)
{
   const auto r = cli("run --scenario " + data_path("scenarios/toy5_week_flat").string());
   EXPECT_EQ(r.code, 2);
   EXPECT_NE(r.out.find("--case or --suite"), std::string::npos);
}

TEST(Cli, RunScoreStatsReplay)
{
   TempDir tmp;
   const auto out = tmp.path() / "run";
   auto r = cli("run --case " + data_path("cases/toy5.json").string() + " --scenario "
                + data_path("scenarios/toy5_week_flat").string() + " --agent dn+rba1 --seed 4 --out "
                + out.string());
   ASSERT_EQ(r.code, 0) << r.out;
   EXPECT_NE(r.out.find("toy5_week_flat"), std::string::npos);
   const auto logs = list_logs(out / "logs");
   ASSERT_EQ(logs.size(), 1u);

   r = cli("replay --log " + logs[0].string());
   EXPECT_EQ(r.code, 0);
   EXPECT_EQ(r.out, "ok: 2016 records verified\n");

   r = cli("score --csv --logs " + (out / "logs").string());
   EXPECT_EQ(r.code, 0);
   EXPECT_EQ(r.out.rfind("scenario,agent,seed", 0), 0u);

   r = cli("stats --json --logs " + (out / "logs").string());
   EXPECT_EQ(r.code, 0);
   const auto j = nlohmann::json::parse(r.out);
   EXPECT_EQ(j.at("episodes"), 1);
   EXPECT_DOUBLE_EQ(j.at("days_played").get<double>(), 7.0);
}

TEST(Cli, RunsAreByteIdentical)
{
   TempDir tmp;
   const std::string args = "run --case " + data_path("cases/toy5.json").string()
                            + " --generate 1 --generate-seed 3 --agent sie+rba2 --seed 5 --no-svg --out ";
   ASSERT_EQ(cli(args + (tmp.path() / "a").string()).code, 0);
   ASSERT_EQ(cli(args + (tmp.path() / "b").string()).code, 0);
   const auto a = list_logs(tmp.path() / "a");
   const auto b = list_logs(tmp.path() / "b");
   ASSERT_EQ(a.size(), 1u);
   ASSERT_EQ(b.size(), 1u);
   EXPECT_EQ(slurp(a[0]), slurp(b[0]));
}

TEST(Cli, GenerateAndSchedule)
{
   TempDir tmp;
   auto r = cli("generate --case " + data_path("cases/toy5.json").string() + " --count 2 --seed 1 --out "
                + tmp.path().string());
   ASSERT_EQ(r.code, 0) << r.out;
   const auto s = load_scenario(fixtures::toy5(), tmp.path() / "gen_001");
   EXPECT_EQ(s.n_steps, kWeekSteps);

   r = cli("schedule --seed 3 --out " + (tmp.path() / "a.csv").string());
   ASSERT_EQ(r.code, 0);
   const auto sched = load_attack_schedule(tmp.path() / "a.csv");
   EXPECT_FALSE(sched.empty());

   r = cli("run --case " + data_path("cases/toy5.json").string() + " --scenario "
           + data_path("scenarios/toy5_week_flat").string() + " --attack-schedule "
           + (tmp.path() / "a.csv").string() + " --out " + (tmp.path() / "pinned").string());
   ASSERT_EQ(r.code, 0) << r.out;
   const auto log = read_log(list_logs(tmp.path() / "pinned")[0]);
   EXPECT_EQ(log.header.pinned_schedule, sched);
}

TEST(Cli, BadInputsFailCleanly)
{
   TempDir tmp;
   std::ofstream(tmp.path() / "broken.json") << "{";
   auto r = cli("run --case " + (tmp.path() / "broken.json").string() + " --generate 1");
   EXPECT_NE(r.code, 0);
   EXPECT_NE(r.out.find("error"), std::string::npos);
   r = cli("replay --log " + (tmp.path() / "missing.jsonl").string());
   EXPECT_NE(r.code, 0);
}
