#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <fstream>

#include "../support/fixtures.hpp"

using namespace gridward;
using fixtures::TempDir;
using fixtures::toy5;

namespace {

ScenarioConfig short_config(std::uint64_t seed, int n_steps = 288)
{
   ScenarioConfig cfg;
   cfg.name = "short";
   cfg.seed = seed;
   cfg.n_steps = n_steps;
   return cfg;
}

void drop_last_row(const std::filesystem::path& file)
{
   std::ifstream in(file);
   std::vector<std::string> lines;
   for(std::string l; std::getline(in, l);)
      lines.push_back(l);
   in.close();
   lines.pop_back();
   std::ofstream out(file);
   for(const auto& l : lines)
      out << l << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------
// chronics
// ---------------------------------------------------------------------------
TEST(Chronics, WriteLoadRoundTrip)
{
   TempDir tmp;
   auto cfg = short_config(11);
   cfg.maintenance.push_back({*toy5().find_line("L2"), 20, 12});
   const auto s = generate_scenario(toy5(), cfg);
   write_scenario(toy5(), s, tmp.path() / "short");
   const auto back = load_scenario(toy5(), tmp.path() / "short");
   EXPECT_EQ(back, s);
}

TEST(Chronics, WeekDefaultWithoutMetadata)
{
   TempDir tmp;
   const auto s = generate_scenario(toy5(), short_config(3, kWeekSteps));
   write_scenario(toy5(), s, tmp.path() / "week");
   std::filesystem::remove(tmp.path() / "week" / "scenario.json");
   const auto back = load_scenario(toy5(), tmp.path() / "week");
   EXPECT_EQ(back.n_steps, kWeekSteps);
   EXPECT_EQ(back.name, "week");
}

TEST(Chronics, TruncatedFileIsALengthError)
{
   TempDir tmp;
   const auto dir = tmp.path() / "week";
   write_scenario(toy5(), generate_scenario(toy5(), short_config(3, kWeekSteps)), dir);
   std::filesystem::remove(dir / "scenario.json");
   drop_last_row(dir / "load_p.csv");
   try {
      load_scenario(toy5(), dir);
      FAIL();
   } catch(const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find("expected 2016 rows, found 2015"), std::string::npos);
   }
}

TEST(Chronics, UnknownIdsAreRejected)
{
   TempDir tmp;
   const auto dir = tmp.path() / "s";
   write_scenario(toy5(), generate_scenario(toy5(), short_config(3)), dir);
   std::ofstream(dir / "maintenance.csv") << "line_id,start_step,duration_steps\nL9,5,10\n";
   try {
      load_scenario(toy5(), dir);
      FAIL();
   } catch(const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find("unknown line id 'L9'"), std::string::npos);
   }

   std::filesystem::remove(dir / "maintenance.csv");
   std::ifstream in(dir / "gen_p.csv");
   std::string all((std::istreambuf_iterator<char>(in)), {});
   in.close();
   all.replace(0, 2, "GX");
   std::ofstream(dir / "gen_p.csv") << all;
   EXPECT_THROW(load_scenario(toy5(), dir), ValidationError);
}

TEST(Chronics, MalformedNumberIsAParseError)
{
   TempDir tmp;
   const auto dir = tmp.path() / "s";
   write_scenario(toy5(), generate_scenario(toy5(), short_config(3, 4)), dir);
   std::ofstream(dir / "load_p.csv") << "D2,D3,D4,D5\n1,2,3,4\n1,2,x,4\n1,2,3,4\n1,2,3,4\n";
   EXPECT_THROW(load_scenario(toy5(), dir), ParseError);
}

TEST(Chronics, GenerationIsSeededAndValid)
{
   const auto a = generate_scenario(toy5(), short_config(5));
   const auto b = generate_scenario(toy5(), short_config(5));
   const auto c = generate_scenario(toy5(), short_config(6));
   EXPECT_EQ(a, b);
   EXPECT_NE(a.load_p, c.load_p);
   EXPECT_TRUE(scenario_violations(toy5(), a).empty());
   EXPECT_EQ(a.n_steps, 288);
}

TEST(Chronics, GenerationBalancesAndHitsRenewableShare)
{
   auto cfg = short_config(8, kWeekSteps);
   const auto s = generate_scenario(fixtures::case14(), cfg);
   EXPECT_NEAR(renewable_share(s, fixtures::case14()), cfg.renewable_share_target, 0.02);
   for(int t = 0; t < s.n_steps; t += 97) {
      double gen = 0.0;
      for(std::size_t g = 0; g < s.n_gens; ++g)
         gen += s.gen(t, g);
      EXPECT_NEAR(gen, s.total_load(t) * (1.0 + cfg.loss_margin), 1e-6 * gen);
   }
}

TEST(Chronics, InfeasibleConfigIsRejected)
{
   auto cfg = short_config(1);
   cfg.peak_load = {400, 400, 400, 400};
   EXPECT_THROW(generate_scenario(toy5(), cfg), Error);
   cfg = short_config(1);
   cfg.renewable_share_target = 1.5;
   EXPECT_THROW(generate_scenario(toy5(), cfg), Error);
}

TEST(Chronics, MaintenanceCoverage)
{
   MaintenanceWindow m{LineId{1}, 10, 5};
   EXPECT_FALSE(m.covers(9));
   EXPECT_TRUE(m.covers(10));
   EXPECT_TRUE(m.covers(14));
   EXPECT_FALSE(m.covers(15));
}

// ---------------------------------------------------------------------------
// opponent
// ---------------------------------------------------------------------------
TEST(Opponent, ProbabilitiesClampToRatio)
{
   const auto p = attack_probabilities({0.5, 1.0, 3.0}, {true, true, true});
   EXPECT_NEAR(p[0], 0.5 / 3.5, 1e-12);
   EXPECT_NEAR(p[1], 1.0 / 3.5, 1e-12);
   EXPECT_NEAR(p[2], 2.0 / 3.5, 1e-12);
}

TEST(Opponent, ProbabilitiesSkipUnavailable)
{
   const auto p = attack_probabilities({0.1, 0.8, 0.4}, {true, false, true});
   EXPECT_EQ(p[1], 0.0);
   EXPECT_NEAR(p[0] + p[2], 1.0, 1e-12);
   EXPECT_NEAR(p[2] / p[0], 4.0, 1e-12);
   const auto none = attack_probabilities({0.1, 0.2}, {false, false});
   EXPECT_EQ(none, (std::vector<double>{0.0, 0.0}));
}

TEST(Opponent, ZeroFlowLinesUseTheFloor)
{
   const auto p = attack_probabilities({0.0, 0.0}, {true, true});
   EXPECT_NEAR(p[0], 0.5, 1e-12);
   EXPECT_NEAR(p[1], 0.5, 1e-12);
}

TEST(Opponent, SamplersStayInRange)
{
   Rng r(1);
   for(int i = 0; i < 5000; ++i) {
      EXPECT_GE(sample_inter_attack(r), 1);
      const int d = sample_duration(r);
      ASSERT_GE(d, 24);
      ASSERT_LE(d, 96);
   }
}

TEST(Opponent, DurationShape)
{
   Rng r(derive_seed(17, "durations"));
   constexpr int n = 100000;
   double sum = 0.0;
   std::array<int, 3> bins{};  // [24,47], [48,71], [72,95]
   for(int i = 0; i < n; ++i) {
      const int d = sample_duration(r);
      sum += d;
      if(d < 96)
         ++bins[(d - 24) / 24];
   }
   EXPECT_GE(sum / n, 44.0);
   EXPECT_LE(sum / n, 52.0);
   // Equal-width bins of a memoryless draw shrink by the same factor,
   // exp(24/48).
   const double r1 = static_cast<double>(bins[0]) / bins[1];
   const double r2 = static_cast<double>(bins[1]) / bins[2];
   const double sigma2 = r2 * std::sqrt(1.0 / bins[1] + 1.0 / bins[2]);
   EXPECT_NEAR(r1, std::exp(0.5), 3 * r1 * std::sqrt(1.0 / bins[0] + 1.0 / bins[1]));
   EXPECT_NEAR(r2, std::exp(0.5), 3 * sigma2);
   EXPECT_NEAR(r1, r2, 3 * sigma2);
}

TEST(Opponent, ScheduleIsValid)
{
   Rng r(derive_seed(9, "opponent-schedule"));
   const auto s = generate_attack_schedule(r, 20 * kWeekSteps);
   EXPECT_GT(s.size(), 50u);
   EXPECT_TRUE(schedule_violations(s).empty());
   EXPECT_LT(s.back().start_step, 20 * kWeekSteps);
}

TEST(Opponent, ScheduleCsvRoundTrip)
{
   TempDir tmp;
   Rng r(4);
   const auto s = generate_attack_schedule(r, kWeekSteps);
   write_attack_schedule(s, tmp.path() / "a.csv");
   EXPECT_EQ(load_attack_schedule(tmp.path() / "a.csv"), s);
}

TEST(Opponent, BadScheduleCsvIsRejected)
{
   TempDir tmp;
   std::ofstream(tmp.path() / "overlap.csv") << "start_step,duration_steps\n10,30\n20,30\n";
   EXPECT_THROW(load_attack_schedule(tmp.path() / "overlap.csv"), ValidationError);
   std::ofstream(tmp.path() / "short.csv") << "start_step,duration_steps\n10,3\n";
   EXPECT_THROW(load_attack_schedule(tmp.path() / "short.csv"), ValidationError);
   std::ofstream(tmp.path() / "header.csv") << "start,duration\n10,30\n";
   EXPECT_THROW(load_attack_schedule(tmp.path() / "header.csv"), ParseError);
}

TEST(Opponent, StepFollowsPinnedSchedule)
{
   const auto& c = toy5();
   OpponentState st;
   st.schedule = {{5, 24}, {29, 30}};
   st.target_rng = Rng(3);
   const std::vector<double> rho(6, 0.5);
   const std::vector<bool> avail(6, true);
   std::optional<LineId> target;
   for(int step = 0; step < 70; ++step) {
      const auto out = step_opponent(st, c, rho, avail, step);
      int n_attacked = 0;
      for(bool b : out.attacked)
         n_attacked += b;
      const bool expect = (step >= 5 && step < 29) || (step >= 29 && step < 59);
      ASSERT_EQ(n_attacked, expect ? 1 : 0) << "step " << step;
      if(step == 5 || step == 29) {
         ASSERT_TRUE(out.started);
         EXPECT_EQ(out.started->start_step, step);
         target = out.started->line;
         EXPECT_NE(target->value, c.find_line("L6")->value);
      }
      if(step == 29 || step == 59)
         EXPECT_TRUE(out.ended);
   }
   EXPECT_EQ(st.attacks_started, 2);
}

TEST(Opponent, NoAvailableTargetSkipsSlot)
{
   const auto& c = toy5();
   OpponentState st;
   st.schedule = {{3, 24}};
   const auto out = step_opponent(st, c, std::vector<double>(6, 0.5), std::vector<bool>(6, false), 3);
   EXPECT_FALSE(out.started);
   EXPECT_EQ(st.next_index, 1u);
   EXPECT_EQ(st.attacks_started, 0);
}
