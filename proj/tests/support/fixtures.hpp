#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gridward/gridward.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using namespace gridward;

inline fs::path data_path(const std::string& rel) { return fs::path(GRIDWARD_DATA_DIR) / rel; }

inline const GridCase& toy5()
{
   static const GridCase c = load_case(data_path("cases/toy5.json"));
   return c;
}

inline const GridCase& case14()
{
   static const GridCase c = load_case(data_path("cases/case14.json"));
   return c;
}

inline std::shared_ptr<const GridCase> share(GridCase c) { return std::make_shared<const GridCase>(std::move(c)); }

inline GridCase with_limits(GridCase c, const std::map<std::string, double>& limits)
{
   for(const auto& [name, limit] : limits)
      c.lines.at(c.find_line(name)->index()).thermal_limit = limit;
   return c;
}

/// Scenario with the same loads and generator values at every step.
inline Scenario constant_scenario(
   const GridCase& c, const std::vector<double>& loads, const std::vector<double>& gens, int n_steps,
   std::string name = "constant")
{
   Scenario s;
   s.name = std::move(name);
   s.n_steps = n_steps;
   s.n_loads = c.loads.size();
   s.n_gens = c.generators.size();
   for(int t = 0; t < n_steps; ++t) {
      s.load_p.insert(s.load_p.end(), loads.begin(), loads.end());
      s.gen_p.insert(s.gen_p.end(), gens.begin(), gens.end());
   }
   return s;
}

/// toy5 flat injections: loads D2..D5, generators G1..G3.
inline const std::vector<double> kToyLoads{40, 60, 50, 30};
inline const std::vector<double> kToyGens{90, 60, 30};

inline Injections toy_injections()
{
   return {kToyGens, kToyLoads};
}

/// Three substations in a triangle with equal reactance; generator at A,
/// load at C.
inline GridCase triangle3()
{
   GridCase c;
   c.name = "triangle3";
   c.zones = {{"z0"}, {"z1"}, {"z2"}};
   c.substations = {{"A", ZoneId{0}}, {"B", ZoneId{0}}, {"C", ZoneId{0}}};
   c.lines = {
      {"AB", SubstationId{0}, SubstationId{1}, 0.1, 0.0, 100},
      {"BC", SubstationId{1}, SubstationId{2}, 0.1, 0.0, 100},
      {"AC", SubstationId{0}, SubstationId{2}, 0.1, 0.0, 100}};
   Generator g;
   g.name = "G";
   g.substation = SubstationId{0};
   g.p_max = 200;
   g.slack = true;
   c.generators = {g};
   c.loads = {{"D", SubstationId{2}, 90}};
   c.reference_topology = all_busbar_one(3, 1, 1);
   return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
   TempDir()
   {
      static std::atomic<int> counter{0};
      path_ = fs::temp_directory_path()
              / ("gridward_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
      fs::remove_all(path_);
      fs::create_directories(path_);
   }
   ~TempDir()
   {
      std::error_code ec;
      fs::remove_all(path_, ec);
   }
   TempDir(const TempDir&) = delete;
   TempDir& operator=(const TempDir&) = delete;

   [[nodiscard]] const fs::path& path() const { return path_; }

  private:
   fs::path path_;
};

}  // namespace fixtures
