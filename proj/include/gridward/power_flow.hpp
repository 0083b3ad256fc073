#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "gridward/grid_model.hpp"

namespace gridward {

/// Setpoints before slack adjustment. Renewable entries are actual (possibly
/// curtailed) outputs.
struct Injections {
   std::vector<double> p_gen;   // MW per generator
   std::vector<double> p_load;  // MW per load
};

struct IslandInfo {
   std::vector<int> nodes;
   int reference_node = -1;
   GeneratorId reference_generator;
   bool energized = false;  // holds a dispatchable generator
   bool converged = true;
   bool has_load = false;
   bool main = false;
   double imbalance_mw = 0.0;  // absorbed by the reference generator

   [[nodiscard]] bool served() const { return energized && converged; }
};

struct FlowSolution {
   NodeGraph graph;
   std::vector<double> theta;   // rad per electrical node
   std::vector<double> p_flow;  // MW per line, signed from -> to
   std::vector<double> rho;     // |p_flow| / thermal limit per line
   std::vector<double> gen_p;   // actual generator output
   std::vector<bool> load_served;
   std::vector<IslandInfo> islands;
   bool converged = true;  // every energized island solved

   [[nodiscard]] double max_rho() const
   {
      return rho.empty() ? 0.0 : *std::max_element(rho.begin(), rho.end());
   }

   [[nodiscard]] bool all_load_served() const
   {
      return std::all_of(load_served.begin(), load_served.end(), [](bool b) { return b; });
   }
};

namespace detail {

inline GeneratorId pick_island_reference(
   const GridCase& c, const NodeGraph& graph, const std::vector<int>& node_island, int island)
{
   GeneratorId best;
   for(std::size_t g = 0; g < c.generators.size(); ++g) {
      const auto& gen = c.generators[g];
      if(node_island[static_cast<std::size_t>(graph.gen_node[g])] != island)
         continue;
      if(gen.slack)
         return GeneratorId{g};
      if(gen.kind != GeneratorKind::dispatchable)
         continue;
      if(!best.valid() || gen.p_max > c.generators[best.index()].p_max)
         best = GeneratorId{g};
   }
   return best;
}

}  // namespace detail

/// DC power flow on every island of the topology.
///
/// An island is energized iff it contains a dispatchable generator; its
/// reference is the slack generator when present, otherwise the dispatchable
/// unit with the largest p_max (lowest index on ties). The reference absorbs
/// the island imbalance without limit. Islands that are not energized carry
/// no flow and their loads are unserved. A failed factorization marks the
/// island non-converged (and its loads unserved) instead of throwing.
inline FlowSolution solve_dc(const GridCase& c, const Topology& t, const Injections& inj)
{
   FlowSolution sol;
   sol.graph = electrical_nodes(c, t);
   const auto& graph = sol.graph;
   const std::size_t n_nodes = graph.nodes.size();
   const double base = c.base_mva;

   sol.theta.assign(n_nodes, 0.0);
   sol.p_flow.assign(c.lines.size(), 0.0);
   sol.rho.assign(c.lines.size(), 0.0);
   sol.gen_p.assign(c.generators.size(), 0.0);
   sol.load_served.assign(c.loads.size(), false);

   const auto components = connected_components(graph);
   std::vector<int> node_island(n_nodes, -1);
   for(std::size_t k = 0; k < components.size(); ++k)
      for(int n : components[k].nodes)
         node_island[static_cast<std::size_t>(n)] = static_cast<int>(k);

   std::vector<double> p_node(n_nodes, 0.0);  // MW
   for(std::size_t g = 0; g < c.generators.size(); ++g)
      p_node[static_cast<std::size_t>(graph.gen_node[g])] += inj.p_gen[g];
   for(std::size_t d = 0; d < c.loads.size(); ++d)
      p_node[static_cast<std::size_t>(graph.load_node[d])] -= inj.p_load[d];

   for(std::size_t k = 0; k < components.size(); ++k) {
      const int island = static_cast<int>(k);
      IslandInfo info;
      info.nodes = components[k].nodes;
      info.main = components[k].main;
      for(std::size_t d = 0; d < c.loads.size(); ++d)
         if(node_island[static_cast<std::size_t>(graph.load_node[d])] == island)
            info.has_load = true;

      info.reference_generator = detail::pick_island_reference(c, graph, node_island, island);
      info.energized = info.reference_generator.valid();
      if(!info.energized) {
         sol.islands.push_back(std::move(info));
         continue;
      }
      const std::size_t ref_gen = info.reference_generator.index();
      info.reference_node = graph.gen_node[ref_gen];

      double net = 0.0;
      for(int n : info.nodes)
         net += p_node[static_cast<std::size_t>(n)];
      info.imbalance_mw = -net;

      // Local numbering of the non-reference nodes.
      std::vector<int> local(n_nodes, -1);
      int dim = 0;
      for(int n : info.nodes)
         if(n != info.reference_node)
            local[static_cast<std::size_t>(n)] = dim++;

      if(dim > 0) {
         std::vector<Eigen::Triplet<double>> triplets;
         for(const auto& e : graph.edges) {
            if(node_island[static_cast<std::size_t>(e.from_node)] != island)
               continue;
            const double b = 1.0 / c.lines[e.line.index()].reactance;
            const int i = local[static_cast<std::size_t>(e.from_node)];
            const int j = local[static_cast<std::size_t>(e.to_node)];
            if(i >= 0)
               triplets.emplace_back(i, i, b);
            if(j >= 0)
               triplets.emplace_back(j, j, b);
            if(i >= 0 && j >= 0) {
               triplets.emplace_back(i, j, -b);
               triplets.emplace_back(j, i, -b);
            }
         }
         Eigen::SparseMatrix<double> bmat(dim, dim);
         bmat.setFromTriplets(triplets.begin(), triplets.end());
         Eigen::VectorXd rhs(dim);
         for(int n : info.nodes) {
            const int i = local[static_cast<std::size_t>(n)];
            if(i >= 0)
               rhs[i] = p_node[static_cast<std::size_t>(n)] / base;
         }
         Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(bmat);
         Eigen::VectorXd theta;
         if(solver.info() == Eigen::Success)
            theta = solver.solve(rhs);
         if(solver.info() != Eigen::Success || !theta.allFinite()) {
            info.converged = false;
            sol.converged = false;
            sol.islands.push_back(std::move(info));
            continue;
         }
         for(int n : info.nodes) {
            const int i = local[static_cast<std::size_t>(n)];
            if(i >= 0)
               sol.theta[static_cast<std::size_t>(n)] = theta[i];
         }
      }

      for(std::size_t g = 0; g < c.generators.size(); ++g)
         if(node_island[static_cast<std::size_t>(graph.gen_node[g])] == island)
            sol.gen_p[g] = inj.p_gen[g];
      sol.gen_p[ref_gen] += info.imbalance_mw;
      for(std::size_t d = 0; d < c.loads.size(); ++d)
         if(node_island[static_cast<std::size_t>(graph.load_node[d])] == island)
            sol.load_served[d] = true;
      for(const auto& e : graph.edges) {
         if(node_island[static_cast<std::size_t>(e.from_node)] != island)
            continue;
         const auto& line = c.lines[e.line.index()];
         const double flow = base
                             * (sol.theta[static_cast<std::size_t>(e.from_node)]
                                - sol.theta[static_cast<std::size_t>(e.to_node)])
                             / line.reactance;
         sol.p_flow[e.line.index()] = flow;
         sol.rho[e.line.index()] = std::abs(flow) / line.thermal_limit;
      }
      sol.islands.push_back(std::move(info));
   }
   return sol;
}

/// Resistive loss estimate of a DC solution: sum of r * (p / base)^2 * base.
inline double losses_proxy(const GridCase& c, const FlowSolution& sol)
{
   double loss = 0.0;
   for(std::size_t l = 0; l < c.lines.size(); ++l) {
      const double p = sol.p_flow[l] / c.base_mva;
      loss += c.lines[l].resistance * p * p * c.base_mva;
   }
   return loss;
}

/// Flows after the loss of a single connected line. Pure.
inline FlowSolution
simulate_n1(const GridCase& c, const Topology& t, const Injections& inj, LineId line)
{
   if(line.value < 0 || line.index() >= c.lines.size())
      throw Error("simulate_n1: unknown line " + std::to_string(line.value));
   if(!t.line_connected[line.index()])
      throw Error("simulate_n1: line " + c.lines[line.index()].name + " is already disconnected");
   Topology without = t;
   without.line_connected[line.index()] = false;
   return solve_dc(c, without, inj);
}

// ---------------------------------------------------------------------------
// Cascading failures
// ---------------------------------------------------------------------------
struct CascadeParams {
   int overload_trip_steps = 3;
   double hard_overload_rho = 2.0;
};

struct OverloadTimers {
   std::vector<int> steps_overloaded;

   static OverloadTimers zeros(std::size_t n_lines) { return {std::vector<int>(n_lines, 0)}; }

   friend bool operator==(const OverloadTimers&, const OverloadTimers&) = default;
};

struct CascadeResult {
   std::vector<LineId> tripped_lines;  // in trip order, passes concatenated
   std::vector<int> trip_pass;         // pass index (0-based) of each trip
   FlowSolution final_solution;
   Topology topology;  // input topology with tripped lines disconnected
   bool load_lost = false;
   bool non_converged = false;
   std::vector<SubstationId> lost_load_substations;  // ascending
   std::vector<double> lost_load_mw;                 // parallel to the above
   int passes = 0;
};

/// One step of thermal protection.
///
/// Pass 0 solves the flows, trips lines at or above the hard threshold, and
/// advances the overload timers (trip once a timer reaches the limit). Each
/// later pass re-solves and trips every line still above its limit at once.
/// Lines of a pass trip simultaneously. Returns at the fixpoint together with
/// the timers of the final solution.
inline std::pair<CascadeResult, OverloadTimers> run_cascade(
   const GridCase& c,
   const Topology& t,
   const Injections& inj,
   const OverloadTimers& timers,
   const CascadeParams& params = {})
{
   CascadeResult result;
   result.topology = t;
   OverloadTimers next = timers;
   if(next.steps_overloaded.size() != c.lines.size())
      throw Error("run_cascade: timer vector does not match the line set");

   for(int pass = 0;; ++pass) {
      result.final_solution = solve_dc(c, result.topology, inj);
      const auto& sol = result.final_solution;
      result.passes = pass + 1;

      std::vector<LineId> trips;
      for(std::size_t l = 0; l < c.lines.size(); ++l) {
         if(!result.topology.line_connected[l])
            continue;
         const double rho = sol.rho[l];
         if(pass == 0) {
            next.steps_overloaded[l] = rho > 1.0 ? timers.steps_overloaded[l] + 1 : 0;
            if(rho >= params.hard_overload_rho
               || next.steps_overloaded[l] >= params.overload_trip_steps)
               trips.push_back(LineId{l});
         } else if(rho > 1.0) {
            trips.push_back(LineId{l});
         }
      }
      if(trips.empty())
         break;
      for(auto id : trips) {
         result.topology.line_connected[id.index()] = false;
         result.tripped_lines.push_back(id);
         result.trip_pass.push_back(pass);
      }
   }

   const auto& sol = result.final_solution;
   for(std::size_t l = 0; l < c.lines.size(); ++l)
      if(!result.topology.line_connected[l] || !(sol.rho[l] > 1.0))
         next.steps_overloaded[l] = 0;

   result.non_converged = !sol.converged;
   std::vector<double> lost(c.substations.size(), 0.0);
   std::vector<bool> any(c.substations.size(), false);
   for(std::size_t d = 0; d < c.loads.size(); ++d)
      if(!sol.load_served[d]) {
         const auto s = c.loads[d].substation.index();
         any[s] = true;
         lost[s] += inj.p_load[d];
      }
   for(std::size_t s = 0; s < c.substations.size(); ++s)
      if(any[s]) {
         result.lost_load_substations.push_back(SubstationId{s});
         result.lost_load_mw.push_back(lost[s]);
      }
   result.load_lost = !result.lost_load_substations.empty();
   return {std::move(result), std::move(next)};
}

}  // namespace gridward
