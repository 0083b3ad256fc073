#pragma once

// Dense reference DC power flow, written independently of the library solver:
// own node numbering, union-find islands, Gaussian elimination with partial
// pivoting.

#include <cmath>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "gridward/grid_model.hpp"

namespace oracle {

struct Result {
   std::vector<double> flow;  // MW per line, from -> to
   std::vector<bool> load_served;
   std::vector<double> gen_p;
};

inline std::vector<double> gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b)
{
   const std::size_t n = b.size();
   for(std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      for(std::size_t i = k + 1; i < n; ++i)
         if(std::abs(a[i][k]) > std::abs(a[piv][k]))
            piv = i;
      std::swap(a[k], a[piv]);
      std::swap(b[k], b[piv]);
      for(std::size_t i = k + 1; i < n; ++i) {
         const double f = a[i][k] / a[k][k];
         for(std::size_t j = k; j < n; ++j)
            a[i][j] -= f * a[k][j];
         b[i] -= f * b[k];
      }
   }
   std::vector<double> x(n);
   for(std::size_t k = n; k-- > 0;) {
      double s = b[k];
      for(std::size_t j = k + 1; j < n; ++j)
         s -= a[k][j] * x[j];
      x[k] = s / a[k][k];
   }
   return x;
}

inline Result solve(
   const gridward::GridCase& c,
   const gridward::Topology& t,
   const std::vector<double>& p_gen,
   const std::vector<double>& p_load)
{
   using gridward::GeneratorKind;
   std::map<std::pair<int, int>, int> node;
   const auto id = [&](int sub, int bus) {
      auto [it, fresh] = node.try_emplace({sub, bus}, static_cast<int>(node.size()));
      return it->second;
   };
   std::vector<std::pair<int, int>> line_nodes(c.lines.size(), {-1, -1});
   for(std::size_t l = 0; l < c.lines.size(); ++l)
      if(t.line_connected[l])
         line_nodes[l] = {
            id(c.lines[l].from_sub.value, t.line_or_bus[l]),
            id(c.lines[l].to_sub.value, t.line_ex_bus[l])};
   std::vector<int> gen_node, load_node;
   for(std::size_t g = 0; g < c.generators.size(); ++g)
      gen_node.push_back(id(c.generators[g].substation.value, t.gen_bus[g]));
   for(std::size_t d = 0; d < c.loads.size(); ++d)
      load_node.push_back(id(c.loads[d].substation.value, t.load_bus[d]));
   const int n = static_cast<int>(node.size());

   std::vector<int> parent(static_cast<std::size_t>(n));
   std::iota(parent.begin(), parent.end(), 0);
   const auto find = [&](int x) {
      while(parent[static_cast<std::size_t>(x)] != x)
         x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      return x;
   };
   for(const auto& [a, b] : line_nodes)
      if(a >= 0)
         parent[static_cast<std::size_t>(find(a))] = find(b);

   std::vector<double> inj(static_cast<std::size_t>(n), 0.0);
   for(std::size_t g = 0; g < gen_node.size(); ++g)
      inj[static_cast<std::size_t>(gen_node[g])] += p_gen[g];
   for(std::size_t d = 0; d < load_node.size(); ++d)
      inj[static_cast<std::size_t>(load_node[d])] -= p_load[d];

   Result r;
   r.flow.assign(c.lines.size(), 0.0);
   r.load_served.assign(c.loads.size(), false);
   r.gen_p.assign(c.generators.size(), 0.0);
   std::vector<double> theta(static_cast<std::size_t>(n), 0.0);

   std::map<int, std::vector<int>> islands;
   for(int v = 0; v < n; ++v)
      islands[find(v)].push_back(v);
   for(const auto& [root, members] : islands) {
      int ref_gen = -1;
      for(std::size_t g = 0; g < c.generators.size(); ++g) {
         if(find(gen_node[g]) != root)
            continue;
         const auto& gen = c.generators[g];
         if(gen.slack) {
            ref_gen = static_cast<int>(g);
            break;
         }
         if(gen.kind == GeneratorKind::dispatchable
            && (ref_gen < 0 || gen.p_max > c.generators[static_cast<std::size_t>(ref_gen)].p_max))
            ref_gen = static_cast<int>(g);
      }
      if(ref_gen < 0)
         continue;
      const int ref = gen_node[static_cast<std::size_t>(ref_gen)];
      std::map<int, int> pos;
      for(int v : members)
         if(v != ref)
            pos.emplace(v, static_cast<int>(pos.size()));
      const std::size_t m = pos.size();
      std::vector<std::vector<double>> bm(m, std::vector<double>(m, 0.0));
      std::vector<double> rhs(m, 0.0);
      for(std::size_t l = 0; l < c.lines.size(); ++l) {
         const auto [a, b] = line_nodes[l];
         if(a < 0 || find(a) != root)
            continue;
         const double y = 1.0 / c.lines[l].reactance;
         const bool ia = pos.count(a) > 0, ib = pos.count(b) > 0;
         if(ia)
            bm[static_cast<std::size_t>(pos[a])][static_cast<std::size_t>(pos[a])] += y;
         if(ib)
            bm[static_cast<std::size_t>(pos[b])][static_cast<std::size_t>(pos[b])] += y;
         if(ia && ib) {
            bm[static_cast<std::size_t>(pos[a])][static_cast<std::size_t>(pos[b])] -= y;
            bm[static_cast<std::size_t>(pos[b])][static_cast<std::size_t>(pos[a])] -= y;
         }
      }
      double net = 0.0;
      for(int v : members) {
         net += inj[static_cast<std::size_t>(v)];
         if(v != ref)
            rhs[static_cast<std::size_t>(pos[v])] = inj[static_cast<std::size_t>(v)] / c.base_mva;
      }
      if(m > 0) {
         const auto x = gauss_solve(bm, rhs);
         for(const auto& [v, i] : pos)
            theta[static_cast<std::size_t>(v)] = x[static_cast<std::size_t>(i)];
      }
      for(std::size_t l = 0; l < c.lines.size(); ++l) {
         const auto [a, b] = line_nodes[l];
         if(a >= 0 && find(a) == root)
            r.flow[l] = c.base_mva * (theta[static_cast<std::size_t>(a)] - theta[static_cast<std::size_t>(b)])
                        / c.lines[l].reactance;
      }
      for(std::size_t d = 0; d < c.loads.size(); ++d)
         if(find(load_node[d]) == root)
            r.load_served[d] = true;
      for(std::size_t g = 0; g < c.generators.size(); ++g)
         if(find(gen_node[g]) == root)
            r.gen_p[g] = p_gen[g];
      r.gen_p[static_cast<std::size_t>(ref_gen)] -= net;
   }
   return r;
}

}  // namespace oracle
