#pragma once

// Exhaustive-search oracle for the RAN partition. Allocations live on a
// 1/100 grid; the objective is weighted proportional fairness over what each
// dedicated slice receives above its minimum, sum_i w_i * log(x_i - m_i),
// with the default slice pinned at its floor.

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "e2es/ran_nssmf.hpp"

namespace e2es::test {

struct PartitionInstance {
  double floor = 0.1;
  std::vector<RanRequirement> slices;  // named s0, s1, ...

  CellState cell() const {
    CellState c;
    c.enb_id = "enb-x";
    c.total_rrb = 100;
    c.default_slice = "default";
    for (std::size_t i = 0; i < slices.size(); ++i) c.participating_slices["s" + std::to_string(i)] = slices[i];
    return c;
  }
};

// Minimums and floor are drawn on the grid, leaving at least one grid step of
// residual per slice so the objective is finite somewhere on the grid.
inline PartitionInstance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(1, 3), floor_steps(0, 30), weight_steps(1, 100);
  for (;;) {
    PartitionInstance inst;
    const int n = count(rng);
    inst.floor = floor_steps(rng) / 100.0;
    int used = static_cast<int>(std::lround(inst.floor * 100));
    for (int i = 0; i < n; ++i) {
      RanRequirement r;
      r.min_rrb_fraction = std::uniform_int_distribution<int>(0, 40)(rng) / 100.0;
      r.weight = weight_steps(rng) / 10.0;
      r.latency_class = rng() % 2 ? LatencyClass::Strict : LatencyClass::Relaxed;
      used += static_cast<int>(std::lround(r.min_rrb_fraction * 100));
      inst.slices.push_back(r);
    }
    if (100 - used >= n) return inst;
  }
}

inline double objective(const PartitionInstance& inst, const std::vector<double>& shares) {
  double s = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    s += inst.slices[i].weight * std::log(shares[i] - inst.slices[i].min_rrb_fraction);
  }
  return s;
}

// Grid argmax of the objective; returns the dedicated shares in slice order.
inline std::vector<double> brute_force_shares(const PartitionInstance& inst) {
  const int n = static_cast<int>(inst.slices.size());
  std::vector<int> mins;
  int budget = 100 - static_cast<int>(std::lround(inst.floor * 100));
  for (const auto& r : inst.slices) {
    mins.push_back(static_cast<int>(std::lround(r.min_rrb_fraction * 100)));
    budget -= mins.back();
  }
  // The objective is increasing in every coordinate, so the whole budget is
  // always spent; enumerate the first n-1 extras and derive the last.
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> best_extra(n, 0), extra(n, 0);
  auto score = [&] {
    double s = 0;
    for (int i = 0; i < n; ++i) s += inst.slices[i].weight * std::log(static_cast<double>(extra[i]));
    return s;
  };
  auto rec = [&](auto&& self, int i, int left) -> void {
    if (i == n - 1) {
      extra[i] = left;
      double s = score();
      if (s > best) {
        best = s;
        best_extra = extra;
      }
      return;
    }
    for (int e = 0; e <= left; ++e) {
      extra[i] = e;
      self(self, i + 1, left - e);
    }
  };
  rec(rec, 0, budget);
  std::vector<double> shares;
  for (int i = 0; i < n; ++i) shares.push_back((mins[i] + best_extra[i]) / 100.0);
  return shares;
}

}  // namespace e2es::test
