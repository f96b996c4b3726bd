#pragma once

#include <cstddef>
#include <vector>

#include "leniency/dataset.hpp"
#include "leniency/design.hpp"

namespace leniency {

struct PruneReport {
  std::size_t dropped_singleton = 0;
  std::size_t dropped_leverage_one = 0;
  int omitted_reference_examiners = 0;
  int dropped_instrument_columns = 0;
  int dropped_control_columns = 0;
  int iterations = 0;
  // Source rows of dropped observations, in drop order.
  std::vector<std::size_t> dropped_rows;

  std::size_t dropped_observations() const { return dropped_singleton + dropped_leverage_one; }
};

struct PrunedDesign {
  Dataset data;
  PruneReport report;
  DesignContext context;
};

// Repeats, until nothing changes: drop singleton examiners and fixed-effect
// cells; encode and drop collinear columns; drop rows whose leverage under
// (Z, W) is one. Throws DegenerateDesignError when nothing survives.
PrunedDesign prune(const Dataset& ds, Exec exec = Exec::parallel);

}  // namespace leniency
