#include "leniency/prune.hpp"

#include <optional>

#include "leniency/error.hpp"

namespace leniency {

namespace {

std::vector<std::size_t> non_singleton_rows(const Dataset& ds) {
  std::vector<char> drop(ds.n(), 0);
  auto mark = [&](const Categorical& c) {
    std::vector<int> count(c.levels.size(), 0);
    for (int code : c.codes) ++count[static_cast<std::size_t>(code)];
    for (std::size_t i = 0; i < ds.n(); ++i)
      if (count[static_cast<std::size_t>(c.codes[i])] == 1) drop[i] = 1;
  };
  mark(ds.examiner);
  for (const auto& fe : ds.fixed_effects) mark(fe.cells);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.n(); ++i)
    if (!drop[i]) keep.push_back(i);
  return keep;
}

void record_drops(const Dataset& ds, const std::vector<std::size_t>& keep, std::vector<std::size_t>& out) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (k < keep.size() && keep[k] == i)
      ++k;
    else
      out.push_back(ds.source_rows[i]);
  }
}

}  // namespace

PrunedDesign prune(const Dataset& input, Exec exec) {
  input.validate();
  PruneReport report;
  Dataset ds = input;
  while (true) {
    ++report.iterations;
    bool changed = false;

    auto keep = non_singleton_rows(ds);
    if (keep.size() != ds.n()) {
      report.dropped_singleton += ds.n() - keep.size();
      record_drops(ds, keep, report.dropped_rows);
      if (keep.empty()) throw DegenerateDesignError("pruning dropped every observation (singletons)");
      ds = ds.subset(keep);
      changed = true;
    }

    const Encoding enc = encode(ds);
    DesignContext ctx(enc.design, exec);

    keep.clear();
    const auto& gap = ctx.residual_leverage();
    for (std::size_t i = 0; i < ds.n(); ++i)
      if (gap[static_cast<Eigen::Index>(i)] >= kLeverageOneTolerance) keep.push_back(i);
    if (keep.size() != ds.n()) {
      report.dropped_leverage_one += ds.n() - keep.size();
      record_drops(ds, keep, report.dropped_rows);
      if (keep.empty()) throw DegenerateDesignError("pruning dropped every observation (leverage one)");
      ds = ds.subset(keep);
      changed = true;
    }

    if (!changed) {
      report.omitted_reference_examiners = enc.omitted_reference_examiners;
      report.dropped_instrument_columns = ctx.dropped_instruments();
      report.dropped_control_columns = ctx.dropped_controls();
      return PrunedDesign{std::move(ds), std::move(report), std::move(ctx)};
    }
  }
}

}  // namespace leniency
