#include "scanpriv/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "scanpriv/errors.hpp"

namespace scanpriv {

namespace {

void count_changes(const EncodedImage& before, const EncodedImage& after, double tau,
                   std::array<std::size_t, 3>& counts) {
  if (before.resolution() != after.resolution() || before.size() != after.size()) {
    throw ShapeError("channel importance needs aligned images");
  }
  const auto a = before.values();
  const auto b = after.values();
  const std::size_t plane = before.plane();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(static_cast<double>(b[i]) - a[i]) > tau) ++counts[i / plane];
  }
}

ChannelImportance from_counts(const std::array<std::size_t, 3>& counts) {
  ChannelImportance r;
  r.changed = counts;
  const std::size_t total = counts[0] + counts[1] + counts[2];
  if (total == 0) {
    r.degenerate = true;
    return r;
  }
  const double t = static_cast<double>(total);
  r.red_pct = 100.0 * static_cast<double>(counts[0]) / t;
  r.green_pct = 100.0 * static_cast<double>(counts[1]) / t;
  r.blue_pct = 100.0 * static_cast<double>(counts[2]) / t;
  return r;
}

}  // namespace

ChannelImportance channel_importance(const EncodedImage& before, const EncodedImage& after,
                                     double tau) {
  if (!(tau > 0.0)) throw ConfigError("change threshold must be > 0");
  std::array<std::size_t, 3> counts{};
  count_changes(before, after, tau, counts);
  return from_counts(counts);
}

ChannelImportance channel_importance(std::span<const EncodedImage> before,
                                     std::span<const EncodedImage> after, double tau) {
  if (!(tau > 0.0)) throw ConfigError("change threshold must be > 0");
  if (before.size() != after.size()) throw ShapeError("image lists differ in length");
  std::array<std::size_t, 3> counts{};
  for (std::size_t i = 0; i < before.size(); ++i) count_changes(before[i], after[i], tau, counts);
  return from_counts(counts);
}

std::vector<AccuracyRow> accuracy_table(std::span<const IterationAccuracy> logs,
                                        int n_stimuli, int n_subjects) {
  if (n_stimuli < 1 || n_subjects < 1) throw ConfigError("class counts must be positive");
  std::map<int, const IterationAccuracy*> by_iter;
  for (const auto& l : logs) {
    if (l.iteration < 1) throw ConfigError("iterations are numbered from 1");
    by_iter[l.iteration] = &l;
  }
  std::vector<AccuracyRow> rows;
  const int last = by_iter.empty() ? 0 : by_iter.rbegin()->first;
  for (int it = 1; it <= last; ++it) {
    const auto found = by_iter.find(it);
    if (found == by_iter.end()) {
      rows.push_back({"gap " + std::to_string(it), {}});
      continue;
    }
    const auto& l = *found->second;
    rows.push_back({std::to_string(it), {l.stim_no_adapt, l.sub_no_adapt, l.stim_adapt, l.sub_adapt}});
  }
  const double cs = 1.0 / n_stimuli, cu = 1.0 / n_subjects;
  rows.push_back({"chance", {cs, cu, cs, cu}});
  return rows;
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

std::string accuracy_csv(std::span<const AccuracyRow> rows) {
  std::string out = "iteration,stim_no_adapt,sub_no_adapt,stim_adapt,sub_adapt\n";
  for (const auto& r : rows) {
    out += r.label;
    for (const auto& v : r.values) out += "," + cell(v);
    out += "\n";
  }
  return out;
}

std::string accuracy_text(std::span<const AccuracyRow> rows) {
  const char* head[5] = {"iteration", "stim", "sub", "stim(adapt)", "sub(adapt)"};
  std::vector<std::array<std::string, 5>> cells;
  cells.push_back({head[0], head[1], head[2], head[3], head[4]});
  for (const auto& r : rows) {
    std::array<std::string, 5> c{r.label, cell(r.values[0]), cell(r.values[1]),
                                 cell(r.values[2]), cell(r.values[3])};
    for (std::size_t i = 1; i < 5; ++i) {
      if (c[i].empty()) c[i] = "-";
    }
    cells.push_back(c);
  }
  std::array<std::size_t, 5> width{};
  for (const auto& c : cells) {
    for (std::size_t i = 0; i < 5; ++i) width[i] = std::max(width[i], c[i].size());
  }
  std::string out;
  for (const auto& c : cells) {
    for (std::size_t i = 0; i < 5; ++i) {
      if (i) out += "  ";
      const std::string pad(width[i] - c[i].size(), ' ');
      out += i == 0 ? c[i] + pad : pad + c[i];
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "\n";
  }
  return out;
}

}  // namespace scanpriv
