#include "scanpriv/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <queue>
#include <tuple>

#include "scanpriv/errors.hpp"

namespace scanpriv {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) {
    --e;
  }
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

// Natural ordering: digit runs compare numerically ("s2" < "s10").
bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      std::size_t ie = i;
      std::size_t je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie])))
        ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je])))
        ++je;
      std::string_view na(a.data() + i, ie - i);
      std::string_view nb(b.data() + j, je - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

struct NaturalLess {
  bool operator()(const std::string& a, const std::string& b) const {
    return natural_less(a, b);
  }
};

struct RawSample {
  double t;
  double x;
  double y;
  std::size_t line;
};

using GroupKey = std::tuple<std::string, std::string, std::string>;

struct GroupKeyLess {
  bool operator()(const GroupKey& a, const GroupKey& b) const {
    NaturalLess n;
    if (std::get<0>(a) != std::get<0>(b))
      return n(std::get<0>(a), std::get<0>(b));
    if (std::get<1>(a) != std::get<1>(b))
      return n(std::get<1>(a), std::get<1>(b));
    return n(std::get<2>(a), std::get<2>(b));
  }
};

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

LoadResult load_gaze_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  // Leading '#' lines are artifact headers, not data.
  do {
    if (!std::getline(in, line)) throw SchemaError("missing header row");
    if (line_no++ == 0 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
      line = line.substr(3);  // UTF-8 BOM
    }
  } while (!line.empty() && line[0] == '#');
  const std::vector<std::string> header = split_csv_line(line);
  auto column = [&](const std::string& name, bool required) -> int {
    if (name.empty()) {
      if (required) throw SchemaError("required column has no name");
      return -1;
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    if (required) throw SchemaError("missing column '" + name + "'");
    return -1;
  };
  const int c_subject = column(schema.subject, true);
  const int c_stimulus = column(schema.stimulus, true);
  const int c_trial = column(schema.trial, false);
  const int c_t = column(schema.t, true);
  const int c_x = column(schema.x, true);
  const int c_y = column(schema.y, true);
  const int c_ex = column(schema.extent_x, false);
  const int c_ey = column(schema.extent_y, false);

  LoadResult result;
  std::map<GroupKey, std::vector<RawSample>, GroupKeyLess> groups;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw RowError(line_no, "expected " + std::to_string(header.size()) +
                                  " fields, got " + std::to_string(f.size()));
    }
    double t = 0;
    double x = 0;
    double y = 0;
    if (!parse_double(f[c_t], t)) throw RowError(line_no, "bad t");
    if (!parse_double(f[c_x], x)) throw RowError(line_no, "bad x");
    if (!parse_double(f[c_y], y)) throw RowError(line_no, "bad y");
    double ex = schema.default_extent_x;
    double ey = schema.default_extent_y;
    if (c_ex >= 0 && !parse_double(f[c_ex], ex)) {
      throw RowError(line_no, "bad extent_x");
    }
    if (c_ey >= 0 && !parse_double(f[c_ey], ey)) {
      throw RowError(line_no, "bad extent_y");
    }
    if (ex <= 0 || ey <= 0) throw RowError(line_no, "non-positive extent");
    x /= ex;
    y /= ey;
    const bool outside = x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0;
    GroupKey key{f[c_subject], f[c_stimulus], c_trial >= 0 ? f[c_trial] : ""};
    auto& group = groups[key];
    if (outside && schema.coordinate_mode == CoordinateMode::kReject) {
      ++result.rejected_points;
      continue;
    }
    x = std::clamp(x, 0.0, 1.0);
    y = std::clamp(y, 0.0, 1.0);
    group.push_back({t, x, y, line_no});
  }

  // Split trial-less groups at time gaps.
  struct Trial {
    std::string subject;
    std::string stimulus;
    std::vector<RawSample> samples;
  };
  std::vector<Trial> trials;
  for (auto& [key, samples] : groups) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const RawSample& a, const RawSample& b) {
                       if (a.t != b.t) return a.t < b.t;
                       if (a.x != b.x) return a.x < b.x;
                       return a.y < b.y;
                     });
    if (c_trial >= 0 || samples.empty()) {
      trials.push_back({std::get<0>(key), std::get<1>(key), samples});
      continue;
    }
    std::vector<RawSample> cur;
    for (const RawSample& s : samples) {
      if (!cur.empty() && s.t - cur.back().t > schema.trial_gap_seconds) {
        trials.push_back({std::get<0>(key), std::get<1>(key), cur});
        cur.clear();
      }
      cur.push_back(s);
    }
    if (!cur.empty()) {
      trials.push_back({std::get<0>(key), std::get<1>(key), cur});
    }
  }

  std::map<std::string, int, NaturalLess> subjects;
  std::map<std::string, int, NaturalLess> stimuli;
  for (const auto& [key, samples] : groups) {
    if (samples.empty()) continue;
    subjects.emplace(std::get<0>(key), 0);
    stimuli.emplace(std::get<1>(key), 0);
  }
  for (auto& [name, idx] : subjects) {
    idx = static_cast<int>(result.dataset.labels.subjects.size());
    result.dataset.labels.subjects.push_back(name);
  }
  for (auto& [name, idx] : stimuli) {
    idx = static_cast<int>(result.dataset.labels.stimuli.size());
    result.dataset.labels.stimuli.push_back(name);
  }

  for (const Trial& trial : trials) {
    if (trial.samples.empty()) {
      ++result.skipped_groups;
      continue;
    }
    LabeledRecord rec;
    rec.scanpath.subject_id = trial.subject;
    rec.scanpath.stimulus_id = trial.stimulus;
    const double t0 = trial.samples.front().t;
    for (const RawSample& s : trial.samples) {
      rec.scanpath.points.push_back({s.t - t0, s.x, s.y});
    }
    rec.scanpath.duration = rec.scanpath.points.back().t;
    rec.subject_label = subjects.at(trial.subject);
    rec.stimulus_label = stimuli.at(trial.stimulus);
    result.dataset.records.push_back(std::move(rec));
  }
  return result;
}

void write_gaze_csv(std::ostream& out, const Dataset& dataset) {
  out << "subject,stimulus,trial,t,x,y\n";
  std::map<std::pair<int, int>, int> counters;
  for (const LabeledRecord& r : dataset.records) {
    const int trial = counters[{r.subject_label, r.stimulus_label}]++;
    for (const GazePoint& p : r.scanpath.points) {
      out << r.scanpath.subject_id << ',' << r.scanpath.stimulus_id << ','
          << trial << ',' << format_double(p.t) << ',' << format_double(p.x)
          << ',' << format_double(p.y) << '\n';
    }
  }
}

namespace {

// Edmonds-Karp max flow on a small dense-ish graph.
class FlowGraph {
 public:
  explicit FlowGraph(int n) : adj_(static_cast<std::size_t>(n)) {}

  int add_edge(int u, int v, int cap) {
    edges_.push_back({v, cap});
    adj_[static_cast<std::size_t>(u)].push_back(
        static_cast<int>(edges_.size()) - 1);
    edges_.push_back({u, 0});
    adj_[static_cast<std::size_t>(v)].push_back(
        static_cast<int>(edges_.size()) - 1);
    return static_cast<int>(edges_.size()) - 2;
  }

  int max_flow(int s, int t) {
    int total = 0;
    for (;;) {
      std::vector<int> via(adj_.size(), -1);
      std::queue<int> q;
      q.push(s);
      via[static_cast<std::size_t>(s)] = -2;
      while (!q.empty() && via[static_cast<std::size_t>(t)] == -1) {
        const int u = q.front();
        q.pop();
        for (int e : adj_[static_cast<std::size_t>(u)]) {
          const Edge& ed = edges_[static_cast<std::size_t>(e)];
          if (ed.cap > 0 && via[static_cast<std::size_t>(ed.to)] == -1) {
            via[static_cast<std::size_t>(ed.to)] = e;
            q.push(ed.to);
          }
        }
      }
      if (via[static_cast<std::size_t>(t)] == -1) return total;
      int push = INT32_MAX;
      for (int v = t; v != s;) {
        const int e = via[static_cast<std::size_t>(v)];
        push = std::min(push, edges_[static_cast<std::size_t>(e)].cap);
        v = edges_[static_cast<std::size_t>(e ^ 1)].to;
      }
      for (int v = t; v != s;) {
        const int e = via[static_cast<std::size_t>(v)];
        edges_[static_cast<std::size_t>(e)].cap -= push;
        edges_[static_cast<std::size_t>(e ^ 1)].cap += push;
        v = edges_[static_cast<std::size_t>(e ^ 1)].to;
      }
      total += push;
    }
  }

  int flow_on(int e) const { return edges_[static_cast<std::size_t>(e ^ 1)].cap; }

 private:
  struct Edge {
    int to;
    int cap;
  };
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adj_;
};

// Chooses x_e in {0,1} for each odd cell e = (row, col) so that every row
// sum, column sum and the total are floor or ceil of half their edge count.
// Such a rounding always exists (x = 1/2 is a fractional solution of the
// same flow network), so the circulation below is always feasible.
std::vector<int> balance_odd_cells(const std::vector<std::pair<int, int>>& cells,
                                   int n_rows, int n_cols) {
  const int k = static_cast<int>(cells.size());
  std::vector<int> row_deg(static_cast<std::size_t>(n_rows), 0);
  std::vector<int> col_deg(static_cast<std::size_t>(n_cols), 0);
  for (auto [r, c] : cells) {
    ++row_deg[static_cast<std::size_t>(r)];
    ++col_deg[static_cast<std::size_t>(c)];
  }
  // Nodes: s, rows, cols, t, super source, super sink.
  const int s = 0;
  const int row0 = 1;
  const int col0 = row0 + n_rows;
  const int t = col0 + n_cols;
  const int ss = t + 1;
  const int tt = t + 2;
  FlowGraph g(tt + 1);
  std::vector<int> excess(static_cast<std::size_t>(tt + 1), 0);
  auto bounded = [&](int u, int v, int lo, int hi) {
    excess[static_cast<std::size_t>(v)] += lo;
    excess[static_cast<std::size_t>(u)] -= lo;
    return g.add_edge(u, v, hi - lo);
  };
  for (int r = 0; r < n_rows; ++r) {
    const int d = row_deg[static_cast<std::size_t>(r)];
    bounded(s, row0 + r, d / 2, (d + 1) / 2);
  }
  for (int c = 0; c < n_cols; ++c) {
    const int d = col_deg[static_cast<std::size_t>(c)];
    bounded(col0 + c, t, d / 2, (d + 1) / 2);
  }
  bounded(t, s, k / 2, (k + 1) / 2);
  std::vector<int> cell_edges;
  cell_edges.reserve(cells.size());
  for (auto [r, c] : cells) cell_edges.push_back(g.add_edge(row0 + r, col0 + c, 1));
  int demand = 0;
  for (int v = 0; v <= t; ++v) {
    const int e = excess[static_cast<std::size_t>(v)];
    if (e > 0) {
      g.add_edge(ss, v, e);
      demand += e;
    } else if (e < 0) {
      g.add_edge(v, tt, -e);
    }
  }
  const int flow = g.max_flow(ss, tt);
  if (flow != demand) {
    throw std::logic_error("balanced split circulation infeasible");
  }
  std::vector<int> x;
  x.reserve(cells.size());
  for (int e : cell_edges) x.push_back(g.flow_on(e));
  return x;
}

}  // namespace

DatasetSplit split_fifty_fifty(const std::vector<LabeledRecord>& records,
                               Rng& rng) {
  DatasetSplit split;
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  int n_rows = 0;
  int n_cols = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const LabeledRecord& r = records[i];
    if (r.subject_label < 0 || r.stimulus_label < 0) {
      throw SchemaError("negative class label");
    }
    cells[{r.subject_label, r.stimulus_label}].push_back(i);
    n_rows = std::max(n_rows, r.subject_label + 1);
    n_cols = std::max(n_cols, r.stimulus_label + 1);
  }

  std::vector<std::pair<int, int>> odd;
  for (const auto& [key, members] : cells) {
    if (members.size() >= 3 && members.size() % 2 == 1) odd.push_back(key);
  }
  rng.shuffle(odd);
  const std::vector<int> extra = balance_odd_cells(odd, n_rows, n_cols);
  std::map<std::pair<int, int>, int> extra_of;
  for (std::size_t i = 0; i < odd.size(); ++i) extra_of[odd[i]] = extra[i];

  for (auto& [key, members] : cells) {
    rng.shuffle(members);
    std::size_t n_train = members.size() / 2;
    if (members.size() == 1) {
      n_train = 1;
      split.warnings.push_back(
          "cell (subject " + std::to_string(key.first) + ", stimulus " +
          std::to_string(key.second) + ") has a single record; kept in train");
    } else if (auto it = extra_of.find(key); it != extra_of.end()) {
      n_train += static_cast<std::size_t>(it->second);
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < n_train ? split.train : split.test).push_back(records[members[i]]);
    }
  }
  return split;
}

namespace {

struct CurvePoint {
  double x;
  double y;
};

// Closed curves centred on (0.5, 0.5) with radius <= ~0.3.
CurvePoint stimulus_curve(int stimulus, int variant, double u) {
  if (variant % 2 == 0) {
    static constexpr int kFreq[][2] = {{1, 1}, {1, 2}, {3, 2}, {2, 3},
                                       {1, 3}, {3, 4}, {4, 3}, {2, 5}};
    const int* f = kFreq[stimulus % 8];
    const double phase = std::numbers::pi / 2 + 0.3 * (stimulus / 8 + variant / 2);
    return {0.5 + 0.3 * std::sin(f[0] * u + phase),
            0.5 + 0.3 * std::sin(f[1] * u)};
  }
  // Polar rose-like curves with a varying lobe count.
  const int lobes = 2 + stimulus + variant / 2;
  const double r = 0.3 * (0.55 + 0.45 * std::cos(lobes * u));
  return {0.5 + r * std::cos(u), 0.5 + r * std::sin(u)};
}

struct SubjectSignature {
  double offset_x;
  double offset_y;
  double scale_x;
  double scale_y;
  double dwell_amplitude;
  double dwell_frequency;
  double dwell_phase;
};

// Fixed per subject index; identical across datasets of the same family.
SubjectSignature subject_signature(int s, int n_subjects) {
  const double two_pi = 2.0 * std::numbers::pi;
  const double a = two_pi * s / n_subjects;
  const double b = two_pi * ((3 * s) % n_subjects) / n_subjects + 0.4;
  return {0.09 * std::cos(a),
          0.09 * std::sin(a),
          1.0 + 0.22 * std::cos(b),
          1.0 + 0.22 * std::sin(b),
          0.5 + 0.4 * ((s % 3) / 2.0),
          1.0 + (s % 4),
          two_pi * ((5 * s) % n_subjects) / n_subjects};
}

}  // namespace

Dataset synth_generate(int n_subjects, int n_stimuli, int trials_per_pair,
                       double signature_strength, Rng& rng,
                       const SynthOptions& options) {
  if (n_subjects < 2 || n_stimuli < 2 || trials_per_pair < 2) {
    throw ConfigError("synthetic counts must be at least 2");
  }
  if (!(signature_strength >= 0.0 && signature_strength <= 1.0)) {
    throw ConfigError("signature_strength must be in [0,1]");
  }
  if (options.points_per_scanpath < 2) {
    throw ConfigError("synthetic scanpaths need at least 2 points");
  }
  Dataset ds;
  for (int s = 0; s < n_subjects; ++s) {
    ds.labels.subjects.push_back("sub" + std::to_string(s));
  }
  for (int m = 0; m < n_stimuli; ++m) {
    ds.labels.stimuli.push_back("stim" + std::to_string(m));
  }
  const double w = signature_strength;
  const double two_pi = 2.0 * std::numbers::pi;
  const int n = options.points_per_scanpath;
  for (int s = 0; s < n_subjects; ++s) {
    const SubjectSignature sig = subject_signature(s, n_subjects);
    for (int m = 0; m < n_stimuli; ++m) {
      for (int trial = 0; trial < trials_per_pair; ++trial) {
        LabeledRecord rec;
        rec.subject_label = s;
        rec.stimulus_label = m;
        rec.scanpath.subject_id = ds.labels.subjects[static_cast<std::size_t>(s)];
        rec.scanpath.stimulus_id = ds.labels.stimuli[static_cast<std::size_t>(m)];
        const double u0 = rng.uniform(0.0, two_pi);
        double t = 0.0;
        for (int k = 0; k < n; ++k) {
          const double u = u0 + two_pi * k / n;
          const CurvePoint c = stimulus_curve(m, options.curve_variant, u);
          const double sx = 1.0 + w * (sig.scale_x - 1.0);
          const double sy = 1.0 + w * (sig.scale_y - 1.0);
          double x = 0.5 + sx * (c.x - 0.5) + w * sig.offset_x +
                     options.trial_jitter * rng.normal();
          double y = 0.5 + sy * (c.y - 0.5) + w * sig.offset_y +
                     options.trial_jitter * rng.normal();
          rec.scanpath.points.push_back(
              {t, std::clamp(x, 0.0, 1.0), std::clamp(y, 0.0, 1.0)});
          const double dwell =
              1.0 + w * sig.dwell_amplitude *
                        std::sin(sig.dwell_frequency * u + sig.dwell_phase);
          t += options.sample_interval * dwell;
        }
        rec.scanpath.duration = rec.scanpath.points.back().t;
        ds.records.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

}  // namespace scanpriv
