#include "scanpriv/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "scanpriv/errors.hpp"
#include "scanpriv/hash.hpp"

namespace scanpriv {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError(key + ": expected " + want + ", got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) bad(key, v, "a number");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  const double d = parse_number<double>(key, v);
  if (!std::isfinite(d)) bad(key, v, "a finite number");
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, v, "true or false");
}

long parse_hundredths(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v) * 100.0;
  const double r = std::round(d);
  if (std::abs(d - r) > 1e-6) bad(key, v, "a multiple of 0.01");
  return static_cast<long>(r);
}

std::string fmt(double d) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

std::string fmt_hundredths(long h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%ld.%02ld", h / 100, h % 100);
  return buf;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(v);
  while (std::getline(ss, item, ',')) {
    item = unquote(trim(item));
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

using Fields = std::vector<Field>;

// Accessor-based binders; `at` maps a config to the bound member.
template <typename At>
void bind_int(Fields& f, std::string sec, std::string key, At at) {
  const std::string name = sec + "." + key;
  f.push_back({sec, key,
               [at, name](ExperimentConfig& c, const std::string& v) {
                 at(c) = parse_number<std::remove_reference_t<decltype(at(c))>>(name, v);
               },
               [at](const ExperimentConfig& c) {
                 return std::to_string(at(const_cast<ExperimentConfig&>(c)));
               }});
}

template <typename At>
void bind_double(Fields& f, std::string sec, std::string key, At at) {
  const std::string name = sec + "." + key;
  f.push_back({sec, key,
               [at, name](ExperimentConfig& c, const std::string& v) { at(c) = parse_double(name, v); },
               [at](const ExperimentConfig& c) { return fmt(at(const_cast<ExperimentConfig&>(c))); }});
}

template <typename At>
void bind_bool(Fields& f, std::string sec, std::string key, At at) {
  const std::string name = sec + "." + key;
  f.push_back({sec, key,
               [at, name](ExperimentConfig& c, const std::string& v) { at(c) = parse_bool(name, v); },
               [at](const ExperimentConfig& c) {
                 return std::string(at(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
               }});
}

template <typename At>
void bind_string(Fields& f, std::string sec, std::string key, At at) {
  f.push_back({sec, key,
               [at](ExperimentConfig& c, const std::string& v) { at(c) = v; },
               [at](const ExperimentConfig& c) { return at(const_cast<ExperimentConfig&>(c)); }});
}

template <typename At>
void bind_hundredths(Fields& f, std::string sec, std::string key, At at) {
  const std::string name = sec + "." + key;
  f.push_back({sec, key,
               [at, name](ExperimentConfig& c, const std::string& v) { at(c) = parse_hundredths(name, v); },
               [at](const ExperimentConfig& c) {
                 return fmt_hundredths(at(const_cast<ExperimentConfig&>(c)));
               }});
}

template <typename At>
void bind_schedule(Fields& f, const std::string& sec, At at) {
  bind_double(f, sec, "lr", [at](ExperimentConfig& c) -> double& { return at(c).initial_lr; });
  bind_int(f, sec, "decay_every", [at](ExperimentConfig& c) -> int& { return at(c).decay_every; });
  bind_double(f, sec, "decay_factor", [at](ExperimentConfig& c) -> double& { return at(c).decay_factor; });
  bind_double(f, sec, "stop_lr", [at](ExperimentConfig& c) -> double& { return at(c).stop_lr; });
  bind_double(f, sec, "weight_decay", [at](ExperimentConfig& c) -> double& { return at(c).weight_decay; });
  bind_double(f, sec, "momentum", [at](ExperimentConfig& c) -> double& { return at(c).momentum; });
  bind_int(f, sec, "batch_size", [at](ExperimentConfig& c) -> int& { return at(c).batch_size; });
  bind_bool(f, sec, "fixed_lr", [at](ExperimentConfig& c) -> bool& { return at(c).fixed_lr; });
  // 0 = run until the rate drops below stop_lr.
  const std::string name = sec + ".max_epochs";
  f.push_back({sec, "max_epochs",
               [at, name](ExperimentConfig& c, const std::string& v) {
                 const int n = parse_number<int>(name, v);
                 if (n < 0) bad(name, v, "a count >= 0");
                 at(c).max_epochs = n == 0 ? std::nullopt : std::optional<int>(n);
               },
               [at](const ExperimentConfig& c) {
                 return std::to_string(at(const_cast<ExperimentConfig&>(c)).max_epochs.value_or(0));
               }});
}

const Fields& fields() {
  static const Fields table = [] {
    Fields f;
    using C = ExperimentConfig;
    bind_int(f, "experiment", "seed", [](C& c) -> std::uint64_t& { return c.seed; });
    bind_int(f, "experiment", "threads", [](C& c) -> int& { return c.threads; });
    bind_int(f, "experiment", "iterations", [](C& c) -> int& { return c.iterations; });

    bind_string(f, "data", "source", [](C& c) -> std::string& { return c.data.source; });
    bind_int(f, "data", "subjects", [](C& c) -> int& { return c.data.subjects; });
    bind_int(f, "data", "stimuli", [](C& c) -> int& { return c.data.stimuli; });
    bind_int(f, "data", "trials", [](C& c) -> int& { return c.data.trials; });
    bind_double(f, "data", "signature_strength", [](C& c) -> double& { return c.data.signature_strength; });
    bind_int(f, "data", "points", [](C& c) -> int& { return c.data.synth.points_per_scanpath; });
    bind_double(f, "data", "sample_interval", [](C& c) -> double& { return c.data.synth.sample_interval; });
    bind_double(f, "data", "trial_jitter", [](C& c) -> double& { return c.data.synth.trial_jitter; });
    bind_int(f, "data", "curve_variant", [](C& c) -> int& { return c.data.synth.curve_variant; });
    bind_string(f, "data", "subject_column", [](C& c) -> std::string& { return c.data.schema.subject; });
    bind_string(f, "data", "stimulus_column", [](C& c) -> std::string& { return c.data.schema.stimulus; });
    bind_string(f, "data", "trial_column", [](C& c) -> std::string& { return c.data.schema.trial; });
    bind_string(f, "data", "t_column", [](C& c) -> std::string& { return c.data.schema.t; });
    bind_string(f, "data", "x_column", [](C& c) -> std::string& { return c.data.schema.x; });
    bind_string(f, "data", "y_column", [](C& c) -> std::string& { return c.data.schema.y; });
    bind_string(f, "data", "extent_x_column", [](C& c) -> std::string& { return c.data.schema.extent_x; });
    bind_string(f, "data", "extent_y_column", [](C& c) -> std::string& { return c.data.schema.extent_y; });
    bind_double(f, "data", "default_extent_x", [](C& c) -> double& { return c.data.schema.default_extent_x; });
    bind_double(f, "data", "default_extent_y", [](C& c) -> double& { return c.data.schema.default_extent_y; });
    bind_double(f, "data", "trial_gap", [](C& c) -> double& { return c.data.schema.trial_gap_seconds; });
    f.push_back({"data", "coordinates",
                 [](C& c, const std::string& v) {
                   if (v == "clamp") {
                     c.data.schema.coordinate_mode = CoordinateMode::kClamp;
                   } else if (v == "reject") {
                     c.data.schema.coordinate_mode = CoordinateMode::kReject;
                   } else {
                     bad("data.coordinates", v, "clamp or reject");
                   }
                 },
                 [](const C& c) {
                   return std::string(c.data.schema.coordinate_mode == CoordinateMode::kClamp ? "clamp"
                                                                                              : "reject");
                 }});

    bind_int(f, "encode", "resolution", [](C& c) -> int& { return c.encode.resolution; });
    bind_int(f, "encode", "dot_radius", [](C& c) -> int& { return c.encode.dot_radius; });
    bind_double(f, "encode", "green_floor", [](C& c) -> double& { return c.encode.green_floor; });

    bind_bool(f, "augment", "enabled", [](C& c) -> bool& { return c.augment.enabled; });
    bind_bool(f, "augment", "during_adaptation", [](C& c) -> bool& { return c.augment.during_adaptation; });
    bind_double(f, "augment", "noise_max", [](C& c) -> double& { return c.augment.params.noise_max; });
    bind_double(f, "augment", "crop_min", [](C& c) -> double& { return c.augment.params.crop_min_fraction; });
    bind_double(f, "augment", "crop_max", [](C& c) -> double& { return c.augment.params.crop_max_fraction; });
    bind_double(f, "augment", "shift_max", [](C& c) -> double& { return c.augment.params.shift_max_fraction; });

    bind_schedule(f, "autoencoder", [](C& c) -> TrainingSchedule& { return c.autoencoder; });
    bind_schedule(f, "classifier", [](C& c) -> TrainingSchedule& { return c.classifier; });
    f.push_back({"classifier", "input",
                 [](C& c, const std::string& v) {
                   if (v == "reconstruction") {
                     c.classifier_input = ClassifierInput::kReconstruction;
                   } else if (v == "raw") {
                     c.classifier_input = ClassifierInput::kRaw;
                   } else {
                     bad("classifier.input", v, "reconstruction or raw");
                   }
                 },
                 [](const C& c) {
                   return std::string(c.classifier_input == ClassifierInput::kRaw ? "raw"
                                                                                  : "reconstruction");
                 }});
    bind_schedule(f, "transfer", [](C& c) -> TrainingSchedule& { return c.transfer_classifier; });
    bind_schedule(f, "dql", [](C& c) -> TrainingSchedule& { return c.dql.schedule; });
    bind_double(f, "dql", "unacted_weight", [](C& c) -> double& { return c.dql.unacted_weight; });
    bind_int(f, "dql", "samples_per_epoch", [](C& c) -> std::size_t& { return c.dql.max_samples_per_epoch; });

    bind_int(f, "replay", "capacity", [](C& c) -> std::size_t& { return c.replay.capacity; });
    bind_int(f, "replay", "init_images", [](C& c) -> std::size_t& { return c.replay.init.max_images; });
    bind_int(f, "replay", "max_k", [](C& c) -> int& { return c.replay.init.max_k; });
    bind_int(f, "replay", "masks_per_k", [](C& c) -> int& { return c.replay.init.masks_per_k; });

    bind_int(f, "run", "steps", [](C& c) -> int& { return c.run.steps; });
    bind_int(f, "run", "images_per_step", [](C& c) -> int& { return c.run.images_per_step; });
    bind_int(f, "run", "window", [](C& c) -> int& { return c.run.window; });
    bind_double(f, "run", "tolerance", [](C& c) -> double& { return c.run.tolerance; });
    bind_bool(f, "run", "early_stop", [](C& c) -> bool& { return c.run.early_stop; });
    bind_double(f, "run", "y_start", [](C& c) -> double& { return c.run.discount.y_start; });
    bind_double(f, "run", "y_end", [](C& c) -> double& { return c.run.discount.y_end; });
    bind_double(f, "run", "eps_start", [](C& c) -> double& { return c.run.discount.eps_start; });
    bind_double(f, "run", "eps_end", [](C& c) -> double& { return c.run.discount.eps_end; });
    bind_int(f, "run", "flip_max", [](C& c) -> int& { return c.run.discount.flip_max; });

    f.push_back({"reward", "keep",
                 [](C& c, const std::string& v) { c.keep = split_list(v); },
                 [](const C& c) { return join(c.keep); }});
    f.push_back({"reward", "hide",
                 [](C& c, const std::string& v) { c.hide = split_list(v); },
                 [](const C& c) { return join(c.hide); }});

    bind_hundredths(f, "dp", "raw_min", [](C& c) -> long& { return c.dp.raw.lo; });
    bind_hundredths(f, "dp", "raw_max", [](C& c) -> long& { return c.dp.raw.hi; });
    bind_hundredths(f, "dp", "raw_step", [](C& c) -> long& { return c.dp.raw.step; });
    bind_hundredths(f, "dp", "image_min", [](C& c) -> long& { return c.dp.image.lo; });
    bind_hundredths(f, "dp", "image_max", [](C& c) -> long& { return c.dp.image.hi; });
    bind_hundredths(f, "dp", "image_step", [](C& c) -> long& { return c.dp.image.step; });
    bind_int(f, "dp", "repetitions", [](C& c) -> int& { return c.dp.repetitions; });
    bind_double(f, "dp", "chance_tolerance", [](C& c) -> double& { return c.dp.chance_tolerance; });

    bind_bool(f, "gan", "enabled", [](C& c) -> bool& { return c.gan.enabled; });
    bind_int(f, "gan", "pretrain_epochs", [](C& c) -> int& { return c.gan.pretrain_epochs; });
    bind_int(f, "gan", "adversarial_epochs", [](C& c) -> int& { return c.gan.adversarial_epochs; });
    bind_double(f, "gan", "recon_weight", [](C& c) -> double& { return c.gan.recon_weight; });

    bind_double(f, "analysis", "change_tau", [](C& c) -> double& { return c.change_tau; });
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

void set_value(ExperimentConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value) {
  if (section == "experiment" && key == "out") {
    cfg.out = value;
    return;
  }
  const Field* f = find_field(section, key);
  if (!f) throw ConfigError("unknown setting " + section + "." + key);
  f->set(cfg, value);
}

void check_schedule(const TrainingSchedule& s, const char* name) {
  try {
    s.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (data.subjects < 2 || data.stimuli < 2 || data.trials < 1) {
    throw ConfigError("synthetic data needs >= 2 subjects, >= 2 stimuli and >= 1 trial");
  }
  if (data.signature_strength < 0.0 || data.signature_strength > 1.0) {
    throw ConfigError("signature_strength must be in [0, 1]");
  }
  check_resolution(encode.resolution);
  if (encode.dot_radius < 1) throw ConfigError("dot_radius must be >= 1");
  augment.params.validate();
  check_schedule(autoencoder, "autoencoder");
  check_schedule(classifier, "classifier");
  check_schedule(transfer_classifier, "transfer");
  check_schedule(dql.schedule, "dql");
  if (dql.unacted_weight < 0.0) throw ConfigError("dql.unacted_weight must be >= 0");
  if (replay.capacity < 1) throw ConfigError("replay.capacity must be >= 1");
  sweep_size(bottleneck_size(encode.resolution), replay.init);
  if (run.steps < 1 || run.images_per_step < 1 || run.window < 1) {
    throw ConfigError("run.steps, run.images_per_step and run.window must be >= 1");
  }
  if (keep.empty() || hide.empty()) throw ConfigError("reward needs keep and hide tasks");
  for (const auto& k : keep) {
    if (std::find(hide.begin(), hide.end(), k) != hide.end()) {
      throw ConfigError("task '" + k + "' is both kept and hidden");
    }
  }
  for (const auto* list : {&keep, &hide}) {
    for (const auto& k : *list) {
      if (k != "subject" && k != "stimulus") throw ConfigError("unknown task '" + k + "'");
    }
  }
  dp.raw.validate();
  dp.image.validate();
  if (dp.repetitions < 1) throw ConfigError("dp.repetitions must be >= 1");
  if (gan.pretrain_epochs < 0 || gan.adversarial_epochs < 0 || gan.recon_weight < 0.0) {
    throw ConfigError("invalid gan settings");
  }
  if (!(change_tau > 0.0)) throw ConfigError("analysis.change_tau must be > 0");
}

std::string ExperimentConfig::canonical() const {
  std::string out, section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += f.key + " = " + f.get(*this) + "\n";
  }
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return hash_text(canonical()); }

std::uint64_t ExperimentConfig::section_hash(const std::vector<std::string>& sections) const {
  Hasher h;
  for (const auto& f : fields()) {
    if (std::find(sections.begin(), sections.end(), f.section) == sections.end()) continue;
    h.text(f.section + "." + f.key).text(f.get(*this));
  }
  return h.digest();
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::string section = "experiment";
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string value = trim(std::string_view(line).substr(eq + 1));
    // Trailing comments only outside quotes.
    if (!value.empty() && value.front() != '"' && value.front() != '\'') {
      const auto hash = value.find(" #");
      if (hash != std::string::npos) value = trim(value.substr(0, hash));
    }
    set_value(cfg, section, trim(std::string_view(line).substr(0, eq)), unquote(value));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void set_config_value(ExperimentConfig& cfg, const std::string& dotted_key,
                      const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) {
    set_value(cfg, "experiment", dotted_key, value);
  } else {
    set_value(cfg, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value);
  }
}

}  // namespace scanpriv
