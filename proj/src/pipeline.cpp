#include "scanpriv/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "scanpriv/checkpoint.hpp"
#include "scanpriv/codec.hpp"
#include "scanpriv/errors.hpp"
#include "scanpriv/hash.hpp"

namespace scanpriv {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }
  std::string str() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1fs", seconds());
    return buf;
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + p.string());
    out << text;
  }
  fs::rename(tmp, p);
}

std::string hex(std::uint64_t v) { return Hasher::to_hex(v); }

std::uint64_t parse_hex(const std::string& s) {
  return static_cast<std::uint64_t>(std::stoull(s, nullptr, 16));
}

}  // namespace

// ------------------------------------------------------------------ data

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData d;
  if (cfg.data.source == "synth") {
    Rng rng(derive_seed(cfg.seed, "synth"));
    d.dataset = synth_generate(cfg.data.subjects, cfg.data.stimuli, cfg.data.trials,
                               cfg.data.signature_strength, rng, cfg.data.synth);
  } else {
    std::ifstream in(cfg.data.source);
    if (!in) throw InsufficientData("cannot read gaze data " + cfg.data.source);
    d.dataset = load_gaze_csv(in, cfg.data.schema).dataset;
  }
  if (d.dataset.records.empty()) throw InsufficientData("dataset has no records");
  Rng split_rng(derive_seed(cfg.seed, "split"));
  d.split = split_fifty_fifty(d.dataset.records, split_rng);
  if (d.split.test.empty()) throw InsufficientData("split left no test records");
  auto encode_all = [&](const std::vector<LabeledRecord>& recs, Provenance p) {
    std::vector<Sample> out;
    out.reserve(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      out.push_back({encode_scanpath(recs[i].scanpath, cfg.encode), recs[i].subject_label,
                     recs[i].stimulus_label, p, static_cast<std::uint32_t>(i)});
    }
    return out;
  };
  d.train = encode_all(d.split.train, Provenance::kTrain);
  d.test = encode_all(d.split.test, Provenance::kTest);
  return d;
}

std::vector<TaskSpec> reward_tasks(const ExperimentConfig& cfg, const LabelSet& labels) {
  std::vector<TaskSpec> tasks;
  for (const auto* list : {&cfg.keep, &cfg.hide}) {
    for (const auto& name : *list) {
      const bool subject = name == "subject";
      tasks.push_back({name, subject ? LabelKind::kSubject : LabelKind::kStimulus,
                       static_cast<int>(subject ? labels.subjects.size() : labels.stimuli.size())});
    }
  }
  return tasks;
}

RewardSpec reward_spec(const ExperimentConfig& cfg) {
  RewardSpec spec;
  int c = 0;
  for (std::size_t i = 0; i < cfg.keep.size(); ++i) spec.keep.push_back(c++);
  for (std::size_t i = 0; i < cfg.hide.size(); ++i) spec.hide.push_back(c++);
  return spec;
}

std::vector<Sample> with_images(std::span<const Sample> samples, std::vector<EncodedImage> images) {
  if (images.size() != samples.size()) throw ShapeError("one image per sample");
  std::vector<Sample> out(samples.begin(), samples.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].image = std::move(images[i]);
  return out;
}

std::vector<Sample> reconstructed(const AutoencoderModel& ae, std::span<const Sample> samples) {
  std::vector<EncodedImage> imgs;
  imgs.reserve(samples.size());
  for (const auto& s : samples) imgs.push_back(s.image);
  return with_images(samples, reconstruct_batch(ae, imgs));
}

// ------------------------------------------------------------ artifacts

std::string artifact_header(std::uint64_t config_hash, std::uint64_t seed) {
  return "# scanpriv config_hash=" + hex(config_hash) + " seed=" + std::to_string(seed);
}

std::uint64_t file_hash(const fs::path& p) { return hash_text(read_text(p)); }

Manifest::Manifest(fs::path out, std::uint64_t config_hash, std::uint64_t seed)
    : out_(std::move(out)), config_hash_(config_hash), seed_(seed) {
  const fs::path p = out_ / "manifest.json";
  if (!fs::exists(p)) return;
  json j;
  try {
    j = json::parse(read_text(p));
  } catch (const json::exception&) {
    return;  // unreadable manifest: start over
  }
  if (!j.contains("stages")) return;
  for (const auto& [name, s] : j["stages"].items()) {
    Stage st;
    st.key = parse_hex(s["key"].get<std::string>());
    for (const auto& [file, h] : s["files"].items()) {
      st.files.emplace_back(file, parse_hex(h.get<std::string>()));
    }
    stages_.emplace_back(name, std::move(st));
  }
  if (j.contains("reports")) {
    for (const auto& [file, h] : j["reports"].items()) {
      reports_.emplace_back(file, parse_hex(h.get<std::string>()));
    }
  }
}

bool Manifest::complete(const std::string& stage, std::uint64_t key) const {
  for (const auto& [name, st] : stages_) {
    if (name != stage) continue;
    if (st.key != key) return false;
    for (const auto& [file, h] : st.files) {
      const fs::path p = out_ / file;
      if (!fs::exists(p) || file_hash(p) != h) return false;
    }
    return true;
  }
  return false;
}

void Manifest::mark(const std::string& stage, std::uint64_t key,
                    const std::vector<fs::path>& files) {
  Stage st;
  st.key = key;
  for (const auto& f : files) st.files.emplace_back(f.generic_string(), file_hash(out_ / f));
  for (auto& [name, old] : stages_) {
    if (name == stage) {
      old = std::move(st);
      save();
      return;
    }
  }
  stages_.emplace_back(stage, std::move(st));
  save();
}

void Manifest::record_file(const fs::path& relative) {
  const std::string name = relative.generic_string();
  const std::uint64_t h = file_hash(out_ / relative);
  for (auto& [f, old] : reports_) {
    if (f == name) {
      old = h;
      return;
    }
  }
  reports_.emplace_back(name, h);
}

void Manifest::save() const {
  json j;
  j["config_hash"] = hex(config_hash_);
  j["seed"] = seed_;
  json stages = json::object();
  for (const auto& [name, st] : stages_) {
    json s;
    s["key"] = hex(st.key);
    json files = json::object();
    for (const auto& [f, h] : st.files) files[f] = hex(h);
    s["files"] = files;
    stages[name] = s;
  }
  j["stages"] = stages;
  json reports = json::object();
  for (const auto& [f, h] : reports_) reports[f] = hex(h);
  j["reports"] = reports;
  write_text(out_ / "manifest.json", j.dump(2) + "\n");
}

namespace {

// ------------------------------------------------------- containers

fs::path ckpt(const std::string& name) { return fs::path("checkpoints") / name; }

void save_container(const Manifest& m, const fs::path& rel, const Container& c) {
  fs::create_directories(m.path(rel).parent_path());
  c.save(m.path(rel));
}

Container replay_container(const ReplayMemory& mem, int resolution, const Manifest& m) {
  Container c({ArtifactKind::kReplayMemory, static_cast<std::uint32_t>(resolution), 0, m.seed(),
               0, m.config_hash()});
  const auto entries = mem.snapshot();
  std::vector<std::uint64_t> state, words, meta{mem.capacity(),
                                                entries.empty() ? 0 : entries.front().action.size()};
  std::vector<float> reward;
  for (const auto& e : entries) {
    state.push_back(e.state->source);
    reward.push_back(e.reward);
    words.insert(words.end(), e.action.words().begin(), e.action.words().end());
  }
  c.add_u64("meta", meta);
  c.add_u64("state", state);
  c.add_f32("reward", {static_cast<int>(reward.size())}, reward);
  c.add_u64("mask", words);
  return c;
}

void load_replay(ReplayMemory& mem, const Container& c,
                 const std::vector<std::shared_ptr<const Sample>>& train) {
  if (c.header().kind != ArtifactKind::kReplayMemory) throw CheckpointError("not a replay memory");
  const auto meta = c.u64("meta");
  const auto state = c.u64("state");
  const auto reward = c.f32("reward");
  const auto words = c.u64("mask");
  const std::size_t actions = meta.at(1);
  const std::size_t per = (actions + 63) / 64;
  if (reward.size() != state.size() || words.size() != per * state.size()) {
    throw CheckpointError("replay memory blobs disagree in length");
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i] >= train.size()) throw CheckpointError("replay state outside the training set");
    mem.push({train[state[i]],
              ActionMask::from_words(actions, std::vector<std::uint64_t>(
                                                  words.begin() + static_cast<long>(i * per),
                                                  words.begin() + static_cast<long>((i + 1) * per))),
              reward[i]});
  }
}

Container agent_container(const DqlAgent& agent, const Manifest& m) {
  Container c({ArtifactKind::kAgentState, static_cast<std::uint32_t>(agent.dql1.resolution()), 0,
               m.seed(), static_cast<std::uint64_t>(agent.runs), m.config_hash()});
  add_network(c, "dql1.", agent.dql1.network());
  add_network(c, "dql2.", agent.dql2.network());
  return c;
}

void load_agent(DqlAgent& agent, const Container& c) {
  if (c.header().kind != ArtifactKind::kAgentState) throw CheckpointError("not an agent state");
  read_network(c, "dql1.", agent.dql1.network());
  read_network(c, "dql2.", agent.dql2.network());
  agent.runs = static_cast<long>(c.header().epoch);
}

std::vector<fs::path> save_classifiers(const ClassifierSet& set, const Manifest& m,
                                       const fs::path& dir) {
  std::vector<fs::path> files;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const fs::path rel = dir / ("classifier_" + set.tasks[i].name + ".sprv");
    save_container(m, rel, to_container(set.models[i], m.seed(), m.config_hash()));
    files.push_back(rel);
  }
  return files;
}

ClassifierSet load_classifiers(const std::vector<TaskSpec>& tasks, const Manifest& m,
                               const fs::path& dir) {
  ClassifierSet set;
  set.tasks = tasks;
  for (const auto& t : tasks) {
    set.models.push_back(
        classifier_from(Container::load(m.path(dir / ("classifier_" + t.name + ".sprv")))));
    if (set.models.back().n_classes() != t.n_classes) {
      throw CheckpointError("classifier '" + t.name + "' has the wrong class count");
    }
  }
  return set;
}

// ---------------------------------------------------------- stage keys

std::uint64_t key_autoencoder(const ExperimentConfig& cfg) {
  return Hasher().text("autoencoder").value(cfg.seed)
      .value(cfg.section_hash({"data", "encode", "autoencoder"})).digest();
}

std::uint64_t key_classifiers(const ExperimentConfig& cfg) {
  return Hasher().text("classifiers").value(key_autoencoder(cfg))
      .value(cfg.section_hash({"classifier", "augment", "reward"})).digest();
}

std::uint64_t key_replay(const ExperimentConfig& cfg) {
  return Hasher().text("replay").value(key_classifiers(cfg))
      .value(cfg.section_hash({"replay"})).digest();
}

std::uint64_t key_iteration(const ExperimentConfig& cfg, int k) {
  return Hasher().text("iteration").value(key_replay(cfg))
      .value(cfg.section_hash({"dql", "run"})).value(k).digest();
}

// Per-item augmentation of the classifiers' base training set.
std::function<std::optional<EncodedImage>(std::size_t, Rng&)> base_augmenter(
    const ExperimentConfig& cfg, const std::vector<LabeledRecord>& records,
    const AutoencoderModel* ae) {
  if (!cfg.augment.enabled) return {};
  return [&cfg, &records, ae](std::size_t i, Rng& rng) -> std::optional<EncodedImage> {
    EncodedImage img = encode_scanpath(augment(records[i].scanpath, cfg.augment.params, rng), cfg.encode);
    if (!ae) return img;
    return reconstruct_batch(*ae, std::span<const EncodedImage>(&img, 1)).front();
  };
}

// Trained or restored models shared by run, gan and transfer.
struct Trunk {
  PreparedData data;
  std::vector<TaskSpec> tasks;
  AutoencoderModel autoencoder;
  std::vector<Sample> base_train;  // classifier input
  std::vector<Sample> base_test;
  ClassifierSet classifiers;
  std::vector<std::string> skipped;
};

AutoencoderModel ensure_autoencoder(const ExperimentConfig& cfg, const PreparedData& data,
                                    Manifest& m, std::vector<std::string>& skipped,
                                    const Log& log) {
  const fs::path rel = ckpt("autoencoder.sprv");
  const std::uint64_t key = key_autoencoder(cfg);
  if (m.complete("autoencoder", key)) {
    skipped.push_back("autoencoder");
    say(log, "autoencoder: checkpoint matches, skipped");
    return autoencoder_from(Container::load(m.path(rel)));
  }
  Stopwatch sw;
  std::vector<EncodedImage> imgs;
  for (const auto& s : data.train) imgs.push_back(s.image);
  Rng rng(derive_seed(cfg.seed, "autoencoder"));
  auto r = train_autoencoder(imgs, cfg.autoencoder, rng, [&](const EpochStats& e) {
    if ((e.epoch + 1) % 10 == 0) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "autoencoder epoch %ld loss %.5f", e.epoch + 1, e.loss);
      say(log, buf);
    }
  });
  save_container(m, rel, to_container(r.model, m.seed(), m.config_hash()));
  m.mark("autoencoder", key, {rel});
  say(log, "autoencoder: trained in " + sw.str());
  return std::move(r.model);
}

Trunk build_trunk(const ExperimentConfig& cfg, Manifest& m, const Log& log,
                  std::string* stage = nullptr) {
  auto at = [&](const char* name) {
    if (stage) *stage = name;
  };
  at("data");
  PreparedData data = prepare_data(cfg);
  for (const auto& w : data.split.warnings) say(log, "split: " + w);
  say(log, "data: " + std::to_string(data.train.size()) + " train / " +
               std::to_string(data.test.size()) + " test records");
  std::vector<std::string> skipped;
  at("autoencoder");
  AutoencoderModel ae = ensure_autoencoder(cfg, data, m, skipped, log);
  auto tasks = reward_tasks(cfg, data.dataset.labels);
  Trunk t{std::move(data), std::move(tasks), std::move(ae), {}, {}, {}, {}};
  t.skipped = std::move(skipped);
  if (cfg.classifier_input == ClassifierInput::kReconstruction) {
    t.base_train = reconstructed(t.autoencoder, t.data.train);
    t.base_test = reconstructed(t.autoencoder, t.data.test);
  } else {
    t.base_train = t.data.train;
    t.base_test = t.data.test;
  }

  at("classifiers");
  const std::uint64_t key = key_classifiers(cfg);
  if (m.complete("classifiers", key)) {
    t.skipped.push_back("classifiers");
    say(log, "classifiers: checkpoint matches, skipped");
    t.classifiers = load_classifiers(t.tasks, m, "checkpoints");
    return t;
  }
  Stopwatch cw;
  AdaptOptions opt;
  opt.schedule = cfg.classifier;
  opt.augment_base = base_augmenter(
      cfg, t.data.split.train,
      cfg.classifier_input == ClassifierInput::kReconstruction ? &t.autoencoder : nullptr);
  Rng rng(derive_seed(cfg.seed, "classifiers"));
  t.classifiers = train_classifier_set(t.tasks, t.base_train, {}, opt, rng);
  m.mark("classifiers", key, save_classifiers(t.classifiers, m, "checkpoints"));
  say(log, "classifiers: trained in " + cw.str());
  return t;
}

std::vector<double> test_accuracy(const ClassifierSet& set, std::span<const Sample> test) {
  std::vector<EncodedImage> imgs;
  std::vector<const Sample*> labels;
  for (const auto& s : test) {
    imgs.push_back(s.image);
    labels.push_back(&s);
  }
  return accuracies(set, imgs, labels);
}

std::vector<std::string> names_of(const std::vector<TaskSpec>& tasks) {
  std::vector<std::string> out;
  for (const auto& t : tasks) out.push_back(t.name);
  return out;
}

json accuracy_object(const std::vector<std::string>& names, const std::vector<double>& acc) {
  json j = json::object();
  for (std::size_t i = 0; i < names.size() && i < acc.size(); ++i) j[names[i]] = acc[i];
  return j;
}

json summary_json(const IterationSummary& s, const std::vector<std::string>& names,
                  const std::vector<double>& reward_trace) {
  json j;
  j["iteration"] = s.iteration;
  j["runs"] = s.runs;
  j["mean_reward"] = s.mean_reward;
  j["pre_adaptation_accuracy"] = accuracy_object(names, s.pre_adaptation);
  j["post_adaptation_accuracy"] = accuracy_object(names, s.post_adaptation);
  j["mean_mask_fraction"] = s.mean_mask_fraction;
  j["channel_importance"] = {{"red_pct", s.importance.red_pct},
                             {"green_pct", s.importance.green_pct},
                             {"blue_pct", s.importance.blue_pct},
                             {"degenerate", s.importance.degenerate},
                             {"changed", s.importance.changed}};
  j["classifier_memory"] = s.classifier_memory;
  j["replay_entries"] = s.replay_entries;
  j["reward_trace"] = reward_trace;
  return j;
}

IterationSummary summary_from(const json& j, const std::vector<std::string>& names) {
  IterationSummary s;
  s.iteration = j.at("iteration").get<int>();
  s.runs = j.at("runs").get<long>();
  s.mean_reward = j.at("mean_reward").get<double>();
  for (const auto& n : names) {
    s.pre_adaptation.push_back(j.at("pre_adaptation_accuracy").at(n).get<double>());
    s.post_adaptation.push_back(j.at("post_adaptation_accuracy").at(n).get<double>());
  }
  s.mean_mask_fraction = j.at("mean_mask_fraction").get<double>();
  const auto& ci = j.at("channel_importance");
  s.importance.red_pct = ci.at("red_pct").get<double>();
  s.importance.green_pct = ci.at("green_pct").get<double>();
  s.importance.blue_pct = ci.at("blue_pct").get<double>();
  s.importance.degenerate = ci.at("degenerate").get<bool>();
  s.importance.changed = ci.at("changed").get<std::array<std::size_t, 3>>();
  s.classifier_memory = j.at("classifier_memory").get<std::size_t>();
  s.replay_entries = j.at("replay_entries").get<std::size_t>();
  return s;
}

fs::path iteration_report(int k) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "iteration_%03d.jsonl", k);
  return fs::path("reports") / buf;
}

fs::path iteration_dir(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%03d", k);
  return fs::path("checkpoints") / buf;
}

std::string jsonl_header(const Manifest& m) {
  json h;
  h["config_hash"] = hex(m.config_hash());
  h["seed"] = m.seed();
  return h.dump();
}

// Writes the accuracy and channel tables; returns the aligned text table.
std::string write_tables(Manifest& m, const std::vector<std::string>& names,
                         const std::vector<TaskSpec>& tasks,
                         const std::vector<IterationSummary>& iters) {
  int stim = -1, sub = -1, n_stim = 1, n_sub = 1;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].kind == LabelKind::kStimulus && stim < 0) {
      stim = static_cast<int>(i);
      n_stim = tasks[i].n_classes;
    }
    if (tasks[i].kind == LabelKind::kSubject && sub < 0) {
      sub = static_cast<int>(i);
      n_sub = tasks[i].n_classes;
    }
  }
  (void)names;
  auto pick = [](const std::vector<double>& v, int i) { return i < 0 ? 0.0 : v.at(static_cast<std::size_t>(i)); };
  std::vector<IterationAccuracy> logs;
  for (const auto& s : iters) {
    logs.push_back({s.iteration, pick(s.pre_adaptation, stim), pick(s.pre_adaptation, sub),
                    pick(s.post_adaptation, stim), pick(s.post_adaptation, sub)});
  }
  const auto rows = accuracy_table(logs, n_stim, n_sub);
  const std::string header = artifact_header(m.config_hash(), m.seed()) + "\n";
  write_text(m.path("reports/accuracy_table.csv"), header + accuracy_csv(rows));
  const std::string text = accuracy_text(rows);
  write_text(m.path("reports/accuracy_table.txt"), header + text);

  std::string ci = header + "iteration,red_pct,green_pct,blue_pct,degenerate\n";
  for (const auto& s : iters) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d,%.2f,%.2f,%.2f,%d\n", s.iteration, s.importance.red_pct,
                  s.importance.green_pct, s.importance.blue_pct, s.importance.degenerate ? 1 : 0);
    ci += buf;
  }
  write_text(m.path("reports/channel_importance.csv"), ci);
  for (const char* f : {"reports/accuracy_table.csv", "reports/accuracy_table.txt",
                        "reports/channel_importance.csv"}) {
    m.record_file(f);
  }
  return text;
}

void write_config(const ExperimentConfig& cfg, Manifest& m) {
  write_text(m.path("config.ini"), cfg.canonical());
  m.record_file("config.ini");
}

}  // namespace

// ------------------------------------------------------------------ run

RunResult cmd_run(const ExperimentConfig& cfg, const Log& log) {
  cfg.validate();
  Manifest m(cfg.out, cfg.hash(), cfg.seed);
  write_config(cfg, m);
  m.save();
  RunResult result;
  std::string stage = "data";
  try {
    Trunk t = build_trunk(cfg, m, log, &stage);
    result.skipped_stages = t.skipped;
    result.classifier_names = names_of(t.tasks);
    result.initial_accuracy = test_accuracy(t.classifiers, t.base_test);
    const RewardSpec spec = reward_spec(cfg);
    spec.validate(t.classifiers.size());

    std::vector<std::shared_ptr<const Sample>> train_ptrs;
    for (const auto& s : t.data.train) train_ptrs.push_back(std::make_shared<const Sample>(s));

    Rng agent_rng(derive_seed(cfg.seed, "dql_init"));
    DqlAgent agent(cfg.encode.resolution, agent_rng);
    ReplayMemory replay(cfg.replay.capacity);
    ClassifierMemory seen;

    // Latest completed iteration whose checkpoint can be restored.
    int restored = 0;
    for (int k = 1; k <= cfg.iterations; ++k) {
      if (!m.complete("iteration_" + std::to_string(k), key_iteration(cfg, k))) break;
      restored = k;
    }

    stage = "replay";
    if (restored == 0) {
      const std::uint64_t key = key_replay(cfg);
      const fs::path rel = ckpt("replay_init.sprv");
      if (m.complete("replay", key)) {
        result.skipped_stages.push_back("replay");
        say(log, "replay: checkpoint matches, skipped");
        load_replay(replay, Container::load(m.path(rel)), train_ptrs);
      } else {
        Stopwatch sw;
        Rng rng(derive_seed(cfg.seed, "replay"));
        const auto r = init_memory(replay, train_ptrs, t.autoencoder, t.classifiers, spec, rng,
                                   cfg.replay.init);
        save_container(m, rel, replay_container(replay, cfg.encode.resolution, m));
        m.mark("replay", key, {rel});
        char buf[128];
        std::snprintf(buf, sizeof buf, "replay: %zu entries from %zu images, mean reward %.4f, %s",
                      r.entries, r.images, r.mean_reward, sw.str().c_str());
        say(log, buf);
      }
    }

    for (int k = 1; k <= cfg.iterations; ++k) {
      stage = "iteration_" + std::to_string(k);
      const fs::path dir = iteration_dir(k);
      if (k <= restored) {
        const std::string text = read_text(m.path(iteration_report(k)));
        const json j = json::parse(text.substr(text.find('\n') + 1));
        IterationSummary s = summary_from(j, result.classifier_names);
        s.resumed = true;
        result.iterations.push_back(s);
        result.skipped_stages.push_back(stage);
        if (k == restored) {
          load_agent(agent, Container::load(m.path(dir / "agent.sprv")));
          load_replay(replay, Container::load(m.path(dir / "replay.sprv")), train_ptrs);
          seen = ClassifierMemory::from_container(Container::load(m.path(dir / "class_memory.sprv")));
          t.classifiers = load_classifiers(t.tasks, m, dir);
        }
        say(log, stage + ": checkpoint matches, skipped");
        continue;
      }
      Stopwatch sw;
      Rng rng(derive_seed(cfg.seed, "iteration", static_cast<std::uint64_t>(k)));
      IterationContext ctx{t.autoencoder, t.classifiers, spec, train_ptrs, t.data.test};
      IterationOptions run_opt = cfg.run;
      run_opt.train = cfg.dql;
      const long total_runs = run_opt.steps;
      const IterationReport rep = run_iteration(
          agent, replay, seen, ctx, k, run_opt, rng, [&](long run, double reward) {
            if ((run + 1) % 10 == 0 || run + 1 == total_runs) {
              char buf[96];
              std::snprintf(buf, sizeof buf, "%s run %ld reward %.4f", stage.c_str(), run + 1, reward);
              say(log, buf);
            }
          });

      std::vector<EncodedImage> raw_test;
      for (const auto& s : t.data.test) raw_test.push_back(s.image);
      std::vector<EncodedImage> manip;
      for (auto& x : manipulate_batch(raw_test, agent.dql1, t.autoencoder)) manip.push_back(std::move(x.image));
      std::vector<EncodedImage> plain;
      for (const auto& s : reconstructed(t.autoencoder, t.data.test)) plain.push_back(s.image);

      IterationSummary s;
      s.iteration = k;
      s.runs = rep.runs;
      s.mean_reward = rep.mean_reward;
      s.mean_mask_fraction = rep.mean_mask_fraction;
      s.pre_adaptation = rep.pre_adaptation_accuracy;
      s.importance = channel_importance(plain, manip, cfg.change_tau);

      stage = "adapt_" + std::to_string(k);
      AdaptOptions opt;
      opt.schedule = cfg.classifier;
      if (cfg.augment.during_adaptation) {
        opt.augment_base = base_augmenter(
            cfg, t.data.split.train,
            cfg.classifier_input == ClassifierInput::kReconstruction ? &t.autoencoder : nullptr);
      }
      const auto manip_test = with_images(t.data.test, std::move(manip));
      Rng arng(derive_seed(cfg.seed, "adapt", static_cast<std::uint64_t>(k)));
      const AdaptReport ar = adapt(t.classifiers, seen, t.base_train, manip_test, opt, arng);
      s.post_adaptation = ar.test_accuracy;
      s.classifier_memory = seen.size();
      s.replay_entries = replay.size();

      stage = "iteration_" + std::to_string(k);
      std::vector<fs::path> files;
      save_container(m, dir / "agent.sprv", agent_container(agent, m));
      save_container(m, dir / "replay.sprv", replay_container(replay, cfg.encode.resolution, m));
      save_container(m, dir / "class_memory.sprv", seen.to_container(m.seed(), m.config_hash()));
      files = {dir / "agent.sprv", dir / "replay.sprv", dir / "class_memory.sprv"};
      for (auto& f : save_classifiers(t.classifiers, m, dir)) files.push_back(f);
      write_text(m.path(iteration_report(k)),
                 jsonl_header(m) + "\n" +
                     summary_json(s, result.classifier_names, rep.reward_trace).dump() + "\n");
      files.push_back(iteration_report(k));
      m.mark(stage, key_iteration(cfg, k), files);
      result.iterations.push_back(s);

      std::string line = stage + ": runs " + std::to_string(s.runs) + ", pre";
      for (std::size_t c = 0; c < s.pre_adaptation.size(); ++c) {
        char buf[64];
        std::snprintf(buf, sizeof buf, " %s %.3f", result.classifier_names[c].c_str(), s.pre_adaptation[c]);
        line += buf;
      }
      line += ", post";
      for (std::size_t c = 0; c < s.post_adaptation.size(); ++c) {
        char buf[64];
        std::snprintf(buf, sizeof buf, " %s %.3f", result.classifier_names[c].c_str(), s.post_adaptation[c]);
        line += buf;
      }
      say(log, line + ", " + sw.str());
    }

    stage = "report";
    write_tables(m, result.classifier_names, t.tasks, result.iterations);
    m.save();
    result.autoencoder_hash = t.autoencoder.parameter_hash();
    result.dql_hash = Hasher().value(agent.dql1.network().parameter_hash())
                          .value(agent.dql2.network().parameter_hash()).digest();
  } catch (const std::exception& e) {
    json f;
    f["failed_stage"] = stage;
    f["error"] = e.what();
    write_text(m.path("failure.json"), f.dump(2) + "\n");
    say(log, "stage " + stage + " failed: " + e.what());
    throw;
  }
  if (fs::exists(m.path("failure.json"))) fs::remove(m.path("failure.json"));
  return result;
}

// ------------------------------------------------------------------- dp

DpResult cmd_dp(const ExperimentConfig& cfg, const Log& log) {
  cfg.validate();
  Manifest m(cfg.out, cfg.hash(), cfg.seed);
  write_config(cfg, m);
  const PreparedData data = prepare_data(cfg);
  const auto tasks = reward_tasks(cfg, data.dataset.labels);

  // Classifiers trained on clean encodings; the mechanism noises their input.
  const std::uint64_t key = Hasher().text("dp_classifiers").value(cfg.seed)
      .value(cfg.section_hash({"data", "encode", "classifier", "augment", "reward"})).digest();
  ClassifierSet set;
  const fs::path dir = "checkpoints/dp";
  if (m.complete("dp_classifiers", key)) {
    say(log, "dp classifiers: checkpoint matches, skipped");
    set = load_classifiers(tasks, m, dir);
  } else {
    Stopwatch sw;
    AdaptOptions opt;
    opt.schedule = cfg.classifier;
    opt.augment_base = base_augmenter(cfg, data.split.train, nullptr);
    Rng rng(derive_seed(cfg.seed, "dp_classifiers"));
    set = train_classifier_set(tasks, data.train, {}, opt, rng);
    m.mark("dp_classifiers", key, save_classifiers(set, m, dir));
    say(log, "dp classifiers: trained in " + sw.str());
  }

  DpResult r;
  std::vector<Scanpath> paths;
  for (const auto& rec : data.split.train) paths.push_back(rec.scanpath);
  r.raw_sensitivity = l1_sensitivity_raw(paths);
  std::vector<EncodedImage> imgs;
  for (const auto& s : data.train) imgs.push_back(s.image);
  r.image_sensitivity = l1_sensitivity_image(imgs);
  {
    char buf[160];
    std::snprintf(buf, sizeof buf, "sensitivity: raw %.4f, image (%.3f, %.3f, %.3f)",
                  r.raw_sensitivity, r.image_sensitivity[0], r.image_sensitivity[1],
                  r.image_sensitivity[2]);
    say(log, buf);
  }

  DpEvalOptions opt;
  opt.repetitions = cfg.dp.repetitions;
  opt.encode = cfg.encode;
  opt.raw_sensitivity = r.raw_sensitivity;
  opt.image_sensitivity = r.image_sensitivity;
  opt.seed = derive_seed(cfg.seed, "dp_eval");
  opt.threads = cfg.threads;
  Stopwatch sw;
  r.raw = dp_evaluate(cfg.dp.raw, data.split.test, set, opt);
  say(log, "dp raw sweep: " + std::to_string(r.raw.size()) + " values, " + sw.str());
  r.image = dp_evaluate(cfg.dp.image, data.split.test, set, opt);
  say(log, "dp image sweep: " + std::to_string(r.image.size()) + " values, " + sw.str());

  const int n_sub = static_cast<int>(data.dataset.labels.subjects.size());
  const double chance = 1.0 / n_sub;
  std::string miss;
  auto choose = [&](const std::vector<FrontierRow>& rows, std::optional<FrontierRow>& out) {
    try {
      out = select_optimal_epsilon(rows, chance, cfg.dp.chance_tolerance);
    } catch (const NoFeasibleEpsilon&) {
      const FrontierRow* near = nullptr;
      for (const auto& row : rows) {
        if (row.skipped) continue;
        if (!near || std::abs(row.sub_acc - chance) < std::abs(near->sub_acc - chance)) near = &row;
      }
      char buf[200];
      if (near) {
        std::snprintf(buf, sizeof buf, "%s: nearest miss epsilon %.2f with subject accuracy %.3f (chance %.3f +- %.3f); ",
                      to_string(rows.front().domain), near->epsilon, near->sub_acc, chance,
                      cfg.dp.chance_tolerance);
      } else {
        std::snprintf(buf, sizeof buf, "%s: every epsilon skipped; ", to_string(rows.front().domain));
      }
      miss += buf;
    }
  };
  choose(r.raw, r.raw_choice);
  choose(r.image, r.image_choice);

  const std::string header = artifact_header(m.config_hash(), m.seed()) + "\n";
  std::ostringstream frontier;
  frontier << header;
  std::vector<FrontierRow> all = r.raw;
  all.insert(all.end(), r.image.begin(), r.image.end());
  write_frontier_csv(frontier, all);
  write_text(m.path("reports/dp_frontier.csv"), frontier.str());
  std::string choice = header + "domain,epsilon,stim_acc,sub_acc\n";
  for (const auto* c : {&r.raw_choice, &r.image_choice}) {
    if (!*c) continue;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%.2f,%.6f,%.6f\n", to_string((*c)->domain), (*c)->epsilon,
                  (*c)->stim_acc, (*c)->sub_acc);
    choice += buf;
  }
  write_text(m.path("reports/dp_choice.csv"), choice);
  m.record_file("reports/dp_frontier.csv");
  m.record_file("reports/dp_choice.csv");
  m.save();
  if (!miss.empty()) throw NoFeasibleEpsilon(miss);
  return r;
}

// ------------------------------------------------------------------ gan

GanSummary cmd_gan(const ExperimentConfig& cfg, const Log& log) {
  cfg.validate();
  if (!cfg.gan.enabled) throw ConfigError("gan.enabled is false");
  Manifest m(cfg.out, cfg.hash(), cfg.seed);
  write_config(cfg, m);
  Trunk t = build_trunk(cfg, m, log);
  const RewardSpec spec = reward_spec(cfg);

  GanOptions opt;
  opt.pretrain_epochs = cfg.gan.pretrain_epochs;
  opt.adversarial_epochs = cfg.gan.adversarial_epochs;
  opt.recon_weight = cfg.gan.recon_weight;
  opt.generator = cfg.autoencoder;
  opt.discriminator = cfg.classifier;
  opt.batch_size = cfg.autoencoder.batch_size;
  Stopwatch sw;
  Rng rng(derive_seed(cfg.seed, "gan"));
  GanResult g = gan_train(t.autoencoder, t.classifiers, spec.keep, spec.hide, t.data.train, opt, rng);
  say(log, "gan: trained in " + sw.str());

  std::vector<EncodedImage> raw_test;
  for (const auto& s : t.data.test) raw_test.push_back(s.image);
  const auto generated = with_images(t.data.test, reconstruct_batch(g.generator, raw_test));
  GanSummary out;
  out.no_adaptation = test_accuracy(t.classifiers, generated);
  out.adaptation = test_accuracy(g.discriminators, generated);
  out.epochs = g.epochs;

  save_container(m, ckpt("gan_generator.sprv"), to_container(g.generator, m.seed(), m.config_hash()));
  const std::string header = artifact_header(m.config_hash(), m.seed()) + "\n";
  std::string epochs = header + "epoch,adversarial,generator_loss,recon_loss,discriminator_loss,mean_d\n";
  for (const auto& e : g.epochs) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.6f,%.6f\n", e.epoch, e.adversarial ? 1 : 0,
                  e.generator_loss, e.recon_loss, e.discriminator_loss, e.mean_d);
    epochs += buf;
  }
  write_text(m.path("reports/gan_epochs.csv"), epochs);
  std::string acc = header + "condition";
  for (const auto& task : t.tasks) acc += "," + task.name;
  acc += "\n";
  for (const auto& [name, v] : {std::pair{"no_adaptation", &out.no_adaptation},
                                std::pair{"adaptation", &out.adaptation}}) {
    acc += name;
    for (double a : *v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, ",%.6f", a);
      acc += buf;
    }
    acc += "\n";
  }
  write_text(m.path("reports/gan_accuracy.csv"), acc);
  m.record_file("reports/gan_epochs.csv");
  m.record_file("reports/gan_accuracy.csv");
  m.record_file(ckpt("gan_generator.sprv"));
  m.save();
  return out;
}

// ------------------------------------------------------------- transfer

TransferResult cmd_transfer(const ExperimentConfig& cfg, const fs::path& source_run, const Log& log) {
  cfg.validate();
  const AutoencoderModel ae = autoencoder_from(Container::load(source_run / "checkpoints/autoencoder.sprv"));
  fs::path agent_file;
  for (int k = 1;; ++k) {
    const fs::path p = source_run / iteration_dir(k) / "agent.sprv";
    if (!fs::exists(p)) break;
    agent_file = p;
  }
  if (agent_file.empty()) throw CheckpointError("no trained manipulator in " + source_run.string());
  if (ae.resolution() != cfg.encode.resolution) {
    throw ConfigError("source run uses resolution " + std::to_string(ae.resolution()));
  }
  Rng init(0);
  DqlAgent agent(ae.resolution(), init);
  load_agent(agent, Container::load(agent_file));
  say(log, "transfer: manipulator from " + agent_file.string());

  TransferResult r;
  r.autoencoder_hash_before = ae.parameter_hash();
  r.dql_hash_before = agent.dql1.network().parameter_hash();

  Manifest m(cfg.out, cfg.hash(), cfg.seed);
  write_config(cfg, m);
  const PreparedData data = prepare_data(cfg);
  const auto tasks = reward_tasks(cfg, data.dataset.labels);
  const auto plain_train = reconstructed(ae, data.train);
  const auto plain_test = reconstructed(ae, data.test);
  auto manipulate_all = [&](const std::vector<Sample>& s) {
    std::vector<EncodedImage> raw;
    for (const auto& x : s) raw.push_back(x.image);
    std::vector<EncodedImage> out;
    for (auto& mm : manipulate_batch(raw, agent.dql1, ae)) out.push_back(std::move(mm.image));
    return with_images(s, std::move(out));
  };
  const auto manip_train = manipulate_all(data.train);
  const auto manip_test = manipulate_all(data.test);

  AdaptOptions opt;
  opt.schedule = cfg.transfer_classifier;
  opt.augment_base = base_augmenter(cfg, data.split.train, &ae);
  Stopwatch sw;
  Rng rng(derive_seed(cfg.seed, "transfer_classifiers"));
  ClassifierSet set = train_classifier_set(tasks, plain_train, {}, opt, rng);
  r.baseline = test_accuracy(set, plain_test);
  r.manipulated = test_accuracy(set, manip_test);
  say(log, "transfer: baseline classifiers trained in " + sw.str());

  ClassifierMemory memory;
  for (const auto& s : manip_train) memory.record(s, s.image, 1);
  Rng arng(derive_seed(cfg.seed, "transfer_adapt"));
  r.adapted = adapt(set, memory, plain_train, manip_test, opt, arng).test_accuracy;
  say(log, "transfer: adapted classifiers in " + sw.str());

  r.autoencoder_hash_after = ae.parameter_hash();
  r.dql_hash_after = agent.dql1.network().parameter_hash();
  if (r.autoencoder_hash_after != r.autoencoder_hash_before || r.dql_hash_after != r.dql_hash_before) {
    throw CheckpointError("transfer modified the autoencoder or the manipulator");
  }

  const std::string header = artifact_header(m.config_hash(), m.seed()) + "\n";
  std::string csv = header + "condition";
  for (const auto& task : tasks) csv += "," + task.name;
  csv += "\n";
  for (const auto& [name, v] : {std::pair{"baseline", &r.baseline},
                                std::pair{"manipulated", &r.manipulated},
                                std::pair{"adapted", &r.adapted}}) {
    csv += name;
    for (double a : *v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, ",%.6f", a);
      csv += buf;
    }
    csv += "\n";
  }
  write_text(m.path("reports/transfer.csv"), csv);
  json j;
  j["config_hash"] = hex(m.config_hash());
  j["seed"] = m.seed();
  j["source_run"] = source_run.string();
  j["autoencoder_hash"] = hex(r.autoencoder_hash_after);
  j["dql_hash"] = hex(r.dql_hash_after);
  write_text(m.path("reports/transfer.json"), j.dump(2) + "\n");
  m.record_file("reports/transfer.csv");
  m.record_file("reports/transfer.json");
  m.save();
  return r;
}

// -------------------------------------------------------- synth / encode

fs::path cmd_synth(const ExperimentConfig& cfg, const Log& log) {
  cfg.validate();
  if (cfg.data.source != "synth") throw ConfigError("synth needs data.source = synth");
  Manifest m(cfg.out, cfg.hash(), cfg.seed);
  write_config(cfg, m);
  const PreparedData data = prepare_data(cfg);
  std::ostringstream out;
  out << artifact_header(m.config_hash(), m.seed()) << "\n";
  write_gaze_csv(out, data.dataset);
  write_text(m.path("synth.csv"), out.str());
  m.record_file("synth.csv");
  m.save();
  say(log, "synth: " + std::to_string(data.dataset.records.size()) + " records");
  return m.path("synth.csv");
}

void write_ppm(const fs::path& p, const EncodedImage& image) {
  const int r = image.resolution();
  std::string out = "P6\n" + std::to_string(r) + " " + std::to_string(r) + "\n255\n";
  for (int row = 0; row < r; ++row) {
    for (int col = 0; col < r; ++col) {
      for (int c = 0; c < EncodedImage::kChannels; ++c) {
        const double v = std::clamp(static_cast<double>(image.at(c, row, col)), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  write_text(p, out);
}

void write_pfm(const fs::path& p, const EncodedImage& image) {
  const int r = image.resolution();
  std::string out = "PF\n" + std::to_string(r) + " " + std::to_string(r) + "\n-1.0\n";
  // Bottom row first.
  for (int row = r - 1; row >= 0; --row) {
    for (int col = 0; col < r; ++col) {
      for (int c = 0; c < EncodedImage::kChannels; ++c) {
        const float v = image.at(c, row, col);
        out.append(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  }
  write_text(p, out);
}

std::size_t cmd_encode(const ExperimentConfig& cfg, std::size_t limit, const Log& log) {
  cfg.validate();
  Dataset ds;
  if (cfg.data.source == "synth") {
    Rng rng(derive_seed(cfg.seed, "synth"));
    ds = synth_generate(cfg.data.subjects, cfg.data.stimuli, cfg.data.trials,
                        cfg.data.signature_strength, rng, cfg.data.synth);
  } else {
    std::ifstream in(cfg.data.source);
    if (!in) throw InsufficientData("cannot read gaze data " + cfg.data.source);
    ds = load_gaze_csv(in, cfg.data.schema).dataset;
  }
  const std::size_t n = limit == 0 ? ds.records.size() : std::min(limit, ds.records.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = ds.records[i];
    const EncodedImage img = encode_scanpath(rec.scanpath, cfg.encode);
    char name[96];
    std::snprintf(name, sizeof name, "%05zu_%s_%s", i,
                  ds.labels.subjects[static_cast<std::size_t>(rec.subject_label)].c_str(),
                  ds.labels.stimuli[static_cast<std::size_t>(rec.stimulus_label)].c_str());
    write_ppm(cfg.out / "encoded" / (std::string(name) + ".ppm"), img);
    write_pfm(cfg.out / "encoded" / (std::string(name) + ".pfm"), img);
  }
  say(log, "encode: wrote " + std::to_string(n) + " images");
  return n;
}

// -------------------------------------------------------- report / plot

namespace {

struct ManifestInfo {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  json j;
};

ManifestInfo read_manifest(const fs::path& out) {
  const fs::path p = out / "manifest.json";
  if (!fs::exists(p)) throw CheckpointError("no manifest in " + out.string());
  ManifestInfo info;
  info.j = json::parse(read_text(p));
  info.config_hash = parse_hex(info.j.at("config_hash").get<std::string>());
  info.seed = info.j.at("seed").get<std::uint64_t>();
  return info;
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text(p));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

// Minimal RGB canvas for charts.
struct Canvas {
  int w, h;
  std::vector<unsigned char> px;
  Canvas(int width, int height) : w(width), h(height), px(static_cast<std::size_t>(width * height * 3), 255) {}
  void set(int x, int y, std::array<unsigned char, 3> c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    for (int k = 0; k < 3; ++k) px[static_cast<std::size_t>((y * w + x) * 3 + k)] = c[static_cast<std::size_t>(k)];
  }
  void line(int x0, int y0, int x1, int y1, std::array<unsigned char, 3> c) {
    for (const auto& p : rasterize_line({x0, y0}, {x1, y1})) {
      set(p.col, p.row, c);
      set(p.col, p.row + 1, c);
    }
  }
  void rect(int x0, int y0, int x1, int y1, std::array<unsigned char, 3> c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
    }
  }
  void save(const fs::path& p) const {
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.append(reinterpret_cast<const char*>(px.data()), px.size());
    write_text(p, out);
  }
};

}  // namespace

std::string cmd_report(const fs::path& out) {
  const ManifestInfo info = read_manifest(out);
  std::vector<IterationSummary> iters;
  std::vector<std::string> names;
  for (int k = 1; fs::exists(out / iteration_report(k)); ++k) {
    const std::string text = read_text(out / iteration_report(k));
    const json j = json::parse(text.substr(text.find('\n') + 1));
    if (names.empty()) {
      for (const auto& [n, v] : j.at("pre_adaptation_accuracy").items()) names.push_back(n);
    }
    iters.push_back(summary_from(j, names));
  }
  const ExperimentConfig cfg = load_config(out / "config.ini");
  Manifest m(out, info.config_hash, info.seed);
  // Class counts come from the data description.
  const PreparedData data = prepare_data(cfg);
  const std::string text = write_tables(m, names, reward_tasks(cfg, data.dataset.labels), iters);
  m.save();
  return text;
}

std::vector<fs::path> cmd_plot(const fs::path& out) {
  std::vector<fs::path> written;
  const fs::path table = out / "reports/accuracy_table.csv";
  if (!fs::exists(table)) throw CheckpointError("no accuracy table in " + out.string());
  const auto rows = read_csv_rows(table);
  const int W = 480, H = 320, L = 40, B = 30;
  Canvas c(W, H);
  c.line(L, H - B, W - 10, H - B, {0, 0, 0});
  c.line(L, 10, L, H - B, {0, 0, 0});
  for (int g = 1; g <= 4; ++g) {
    const int y = H - B - g * (H - B - 10) / 4;
    c.line(L, y, W - 10, y, {220, 220, 220});
  }
  std::vector<std::vector<std::optional<double>>> series(4);
  std::optional<std::array<double, 2>> chance;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < 5) continue;
    if (row[0] == "chance") {
      chance = {std::stod(row[1]), std::stod(row[2])};
      continue;
    }
    for (int s = 0; s < 4; ++s) {
      const auto& cell = row[static_cast<std::size_t>(s + 1)];
      series[static_cast<std::size_t>(s)].push_back(cell.empty() ? std::nullopt : std::optional<double>(std::stod(cell)));
    }
  }
  const std::array<std::array<unsigned char, 3>, 4> colors{{{0, 120, 0}, {200, 0, 0}, {0, 200, 120}, {255, 120, 0}}};
  const std::size_t n = series[0].size();
  auto xy = [&](std::size_t i, double v) {
    const int x = n <= 1 ? (L + W - 10) / 2 : L + static_cast<int>(i * static_cast<std::size_t>(W - 10 - L) / (n - 1));
    const int y = H - B - static_cast<int>(std::lround(v * (H - B - 10)));
    return std::pair{x, y};
  };
  if (chance) {
    for (int s = 0; s < 2; ++s) {
      const int y = xy(0, (*chance)[static_cast<std::size_t>(s)]).second;
      for (int x = L; x < W - 10; x += 6) c.line(x, y, x + 2, y, colors[static_cast<std::size_t>(s)]);
    }
  }
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!series[s][i]) continue;
      const auto [x, y] = xy(i, *series[s][i]);
      c.rect(x - 2, y - 2, x + 2, y + 2, colors[s]);
      if (i + 1 < n && series[s][i + 1]) {
        const auto [x2, y2] = xy(i + 1, *series[s][i + 1]);
        c.line(x, y, x2, y2, colors[s]);
      }
    }
  }
  c.save(out / "reports/accuracy.ppm");
  written.push_back(out / "reports/accuracy.ppm");

  const fs::path ci = out / "reports/channel_importance.csv";
  if (fs::exists(ci)) {
    const auto crow = read_csv_rows(ci);
    Canvas b(W, H);
    const std::size_t m = crow.size() > 1 ? crow.size() - 1 : 0;
    for (std::size_t r = 1; r < crow.size(); ++r) {
      const int x0 = L + static_cast<int>((r - 1) * static_cast<std::size_t>(W - 10 - L) / std::max<std::size_t>(m, 1));
      const int x1 = L + static_cast<int>(r * static_cast<std::size_t>(W - 10 - L) / std::max<std::size_t>(m, 1)) - 4;
      int y = H - B;
      const std::array<std::array<unsigned char, 3>, 3> cc{{{220, 40, 40}, {40, 180, 40}, {40, 40, 220}}};
      for (int k = 0; k < 3; ++k) {
        const double pct = std::stod(crow[r][static_cast<std::size_t>(k + 1)]);
        const int hgt = static_cast<int>(std::lround(pct / 100.0 * (H - B - 10)));
        b.rect(x0, y - hgt, x1, y, cc[static_cast<std::size_t>(k)]);
        y -= hgt;
      }
    }
    b.line(L, H - B, W - 10, H - B, {0, 0, 0});
    b.save(out / "reports/channel_importance.ppm");
    written.push_back(out / "reports/channel_importance.ppm");
  }
  return written;
}

// --------------------------------------------------------------- verify

VerifyResult cmd_verify(const fs::path& out) {
  VerifyResult v;
  const ManifestInfo info = read_manifest(out);
  const fs::path cfg_path = out / "config.ini";
  if (!fs::exists(cfg_path)) {
    v.problems.push_back("config.ini missing");
  } else if (load_config(cfg_path).hash() != info.config_hash) {
    v.problems.push_back("config.ini does not hash to the manifest's config hash");
  }
  auto check = [&](const std::string& file, const std::string& recorded, bool own_hash) {
    ++v.checked;
    const fs::path p = out / file;
    if (!fs::exists(p)) {
      v.problems.push_back(file + ": missing");
      return;
    }
    if (hex(file_hash(p)) != recorded) {
      v.problems.push_back(file + ": content hash changed");
      return;
    }
    if (!own_hash) return;
    const std::string ext = p.extension().string();
    std::uint64_t h = 0;
    bool has = true;
    if (ext == ".sprv") {
      h = Container::load(p).header().config_hash;
    } else if (ext == ".csv" || ext == ".txt") {
      const std::string text = read_text(p);
      const std::string first = text.substr(0, text.find('\n'));
      const auto at = first.find("config_hash=");
      has = first.rfind("# scanpriv", 0) == 0 && at != std::string::npos;
      if (has) h = parse_hex(first.substr(at + 12, 16));
    } else if (ext == ".jsonl" || ext == ".json") {
      const std::string text = read_text(p);
      const json j = json::parse(ext == ".jsonl" ? text.substr(0, text.find('\n')) : text);
      has = j.contains("config_hash");
      if (has) h = parse_hex(j["config_hash"].get<std::string>());
    } else {
      return;
    }
    if (!has) {
      v.problems.push_back(file + ": no config hash header");
    } else if (own_hash && h != info.config_hash && file.rfind("checkpoints/", 0) != 0 &&
               file.rfind("reports/iteration_", 0) != 0) {
      v.problems.push_back(file + ": header names another config");
    }
  };
  for (const auto& [name, s] : info.j.at("stages").items()) {
    for (const auto& [file, h] : s.at("files").items()) check(file, h.get<std::string>(), true);
  }
  for (const auto& [file, h] : info.j.at("reports").items()) {
    check(file, h.get<std::string>(), file != "config.ini");
  }
  return v;
}

}  // namespace scanpriv
