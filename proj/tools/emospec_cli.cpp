// emospec command-line front end: synth | featurize | run | compare | gradcheck.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include "emospec/corpus/epochset_io.hpp"
#include "emospec/corpus/features.hpp"
#include "emospec/corpus/synth.hpp"
#include "emospec/eval/experiment.hpp"
#include "emospec/io.hpp"
#include "emospec/nn/gradcheck.hpp"

using namespace emospec;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Raised for anything wrong with flags or the config file.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// SEED epochs keep the first 80 s.
constexpr std::size_t kSeedSamples = 16000;

// Every key a config file may hold, as dotted paths.
const std::set<std::string> kKnownKeys = {
    "seed", "threads", "out", "epochs",
    "geometry", "geometry.name", "geometry.channels", "geometry.samples", "geometry.fs",
    "classes", "per_class", "snr_db",
    "scheme", "va4_threshold", "valence3_low", "valence3_high", "discrete_classes",
    "filter", "filter.order", "filter.low_hz", "filter.high_hz",
    "stft", "stft.frame_size", "stft.hop", "stft.window",
    "scaling", "truncate_samples",
    "model", "model_sizes", "model_sizes.conv1", "model_sizes.conv2", "model_sizes.lstm1", "model_sizes.lstm2",
    "model_sizes.dense", "dropout", "pool",
    "train", "train.lr", "train.batch_size", "train.max_epochs", "train.patience", "train.val_fraction",
    "folds", "folds.k", "folds.repeats", "averaging"};

void check_keys(const json& j, const std::string& prefix = "") {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!kKnownKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
    if (it->is_object()) check_keys(*it, key);
  }
}

json* find_path(json& j, const std::string& path) {
  json* cur = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const auto part = path.substr(start, dot - start);
    if (!cur->is_object() || !cur->contains(part)) return nullptr;
    cur = &(*cur)[part];
    if (dot == std::string::npos) return cur;
    start = dot + 1;
  }
}

void set_path(json& j, const std::string& path, json value) {
  json* cur = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const auto part = path.substr(start, dot - start);
    if (dot == std::string::npos) {
      (*cur)[part] = std::move(value);
      return;
    }
    if (!(*cur)[part].is_object()) (*cur)[part] = json::object();
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

template <typename T>
T get_or(json& j, const std::string& path, T fallback) {
  const json* v = find_path(j, path);
  if (!v || v->is_null()) return fallback;
  try {
    return v->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + path + "' has the wrong type");
  }
}

template <typename T>
std::optional<T> get_opt(json& j, const std::string& path) {
  const json* v = find_path(j, path);
  if (!v || v->is_null()) return std::nullopt;
  return get_or<T>(j, path, T{});
}

// Flags bound to config paths. A flag given on the command line overrides
// the same key from --config.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON config file; flags override its values")->check(CLI::ExistingFile);
    bind<std::uint64_t>("--seed", "seed", "Master seed (required by synth and run)");
    bind<unsigned>("--threads", "threads", "Worker threads (default 1)");
    bind<std::string>("--out", "out", "Output directory");
  }

  template <typename T>
  CLI::Option* bind(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app_->add_option(flag, *value, help);
    apply_.push_back([opt, value, key](json& j) {
      if (opt->count()) set_path(j, key, json(*value));
    });
    return opt;
  }

  // File values first, then command-line overrides.
  json resolve() const {
    json cfg = json::object();
    if (!config_path_.empty()) {
      try {
        cfg = json::parse(io::read_all(config_path_));
      } catch (const json::exception& e) {
        throw ConfigError("config file " + config_path_ + ": " + e.what());
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      if (!cfg.is_object()) throw ConfigError("config file " + config_path_ + " must hold a JSON object");
    }
    for (const auto& f : apply_) f(cfg);
    check_keys(cfg);
    return cfg;
  }

 private:
  CLI::App* app_;
  std::string config_path_;
  std::vector<std::function<void(json&)>> apply_;
};

std::uint64_t require_seed(json& cfg) {
  const auto seed = get_opt<std::uint64_t>(cfg, "seed");
  if (!seed) throw ConfigError("--seed is required (no wall-clock default)");
  return *seed;
}

fs::path require_path(json& cfg, const std::string& key, const std::string& flag) {
  const auto p = get_opt<std::string>(cfg, key);
  if (!p || p->empty()) throw ConfigError(flag + " is required");
  return *p;
}

unsigned threads_of(json& cfg) {
  const auto t = get_or<unsigned>(cfg, "threads", 1u);
  if (t == 0) throw ConfigError("--threads must be at least 1");
  return t;
}

// --- corpus -----------------------------------------------------------------

void add_corpus_flags(Settings& s) {
  s.bind<std::string>("--geometry", "geometry.name", "Epoch geometry: deap | seed | dens")
      ->check(CLI::IsMember({"deap", "seed", "dens"}));
  s.bind<std::size_t>("--channels", "geometry.channels", "Custom geometry: channels per epoch");
  s.bind<std::size_t>("--samples", "geometry.samples", "Custom geometry: samples per channel");
  s.bind<double>("--fs", "geometry.fs", "Custom geometry: sampling rate in Hz");
  s.bind<int>("--classes", "classes", "Number of classes (default 3)");
  s.bind<std::size_t>("--per-class", "per_class", "Epochs per class (default 50)");
  s.bind<double>("--snr-db", "snr_db", "Class rhythm power over background, in dB");
}

corpus::Geometry geometry_of(json& cfg) {
  json* g = find_path(cfg, "geometry");
  corpus::Geometry geo = corpus::geometries::dens();
  if (g && g->is_string()) {
    geo = corpus::geometry_from_name(g->get<std::string>());
  } else if (g && g->is_object()) {
    if (auto name = get_opt<std::string>(cfg, "geometry.name")) {
      if (*name != "custom") geo = corpus::geometry_from_name(*name);
      else geo.name = "custom";
    }
    const auto ch = get_opt<std::size_t>(cfg, "geometry.channels");
    const auto ns = get_opt<std::size_t>(cfg, "geometry.samples");
    const auto fs = get_opt<double>(cfg, "geometry.fs");
    if (ch || ns || fs) {
      if (!get_opt<std::string>(cfg, "geometry.name")) geo.name = "custom";
      if (ch) geo.channels = *ch;
      if (ns) geo.samples = *ns;
      if (fs) geo.fs = *fs;
    }
  } else if (g && !g->is_null()) {
    throw ConfigError("config key 'geometry' must be a name or an object");
  }
  geo.validate();
  return geo;
}

int cmd_synth(json& cfg) {
  const auto seed = require_seed(cfg);
  const auto out = require_path(cfg, "out", "--out");
  const auto geo = geometry_of(cfg);
  const int classes = get_or(cfg, "classes", 3);
  const auto per_class = get_or<std::size_t>(cfg, "per_class", 50);
  corpus::SynthOptions opt;
  opt.snr_db = get_or(cfg, "snr_db", opt.snr_db);
  const auto set = corpus::synth_generate(geo, classes, per_class, seed, opt, threads_of(cfg));
  corpus::write_epochset(set, out);
  std::printf("%zu epochs, %zu ch x %zu samples @ %g Hz, %d classes (%s), snr %g dB, seed %llu -> %s\n",
              set.records.size(), geo.channels, geo.samples, geo.fs, classes,
              std::string(corpus::to_string(set.manifest.scheme)).c_str(), opt.snr_db,
              static_cast<unsigned long long>(seed), out.string().c_str());
  return 0;
}

// --- features ---------------------------------------------------------------

void add_feature_flags(Settings& s) {
  s.bind<std::string>("--epochs", "epochs", "Epoch set directory (manifest.json + data.f32le)");
  s.bind<std::string>("--scheme", "scheme", "Label scheme: va4 | valence3 | discrete (default: the set's own)")
      ->check(CLI::IsMember({"va4", "valence3", "discrete"}));
  s.bind<double>("--va4-threshold", "va4_threshold", "High/low split for valence and arousal (default 5)");
  s.bind<double>("--valence3-low", "valence3_low", "Upper bound of low valence (default 4.5)");
  s.bind<double>("--valence3-high", "valence3_high", "Lower bound of high valence (default 5.5)");
  s.bind<int>("--discrete-classes", "discrete_classes", "Class count for the discrete scheme");
  s.bind<int>("--filter-order", "filter.order", "Butterworth prototype order (default 5)");
  s.bind<double>("--bandpass-low", "filter.low_hz", "Bandpass lower edge in Hz (enables filtering)");
  s.bind<double>("--bandpass-high", "filter.high_hz", "Bandpass upper edge in Hz (enables filtering)");
  s.bind<std::size_t>("--frame-size", "stft.frame_size", "STFT frame length N in samples (default 0.5 s)");
  s.bind<std::size_t>("--hop", "stft.hop", "STFT hop H in samples (default 0.25 s)");
  s.bind<std::string>("--window", "stft.window", "STFT window: hann | hamming | rectangular")
      ->check(CLI::IsMember({"hann", "hamming", "rectangular"}));
  s.bind<std::string>("--scaling", "scaling", "Power scaling: raw | log | log_minmax (default log_minmax)")
      ->check(CLI::IsMember({"raw", "log", "log_minmax"}));
  s.bind<std::size_t>("--truncate-samples", "truncate_samples",
                      "Keep only the first N samples per channel (SEED sets default to 16000)");
}

corpus::LabelScheme scheme_of(json& cfg, const corpus::EpochSet& set) {
  corpus::LabelScheme s;
  const auto name = get_opt<std::string>(cfg, "scheme");
  s.kind = name ? corpus::scheme_kind_from_string(*name) : set.manifest.scheme;
  s.va4_threshold = get_or(cfg, "va4_threshold", s.va4_threshold);
  s.valence3_low = get_or(cfg, "valence3_low", s.valence3_low);
  s.valence3_high = get_or(cfg, "valence3_high", s.valence3_high);
  if (s.kind == corpus::LabelScheme::Kind::discrete) {
    int classes = 0;
    for (const auto& r : set.records)
      if (r.discrete_label) classes = std::max(classes, *r.discrete_label + 1);
    s.discrete_classes = get_or(cfg, "discrete_classes", classes);
  }
  s.validate();
  return s;
}

corpus::FeaturePipeline pipeline_of(json& cfg, const corpus::Geometry& geo) {
  corpus::FeaturePipeline p;
  p.plan = signal::StftPlan::for_rate(geo.fs);
  p.plan.frame_size = get_or(cfg, "stft.frame_size", p.plan.frame_size);
  p.plan.hop = get_or(cfg, "stft.hop", p.plan.hop);
  if (auto w = get_opt<std::string>(cfg, "stft.window")) p.plan.window = signal::window_from_string(*w);
  p.plan.validate();
  if (auto sc = get_opt<std::string>(cfg, "scaling")) p.scaling = signal::scaling_from_string(*sc);
  json* f = find_path(cfg, "filter");
  if (f && !f->is_null()) {
    signal::FilterSpec spec;
    spec.order = get_or(cfg, "filter.order", spec.order);
    spec.low_hz = get_or(cfg, "filter.low_hz", spec.low_hz);
    spec.high_hz = get_or(cfg, "filter.high_hz", spec.high_hz);
    spec.fs = geo.fs;
    spec.validate();
    p.filter = spec;
  }
  return p;
}

corpus::EpochSet load_epochs(json& cfg) {
  const auto path = require_path(cfg, "epochs", "--epochs");
  if (!fs::exists(path / corpus::kManifestFile)) throw DataError("epoch set not found: " + path.string());
  auto set = corpus::read_epochset(path);
  const bool is_seed = set.manifest.geometry.name == "seed";
  const auto keep = get_or<std::size_t>(cfg, "truncate_samples", is_seed ? kSeedSamples : 0);
  if (keep > 0) corpus::truncate_samples(set, keep);
  return set;
}

std::string shape_summary(const corpus::FeatureSet& f) {
  return std::to_string(f.size()) + " instances of " + std::to_string(f.rows()) + "×" + std::to_string(f.cols()) +
         "×" + std::to_string(f.channels());
}

// features.json + features.f32le (one rows x cols plane per instance; the
// three input channels are copies of that plane).
void write_features(const corpus::FeatureSet& f, const fs::path& dir, const json& echo) {
  std::string data;
  for (std::size_t i = 0; i < f.size(); ++i) io::put_f32_le(data, f.plane(i));
  json j = {{"format", "emospec-features"},
            {"version", 1},
            {"instances", f.size()},
            {"rows", f.rows()},
            {"cols", f.cols()},
            {"channels", f.channels()},
            {"channel_layout", "replicated"},
            {"classes", f.class_count()},
            {"labels", f.labels()},
            {"config", echo}};
  io::write_atomic(dir / "features.f32le", data);
  io::write_atomic(dir / "features.json", j.dump(2) + "\n");
}

int cmd_featurize(json& cfg) {
  const auto set = load_epochs(cfg);
  const auto scheme = scheme_of(cfg, set);
  const auto pipe = pipeline_of(cfg, set.manifest.geometry);
  const auto features = corpus::featurize_set(set, scheme, pipe, threads_of(cfg));
  if (auto out = get_opt<std::string>(cfg, "out")) write_features(features, *out, cfg);
  std::printf("%s\n", shape_summary(features).c_str());
  return 0;
}

// --- run --------------------------------------------------------------------

void add_run_flags(Settings& s) {
  s.bind<std::string>("--model", "model", "Model variant: reduced | full (default reduced)")
      ->check(CLI::IsMember({"reduced", "full"}));
  s.bind<std::size_t>("--conv1", "model_sizes.conv1", "Filters in the first convolution");
  s.bind<std::size_t>("--conv2", "model_sizes.conv2", "Filters in the second convolution");
  s.bind<std::size_t>("--lstm1", "model_sizes.lstm1", "Units in the first LSTM");
  s.bind<std::size_t>("--lstm2", "model_sizes.lstm2", "Units in the second LSTM");
  s.bind<std::size_t>("--dense", "model_sizes.dense", "Units in the hidden dense layer");
  s.bind<double>("--dropout", "dropout", "Dropout rate (default 0.2)");
  s.bind<std::string>("--pool", "pool", "Max-pool placement: after_convs | between_convs")
      ->check(CLI::IsMember({"after_convs", "between_convs"}));
  s.bind<double>("--lr", "train.lr", "Adam learning rate (default 0.001)");
  s.bind<std::size_t>("--batch-size", "train.batch_size", "Mini-batch size (default 256)");
  s.bind<std::size_t>("--max-epochs", "train.max_epochs", "Epoch cap (default 100)");
  s.bind<std::size_t>("--patience", "train.patience", "Early-stopping patience on val_loss (default 30)");
  s.bind<double>("--val-fraction", "train.val_fraction", "Validation share of each training fold (default 0.1)");
  s.bind<std::size_t>("--k", "folds.k", "Folds per repeat (default 5)");
  s.bind<std::size_t>("--repeats", "folds.repeats", "Repeats (default 5)");
  s.bind<std::string>("--averaging", "averaging", "F1 averaging: macro | micro | weighted (default macro)")
      ->check(CLI::IsMember({"macro", "micro", "weighted"}));
}

nn::ModelConfig model_of(json& cfg) {
  const auto variant = get_or<std::string>(cfg, "model", "reduced");
  nn::ModelConfig m;
  if (variant == "full") m = nn::ModelConfig::full();
  else if (variant != "reduced") throw ConfigError("unknown model variant '" + variant + "' (expected reduced | full)");
  m.conv1 = get_or(cfg, "model_sizes.conv1", m.conv1);
  m.conv2 = get_or(cfg, "model_sizes.conv2", m.conv2);
  m.lstm1 = get_or(cfg, "model_sizes.lstm1", m.lstm1);
  m.lstm2 = get_or(cfg, "model_sizes.lstm2", m.lstm2);
  m.dense = get_or(cfg, "model_sizes.dense", m.dense);
  m.dropout = get_or(cfg, "dropout", m.dropout);
  if (auto p = get_opt<std::string>(cfg, "pool")) m.pool = nn::pool_placement_from_string(*p);
  return m;
}

eval::ExperimentConfig experiment_of(json& cfg) {
  eval::ExperimentConfig e;
  e.seed = require_seed(cfg);
  e.threads = threads_of(cfg);
  e.model = model_of(cfg);
  auto& t = e.train;
  t.adam.lr = get_or(cfg, "train.lr", t.adam.lr);
  t.batch_size = get_or(cfg, "train.batch_size", t.batch_size);
  t.max_epochs = get_or(cfg, "train.max_epochs", t.max_epochs);
  t.patience = get_or(cfg, "train.patience", std::min(t.patience, t.max_epochs));
  t.val_fraction = get_or(cfg, "train.val_fraction", t.val_fraction);
  t.validate();
  e.k = get_or(cfg, "folds.k", e.k);
  e.repeats = get_or(cfg, "folds.repeats", e.repeats);
  if (auto a = get_opt<std::string>(cfg, "averaging")) e.averaging = eval::f1_average_from_string(*a);
  return e;
}

int cmd_run(json& cfg) {
  const auto exp = experiment_of(cfg);
  const auto out = require_path(cfg, "out", "--out");
  const auto set = load_epochs(cfg);
  const auto scheme = scheme_of(cfg, set);
  const auto pipe = pipeline_of(cfg, set.manifest.geometry);
  const auto features = corpus::featurize_set(set, scheme, pipe, exp.threads);
  std::printf("%s\n", shape_summary(features).c_str());
  std::fflush(stdout);
  const std::size_t total = exp.k * exp.repeats;
  auto report = eval::run_experiment(features, exp, set.manifest.dataset_name, [&](const eval::TrialResult& t) {
    std::printf("trial %zu/%zu (repeat %zu, fold %zu): %s F1 %.2f, %zu epochs\n", t.trial + 1, total, t.repeat, t.fold,
                eval::to_string(exp.averaging).c_str(), t.f1(exp.averaging), t.epochs_run);
    std::fflush(stdout);
  });
  report.config = cfg;
  eval::write_report(report, out);
  std::printf("mean %s F1 %.2f (± %.2f) over %zu trials -> %s\n", eval::to_string(exp.averaging).c_str(),
              report.mean_score(), report.sd_score(), report.trials.size(), out.string().c_str());
  return 0;
}

// --- compare / gradcheck ----------------------------------------------------

int cmd_compare(json& cfg, const std::string& a_path, const std::string& b_path) {
  const auto a = eval::read_report(a_path);
  const auto b = eval::read_report(b_path);
  auto label = [](const fs::path& p, const eval::RunReport& r) {
    if (!r.dataset.empty()) return r.dataset;
    return (fs::is_directory(p) ? p : p.parent_path()).filename().string();
  };
  std::string na = label(a_path, a), nb = label(b_path, b);
  if (na == nb) {
    na += "_a";
    nb += "_b";
  }
  const auto c = eval::compare(a, b, na, nb);
  std::fputs(c.table.c_str(), stdout);
  if (auto out = get_opt<std::string>(cfg, "out")) {
    io::write_atomic(fs::path(*out) / "comparison.csv", c.csv);
    io::write_atomic(fs::path(*out) / "comparison.txt", c.table);
  }
  return 0;
}

int cmd_gradcheck(json& cfg, bool corrupt_conv) {
  nn::GradcheckOptions opt;
  opt.seed = get_or<std::uint64_t>(cfg, "seed", opt.seed);
  opt.corrupt_conv = corrupt_conv;
  const auto report = nn::gradcheck(opt);
  for (const auto& e : report.entries)
    std::printf("%-13s max rel error %.3e  checked %5zu  skipped %3zu  %s\n", e.layer.c_str(), e.max_rel_error,
                e.checked, e.kinks, e.pass ? "ok" : "FAIL");
  if (!report.pass()) {
    std::string failed;
    for (const auto& e : report.entries)
      if (!e.pass) failed += (failed.empty() ? "" : ", ") + e.layer;
    std::fprintf(stderr, "gradient check failed: %s\n", failed.c_str());
    return kExitNumeric;
  }
  std::printf("all layers within %.0e\n", opt.tolerance);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG spectrogram emotion recognition: synthetic corpora, features, CNN-LSTM runs and statistics"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic epoch set");
  Settings synth_s(synth);
  add_corpus_flags(synth_s);

  auto* featurize = app.add_subcommand("featurize", "Turn an epoch set into spectrogram instances");
  Settings feat_s(featurize);
  add_feature_flags(feat_s);

  auto* run = app.add_subcommand("run", "Repeated K-fold training and evaluation");
  Settings run_s(run);
  add_feature_flags(run_s);
  add_run_flags(run_s);

  auto* cmp = app.add_subcommand("compare", "Welch t-test between two run reports");
  Settings cmp_s(cmp);
  std::string report_a, report_b;
  cmp->add_option("report_a", report_a, "First run report (report.json or its directory)")->required();
  cmp->add_option("report_b", report_b, "Second run report")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every layer's gradients");
  Settings gc_s(gc);
  bool corrupt_conv = false;
  gc->add_flag("--corrupt-conv", corrupt_conv, "Test hook: perturb the Conv2D weight gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (synth->parsed()) {
      auto cfg = synth_s.resolve();
      return cmd_synth(cfg);
    }
    if (featurize->parsed()) {
      auto cfg = feat_s.resolve();
      return cmd_featurize(cfg);
    }
    if (run->parsed()) {
      auto cfg = run_s.resolve();
      return cmd_run(cfg);
    }
    if (cmp->parsed()) {
      auto cfg = cmp_s.resolve();
      return cmd_compare(cfg, report_a, report_b);
    }
    if (gc->parsed()) {
      auto cfg = gc_s.resolve();
      return cmd_gradcheck(cfg, corrupt_conv);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
