#pragma once

#include <atomic>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "emospec/corpus/features.hpp"
#include "emospec/error.hpp"
#include "emospec/eval/folds.hpp"
#include "emospec/eval/metrics.hpp"
#include "emospec/eval/stats.hpp"
#include "emospec/io.hpp"
#include "emospec/nn/train.hpp"

namespace emospec::eval {

using nlohmann::json;

struct ExperimentConfig {
  std::size_t k{5};
  std::size_t repeats{5};
  std::uint64_t seed{0};
  nn::ModelConfig model;
  nn::TrainConfig train;  // train.seed is replaced per trial
  F1Average averaging{F1Average::macro};
  unsigned threads{1};
};

struct TrialResult {
  std::size_t trial{0};
  std::size_t repeat{0};
  std::size_t fold{0};
  std::uint64_t seed{0};
  ConfusionMatrix confusion;
  double f1_macro{0};
  double f1_micro{0};
  double f1_weighted{0};
  double accuracy{0};
  std::size_t epochs_run{0};
  std::size_t best_epoch{0};

  [[nodiscard]] double f1(F1Average a) const {
    switch (a) {
      case F1Average::macro: return f1_macro;
      case F1Average::micro: return f1_micro;
      case F1Average::weighted: return f1_weighted;
    }
    return f1_macro;
  }
};

struct RunReport {
  std::string dataset;
  std::size_t classes{0};
  std::size_t instances{0};
  std::size_t k{5};
  std::size_t repeats{5};
  std::uint64_t seed{0};
  F1Average averaging{F1Average::macro};
  json config = json::object();  // echo of whatever produced the run
  std::vector<TrialResult> trials;

  // Per-trial F1 (percent) under the report's averaging, in trial order.
  [[nodiscard]] std::vector<double> scores() const {
    std::vector<double> s;
    for (const auto& t : trials) s.push_back(t.f1(averaging));
    return s;
  }
  [[nodiscard]] double mean_score() const { return mean(scores()); }
  [[nodiscard]] double sd_score() const {
    const auto s = scores();
    return s.size() < 2 ? 0.0 : sample_sd(s);
  }
};

// Shortest text that parses back to the same double.
inline std::string format_full(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline TrialResult run_trial(const corpus::FeatureSet& features, const FoldPlan& plan, std::size_t repeat,
                             std::size_t fold, const ExperimentConfig& cfg) {
  TrialResult r;
  r.trial = repeat * plan.k + fold;
  r.repeat = repeat;
  r.fold = fold;
  r.seed = derive_seed(cfg.seed, {repeat, fold});
  const auto classes = static_cast<std::size_t>(features.class_count());
  const auto train_idx = plan.train(repeat, fold);
  const auto test_idx = plan.test(repeat, fold);

  nn::Network<float> net(nn::build_spec(cfg.model, {features.rows(), features.cols(), features.channels()}, classes),
                         derive_seed(r.seed, {0}));
  nn::TrainConfig tc = cfg.train;
  tc.seed = derive_seed(r.seed, {1});
  const auto trained = nn::train(std::move(net), features, train_idx, tc);
  const auto predicted = nn::predict(trained.net, features, test_idx, tc.batch_size);

  std::vector<int> actual(test_idx.size());
  for (std::size_t i = 0; i < test_idx.size(); ++i) actual[i] = features.label(test_idx[i]);
  r.confusion = confusion(actual, predicted, classes);
  r.f1_macro = f1_score(r.confusion, F1Average::macro);
  r.f1_micro = f1_score(r.confusion, F1Average::micro);
  r.f1_weighted = f1_score(r.confusion, F1Average::weighted);
  r.accuracy = r.confusion.accuracy();
  r.epochs_run = trained.history.epochs.size();
  r.best_epoch = trained.history.best_epoch;
  return r;
}

// All k x repeats trials. Trials may run on several threads; each draws its
// seeds from (master, repeat, fold) and results are stored in trial order, so
// the report does not depend on the thread count.
inline RunReport run_experiment(const corpus::FeatureSet& features, const ExperimentConfig& cfg,
                                const std::string& dataset = "",
                                const std::function<void(const TrialResult&)>& on_trial = {}) {
  cfg.train.validate();
  if (features.class_count() < 2) throw InvalidArgument("experiment needs at least 2 classes");
  const FoldPlan plan = make_folds(features.size(), cfg.k, cfg.repeats, cfg.seed);

  RunReport report;
  report.dataset = dataset;
  report.classes = static_cast<std::size_t>(features.class_count());
  report.instances = features.size();
  report.k = cfg.k;
  report.repeats = cfg.repeats;
  report.seed = cfg.seed;
  report.averaging = cfg.averaging;
  report.trials.resize(plan.trial_count());

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= plan.trial_count()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        auto r = run_trial(features, plan, t / cfg.k, t % cfg.k, cfg);
        std::lock_guard lock(mu);
        report.trials[t] = std::move(r);
        if (on_trial) on_trial(report.trials[t]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(plan.trial_count())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return report;
}

// --- serialization ---------------------------------------------------------

inline json to_json(const TrialResult& t) {
  json cm = json::array();
  for (std::size_t a = 0; a < t.confusion.classes(); ++a) {
    json row = json::array();
    for (std::size_t p = 0; p < t.confusion.classes(); ++p) row.push_back(t.confusion.at(a, p));
    cm.push_back(std::move(row));
  }
  return {{"trial", t.trial},       {"repeat", t.repeat},         {"fold", t.fold},
          {"seed", t.seed},         {"f1_macro", t.f1_macro},     {"f1_micro", t.f1_micro},
          {"f1_weighted", t.f1_weighted}, {"accuracy", t.accuracy}, {"epochs_run", t.epochs_run},
          {"best_epoch", t.best_epoch},   {"confusion", std::move(cm)}};
}

inline json to_json(const RunReport& r) {
  json trials = json::array();
  for (const auto& t : r.trials) trials.push_back(to_json(t));
  json summary = {{"trials", r.trials.size()}, {"averaging", to_string(r.averaging)}};
  if (!r.trials.empty()) {
    summary["mean_f1"] = r.mean_score();
    summary["sd_f1"] = r.sd_score();
  }
  return {{"format", "emospec-run"},
          {"version", 1},
          {"dataset", r.dataset},
          {"classes", r.classes},
          {"instances", r.instances},
          {"k", r.k},
          {"repeats", r.repeats},
          {"seed", r.seed},
          {"averaging", to_string(r.averaging)},
          {"summary", std::move(summary)},
          {"config", r.config},
          {"trials", std::move(trials)}};
}

inline RunReport report_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "emospec-run") throw DataError("not a run report (format field)");
    if (j.at("version").get<int>() != 1) throw DataError("unsupported run report version");
    RunReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.classes = j.at("classes").get<std::size_t>();
    r.instances = j.value("instances", std::size_t{0});
    r.k = j.at("k").get<std::size_t>();
    r.repeats = j.at("repeats").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.averaging = f1_average_from_string(j.at("averaging").get<std::string>());
    r.config = j.value("config", json::object());
    for (const auto& jt : j.at("trials")) {
      TrialResult t;
      t.trial = jt.at("trial").get<std::size_t>();
      t.repeat = jt.at("repeat").get<std::size_t>();
      t.fold = jt.at("fold").get<std::size_t>();
      t.seed = jt.value("seed", std::uint64_t{0});
      t.f1_macro = jt.at("f1_macro").get<double>();
      t.f1_micro = jt.at("f1_micro").get<double>();
      t.f1_weighted = jt.at("f1_weighted").get<double>();
      t.accuracy = jt.at("accuracy").get<double>();
      t.epochs_run = jt.value("epochs_run", std::size_t{0});
      t.best_epoch = jt.value("best_epoch", std::size_t{0});
      std::vector<std::uint64_t> counts;
      for (const auto& row : jt.at("confusion")) {
        if (row.size() != r.classes) throw DataError("trial " + std::to_string(t.trial) + ": confusion row size");
        for (const auto& c : row) counts.push_back(c.get<std::uint64_t>());
      }
      t.confusion = ConfusionMatrix(r.classes, std::move(counts));
      for (double s : {t.f1_macro, t.f1_micro, t.f1_weighted})
        if (!(s >= 0.0 && s <= 100.0)) throw DataError("trial " + std::to_string(t.trial) + ": F1 outside [0, 100]");
      r.trials.push_back(std::move(t));
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run report: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("malformed run report: ") + e.what());
  }
}

inline std::string scores_csv(const RunReport& r) {
  std::string s = "trial,repeat,fold,f1_macro,f1_micro,accuracy\n";
  for (const auto& t : r.trials)
    s += std::to_string(t.trial) + ',' + std::to_string(t.repeat) + ',' + std::to_string(t.fold) + ',' +
         format_full(t.f1_macro) + ',' + format_full(t.f1_micro) + ',' + format_full(t.accuracy) + '\n';
  return s;
}

// Rows = actual class, columns = predicted class. The extra "precision"
// column holds the precision of the class named on that row and the extra
// "recall" row the recall of the class named in that column; the corner cell
// is the overall accuracy.
inline std::string confusion_csv(const ConfusionMatrix& cm) {
  const std::size_t C = cm.classes();
  std::string s = "actual\\predicted";
  for (std::size_t p = 0; p < C; ++p) s += "," + std::to_string(p);
  s += ",precision\n";
  for (std::size_t a = 0; a < C; ++a) {
    s += std::to_string(a);
    for (std::size_t p = 0; p < C; ++p) s += "," + std::to_string(cm.at(a, p));
    s += "," + format_full(cm.precision(a)) + "\n";
  }
  s += "recall";
  for (std::size_t p = 0; p < C; ++p) s += "," + format_full(cm.recall(p));
  s += "," + format_full(cm.accuracy()) + "\n";
  return s;
}

inline void write_report(const RunReport& r, const std::filesystem::path& dir) {
  io::write_atomic(dir / "report.json", to_json(r).dump(2) + "\n");
  io::write_atomic(dir / "scores.csv", scores_csv(r));
  for (const auto& t : r.trials)
    io::write_atomic(dir / ("confusion_" + std::to_string(t.trial) + ".csv"), confusion_csv(t.confusion));
}

// Accepts a report.json path or the directory holding it.
inline RunReport read_report(const std::filesystem::path& path) {
  auto p = path;
  if (std::filesystem::is_directory(p)) p /= "report.json";
  if (!std::filesystem::exists(p)) throw DataError("run report not found: " + p.string());
  json j;
  try {
    j = json::parse(io::read_all(p));
  } catch (const json::exception& e) {
    throw DataError("malformed run report " + p.string() + ": " + e.what());
  }
  return report_from_json(j);
}

// --- comparison -------------------------------------------------------------

struct Comparison {
  TTestResult test;
  std::string table;
  std::string csv;  // run,trial,repeat,fold,f1
};

inline std::string format_p(double p) {
  if (p >= 0.001) return format_fixed(p, 3);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", p);
  return buf;
}

inline Comparison compare(const RunReport& a, const RunReport& b, const std::string& name_a = "A",
                          const std::string& name_b = "B") {
  if (a.trials.size() != b.trials.size() || a.k != b.k || a.repeats != b.repeats)
    throw DataError("run structure mismatch: " + std::to_string(a.trials.size()) + " trials (k=" + std::to_string(a.k) +
                    ", repeats=" + std::to_string(a.repeats) + ") vs " + std::to_string(b.trials.size()) +
                    " trials (k=" + std::to_string(b.k) + ", repeats=" + std::to_string(b.repeats) + ")");
  if (a.averaging != b.averaging)
    throw DataError("runs use different F1 averaging (" + to_string(a.averaging) + " vs " + to_string(b.averaging) + ")");
  const auto sa = a.scores(), sb = b.scores();
  Comparison c;
  c.test = welch_t(sa, sb);
  const auto& t = c.test;

  auto row = [&](const std::string& name, const RunReport& r, double m, double sd) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-12s %-12s %6zu   %s (± %s)\n", name.c_str(), r.dataset.c_str(), r.trials.size(),
                  format_fixed(m, 2).c_str(), format_fixed(sd, 2).c_str());
    return std::string(buf);
  };
  char head[128];
  std::snprintf(head, sizeof head, "%-12s %-12s %6s   %s\n", "run", "dataset", "trials",
                ("mean " + to_string(a.averaging) + " F1 (%)").c_str());
  c.table = head;
  c.table += row(name_a, a, t.mean_a, t.sd_a);
  c.table += row(name_b, b, t.mean_b, t.sd_b);
  c.table += "Welch t(" + format_fixed(t.df, 2) + ") = " + format_fixed(t.t, 2) + ", p = " + format_p(t.p) + "\n";
  c.table += "Cohen's d = " + format_fixed(t.cohen_d, 2) + " (95% CI " + format_fixed(t.ci95_low, 2) + " to " +
             format_fixed(t.ci95_high, 2) + ")\n";
  c.table +=
      "note: d = (mean_a - mean_b) / sqrt((sd_a^2 + sd_b^2) / 2). Scaling d by sqrt(n/2) gives |t| for equal n; "
      "values of that size are not Cohen's d.\n";

  c.csv = "run,trial,repeat,fold,f1\n";
  for (const auto& [name, r] : {std::pair<const std::string&, const RunReport&>{name_a, a}, {name_b, b}})
    for (const auto& tr : r.trials)
      c.csv += name + ',' + std::to_string(tr.trial) + ',' + std::to_string(tr.repeat) + ',' + std::to_string(tr.fold) +
               ',' + format_full(tr.f1(r.averaging)) + '\n';
  return c;
}

}  // namespace emospec::eval
