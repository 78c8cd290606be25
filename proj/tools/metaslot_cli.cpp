// metaslot: train, evaluate, gradcheck, export masks and compare aggregators.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metaslot/compare.hpp"
#include "metaslot/config.hpp"
#include "metaslot/export.hpp"
#include "metaslot/gradcheck.hpp"
#include "metaslot/model.hpp"
#include "metaslot/trainer.hpp"

namespace fs = std::filesystem;
using namespace metaslot;

namespace {

// METASLOT_LOG=quiet|info|debug
int log_level() {
  static const int level = [] {
    const char* env = std::getenv("METASLOT_LOG");
    const std::string v = env ? env : "info";
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
  }();
  return level;
}

void log(int level, const std::string& msg) {
  if (log_level() >= level) std::cerr << msg << '\n';
}

TrainConfig config_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  TrainConfig config = path.empty() ? TrainConfig{} : load_config(path);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + s);
    apply_setting(config, s.substr(0, eq), s.substr(eq + 1));
  }
  config.validate();
  return config;
}

// "N" uses the config's eval seed, "N@SEED" an explicit one.
std::vector<SyntheticScene> scenes_from_spec(const TrainConfig& config, const std::string& spec) {
  if (spec.empty()) return eval_split(config, config.eval_scenes);
  const auto at = spec.find('@');
  const std::size_t n = std::stoul(spec.substr(0, at));
  const std::uint64_t seed = at == std::string::npos ? config.eval_seed : std::stoull(spec.substr(at + 1));
  return generate_split(seed, config.scene, n);
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TrainResult run_training(const TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const auto every = std::max<std::int64_t>(1, config.steps / 20);
  auto result = train(config, [&](const StepRecord& r) {
    if (r.step % every == 0 || r.step == 1) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log(1, "[" + to_string(config.aggregator) + " seed " + std::to_string(config.seed) + "] step " +
                 std::to_string(r.step) + "/" + std::to_string(config.steps) + " loss " + fmt(r.loss, 6) +
                 " (" + fmt(secs, 1) + "s)");
    }
  });
  return result;
}

void save_run(const fs::path& out, const TrainResult& result) {
  fs::create_directories(out);
  save_checkpoint(out / "checkpoint.bin", result.checkpoint);
  write_text(out / "config.cfg", format_config(result.checkpoint.config));
  std::ostringstream report;
  write_report(report, result.report);
  write_text(out / "report.jsonl", report.str());
  std::ostringstream history;
  history << "step,fg_ari,mbo,count_error\n";
  for (const auto& h : result.history) {
    history << h.step << ',' << fmt(h.fg_ari, 6) << ',' << fmt(h.mbo, 6) << ',' << fmt(h.count_error, 6) << '\n';
  }
  write_text(out / "history.csv", history.str());
  std::ostringstream losses;
  for (std::size_t i = 0; i < result.losses.size(); ++i) losses << i + 1 << ',' << result.losses[i] << '\n';
  write_text(out / "losses.csv", losses.str());
}

void print_summary(const MetricsReport& r) {
  std::cout << "ARI " << fmt(r.ari.mean) << "  FG-ARI " << fmt(r.fg_ari.mean) << "  mBO " << fmt(r.mbo.mean)
            << "  mIoU " << fmt(r.miou.mean) << "  active " << fmt(r.mean_active_count, 2) << "  |K-M| "
            << fmt(r.mean_count_error, 3) << '\n';
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::vector<std::string>& sets, const std::string& out) {
  auto config = config_with_overrides(config_path, sets);
  if (seed) config.seed = *seed;
  auto result = run_training(config);
  save_run(out, result);
  print_summary(result.report);
  log(1, "wrote " + (fs::path(out) / "checkpoint.bin").string());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& scenes, const std::string& out) {
  const auto ckpt = load_checkpoint(fs::path(ckpt_path));
  const auto split = scenes_from_spec(ckpt.config, scenes);
  const auto report = evaluate(ckpt.config, ckpt.model, split);
  if (out.empty()) {
    write_report(std::cout, report);
  } else {
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot write " + out);
    write_report(os, report);
    print_summary(report);
  }
  return 0;
}

int cmd_gradcheck(double tolerance) {
  const auto checks = default_gradchecks();
  const auto results = run_gradchecks(checks, tolerance);
  int failed = 0;
  for (const auto& r : results) {
    char line[256];
    std::snprintf(line, sizeof line, "%-4s %-28s max_rel_err %.3e  %s", r.passed ? "ok" : "FAIL", r.name.c_str(),
                  r.max_rel_error, r.detail.c_str());
    std::cout << line << '\n';
    failed += r.passed ? 0 : 1;
  }
  std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

int cmd_export(const std::string& ckpt_path, const std::string& scenes, const std::string& out) {
  const auto ckpt = load_checkpoint(fs::path(ckpt_path));
  const auto split = scenes_from_spec(ckpt.config, scenes.empty() ? "16" : scenes);
  const auto files = export_masks(ckpt.config, ckpt.model, split, out);
  log(1, "exported " + std::to_string(files.size()) + " scenes to " + out);
  return 0;
}

int cmd_compare(const std::vector<std::string>& configs, const std::vector<std::uint64_t>& seeds,
                const std::vector<std::string>& sets, const std::string& out) {
  std::vector<ComparisonRow> rows;
  for (const auto& path : configs) {
    ComparisonRow row{fs::path(path).stem().string(), {}, 0.0};
    for (auto seed : seeds) {
      auto config = config_with_overrides(path, sets);
      config.seed = seed;
      const std::clock_t c0 = std::clock();
      auto result = run_training(config);
      row.cpu_seconds += static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
      if (!out.empty()) save_run(fs::path(out) / row.name / ("seed" + std::to_string(seed)), result);
      row.reports.push_back(result.report);
    }
    log(1, row.name + ": " + fmt(row.cpu_seconds / 60.0, 2) + " CPU-min over " + std::to_string(seeds.size()) + " seeds");
    rows.push_back(std::move(row));
  }
  const auto table = comparison_table(rows);
  std::cout << table;
  if (!out.empty()) write_text(fs::path(out) / "comparison.md", table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MetaSlot laboratory"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, out, scenes;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  double tolerance = 1e-4;
  std::vector<std::string> configs;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  train_cmd->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", seed, "overrides train.seed");
  train_cmd->add_option("--set", sets, "extra key=value overrides");
  train_cmd->add_option("--out", out, "output directory")->default_val("run");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--scenes", scenes, "N or N@SEED; default is the config's held-out split");
  eval_cmd->add_option("--out", out, "write the JSONL report here instead of stdout");

  auto* grad_cmd = app.add_subcommand("gradcheck", "run the finite-difference and path-zeroing checks");
  grad_cmd->add_option("--tolerance", tolerance)->default_val(1e-4);

  auto* export_cmd = app.add_subcommand("export-masks", "write label maps and sidecars");
  export_cmd->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--out", out)->required();
  export_cmd->add_option("--scenes", scenes, "N or N@SEED (default 16)");

  auto* compare_cmd = app.add_subcommand("compare", "train several configs over seeds and tabulate");
  compare_cmd->add_option("--configs", configs)->required()->delimiter(',');
  compare_cmd->add_option("--seeds", seeds)->delimiter(',');
  compare_cmd->add_option("--set", sets, "overrides applied to every config");
  compare_cmd->add_option("--out", out, "directory for runs and comparison.md");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config_path, seed, sets, out);
    if (*eval_cmd) return cmd_eval(ckpt_path, scenes, out);
    if (*grad_cmd) return cmd_gradcheck(tolerance);
    if (*export_cmd) return cmd_export(ckpt_path, scenes, out);
    if (*compare_cmd) return cmd_compare(configs, seeds, sets, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
