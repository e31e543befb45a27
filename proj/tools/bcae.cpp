// bcae: train, analyze and sweep two-user broadcast autoencoders, and
// reproduce the reference figures.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bcae/analysis.hpp"
#include "bcae/autoencoder.hpp"
#include "bcae/errors.hpp"
#include "bcae/report.hpp"
#include "bcae/reproduce.hpp"
#include "bcae/sweep.hpp"

namespace fs = std::filesystem;
using namespace bcae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Shared {
  unsigned k1 = 1;
  unsigned k2 = 1;
  double snr1_db = 5.0;
  double snr2_db = 30.0;
  std::uint64_t steps = 20000;
  std::size_t batch = 1000;
  double lr = 0.001;
  std::uint64_t seed = 0;
  std::string arch = "table1";
  std::string out_dir = ".";
  unsigned jobs = 1;
  CLI::Option* seed_opt = nullptr;

  ArchSpec arch_spec() const { return ArchSpec::preset(parse_arch_preset(arch), k1, k2); }
  ChannelConfig channel() const { return ChannelConfig::make(snr1_db, snr2_db); }
  TrainConfig train_config() const {
    TrainConfig t;
    t.steps = steps;
    t.batch_size = batch;
    t.learning_rate = lr;
    t.seed = seed;
    t.validate();
    return t;
  }
  fs::path out(const std::string& name) const { return fs::path(out_dir) / name; }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomically(path, [&](std::ostream& o) { o << text; });
}

template <class Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ostringstream s;
  fn(s);
  write_text(path, s.str());
}

void write_history(const fs::path& path, const TrainedModel& m) {
  write_with(path, [&](std::ostream& o) {
    o << "step,loss\n";
    for (const auto& h : m.history) o << h.step << ',' << format_double(h.loss) << '\n';
  });
}

void write_model_file(const fs::path& path, const TrainedModel& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_model(m, path);
}

// Report, constellation CSV, plot CSV and SVG for one model.
void write_analysis(const fs::path& dir, const TrainedModel& m, const AnalysisReport& r, const std::string& title) {
  const auto c = extract_constellation(m);
  write_text(dir / "report.json", report_json(r, m).dump(2) + "\n");
  write_with(dir / "constellation.csv", [&](std::ostream& o) { write_constellation_csv(o, c); });
  write_with(dir / "plot.csv", [&](std::ostream& o) { write_plot_csv(o, c); });
  write_with(dir / "constellation.svg", [&](std::ostream& o) { write_constellation_svg(o, c, title); });
}

int cmd_train(const Shared& sh, unsigned restarts) {
  const auto arch = sh.arch_spec();
  const auto channel = sh.channel();
  const auto cfg = sh.train_config();
  const auto result = train_with_restarts(arch, channel, cfg, {restarts, 0, sh.jobs});
  const auto& m = result.model;
  const auto ckpt = sh.out("model.ckpt");
  const auto hist = sh.out("history.csv");
  write_model_file(ckpt, m);
  write_history(hist, m);
  if (restarts > 1)
    std::cout << "restarts: " << restarts << ", chosen seed " << m.train.seed << " (screen loss "
              << format_double(result.candidates[result.chosen].screen_loss) << ")\n";
  std::cout << "final loss: " << format_double(m.history.back().loss) << "\n"
            << "checkpoint: " << ckpt.string() << "\n"
            << "history: " << hist.string() << "\n";
  return kExitOk;
}

int cmd_analyze(const Shared& sh, const std::string& model_path, std::uint64_t trials) {
  const auto m = load_model(model_path);
  const auto r = analyze(m, trials, sh.seed, sh.jobs);
  write_analysis(sh.out_dir, m, r, fs::path(model_path).filename().string());
  std::cout << report_json(r, m).dump(2) << "\n";
  return kExitOk;
}

int cmd_sweep(const Shared& sh, double from, double to, double step, unsigned repeats, unsigned restarts) {
  SweepConfig cfg;
  cfg.arch = sh.arch_spec();
  cfg.snr1_db = sh.snr1_db;
  cfg.snr2_db = snr_grid(from, to, step);
  cfg.repeats = repeats;
  cfg.train = sh.train_config();
  cfg.restarts = restarts;
  cfg.jobs = sh.jobs;
  const auto points = power_inversion_sweep(cfg);
  const auto path = sh.out("sweep.csv");
  write_with(path, [&](std::ostream& o) { write_sweep_csv(o, points); });
  std::size_t ok = 0;
  for (const auto& p : points) {
    ok += p.ok();
    for (const auto& r : p.runs)
      if (!r.ok) std::cerr << "snr2_db=" << p.snr2_db << " seed " << r.seed << " failed: " << r.error << "\n";
  }
  write_sweep_csv(std::cout, points);
  std::cout << "sweep: " << path.string() << "\n";
  // Succeeds when at least 80% of the points have a usable run.
  return ok * 5 >= points.size() * 4 ? kExitOk : kExitRuntime;
}

nlohmann::json ser_json(const SerEstimate& e) {
  return {{"ser1", e.ser1},
          {"ser2", e.ser2},
          {"trials", e.trials},
          {"half_width_95", {{"user1", e.half_width1}, {"user2", e.half_width2}}}};
}

int cmd_ser(const Shared& sh, const std::string& model_path, std::optional<double> baseline_fraction,
            std::uint64_t trials) {
  nlohmann::json j;
  if (baseline_fraction) {
    const auto arch = sh.arch_spec();
    const auto channel = sh.channel();
    const auto c = baseline_superposition(arch, *baseline_fraction);
    const auto oracle = baseline_ser_oracle(arch, *baseline_fraction, channel);
    j["baseline"] = {{"power_fraction_user1", *baseline_fraction},
                     {"k1", arch.k1},
                     {"k2", arch.k2},
                     {"snr1_db", channel.snr1_db},
                     {"snr2_db", channel.snr2_db}};
    j["ser"] = ser_json(simulate_constellation_ser(c, channel, trials, sh.seed, sh.jobs));
    j["oracle"] = {{"ser1", oracle.ser1}, {"ser2", oracle.ser2}};
  } else {
    const auto m = load_model(model_path);
    j["ser"] = ser_json(estimate_ser(m, m.channel, trials, sh.seed, sh.jobs));
    j["config"] = config_json(m);
  }
  j["seed"] = sh.seed;
  write_text(sh.out("ser.json"), j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_reproduce(const Shared& sh, std::vector<std::string> ids, unsigned restarts, std::uint64_t trials) {
  if (ids.size() == 1 && ids[0] == "all") ids.assign(std::begin(kFigureIds), std::end(kFigureIds));
  ReproduceOptions opts;
  opts.train = sh.train_config();
  opts.train.seed = sh.seed_opt->count() > 0 ? sh.seed : kPinnedBaseSeed;
  opts.restarts = restarts;
  opts.ser_trials = trials;
  opts.jobs = sh.jobs;
  const auto figures = reproduce(ids, opts);

  std::string verdicts;
  for (const auto& f : figures) {
    const fs::path dir = sh.out(f.id);
    for (std::size_t i = 0; i < f.runs.size(); ++i) {
      const auto& r = f.runs[i];
      const fs::path run_dir = dir / ("seed" + std::to_string(r.model.train.seed));
      write_model_file(run_dir / "model.ckpt", r.model);
      write_history(run_dir / "history.csv", r.model);
      write_analysis(run_dir, r.model, r.report, f.id + " seed " + std::to_string(r.model.train.seed));
    }
    if (!f.sweep.empty()) write_with(dir / "sweep.csv", [&](std::ostream& o) { write_sweep_csv(o, f.sweep); });
    std::string lines;
    for (const auto& v : f.verdicts) lines += verdict_line(v) + "\n";
    write_text(dir / "verdicts.txt", lines);
    std::cout << lines << std::flush;
    verdicts += lines;
  }
  write_text(sh.out("verdicts.txt"), verdicts);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-user autoencoder for the degraded AWGN broadcast channel"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value file; command-line flags take precedence");

  Shared sh;
  app.add_option("--k1", sh.k1, "bits for user 1")->capture_default_str();
  app.add_option("--k2", sh.k2, "bits for user 2")->capture_default_str();
  app.add_option("--snr1-db", sh.snr1_db, "user-1 SNR in dB")->capture_default_str();
  app.add_option("--snr2-db", sh.snr2_db, "user-2 SNR in dB")->capture_default_str();
  app.add_option("--steps", sh.steps, "training steps")->capture_default_str();
  app.add_option("--batch", sh.batch, "batch size")->capture_default_str();
  app.add_option("--lr", sh.lr, "Adam learning rate")->capture_default_str();
  sh.seed_opt = app.add_option("--seed", sh.seed, "random seed")->capture_default_str();
  app.add_option("--arch", sh.arch, "decoder preset")->check(CLI::IsMember({"table1", "table2"}))->capture_default_str();
  app.add_option("--out-dir", sh.out_dir, "output directory")->capture_default_str();
  app.add_option("--jobs", sh.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  unsigned train_restarts = 1;
  auto* train_cmd = app.add_subcommand("train", "train a model; writes model.ckpt and history.csv");
  train_cmd->add_option("--restarts", train_restarts, "screened restarts (1 = plain training)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string model_path;
  std::uint64_t analyze_trials = kReproduceSerTrials;
  auto* analyze_cmd = app.add_subcommand("analyze", "analyze a checkpoint; writes report.json and plot data");
  analyze_cmd->add_option("--model", model_path, "checkpoint path")->required();
  analyze_cmd->add_option("--trials", analyze_trials, "Monte-Carlo SER trials (0 skips SER)")->capture_default_str();

  double from = 10.0, to = 30.0, step = 5.0;
  unsigned repeats = 3, sweep_restarts = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "power-inversion sweep over snr2; writes sweep.csv");
  sweep_cmd->add_option("--snr2-from", from, "first snr2 in dB")->capture_default_str();
  sweep_cmd->add_option("--snr2-to", to, "last snr2 in dB")->capture_default_str();
  sweep_cmd->add_option("--snr2-step", step, "snr2 step in dB")->capture_default_str();
  sweep_cmd->add_option("--repeats", repeats, "seeds per point")->check(CLI::PositiveNumber)->capture_default_str();
  sweep_cmd->add_option("--restarts", sweep_restarts, "screened restarts per run")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string ser_model;
  std::optional<double> baseline_fraction;
  std::uint64_t ser_trials = 1000000;
  auto* ser_cmd = app.add_subcommand("ser", "Monte-Carlo SER of a checkpoint or of the superposition baseline");
  auto* ser_model_opt = ser_cmd->add_option("--model", ser_model, "checkpoint path");
  auto* baseline_opt =
      ser_cmd->add_option("--baseline-fraction", baseline_fraction, "user-1 power fraction of the baseline")
          ->check(CLI::Range(0.0, 1.0));
  ser_model_opt->excludes(baseline_opt);
  ser_cmd->add_option("--trials", ser_trials, "Monte-Carlo trials")->capture_default_str();

  std::vector<std::string> figure_ids;
  unsigned reproduce_restarts = kReproduceRestarts;
  std::uint64_t reproduce_trials = kReproduceSerTrials;
  auto* reproduce_cmd = app.add_subcommand("reproduce", "run a figure preset with pinned seeds and print verdicts");
  reproduce_cmd->add_option("figure", figure_ids, "fig3 fig4 fig5 fig6 fig7, or all")->required();
  reproduce_cmd->add_option("--restarts", reproduce_restarts, "screened restarts per run")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  reproduce_cmd->add_option("--trials", reproduce_trials, "Monte-Carlo SER trials per run")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(sh, train_restarts);
    if (*analyze_cmd) return cmd_analyze(sh, model_path, analyze_trials);
    if (*sweep_cmd) return cmd_sweep(sh, from, to, step, repeats, sweep_restarts);
    if (*ser_cmd) {
      if (!baseline_fraction && ser_model.empty()) throw ConfigError("ser: give --model or --baseline-fraction");
      return cmd_ser(sh, ser_model, baseline_fraction, ser_trials);
    }
    if (*reproduce_cmd) {
      for (const auto& id : figure_ids)
        if (!is_figure_id(id) && !(id == "all" && figure_ids.size() == 1))
          throw ConfigError("reproduce: unknown figure id '" + id + "'");
      return cmd_reproduce(sh, figure_ids, reproduce_restarts, reproduce_trials);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
