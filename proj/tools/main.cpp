#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "nicu/util/config.hpp"
#include "nicu/util/time.hpp"

using namespace nicu;

namespace {

void dataset_options(CLI::App* sub, corpus::DatasetConfig& d) {
  sub->add_option("--n-per-class", d.n_per_class, "Single-class clips per class")->capture_default_str();
  sub->add_option("--n-mixtures", d.n_mixtures, "Multi-class mixture clips")->capture_default_str();
  sub->add_option("--n-background", d.n_background, "Background-only clips")->capture_default_str();
  sub->add_option("--n-silent", d.n_silent, "Digital-silence clips")->capture_default_str();
  sub->add_option("--dataset-seed", d.seed, "Corpus seed")->capture_default_str();
}

// Pulls "--config FILE" out of argv and appends its entries as flags that
// were not given explicitly.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!path.empty()) args = util::merge_config(std::move(args), util::load_config(path));
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Third-octave sound monitoring: analysis, transcoding, detection and reporting"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  std::string config_note;
  app.add_option("--config", config_note, "key = value file; keys are long flag names, flags on the command line win");

  cli::AnalyzeOptions analyze;
  std::string analyze_start;
  auto* a = app.add_subcommand("analyze", "WAV (32 kHz mono) to .tob third-octave file");
  a->add_option("--in", analyze.wav_in, "Input WAV")->required();
  a->add_option("--out", analyze.tob_out, "Output .tob")->required();
  a->add_option("--start", analyze_start, "Recording start, ISO 8601 UTC (default 1970-01-01T00:00:00Z)");
  a->add_option("--queue", analyze.queue_capacity, "Frame queue capacity")->capture_default_str()->check(CLI::PositiveNumber);

  cli::SynthOptions synth;
  std::string classes;
  auto* s = app.add_subcommand("synth", "Export synthetic clips as WAV");
  s->add_option("--out", synth.out, "Output directory, or WAV file with --stream")->required();
  s->add_flag("--stream", synth.stream, "Write one stream of consecutive 10 s clips");
  s->add_option("--classes", classes, "Comma-separated classes for --stream (conversation,footsteps,oxygenator,alarm)");
  s->add_option("--seconds", synth.seconds, "Stream length")->capture_default_str();
  s->add_option("--seed", synth.seed, "Stream seed")->capture_default_str();
  s->add_option("--level-dbfs", synth.level_dbfs, "Stream RMS level")->capture_default_str();
  s->add_option("--snr-db", synth.snr_db, "Event over background level")->capture_default_str();
  dataset_options(s, synth.dataset);

  cli::TrainOptions train;
  auto* t = app.add_subcommand("train", "Train the teacher classifier on the synthetic corpus");
  t->add_option("--out", train.out, "Teacher checkpoint")->required();
  t->add_option("--log", train.log_csv, "Per-epoch CSV log");
  t->add_option("--epochs", train.teacher.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--batch", train.teacher.batch)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--lr", train.teacher.adam.lr)->capture_default_str();
  t->add_option("--seed", train.teacher.seed)->capture_default_str();
  t->add_option("--queue", train.queue_capacity, "Feature queue capacity")->capture_default_str()->check(CLI::PositiveNumber);
  dataset_options(t, train.dataset);

  cli::DistillOptions dist;
  bool hard_targets = false;
  auto* d = app.add_subcommand("distill", "Train the transcoder against a frozen teacher");
  d->add_option("--teacher", dist.teacher, "Teacher checkpoint")->required();
  d->add_option("--out", dist.out, "Transcoder checkpoint")->required();
  d->add_option("--log", dist.log_csv, "Per-epoch CSV log");
  d->add_option("--hidden", dist.distill.hidden, "Transcoder channels")->capture_default_str()->check(CLI::PositiveNumber);
  d->add_option("--epochs", dist.distill.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  d->add_option("--batch", dist.distill.batch)->capture_default_str()->check(CLI::PositiveNumber);
  d->add_option("--lr", dist.distill.adam.lr)->capture_default_str();
  d->add_option("--seed", dist.distill.seed)->capture_default_str();
  d->add_flag("--hard-targets", hard_targets, "Threshold teacher outputs at 0.5 instead of soft targets");
  d->add_option("--queue", dist.queue_capacity, "Feature queue capacity")->capture_default_str()->check(CLI::PositiveNumber);
  dataset_options(d, dist.dataset);

  cli::DetectOptions detect;
  auto* e = app.add_subcommand("detect", "Detection timeline CSV from a .tob file");
  e->add_option("--in", detect.tob_in, "Input .tob")->required();
  e->add_option("--out", detect.csv_out, "Output CSV")->required();
  e->add_option("--teacher", detect.teacher, "Teacher checkpoint");
  e->add_option("--student", detect.student, "Transcoder checkpoint");
  e->add_option("--scores", detect.external_scores, "External class scores CSV (replaces the models)");
  e->add_option("--map", detect.label_map, "Label map file (default: built-in four-class map)");
  e->add_option("--alpha", detect.alpha, "Rank compression exponent")->capture_default_str()->check(CLI::Range(1e-12, 1.0));
  e->add_option("--queue", detect.queue_capacity, "Frame queue capacity")->capture_default_str()->check(CLI::PositiveNumber);

  cli::ReportOptions rep;
  std::string rep_start;
  std::size_t rep_bins = 0;
  auto* r = app.add_subcommand("report", "Align detections with badge occupancy; CSV and SVG output");
  r->add_option("--detections", rep.detections, "Detection CSV from detect")->required();
  r->add_option("--badges", rep.badges, "Badge CSV")->required();
  r->add_option("--out-dir", rep.out_dir, "Output directory")->required();
  r->add_option("--bin-s", rep.bin_s, "Bin length in seconds")->capture_default_str();
  r->add_option("--threshold", rep.threshold, "Adults for a multi-adult bin")->capture_default_str();
  r->add_option("--start", rep_start, "First bin, ISO 8601 UTC (default: midnight before the first window)");
  r->add_option("--bins", rep_bins, "Number of bins (default: one day)");
  r->add_option("--clip", rep.clip_wav, "10 s WAV for the spectrogram comparison figure");
  r->add_option("--student", rep.student, "Transcoder checkpoint (with --clip)");

  cli::AuditOptions audit;
  auto* u = app.add_subcommand("audit", "Reconstruct audio from a .tob file (pseudoinverse and Griffin-Lim)");
  u->add_option("--in", audit.tob_in, "Input .tob")->required();
  u->add_option("--out", audit.wav_out, "Output WAV")->required();
  u->add_option("--iterations", audit.iterations)->capture_default_str()->check(CLI::PositiveNumber);
  u->add_option("--seed", audit.seed)->capture_default_str();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return cli::kUsage;
  }
  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return cli::kUsage;
  }

  try {
    if (*a) {
      if (!analyze_start.empty()) analyze.start_ms = util::parse_iso8601(analyze_start);
      cli::cmd_analyze(analyze, std::cout);
    } else if (*s) {
      for (std::size_t p = 0; p < classes.size();) {
        const auto q = std::min(classes.find(',', p), classes.size());
        if (q > p) synth.classes.push_back(classes.substr(p, q - p));
        p = q + 1;
      }
      cli::cmd_synth(synth, std::cout);
    } else if (*t) {
      return cli::cmd_train(train, std::cout);
    } else if (*d) {
      dist.distill.soft_targets = !hard_targets;
      return cli::cmd_distill(dist, std::cout);
    } else if (*e) {
      cli::cmd_detect(detect, std::cout);
    } else if (*r) {
      if (!rep_start.empty()) rep.start_ms = util::parse_iso8601(rep_start);
      if (rep_bins > 0) rep.n_bins = rep_bins;
      cli::cmd_report(rep, std::cout);
    } else if (*u) {
      cli::cmd_audit(audit, std::cout);
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return cli::kFailure;
  }
  return cli::kOk;
}
