#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "nicu/codec/tob.hpp"
#include "nicu/corpus/wav.hpp"
#include "nicu/util/bounded_queue.hpp"
#include "nicu/util/time.hpp"

namespace nicu::cli {

namespace {

constexpr std::int64_t kDayMs = 86'400'000;

corpus::WavData read_input_wav(const std::filesystem::path& path) {
  auto wav = corpus::read_wav(path);
  if (wav.sample_rate_hz != kRequiredRateHz) {
    throw std::runtime_error(path.string() + " is sampled at " + std::to_string(wav.sample_rate_hz) +
                             " Hz; resample it to 32000 Hz first (no implicit resampling is done)");
  }
  return wav;
}

std::string fixed(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Runs `produce` on its own thread feeding a bounded queue drained by
// `consume` on the calling thread. Item order is preserved.
template <typename T, typename Produce, typename Consume>
void pipeline(std::size_t capacity, Produce produce, Consume consume) {
  util::BoundedQueue<T> queue(capacity);
  std::exception_ptr failure;
  std::thread producer([&] {
    try {
      produce([&](T item) { return queue.push(std::move(item)); });
    } catch (...) {
      failure = std::current_exception();
    }
    queue.close();
  });
  try {
    while (auto item = queue.pop()) consume(std::move(*item));
  } catch (...) {
    queue.close();
    producer.join();
    throw;
  }
  producer.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<distill::ClipFeatures> featurize(const std::vector<corpus::ClipRecipe>& recipes,
                                             std::size_t capacity, const char* what, std::ostream& out) {
  out << "featurizing " << recipes.size() << ' ' << what << " clips\n" << std::flush;
  return distill::featurize_all(recipes, capacity);
}

corpus::SoundClass parse_class(const std::string& name) {
  for (auto c : corpus::kAllClasses) {
    if (corpus::class_name(c) == name) return c;
  }
  throw std::invalid_argument("unknown sound class '" + name +
                              "' (expected conversation, footsteps, oxygenator or alarm)");
}

}  // namespace

AnalyzeSummary cmd_analyze(const AnalyzeOptions& opts, std::ostream& out) {
  const auto wav = read_input_wav(opts.wav_in);
  const auto spec = dsp::FilterbankSpec::standard();
  auto writer = codec::open_writer(opts.tob_out, codec::TobHeader::for_spec(spec, static_cast<std::uint64_t>(opts.start_ms)));
  std::size_t pos = 0;
  const dsp::SampleSource source = [&](std::span<double> buf) {
    const std::size_t n = std::min(buf.size(), wav.samples.size() - pos);
    std::copy_n(wav.samples.begin() + static_cast<std::ptrdiff_t>(pos), n, buf.begin());
    pos += n;
    return n;
  };
  pipeline<dsp::ThirdOctaveFrame>(
      opts.queue_capacity,
      [&](auto push) { dsp::stream_analyze(source, spec, [&](dsp::ThirdOctaveFrame f) { push(std::move(f)); }); },
      [&](dsp::ThirdOctaveFrame f) { writer.append(f); });

  AnalyzeSummary s;
  s.frames = writer.frames_written();
  s.bytes = writer.bytes_written();
  s.payload_bytes_per_s = codec::payload_bitrate(writer.header());
  out << "frames: " << s.frames << '\n'
      << "bytes: " << s.bytes << '\n'
      << "bitrate: " << fixed("%.1f", s.payload_bytes_per_s) << " B/s\n";
  return s;
}

void cmd_synth(const SynthOptions& opts, std::ostream& out) {
  if (opts.stream) {
    if (!(opts.seconds > 0.0)) throw std::invalid_argument("synth: --seconds must be positive");
    corpus::ClipRecipe base;
    for (const auto& name : opts.classes) base.with(parse_class(name));
    base.target_rms = std::pow(10.0, opts.level_dbfs / 20.0);
    base.snr_db = opts.snr_db;
    const auto total = static_cast<std::size_t>(std::llround(opts.seconds * kRequiredRateHz));
    std::vector<double> samples;
    samples.reserve(total);
    for (std::uint64_t i = 0; samples.size() < total; ++i) {
      auto r = base;
      r.seed = opts.seed + i;
      const auto clip = corpus::synthesize(r);
      samples.insert(samples.end(), clip.samples.begin(),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(std::min(clip.samples.size(), total - samples.size())));
    }
    corpus::write_wav(opts.out, samples, kRequiredRateHz);
    out << "wrote " << opts.out.string() << " (" << fixed("%.3f", opts.seconds) << " s)\n";
    return;
  }
  const auto d = corpus::build_dataset(opts.dataset);
  std::filesystem::create_directories(opts.out);
  std::ofstream manifest(opts.out / "manifest.csv", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write " + (opts.out / "manifest.csv").string());
  manifest << "split,file,seed,classes,snr_db,target_rms\n";
  const std::pair<const char*, const std::vector<corpus::ClipRecipe>*> splits[] = {
      {"train", &d.train}, {"val", &d.val}, {"test", &d.test}};
  for (const auto& [name, recipes] : splits) {
    std::filesystem::create_directories(opts.out / name);
    for (const auto& r : *recipes) {
      const std::string file = std::string(name) + "/" + std::to_string(r.seed) + ".wav";
      corpus::write_wav(opts.out / file, corpus::synthesize(r).samples, r.sample_rate_hz);
      std::string classes;
      for (auto c : corpus::kAllClasses) {
        if (r.has(c)) classes += (classes.empty() ? "" : "+") + std::string(corpus::class_name(c));
      }
      manifest << name << ',' << file << ',' << r.seed << ',' << classes << ',' << fixed("%.6f", r.snr_db) << ','
               << fixed("%.8f", r.target_rms) << '\n';
    }
  }
  out << "wrote " << d.size() << " clips to " << opts.out.string() << '\n';
}

int cmd_train(const TrainOptions& opts, std::ostream& out) {
  const auto d = corpus::build_dataset(opts.dataset);
  const auto train = featurize(d.train, opts.queue_capacity, "training", out);
  const auto val = featurize(d.val, opts.queue_capacity, "validation", out);
  const auto r = distill::train_teacher(train, val, opts.teacher, [&](const distill::EpochLog& e) {
    out << "epoch " << e.epoch << " loss " << fixed("%.6f", e.loss) << " macro_accuracy "
        << fixed("%.4f", e.agreement) << '\n' << std::flush;
  });
  r.model.save(opts.out);
  if (!opts.log_csv.empty()) distill::write_log_csv(opts.log_csv, r.log);
  out << "final loss " << fixed("%.6f", r.log.back().loss) << '\n';
  out << "wrote " << opts.out.string() << '\n';
  if (r.log.back().loss > r.log.front().loss) {
    out << "training diverged: final loss exceeds initial loss\n";
    return kDiverged;
  }
  return kOk;
}

int cmd_distill(const DistillOptions& opts, std::ostream& out) {
  const auto teacher = distill::TeacherModel::load(opts.teacher);
  const auto d = corpus::build_dataset(opts.dataset);
  const auto train = featurize(d.train, opts.queue_capacity, "training", out);
  const auto val = featurize(d.val, opts.queue_capacity, "validation", out);
  const auto student = distill::TranscoderModel::create(opts.distill.hidden, distill::fit_band_norm(train),
                                                        teacher.norm, opts.distill.seed);
  const auto r = distill::distill_transcoder(student, teacher, train, val, opts.distill, [&](const distill::EpochLog& e) {
    out << "epoch " << e.epoch << " loss " << fixed("%.6f", e.loss) << " agreement " << fixed("%.4f", e.agreement)
        << '\n' << std::flush;
  });
  r.student.save(opts.out);
  if (!opts.log_csv.empty()) distill::write_log_csv(opts.log_csv, r.log);
  const auto baseline = distill::LinearBaseline::fit(train);
  const auto es = distill::evaluate_student(r.student, teacher, val);
  const auto eb = distill::evaluate_baseline(baseline, teacher, val);
  out << "initial loss " << fixed("%.6f", r.initial_loss) << '\n'
      << "final loss " << fixed("%.6f", r.final_loss) << '\n'
      << "held-out student bce " << fixed("%.6f", es.bce) << " agreement " << fixed("%.4f", es.agreement) << '\n'
      << "held-out linear baseline bce " << fixed("%.6f", eb.bce) << " agreement " << fixed("%.4f", eb.agreement)
      << '\n'
      << "wrote " << opts.out.string() << '\n';
  if (r.final_loss > r.initial_loss) {
    out << "distillation diverged: final loss exceeds initial loss\n";
    return kDiverged;
  }
  return kOk;
}

classify::DetectionTimeline cmd_detect(const DetectOptions& opts, std::ostream& out) {
  const auto tob = codec::read_file(opts.tob_in);
  std::optional<distill::TeacherModel> teacher;
  std::optional<distill::TranscoderModel> student;
  std::unique_ptr<classify::Scorer> scorer;
  if (!opts.external_scores.empty()) {
    scorer = std::make_unique<classify::ExternalScorer>(classify::import_external_scores(opts.external_scores));
  } else {
    if (opts.teacher.empty() || opts.student.empty()) {
      throw std::invalid_argument("detect: --teacher and --student are required without --scores");
    }
    teacher = distill::TeacherModel::load(opts.teacher);
    student = distill::TranscoderModel::load(opts.student);
    scorer = std::make_unique<classify::TranscoderScorer>(*student, *teacher);
  }
  const auto map = opts.label_map.empty() ? classify::LabelMap::defaults(scorer->class_names())
                                          : classify::LabelMap::load(opts.label_map, scorer->class_names());
  const auto& frames = tob.spectrogram.frames;
  if (frames.size() < static_cast<std::size_t>(classify::kWindowFrames)) {
    throw std::invalid_argument("detect: " + opts.tob_in.string() + " is shorter than one 10 s window");
  }
  classify::WindowDetector det(*scorer, map, tob.spectrogram.start_time_ms, {opts.alpha});
  pipeline<Eigen::VectorXf>(
      opts.queue_capacity,
      [&](auto push) {
        for (const auto& f : frames) {
          if (!push(f.band_power.cast<float>())) return;
        }
      },
      [&](Eigen::VectorXf v) { det.push(v); });
  auto timeline = det.finish();
  classify::write_timeline_csv(opts.csv_out, timeline);
  out << "windows: " << timeline.windows.size() << '\n' << "wrote " << opts.csv_out.string() << '\n';
  return timeline;
}

report::AlignmentReport cmd_report(const ReportOptions& opts, std::ostream& out) {
  const auto det = classify::read_timeline_csv(opts.detections);
  const auto badges = report::parse_badges(opts.badges);
  if (det.windows.empty()) throw std::invalid_argument("report: no detection windows in " + opts.detections.string());
  const std::int64_t first = det.windows.front().start_ms;
  const std::int64_t start =
      opts.start_ms.value_or((first >= 0 ? first / kDayMs : (first - kDayMs + 1) / kDayMs) * kDayMs);
  if (!(opts.bin_s > 0.0)) throw std::invalid_argument("report: --bin-s must be positive");
  const std::size_t n_bins = opts.n_bins.value_or(static_cast<std::size_t>(std::llround(86400.0 / opts.bin_s)));
  const auto occ = report::occupancy(badges, opts.bin_s, start, n_bins);
  const auto r = report::align(det, occ, opts.threshold);

  std::filesystem::create_directories(opts.out_dir);
  report::write_report_csv(opts.out_dir / "report.csv", occ, det, r);
  report::write_text(opts.out_dir / "timeline.svg", report::timeline_svg(det, occ, badges, opts.threshold));
  out << "bins: " << occ.counts.size() << " (" << r.n_multi << " with >= " << opts.threshold << " adults, "
      << r.n_other << " otherwise, " << occ.counts.size() - r.n_multi - r.n_other << " without detections)\n";
  if (r.multi_empty()) out << "multi-adult partition is empty\n";
  for (const auto& c : r.classes) {
    out << c.label << ": multi " << fixed("%.4f", c.mean_multi) << " other " << fixed("%.4f", c.mean_other)
        << " difference " << fixed("%.4f", c.difference) << '\n';
  }
  if (!opts.clip_wav.empty()) {
    if (opts.student.empty()) throw std::invalid_argument("report: --clip needs --student");
    const auto wav = read_input_wav(opts.clip_wav);
    const auto student = distill::TranscoderModel::load(opts.student);
    const auto tob = dsp::stream_analyze(wav.samples, dsp::FilterbankSpec::standard(), 0);
    if (tob.size() < static_cast<std::size_t>(classify::kWindowFrames)) {
      throw std::invalid_argument("report: --clip must hold at least 10 s of audio");
    }
    dsp::ThirdOctaveSpectrogram window = tob;
    window.frames.resize(static_cast<std::size_t>(classify::kWindowFrames));
    const std::span<const double> head(wav.samples.data(), static_cast<std::size_t>(10 * kRequiredRateHz));
    report::write_text(opts.out_dir / "spectrogram.svg",
                       report::spectrogram_svg(window.matrix(), student.transcode(window), mel::mel_from_waveform(head)));
  }
  out << "wrote " << opts.out_dir.string() << '\n';
  return r;
}

mel::GriffinLimResult cmd_audit(const AuditOptions& opts, std::ostream& out) {
  if (opts.iterations < 1) throw std::invalid_argument("audit: --iterations must be at least 1");
  const auto tob = codec::read_file(opts.tob_in);
  if (tob.spectrogram.empty()) throw std::invalid_argument("audit: " + opts.tob_in.string() + " holds no frames");
  const auto mag = mel::pinv_reconstruct(tob.spectrogram);
  auto r = mel::griffin_lim(mag, opts.iterations, {}, opts.seed);
  out << "iteration,consistency\n";
  for (std::size_t i = 0; i < r.consistency.size(); ++i) out << i + 1 << ',' << fixed("%.9g", r.consistency[i]) << '\n';
  corpus::write_wav(opts.wav_out, std::span<const double>(r.waveform.data(), static_cast<std::size_t>(r.waveform.size())),
                    tob.header.sample_rate_hz);
  out << "wrote " << opts.wav_out.string() << '\n';
  return r;
}

}  // namespace nicu::cli
