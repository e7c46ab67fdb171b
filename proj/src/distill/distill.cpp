#include "nicu/distill/distill.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "nicu/util/bounded_queue.hpp"

namespace nicu::distill {

namespace {

constexpr double kBandFloor = 1e-10;

std::string exact(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const nn::Metadata& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw std::runtime_error("checkpoint: missing metadata '" + key + "'");
  double v = 0.0;
  const auto res = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (res.ec != std::errc{}) throw std::runtime_error("checkpoint: bad number for '" + key + "'");
  return v;
}

std::string require(const nn::Metadata& meta, const std::string& key, const std::string& expected) {
  const auto it = meta.find(key);
  if (it == meta.end() || it->second != expected) {
    throw std::runtime_error("checkpoint: not a " + expected + " model");
  }
  return it->second;
}

// View of a [C, 1, T] activation as [1, C, T] and back; the buffer is unchanged.
nn::Tensor<double> channels_to_rows(nn::Tensor<double> t) {
  t.shape = {1, t.shape[0], t.shape[2]};
  return t;
}
nn::Tensor<double> rows_to_channels(nn::Tensor<double> t) {
  t.shape = {t.shape[1], 1, t.shape[2]};
  return t;
}

Eigen::Index argmax(const Eigen::VectorXd& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return i;
}

double bce_value(const Eigen::VectorXd& p, const Eigen::VectorXd& t) {
  const nn::Shape s{p.size(), 1, 1};
  return nn::bce_loss(nn::Tensor<double>(s, p), nn::Tensor<double>(s, t)).loss;
}

}  // namespace

FeatureNorm fit_norm(const Eigen::Ref<const Eigen::ArrayXd>& values) {
  if (values.size() == 0) throw std::invalid_argument("fit_norm: no values");
  FeatureNorm n;
  n.offset = values.mean();
  const double var = (values - n.offset).square().mean();
  n.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return n;
}

nn::Tensor<double> teacher_input(const mel::MelSpectrogram& mel, const FeatureNorm& norm) {
  const Eigen::Index t = mel.frames();
  const Eigen::Index m = mel.data.cols();
  // data is [T x M] column-major, i.e. [M, T] row-major.
  nn::Tensor<double> x({1, m, t});
  Eigen::Map<const Eigen::VectorXd> flat(mel.data.data(), t * m);
  x.data = ((flat.array() - norm.offset) / norm.scale).matrix();
  return x;
}

BandMatrix band_matrix(const dsp::ThirdOctaveSpectrogram& tob) {
  return tob.matrix().cast<float>();
}

nn::Tensor<double> student_input(const BandMatrix& bands, const FeatureNorm& norm) {
  const Eigen::Index nb = bands.rows(), t = bands.cols();
  nn::Tensor<double> x({nb, 1, t});
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> out(x.data.data(), nb, t);
  out = ((bands.cast<double>().array().max(kBandFloor).log10() - norm.offset) / norm.scale).matrix();
  return x;
}

std::vector<nn::LayerSpec> teacher_layers(int n_classes) {
  using L = nn::LayerSpec;
  return {L::conv2d(1, 8, 3, 3, 1, 1),  L::relu(), L::maxpool2d(2, 4),
          L::conv2d(8, 16, 3, 3, 1, 1), L::relu(), L::maxpool2d(2, 2),
          L::conv2d(16, 16, 3, 3, 1, 1), L::relu(), L::avgpool_global(),
          L::dense(16, n_classes),      L::sigmoid()};
}

std::vector<nn::LayerSpec> transcoder_layers(int hidden, int n_bands, int n_mels) {
  using L = nn::LayerSpec;
  return {L::conv2d(n_bands, hidden, 1, 3, 0, 1), L::relu(), L::upsample2d(1.0, 2.0),
          L::conv2d(hidden, hidden, 1, 3, 0, 1),  L::relu(), L::upsample2d(1.0, 2.0),
          L::conv2d(hidden, hidden, 1, 3, 0, 1),  L::relu(), L::upsample2d(1.0, 3.125),
          L::conv2d(hidden, hidden, 1, 3, 0, 1),  L::relu(),
          L::conv2d(hidden, hidden, 1, 3, 0, 1),  L::relu(),
          L::conv2d(hidden, n_mels, 1, 1)};
}

// --- models ------------------------------------------------------------------

Eigen::VectorXd TeacherModel::scores(const mel::MelSpectrogram& mel) const {
  return scores(teacher_input(mel, norm));
}

Eigen::VectorXd TeacherModel::scores(const nn::Tensor<double>& normalized) const {
  return network.forward(normalized).data;
}

void TeacherModel::save(const std::filesystem::path& path) const {
  std::string classes;
  for (std::size_t i = 0; i < class_names.size(); ++i) classes += (i ? "\n" : "") + class_names[i];
  nn::save_checkpoint(path, network,
                      {{"role", "teacher"},
                       {"classes", classes},
                       {"norm_offset", exact(norm.offset)},
                       {"norm_scale", exact(norm.scale)}});
}

TeacherModel TeacherModel::load(const std::filesystem::path& path) {
  auto ck = nn::load_checkpoint(path);
  require(ck.meta, "role", "teacher");
  TeacherModel t;
  t.network = std::move(ck.network);
  std::istringstream names(ck.meta["classes"]);
  for (std::string line; std::getline(names, line);) t.class_names.push_back(line);
  t.norm = {parse_double(ck.meta, "norm_offset"), parse_double(ck.meta, "norm_scale")};
  if (t.network.output_shape({1, 64, 1000})[0] != static_cast<Eigen::Index>(t.class_names.size())) {
    throw std::runtime_error("checkpoint: class list does not match teacher output");
  }
  return t;
}

TranscoderModel TranscoderModel::create(int hidden, const FeatureNorm& input_norm,
                                        const FeatureNorm& output_norm, std::uint64_t seed) {
  return {nn::Network<double>::build(transcoder_layers(hidden), seed), input_norm, output_norm};
}

nn::Tensor<double> TranscoderModel::forward(const BandMatrix& bands) const {
  if (bands.cols() == 0) throw std::invalid_argument("transcode: empty input");
  return channels_to_rows(network.forward(student_input(bands, input_norm)));
}

mel::MelSpectrogram TranscoderModel::transcode(const dsp::ThirdOctaveSpectrogram& tob) const {
  const nn::Tensor<double> y = forward(band_matrix(tob));
  mel::MelSpectrogram out;
  const Eigen::Index m = y.shape[1], t = y.shape[2];
  out.data.resize(t, m);
  Eigen::Map<Eigen::VectorXd>(out.data.data(), t * m) =
      (y.data.array() * output_norm.scale + output_norm.offset).max(out.spec.log_floor).matrix();
  return out;
}

void TranscoderModel::save(const std::filesystem::path& path) const {
  nn::save_checkpoint(path, network,
                      {{"role", "transcoder"},
                       {"in_offset", exact(input_norm.offset)},
                       {"in_scale", exact(input_norm.scale)},
                       {"out_offset", exact(output_norm.offset)},
                       {"out_scale", exact(output_norm.scale)}});
}

TranscoderModel TranscoderModel::load(const std::filesystem::path& path) {
  auto ck = nn::load_checkpoint(path);
  require(ck.meta, "role", "transcoder");
  return {std::move(ck.network),
          {parse_double(ck.meta, "in_offset"), parse_double(ck.meta, "in_scale")},
          {parse_double(ck.meta, "out_offset"), parse_double(ck.meta, "out_scale")}};
}

// --- features ------------------------------------------------------------------

ClipFeatures featurize(const std::vector<double>& samples, const Eigen::VectorXd& target,
                       std::uint64_t seed) {
  ClipFeatures f;
  f.bands = band_matrix(dsp::stream_analyze(samples, dsp::FilterbankSpec::standard(), 0));
  f.mel = mel::mel_from_waveform(samples).data.cast<float>();
  f.target = target;
  f.seed = seed;
  return f;
}

std::vector<ClipFeatures> featurize_all(const std::vector<corpus::ClipRecipe>& recipes,
                                        std::size_t queue_capacity) {
  util::BoundedQueue<ClipFeatures> queue(queue_capacity);
  std::exception_ptr failure;
  std::thread producer([&] {
    try {
      for (const auto& r : recipes) {
        const auto clip = corpus::synthesize(r);
        if (!queue.push(featurize(clip.samples, clip.target, r.seed))) break;
      }
    } catch (...) {
      failure = std::current_exception();
    }
    queue.close();
  });
  std::vector<ClipFeatures> out;
  out.reserve(recipes.size());
  while (auto item = queue.pop()) out.push_back(std::move(*item));
  producer.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

mel::MelSpectrogram as_mel(const ClipFeatures& clip) {
  mel::MelSpectrogram m;
  m.data = clip.mel.cast<double>();
  return m;
}

FeatureNorm fit_band_norm(const std::vector<ClipFeatures>& clips) {
  Eigen::Index total = 0;
  for (const auto& c : clips) total += c.bands.size();
  Eigen::ArrayXd all(total);
  Eigen::Index at = 0;
  for (const auto& c : clips) {
    all.segment(at, c.bands.size()) =
        Eigen::Map<const Eigen::ArrayXf>(c.bands.data(), c.bands.size()).cast<double>().max(kBandFloor).log10();
    at += c.bands.size();
  }
  return fit_norm(all);
}

dsp::ThirdOctaveSpectrogram to_spectrogram(const BandMatrix& bands) {
  dsp::ThirdOctaveSpectrogram tob;
  tob.spec = dsp::FilterbankSpec::standard();
  if (static_cast<std::size_t>(bands.rows()) != tob.spec.n_bands()) {
    throw std::invalid_argument("to_spectrogram: band count mismatch");
  }
  for (Eigen::Index t = 0; t < bands.cols(); ++t) {
    tob.frames.push_back({bands.col(t).cast<double>(), static_cast<std::int64_t>(t)});
  }
  return tob;
}

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "epoch,loss,agreement\n";
  char line[96];
  for (const auto& row : log) {
    std::snprintf(line, sizeof line, "%d,%.9f,%.6f\n", row.epoch, row.loss, row.agreement);
    out << line;
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// --- teacher ---------------------------------------------------------------------

double macro_accuracy(const TeacherModel& teacher, const std::vector<ClipFeatures>& clips) {
  if (clips.empty()) return 0.0;
  Eigen::VectorXd correct = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(teacher.n_classes()));
  for (const auto& c : clips) {
    const Eigen::VectorXd s = teacher.scores(as_mel(c));
    for (Eigen::Index k = 0; k < s.size(); ++k) correct[k] += ((s[k] > 0.5) == (c.target[k] > 0.5));
  }
  return correct.mean() / static_cast<double>(clips.size());
}

TeacherResult train_teacher(const std::vector<ClipFeatures>& train,
                            const std::vector<ClipFeatures>& held_out, const TeacherConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch) {
  constexpr int n_classes = 4;
  Eigen::VectorXd per_class = Eigen::VectorXd::Zero(n_classes);
  for (const auto* split : {&train, &held_out}) {
    for (const auto& c : *split) {
      if (c.target.size() != n_classes) throw std::invalid_argument("train_teacher: target size");
      per_class += (c.target.array() > 0.5).cast<double>().matrix();
    }
  }
  if (per_class.minCoeff() < 100) {
    throw std::invalid_argument("train_teacher: corpus needs at least 100 clips of every class");
  }
  if (cfg.epochs < 1 || cfg.batch < 1) throw std::invalid_argument("train_teacher: bad schedule");

  TeacherResult result;
  TeacherModel& model = result.model;
  model.class_names.assign(std::begin(kTeacherClassNames), std::end(kTeacherClassNames));
  {
    Eigen::Index total = 0;
    for (const auto& c : train) total += c.mel.size();
    Eigen::ArrayXd all(total);
    Eigen::Index at = 0;
    for (const auto& c : train) {
      all.segment(at, c.mel.size()) = Eigen::Map<const Eigen::ArrayXf>(c.mel.data(), c.mel.size()).cast<double>();
      at += c.mel.size();
    }
    model.norm = fit_norm(all);
  }
  model.network = nn::Network<double>::build(teacher_layers(n_classes), cfg.seed);

  std::vector<nn::Tensor<double>> inputs;
  inputs.reserve(train.size());
  for (const auto& c : train) inputs.push_back(teacher_input(as_mel(c), model.norm));

  auto emit = [&](EpochLog row) {
    row.agreement = macro_accuracy(model, held_out);
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  };
  {
    double loss = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) loss += bce_value(model.scores(inputs[i]), train[i].target);
    emit({0, loss / static_cast<double>(train.size()), 0.0});
  }

  nn::Adam<double> opt(cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      nn::Gradients<double> acc = model.network.zero_gradients();
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t i = order[j];
        nn::Tape<double> tape;
        const auto p = model.network.forward(inputs[i], tape);
        const auto loss = nn::bce_loss(p, nn::Tensor<double>(p.shape, train[i].target));
        epoch_loss += loss.loss;
        model.network.backward(tape, loss.grad, &acc);
      }
      acc.scale(1.0 / static_cast<double>(stop - start));
      opt.step(model.network, acc);
    }
    emit({epoch, epoch_loss / static_cast<double>(train.size()), 0.0});
  }
  model.network.freeze();
  return result;
}

// --- distillation ------------------------------------------------------------------

std::vector<Eigen::VectorXd> teacher_targets(const TeacherModel& teacher,
                                             const std::vector<ClipFeatures>& clips) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(teacher.scores(as_mel(c)));
  return out;
}

Evaluation evaluate_student(const TranscoderModel& student, const TeacherModel& teacher,
                            const std::vector<ClipFeatures>& clips) {
  Evaluation e;
  if (clips.empty()) return e;
  for (const auto& c : clips) {
    const Eigen::VectorXd t = teacher.scores(as_mel(c));
    const Eigen::VectorXd p = teacher.scores(student.forward(c.bands));
    e.bce += bce_value(p, t);
    e.agreement += argmax(p) == argmax(t);
  }
  e.bce /= static_cast<double>(clips.size());
  e.agreement /= static_cast<double>(clips.size());
  return e;
}

DistillResult distill_transcoder(TranscoderModel student, const TeacherModel& teacher,
                                 const std::vector<ClipFeatures>& train,
                                 const std::vector<ClipFeatures>& held_out,
                                 const DistillConfig& cfg,
                                 const std::function<void(const EpochLog&)>& on_epoch) {
  if (!teacher.network.frozen()) {
    throw std::logic_error("distill_transcoder: teacher parameters must be frozen");
  }
  if (train.empty()) throw std::invalid_argument("distill_transcoder: no training clips");
  if (cfg.epochs < 1 || cfg.batch < 1) throw std::invalid_argument("distill_transcoder: bad schedule");

  std::vector<Eigen::VectorXd> targets = teacher_targets(teacher, train);
  if (!cfg.soft_targets) {
    for (auto& t : targets) t = (t.array() > 0.5).cast<double>().matrix();
  }
  std::vector<nn::Tensor<double>> inputs;
  inputs.reserve(train.size());
  for (const auto& c : train) inputs.push_back(student_input(c.bands, student.input_norm));

  auto mean_loss = [&]() {
    double loss = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto y = channels_to_rows(student.network.forward(inputs[i]));
      loss += bce_value(teacher.scores(y), targets[i]);
    }
    return loss / static_cast<double>(train.size());
  };

  DistillResult result;
  auto emit = [&](int epoch, double loss) {
    const EpochLog row{epoch, loss, evaluate_student(student, teacher, held_out).agreement};
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  };
  result.initial_loss = mean_loss();
  emit(0, result.initial_loss);

  nn::Adam<double> opt(cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      nn::Gradients<double> acc = student.network.zero_gradients();
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t i = order[j];
        nn::Tape<double> ts, tt;
        const auto y = channels_to_rows(student.network.forward(inputs[i], ts));
        const auto p = teacher.network.forward(y, tt);
        const auto loss = nn::bce_loss(p, nn::Tensor<double>(p.shape, targets[i]));
        epoch_loss += loss.loss;
        const auto dy = teacher.network.backward(tt, loss.grad, nullptr);
        student.network.backward(ts, rows_to_channels(dy), &acc);
      }
      acc.scale(1.0 / static_cast<double>(stop - start));
      opt.step(student.network, acc);
    }
    emit(epoch, epoch_loss / static_cast<double>(train.size()));
  }
  result.final_loss = mean_loss();
  result.student = std::move(student);
  return result;
}

// --- linear baseline -------------------------------------------------------------

LinearBaseline LinearBaseline::fit(const std::vector<ClipFeatures>& train) {
  const mel::MelSpec spec;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(spec.n_mels);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(spec.n_mels);
  for (const auto& c : train) {
    const auto lin = mel::linear_transcode(to_spectrogram(c.bands), spec);
    const Eigen::Index t = std::min<Eigen::Index>(lin.frames(), c.mel.rows());
    for (Eigen::Index m = 0; m < spec.n_mels; ++m) {
      for (Eigen::Index j = 0; j < t; ++j) {
        if (c.mel(j, m) <= spec.log_floor) continue;
        sum[m] += c.mel(j, m) - lin.data(j, m);
        count[m] += 1.0;
      }
    }
  }
  LinearBaseline b;
  b.offset = (count.array() > 0).select(sum.array() / count.array().max(1.0), 0.0).matrix();
  return b;
}

mel::MelSpectrogram LinearBaseline::transcode(const BandMatrix& bands) const {
  auto out = mel::linear_transcode(to_spectrogram(bands));
  out.data.rowwise() += offset.transpose();
  out.data = out.data.cwiseMax(out.spec.log_floor);
  return out;
}

Evaluation evaluate_baseline(const LinearBaseline& baseline, const TeacherModel& teacher,
                             const std::vector<ClipFeatures>& clips) {
  Evaluation e;
  if (clips.empty()) return e;
  for (const auto& c : clips) {
    const Eigen::VectorXd t = teacher.scores(as_mel(c));
    const Eigen::VectorXd p = teacher.scores(baseline.transcode(c.bands));
    e.bce += bce_value(p, t);
    e.agreement += argmax(p) == argmax(t);
  }
  e.bce /= static_cast<double>(clips.size());
  e.agreement /= static_cast<double>(clips.size());
  return e;
}

}  // namespace nicu::distill
