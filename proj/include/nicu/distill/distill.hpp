#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nicu/corpus/synth.hpp"
#include "nicu/dsp/thirdoctave.hpp"
#include "nicu/mel/melspace.hpp"
#include "nicu/nn/checkpoint.hpp"
#include "nicu/nn/network.hpp"
#include "nicu/nn/optim.hpp"

namespace nicu::distill {

// z = (log10 value - offset) / scale, applied to every entry.
struct FeatureNorm {
  double offset = 0.0;
  double scale = 1.0;

  double apply(double log_value) const { return (log_value - offset) / scale; }
  double invert(double z) const { return z * scale + offset; }
};

// Fits offset/scale to the mean and standard deviation of `values`.
FeatureNorm fit_norm(const Eigen::Ref<const Eigen::ArrayXd>& values);

// [1, 64, T] teacher input from a log-mel spectrogram.
nn::Tensor<double> teacher_input(const mel::MelSpectrogram& mel, const FeatureNorm& norm);

// Band powers [n_bands x T] as stored in a .tob file (float32).
using BandMatrix = Eigen::MatrixXf;
BandMatrix band_matrix(const dsp::ThirdOctaveSpectrogram& tob);

// [n_bands, 1, T] student input: log10 of the float32 band power, floored at
// 1e-10, then normalised. Identical whether the powers came from memory or a
// .tob file.
nn::Tensor<double> student_input(const BandMatrix& bands, const FeatureNorm& norm);

inline constexpr const char* kTeacherClassNames[] = {"Conversation", "Walk, footsteps", "Train",
                                                     "Electronic music"};

// conv 3x3 (1->8) relu maxpool 2x4, conv 3x3 (8->16) relu maxpool 2x2,
// conv 3x3 (16->16) relu, global average, dense 16->n, sigmoid.
std::vector<nn::LayerSpec> teacher_layers(int n_classes);

// Six weighted layers mapping [29, 1, T] to [64, 1, 12.5 T]:
// conv 1x3 (29->H) relu, x2, conv 1x3 relu, x2, conv 1x3 relu, x3.125,
// conv 1x3 relu, conv 1x3 relu, conv 1x1 (H->64). Channels become mel bins.
std::vector<nn::LayerSpec> transcoder_layers(int hidden, int n_bands = 29, int n_mels = 64);

struct TeacherModel {
  nn::Network<double> network;
  std::vector<std::string> class_names;
  FeatureNorm norm;

  std::size_t n_classes() const { return class_names.size(); }
  // Sigmoid scores for a log-mel clip.
  Eigen::VectorXd scores(const mel::MelSpectrogram& mel) const;
  Eigen::VectorXd scores(const nn::Tensor<double>& normalized) const;

  void save(const std::filesystem::path& path) const;
  static TeacherModel load(const std::filesystem::path& path);
};

struct TranscoderModel {
  nn::Network<double> network;
  FeatureNorm input_norm;   // third-octave log power
  FeatureNorm output_norm;  // log-mel, the teacher's input normalisation

  static TranscoderModel create(int hidden, const FeatureNorm& input_norm,
                                const FeatureNorm& output_norm, std::uint64_t seed);

  // Raw network output reshaped as teacher input [1, 64, T'].
  nn::Tensor<double> forward(const BandMatrix& bands) const;

  // Log-mel spectrogram at 10 ms hop; entries clamped to the mel floor.
  mel::MelSpectrogram transcode(const dsp::ThirdOctaveSpectrogram& tob) const;

  void save(const std::filesystem::path& path) const;
  static TranscoderModel load(const std::filesystem::path& path);
};

// Precomputed representations of one 10 s clip.
struct ClipFeatures {
  Eigen::MatrixXf mel;    // [T x 64] log10 mel power
  BandMatrix bands;       // [29 x 80] band power
  Eigen::VectorXd target; // multilabel ground truth
  std::uint64_t seed = 0;
};

ClipFeatures featurize(const std::vector<double>& samples, const Eigen::VectorXd& target,
                       std::uint64_t seed = 0);

// Synthesizes and featurizes recipes on a producer thread feeding a bounded
// queue of the given capacity; results keep recipe order.
std::vector<ClipFeatures> featurize_all(const std::vector<corpus::ClipRecipe>& recipes,
                                        std::size_t queue_capacity = 8);

mel::MelSpectrogram as_mel(const ClipFeatures& clip);

// Student input normalisation fitted to log10 band power over `clips`.
FeatureNorm fit_band_norm(const std::vector<ClipFeatures>& clips);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double agreement = 0.0;  // held-out top-1 agreement (distillation) or macro accuracy (teacher)
};

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

struct TeacherConfig {
  int epochs = 12;
  int batch = 8;
  nn::AdamConfig adam{2e-3};
  std::uint64_t seed = 7;
};

struct TeacherResult {
  TeacherModel model;
  std::vector<EpochLog> log;  // row 0 is the untrained model
};

// The corpus (train plus held_out) needs at least 100 clips containing each class.
TeacherResult train_teacher(const std::vector<ClipFeatures>& train,
                            const std::vector<ClipFeatures>& held_out, const TeacherConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

// Mean over classes of thresholded (0.5) per-class accuracy.
double macro_accuracy(const TeacherModel& teacher, const std::vector<ClipFeatures>& clips);

struct DistillConfig {
  int hidden = 32;
  int epochs = 10;
  int batch = 8;
  nn::AdamConfig adam{2e-3};
  std::uint64_t seed = 11;
  // Soft targets use the teacher's probabilities on the ground-truth mel;
  // hard targets threshold them at 0.5.
  bool soft_targets = true;
};

struct DistillResult {
  TranscoderModel student;
  std::vector<EpochLog> log;  // row 0 is the untrained student
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Teacher probabilities on each clip's ground-truth mel: the distillation targets.
std::vector<Eigen::VectorXd> teacher_targets(const TeacherModel& teacher,
                                             const std::vector<ClipFeatures>& clips);

// Trains only the student: loss = BCE(teacher(student(tob)), teacher(mel)).
// Throws std::logic_error if the teacher is not frozen.
DistillResult distill_transcoder(TranscoderModel student, const TeacherModel& teacher,
                                 const std::vector<ClipFeatures>& train,
                                 const std::vector<ClipFeatures>& held_out,
                                 const DistillConfig& cfg,
                                 const std::function<void(const EpochLog&)>& on_epoch = {});

struct Evaluation {
  double bce = 0.0;        // against teacher probabilities on ground-truth mel
  double agreement = 0.0;  // fraction of clips with equal top-1 class
};

Evaluation evaluate_student(const TranscoderModel& student, const TeacherModel& teacher,
                            const std::vector<ClipFeatures>& clips);

// Linear baseline: linear_transcode plus a per-mel-bin log offset fitted on
// training clips so that level mismatch alone does not decide the comparison.
struct LinearBaseline {
  Eigen::VectorXd offset;  // [64]

  static LinearBaseline fit(const std::vector<ClipFeatures>& train);
  mel::MelSpectrogram transcode(const BandMatrix& bands) const;
};

Evaluation evaluate_baseline(const LinearBaseline& baseline, const TeacherModel& teacher,
                             const std::vector<ClipFeatures>& clips);

// Spectrogram rebuilt from stored float32 band powers (standard profile).
dsp::ThirdOctaveSpectrogram to_spectrogram(const BandMatrix& bands);

}  // namespace nicu::distill
