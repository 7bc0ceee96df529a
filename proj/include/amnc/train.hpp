#pragma once

// Adam and the label-free training loop. The loop only ever opens .mvfp
// feature files; it has no code path that reads masks.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "amnc/mncutter.hpp"

namespace amnc {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Tensor<float>> first;
  std::vector<Tensor<float>> second;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update of every parameter; `grads` is aligned with
/// `params`. Moments are created on the first call.
void adam_step(ParameterSet<float>& params, const std::vector<Tensor<float>>& grads, AdamState& state,
               const AdamConfig& cfg);

struct TrainConfig {
  std::uint32_t clusters = 10;  // k
  std::uint32_t blocks = 3;     // sigma
  std::uint32_t levels = 0;     // B; 0 = take from the data
  std::uint32_t heads = 4;
  AdamConfig adam;
  std::uint32_t batch = 4;
  std::uint32_t epochs = 5;
  std::uint64_t seed = 0;
  std::filesystem::path data_dir;
  std::filesystem::path checkpoint;  // empty = do not write

  /// Throws ConfigError on invalid values.
  void validate() const;
};

/// Non-finite loss; the message carries tightness / degree diagnostics.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  CutterConfig model;
  ParameterSet<float> params;
  std::vector<double> losses;  // mean batch loss per step
};

/// Sorted .mvfp files directly inside `dir`.
std::vector<std::filesystem::path> list_pyramids(const std::filesystem::path& dir);

/// Epochs x shuffled batches of cutter_forward -> ncut_loss -> backward ->
/// adam_step. Batch items run on independent tapes; gradients are summed in
/// batch order and averaged. Logs one line per step to `log` when given.
TrainResult train(const TrainConfig& cfg, std::ostream* log = nullptr);

/// Training on already-loaded frames (same loop as train()).
TrainResult train_frames(const TrainConfig& cfg, const std::vector<FeaturePyramid>& frames,
                         std::ostream* log = nullptr);

}  // namespace amnc
