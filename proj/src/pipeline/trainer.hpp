#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "pipeline/dataset.hpp"

namespace aid::pipeline {

struct TrainProgress {
  std::size_t step = 0, total = 0;
  double loss = 0;         // batch mean at this step
  double smoothed = 0;     // mean over the last log window
  double grad_norm = 0;    // pre-clip
  double seconds = 0;      // wall time since start
};

struct TrainOptions {
  std::filesystem::path checkpoint;  // written at start, every checkpoint_every steps, and at the end
  std::function<void(const TrainProgress&)> on_log;
};

struct TrainResult {
  std::vector<double> losses;  // one per step
  double first_window = 0;     // mean loss over the first window
  double last_window = 0;      // mean loss over the last window
};

// Trains model in its current phase with config.train settings. Base phase:
// no text condition, adapters off, frame condition dropped with p_drop_v.
// Finetune phase: independent dropout of text and frame conditions. A
// non-finite loss or gradient aborts with NumericError and leaves the last
// good checkpoint in place.
TrainResult train(Model& model, const std::vector<Sample>& data, const TrainOptions& options);

// Loss of one sample with explicit noise level, noise and dropout decisions;
// accumulates gradients when grads is given.
double sample_loss(const Model& model, const Sample& sample, double sigma, const nn::Tensor& noise,
                   bool drop_text, bool drop_frames, nn::Grads<float>* grads);

}  // namespace aid::pipeline
