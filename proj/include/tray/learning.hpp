#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tray/acoustic.hpp"
#include "tray/alpha.hpp"

namespace tray {

struct AlphaSample {
  double v = 0.0;      // m/s
  double alpha = 0.0;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

struct TrainingInfo {
  int epochs = 0;
  double final_loss = 0.0;  // mean squared error in alpha units, dropout off
  int samples = 0;
  std::uint64_t seed = 0;
};

// Fully connected 1-h-h-1 network with LeakyReLU hidden activations. Inputs
// are standardized with the stored scaler; queries outside the training
// velocity range are clamped to it.
class AlphaModel final : public AlphaFunction {
 public:
  static constexpr int kFormatVersion = 1;

  std::vector<DenseLayer> layers;
  double negative_slope = 0.01;
  double input_mean = 0.0, input_std = 1.0;
  double output_mean = 0.0, output_std = 1.0;
  double v_min = 0.0, v_max = 0.0;
  TrainingInfo training;

  double value(double speed) const override;
  double slope(double speed) const override;
  void validate() const;
};

std::vector<AlphaSample> events_to_samples(const std::vector<SlidingEvent>& events, double mu_s,
                                           double g_mag = 9.81);

// Adds (0, 1) and points every dv along the line from it to the sample with
// the smallest velocity.
std::vector<AlphaSample> augment_dataset(const std::vector<AlphaSample>& samples, double mu_s,
                                         double dv = 0.02);

struct TrainSettings {
  int hidden = 32;
  int epochs = 2000;
  double learning_rate = 1e-3;
  double dropout = 0.1;
  int batch_size = 16;
  double negative_slope = 0.01;
  double loss_ceiling = 0.01;  // final MSE above this raises NonConvergence
  std::uint64_t seed = 0;
};

// Requires >= 10 samples spanning a nonzero velocity range.
AlphaModel train_alpha(const std::vector<AlphaSample>& samples, const TrainSettings& settings = {});

struct FitReport {
  double mae = 0.0;
  bool monotone_nonincreasing = false;
  double v_min = 0.0, v_max = 0.0;
};
FitReport fit_report(const AlphaModel& model, const std::vector<AlphaSample>& samples);

std::string alpha_model_to_json_text(const AlphaModel& model);
AlphaModel alpha_model_from_json_text(const std::string& text);
void save_model(const AlphaModel& model, const std::string& path);
// Throws MalformedModel or VersionError.
AlphaModel load_model(const std::string& path);

}  // namespace tray
