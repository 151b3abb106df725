#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "spoofguard/ingest.hpp"

namespace spoofguard::lstm {

/// Input features, in column order.
inline constexpr std::array<std::string_view, 4> kFeatureOrder{"prev_shift_m", "accel_pct",
                                                               "steering_deg", "speed_mps"};
inline constexpr std::size_t kFeatureCount = kFeatureOrder.size();
/// Index of the location-shift feature; its scaler also scales the target.
inline constexpr std::size_t kShiftFeature = 0;

inline constexpr std::uint32_t kModelVersion = 1;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

struct NetworkDims {
  std::size_t input_size = kFeatureCount;
  std::vector<std::size_t> hidden{128, 64};

  bool operator==(const NetworkDims&) const = default;
};

struct ModelMetadata {
  double validation_rmse = 0.0;
  double validation_max_abs_error = 0.0;
  double validation_mae = 0.0;
  std::size_t window = 10;
  std::vector<std::string> feature_order{kFeatureOrder.begin(), kFeatureOrder.end()};
  std::uint32_t version = kModelVersion;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Stacked LSTM with a scalar affine head.
///
/// All parameters live in one flat vector. Per layer: input weights (4H x In), recurrent
/// weights (4H x H) and bias (4H), each row-major with gate blocks ordered input, forget,
/// cell, output; then the head weights (1 x H_last) and head bias.
class LstmNetwork {
 public:
  explicit LstmNetwork(NetworkDims dims = {});

  const NetworkDims& dims() const { return dims_; }
  std::size_t layer_count() const { return dims_.hidden.size(); }
  std::size_t layer_input_size(std::size_t layer) const;
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  MatrixMap w_input(std::size_t layer);
  ConstMatrixMap w_input(std::size_t layer) const;
  MatrixMap w_recurrent(std::size_t layer);
  ConstMatrixMap w_recurrent(std::size_t layer) const;
  VectorMap bias(std::size_t layer);
  ConstVectorMap bias(std::size_t layer) const;
  MatrixMap head_weights();
  ConstMatrixMap head_weights() const;
  double& head_bias() { return params_[params_.size() - 1]; }
  double head_bias() const { return params_[params_.size() - 1]; }

  ingest::FeatureScaler scaler;
  ModelMetadata metadata;

 private:
  struct LayerOffsets {
    std::size_t w_input, w_recurrent, bias;
  };
  NetworkDims dims_;
  std::vector<LayerOffsets> offsets_;
  std::size_t head_offset_ = 0;
  Eigen::VectorXd params_;
};

/// Uniform(+-1/sqrt(fan_in)) weights, zero biases except forget gates at +1. Deterministic in seed.
LstmNetwork init_network(const NetworkDims& dims, std::uint64_t seed);

/// A W x F window of scaled features and the next-step shift in meters.
struct SupervisedWindow {
  RowMatrix inputs;
  double target = 0.0;
};

/// Head output for one scaled window, before inverse scaling.
double forward_scaled(const LstmNetwork& network, const RowMatrix& window);

/// Predicted next-step shift in meters (head output inverse-scaled with the shift scaler).
double forward(const LstmNetwork& network, const RowMatrix& window);

/// Batched forward, meters. Windows must share the network's shape.
std::vector<double> predict(const LstmNetwork& network, std::span<const SupervisedWindow> windows);

/// Per-frame raw features [prev shift, accel, steering, speed] for frames 1..N-1, with the
/// shift from each frame to the next (NaN for the last).
struct FeatureTable {
  std::vector<double> t;
  std::vector<std::array<double, kFeatureCount>> rows;
  std::vector<double> next_shift;
};

FeatureTable make_feature_table(std::span<const ingest::AlignedFrame> frames);

/// Fits the min-max scaler over the feature columns of every table.
ingest::FeatureScaler fit_feature_scaler(std::span<const FeatureTable> tables);

/// Scales one raw feature row in place into `out`.
void scale_row(const ingest::FeatureScaler& scaler, const std::array<double, kFeatureCount>& row,
               RowMatrix& out, Eigen::Index out_row);

/// Stride-1 windows of length `window` with the next-step shift as target.
std::vector<SupervisedWindow> build_windows(const FeatureTable& table,
                                            const ingest::FeatureScaler& scaler, std::size_t window);

struct TrainingConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 50;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t window = 10;
  double train_fraction = 0.7;  // contiguous leading share used for training
  bool shuffle = true;
  std::uint64_t seed = 0;
  NetworkDims dims;
  std::string config_hash;
};

void validate(const TrainingConfig& config);

struct EpochLoss {
  std::size_t epoch = 0;
  double train_mae = 0.0;  // meters
  double val_mae = 0.0;    // meters
};

struct TrainingResult {
  LstmNetwork network;
  std::vector<EpochLoss> history;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Trains on the leading train_fraction of `dataset`, validates on the rest.
/// Throws TrainingDivergedError if a loss becomes non-finite.
TrainingResult train(std::span<const SupervisedWindow> dataset, const ingest::FeatureScaler& scaler,
                     const TrainingConfig& config, const EpochCallback& on_epoch = {});

struct Metrics {
  double rmse = 0.0;
  double max_abs_error = 0.0;
  double mae = 0.0;
};

/// Metrics of predictions against targets, meters. Throws on empty input.
Metrics compute_metrics(std::span<const double> predicted, std::span<const double> targets);
Metrics evaluate(const LstmNetwork& network, std::span<const SupervisedWindow> dataset);

/// Adam over a flat parameter vector.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient);
  std::size_t steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  Eigen::VectorXd m_, v_;
};

/// Gradient of the batch MAE (scaled space) with respect to every parameter, by BPTT.
/// Returns the loss through `loss` when non-null.
Eigen::VectorXd mae_gradient(const LstmNetwork& network, std::span<const SupervisedWindow> batch,
                             double* loss = nullptr);

/// MAE in scaled space over the batch.
double mae_loss(const LstmNetwork& network, std::span<const SupervisedWindow> batch);

/// Central finite differences of mae_loss for every parameter.
Eigen::VectorXd numeric_gradient(const LstmNetwork& network, std::span<const SupervisedWindow> batch,
                                 double step = 1e-5);

struct GradientComparison {
  double max_relative_deviation = 0.0;
  std::size_t compared = 0;
  std::size_t skipped = 0;  // both estimates below the zero floor
};

/// Relative deviation |a - n| / max(|a|, |n|) per component; components where both are
/// below `zero_floor` are skipped.
GradientComparison compare_gradients(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                                     double zero_floor = 1e-8);

/// Analytic vs finite-difference gradients on one window. Meant for small networks.
GradientComparison gradient_check(const LstmNetwork& network, const SupervisedWindow& window,
                                  double step = 1e-5);

/// Versioned little-endian binary model file.
void save_model(std::ostream& out, const LstmNetwork& network);
LstmNetwork load_model(std::istream& in);
void save_model(const std::filesystem::path& path, const LstmNetwork& network);
LstmNetwork load_model(const std::filesystem::path& path);

}  // namespace spoofguard::lstm
