#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gazemine/common.hpp"
#include "gazemine/json_io.hpp"

namespace gazemine {

/// Per-feature z-score parameters, fitted on expert data only.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& window) const;
  json to_json() const;
  static Normalizer from_json(const json& j);
  bool operator==(const Normalizer&) const = default;
};

/// Rows of every window are pooled; a feature with zero variance raises a
/// degenerate error naming it.
Normalizer fit_normalizer(const std::vector<Eigen::MatrixXd>& windows,
                          const std::vector<std::string>& feature_names = {});

/// Weights of the encoder/decoder LSTM. Gate blocks are stacked row-wise in
/// the order input, forget, cell, output.
struct LstmParams {
  Eigen::MatrixXd enc_w;  // 4H x D
  Eigen::MatrixXd enc_u;  // 4H x H
  Eigen::VectorXd enc_b;  // 4H
  Eigen::MatrixXd dec_w;  // 4H x H (decoder input is the encoder summary)
  Eigen::MatrixXd dec_u;  // 4H x H
  Eigen::VectorXd dec_b;  // 4H
  Eigen::MatrixXd out_w;  // D x H
  Eigen::VectorXd out_b;  // D

  static LstmParams zeros(int input_dim, int hidden_dim);
  /// Flat views over every block, in declaration order.
  std::vector<std::pair<double*, std::size_t>> blocks();
  std::size_t size() const;
  bool operator==(const LstmParams& o) const;
};

struct BackpropMutation {
  bool negate_forget_gate = false;  // test hook: flips the forget-gate gradient
};

struct TrainConfig {
  int hidden_dim = 16;
  int epochs = 100;
  double learning_rate = 0.01;
  double clip_norm = 5.0;
  std::uint64_t seed = 7;
};

/// Sequence autoencoder: an encoder LSTM reads the window, its final state
/// seeds a decoder LSTM that is fed the encoder's final hidden state at every
/// step, and a linear layer maps decoder states back to features.
class LstmModel {
 public:
  LstmModel() = default;
  LstmModel(int input_dim, int hidden_dim);

  /// Uniform weights in [-0.08, 0.08], forget-gate biases 1.
  static LstmModel initialized(int input_dim, int hidden_dim, std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  std::size_t feature_dim() const { return static_cast<std::size_t>(input_dim_); }

  LstmParams& params() { return params_; }
  const LstmParams& params() const { return params_; }

  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& window) const;
  /// Mean squared reconstruction error over all cells.
  double loss(const Eigen::MatrixXd& window) const;
  /// Loss and its gradient with respect to every parameter.
  double loss_and_gradient(const Eigen::MatrixXd& window, LstmParams& grad,
                           const BackpropMutation& mutation = {}) const;

  Normalizer normalizer;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;

  json to_json() const;
  static LstmModel from_json(const json& j);
  void save(const std::filesystem::path& path) const;
  static LstmModel load(const std::filesystem::path& path);

  bool operator==(const LstmModel& o) const;

 private:
  int input_dim_ = 0;
  int hidden_dim_ = 0;
  LstmParams params_;
};

/// Online gradient descent over the (already normalized) windows in fixed
/// order, one update per window, with global-norm clipping. loss_history[0]
/// is the mean loss before training, then one entry per epoch.
LstmModel train(const std::vector<Eigen::MatrixXd>& windows, const TrainConfig& cfg,
                const std::function<void(int epoch, double loss)>& on_epoch = {});

/// Central finite differences against backprop over every parameter.
/// Relative error per parameter: |a - n| / max(|a|, |n|, floor); both zero
/// counts as 0.
inline constexpr double kGradCheckFloor = 1e-6;
double gradient_check(const LstmModel& model, const Eigen::MatrixXd& window, double epsilon,
                      const BackpropMutation& mutation = {});

template <typename M>
concept Reconstructor = requires(const M& m, const Eigen::MatrixXd& w) {
  { m.reconstruct(w) } -> std::convertible_to<Eigen::MatrixXd>;
  { m.feature_dim() } -> std::convertible_to<std::size_t>;
};

template <Reconstructor M>
double reconstruction_error(const M& model, const Eigen::MatrixXd& window) {
  if (static_cast<std::size_t>(window.cols()) != model.feature_dim())
    throw Error(ErrorKind::shape, "window has " + std::to_string(window.cols()) + " features, model expects " +
                                      std::to_string(model.feature_dim()));
  if (window.rows() == 0) throw Error(ErrorKind::shape, "empty window");
  const Eigen::MatrixXd out = model.reconstruct(window);
  if (out.rows() != window.rows() || out.cols() != window.cols())
    throw Error(ErrorKind::shape, "reconstruction shape differs from the window");
  return (out - window).squaredNorm() / static_cast<double>(window.size());
}

}  // namespace gazemine
