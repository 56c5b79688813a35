#pragma once

/**
 * Fully-connected score network with in-house reverse-mode gradients, trained
 * by denoising score matching, plus the binary checkpoint format.
 *
 * Input layout per evaluation: [noisy action chunk * c_in(t) | noise-time
 * embedding | conditioning state], with c_in(t) = 1/sqrt(data_std^2 + t^2) so
 * network inputs stay near unit scale across the whole noise range. The
 * noise-time embedding is log t followed by sin/cos of log t at four
 * frequencies (9 features). The output head is linear and has the width of
 * the action chunk (raw score parameterization, no output preconditioning).
 */

#include <string>

#include "codi/common.hpp"
#include "codi/diffusion.hpp"

namespace codi::net {

inline constexpr int kTimeFeatures = 9;

/// Noise-time embedding; t is clamped away from zero before the log.
void time_features(double t, std::span<double> out);

enum class Activation : int { Tanh = 0, Silu = 1 };

// ============================================================================
// Model
// ============================================================================

class MlpScoreModel final : public diffusion::ScoreField {
 public:
  /// layer_sizes runs from the full input width to the output width; the
  /// input width must equal action_dim + kTimeFeatures + cond_dim.
  MlpScoreModel(std::vector<int> layer_sizes, int action_dim, int cond_dim,
                Activation activation, int chunk_len = 1);

  /// Standard architecture: hidden layers on top of the spec'd input layout.
  static MlpScoreModel make(int action_dim, int cond_dim,
                            const std::vector<int>& hidden, Activation activation,
                            Rng& init_rng, int chunk_len = 1);

  int dim() const override { return action_dim_; }
  int action_dim() const { return action_dim_; }
  int cond_dim() const { return cond_dim_; }
  int output_dim() const { return layer_sizes_.back(); }
  int chunk_len() const { return chunk_len_; }
  Activation activation() const { return activation_; }
  const std::vector<int>& layer_sizes() const { return layer_sizes_; }

  std::size_t param_count() const { return params_.size(); }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  void eval(std::span<const double> x, double t, std::span<const double> cond,
            std::span<double> out) const override;

  /// Forward pass on a raw pre-assembled input vector (no layout assembly).
  Vec forward_raw(const Vec& input) const;

  /// Reverse-mode pass for one record. Accumulates dLoss/dparams into
  /// grad_accum (same length as params) given dLoss/doutput, and optionally
  /// returns dLoss/dinput (full input layout width) via input_grad.
  void backward_raw(const Vec& input, const Vec& output_grad, Vec& grad_accum,
                    Vec* input_grad = nullptr) const;

  /// d(dout . output)/d(action input), with the input-scale chain applied.
  Vec action_input_gradient(const Vec& x, double t, const Vec& cond,
                            const Vec& output_grad) const;

  Vec assemble_input(std::span<const double> x, double t,
                     std::span<const double> cond) const;

  double input_scale(double t) const {
    return 1.0 / std::sqrt(data_std * data_std + t * t);
  }

  std::string method_tag = "dsm";
  double data_std = 1.0;  // reference scale for the input map

 private:
  std::vector<int> layer_sizes_;
  int action_dim_;
  int cond_dim_;
  int chunk_len_;
  Activation activation_;
  Vec params_;

  friend MlpScoreModel load_model(const std::string& path);
};

// ============================================================================
// Losses and gradients
// ============================================================================

/// A batch loss over model outputs: supplies per-record inputs, converts each
/// model output into a loss contribution plus dLoss/dOutput, and may add a
/// parameter-space term (e.g. a quadratic penalty).
struct LossClosure {
  virtual ~LossClosure() = default;
  virtual int count() const = 0;
  virtual void input(int i, Vec& input) const = 0;  // pre-assembled layout
  virtual double loss_and_output_grad(int i, const Vec& out, Vec& dout) const = 0;
  virtual double param_term(const Vec& params, Vec& grad_accum) const {
    (void)params;
    (void)grad_accum;
    return 0.0;
  }
};

struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

/// Mean loss over the closure's records and its parameter gradient. Records
/// are processed in fixed-size blocks; block results are reduced in index
/// order, so Serial and Parallel execution give bit-identical results.
LossGrad mlp_gradients(const MlpScoreModel& model, const LossClosure& loss,
                       Exec mode = Exec::Parallel);

// ============================================================================
// Denoising score matching
// ============================================================================

struct DemoRecord {
  Vec state;
  Vec chunk;  // flattened K x n_a
};

struct DemoDataset {
  int chunk_len = 1;   // K
  int action_dim = 0;  // per-step action width; record chunk size = K * action_dim
  int state_dim = 0;
  double control_dt = 0.0;
  std::string agent_tag;
  std::vector<DemoRecord> records;

  int chunk_width() const { return chunk_len * action_dim; }
  void validate() const;
  double action_std() const;
};

/// Per-record draws (noise time and noise) for one DSM evaluation; drawn
/// serially in record order so the loss is deterministic under any Exec mode.
struct DsmDraws {
  Vec t;
  std::vector<Vec> eps;
};
DsmDraws make_dsm_draws(int count, int dim, const diffusion::NoiseSchedule& schedule,
                        Rng& rng);

/// Mean over the batch of || t^2 s(a + t eps; t, s) + t eps ||^2.
double dsm_loss(const diffusion::ScoreField& model,
                std::span<const DemoRecord> batch,
                const diffusion::NoiseSchedule& schedule, Rng& rng,
                Exec mode = Exec::Parallel);

/// Same residual with externally supplied draws and per-record weights; the
/// weighted form backs the fine-tuning baselines.
double dsm_loss_given(const diffusion::ScoreField& model,
                      std::span<const DemoRecord> batch, const DsmDraws& draws,
                      std::span<const double> weights, Exec mode);

// ============================================================================
// Training
// ============================================================================

struct TrainConfig {
  int batch_size = 128;
  int step_count = 2000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  diffusion::NoiseSchedule schedule;
  std::vector<int> hidden = {128, 128, 128};
  Activation activation = Activation::Silu;
  Exec exec = Exec::Parallel;

  // Exponential moving average of the weights; the averaged weights are what
  // the trained model returns. Plain final-step weights carry the stationary
  // optimizer wander, which is visible in sampled moments.
  double ema_decay = 0.999;

  void validate() const;
};

struct AdamState {
  Vec m, v;
  int step = 0;
  void init(std::size_t n);
  // Applies a global gradient-norm clip before the update.
  void update(Vec& params, const Vec& grad_in, double lr);
};

struct TrainResult {
  MlpScoreModel model;
  Vec loss_trace;
};

/// Adam-optimized DSM training; bit-reproducible given (dataset, seed).
/// Throws TrainingDivergenceError when the loss exceeds 1e6.
TrainResult train_dsm(const DemoDataset& dataset, const TrainConfig& config);

/// One Adam pass of the (optionally cost-weighted) DSM loss over the given
/// clean samples; used by the fine-tuning baselines. Weights are normalized
/// to mean one; gradient steps touch only `params` of `model`.
double weighted_dsm_pass(MlpScoreModel& model, const diffusion::ScoreField& eval_field,
                         std::span<const DemoRecord> batch,
                         std::span<const double> weights,
                         const diffusion::NoiseSchedule& schedule, AdamState& adam,
                         double lr, Rng& rng, Exec mode);

// ============================================================================
// Checkpoints
// ============================================================================

void save_model(const MlpScoreModel& model, const std::string& path);
MlpScoreModel load_model(const std::string& path);

}  // namespace codi::net
