#include "codi/score_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace codi::net {

// ============================================================================
// Time embedding
// ============================================================================

void time_features(double t, std::span<double> out) {
  const double u = std::log(std::max(t, 1e-12));
  out[0] = u;
  const double freqs[4] = {0.5, 1.0, 2.0, 4.0};
  for (int k = 0; k < 4; ++k) {
    out[1 + 2 * k] = std::sin(freqs[k] * u);
    out[2 + 2 * k] = std::cos(freqs[k] * u);
  }
}

namespace {

inline double activate(Activation a, double x) {
  if (a == Activation::Tanh) return std::tanh(x);
  const double s = 1.0 / (1.0 + std::exp(-x));
  return x * s;
}

inline double activate_deriv(Activation a, double x) {
  if (a == Activation::Tanh) {
    const double th = std::tanh(x);
    return 1.0 - th * th;
  }
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace

// ============================================================================
// MlpScoreModel
// ============================================================================

MlpScoreModel::MlpScoreModel(std::vector<int> layer_sizes, int action_dim,
                             int cond_dim, Activation activation, int chunk_len)
    : layer_sizes_(std::move(layer_sizes)),
      action_dim_(action_dim),
      cond_dim_(cond_dim),
      chunk_len_(chunk_len),
      activation_(activation) {
  if (layer_sizes_.size() < 2)
    throw ValidationError("mlp: need at least input and output layers");
  for (int s : layer_sizes_)
    if (s <= 0) throw ValidationError("mlp: layer sizes must be positive");
  if (layer_sizes_.front() != action_dim_ + kTimeFeatures + cond_dim_)
    throw ValidationError("mlp: input width must match action+time+cond layout");
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l)
    n += static_cast<std::size_t>(layer_sizes_[l + 1]) * layer_sizes_[l] +
         layer_sizes_[l + 1];
  params_.assign(n, 0.0);
}

MlpScoreModel MlpScoreModel::make(int action_dim, int cond_dim,
                                  const std::vector<int>& hidden,
                                  Activation activation, Rng& init_rng,
                                  int chunk_len) {
  std::vector<int> sizes;
  sizes.push_back(action_dim + kTimeFeatures + cond_dim);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(action_dim);
  MlpScoreModel m(std::move(sizes), action_dim, cond_dim, activation, chunk_len);

  // He-style fan-in init on hidden layers, biases zero. The output layer
  // starts at zero so the initial score is identically zero and the first
  // losses stay at the E||t eps||^2 floor even for large terminal times.
  std::size_t off = 0;
  const auto& ls = m.layer_sizes_;
  for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
    const int fan_in = ls[l];
    const int fan_out = ls[l + 1];
    const bool output_layer = (l + 2 == ls.size());
    const double scale = output_layer ? 0.0 : std::sqrt(2.0 / fan_in);
    for (int i = 0; i < fan_out * fan_in; ++i)
      m.params_[off + i] = scale * init_rng.normal();
    off += static_cast<std::size_t>(fan_out) * fan_in + fan_out;
  }
  return m;
}

Vec MlpScoreModel::assemble_input(std::span<const double> x, double t,
                                  std::span<const double> cond) const {
  if (static_cast<int>(x.size()) != action_dim_)
    throw DimensionError("mlp: action width mismatch");
  if (static_cast<int>(cond.size()) != cond_dim_)
    throw DimensionError("mlp: conditioning width mismatch");
  Vec input(layer_sizes_.front());
  const double c_in = input_scale(t);
  for (int d = 0; d < action_dim_; ++d) input[d] = c_in * x[d];
  time_features(t, std::span<double>(input).subspan(action_dim_, kTimeFeatures));
  std::copy(cond.begin(), cond.end(), input.begin() + action_dim_ + kTimeFeatures);
  return input;
}

Vec MlpScoreModel::action_input_gradient(const Vec& x, double t, const Vec& cond,
                                         const Vec& output_grad) const {
  Vec grad_dummy(param_count(), 0.0);
  Vec input_grad;
  backward_raw(assemble_input(x, t, cond), output_grad, grad_dummy, &input_grad);
  const double c_in = input_scale(t);
  Vec out(action_dim_);
  for (int d = 0; d < action_dim_; ++d) out[d] = c_in * input_grad[d];
  return out;
}

Vec MlpScoreModel::forward_raw(const Vec& input) const {
  require_same_dim(input.size(), static_cast<std::size_t>(layer_sizes_.front()),
                   "mlp forward");
  Vec cur = input, next;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    const int m = layer_sizes_[l];
    const int n = layer_sizes_[l + 1];
    next.assign(n, 0.0);
    const double* w = params_.data() + off;
    const double* b = w + static_cast<std::size_t>(n) * m;
    for (int i = 0; i < n; ++i) {
      double acc = b[i];
      const double* wi = w + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) acc += wi[j] * cur[j];
      next[i] = acc;
    }
    if (l + 2 < layer_sizes_.size())
      for (double& v : next) v = activate(activation_, v);
    cur.swap(next);
    off += static_cast<std::size_t>(n) * m + n;
  }
  return cur;
}

void MlpScoreModel::eval(std::span<const double> x, double t,
                         std::span<const double> cond,
                         std::span<double> out) const {
  const Vec y = forward_raw(assemble_input(x, t, cond));
  std::copy(y.begin(), y.end(), out.begin());
}

namespace {

// Forward pass keeping pre-activations, then reverse pass. Shared by
// backward_raw and the batched gradient kernel.
struct Tape {
  std::vector<Vec> pre;   // z_l per affine layer
  std::vector<Vec> act;   // a_l per layer (act[0] = input)
};

void forward_tape(const MlpScoreModel& m, const Vec& input, Tape& tape) {
  const auto& ls = m.layer_sizes();
  const Vec& p = m.params();
  tape.act.assign(ls.size(), {});
  tape.pre.assign(ls.size() - 1, {});
  tape.act[0] = input;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
    const int mm = ls[l];
    const int n = ls[l + 1];
    tape.pre[l].assign(n, 0.0);
    const double* w = p.data() + off;
    const double* b = w + static_cast<std::size_t>(n) * mm;
    const Vec& a = tape.act[l];
    for (int i = 0; i < n; ++i) {
      double acc = b[i];
      const double* wi = w + static_cast<std::size_t>(i) * mm;
      for (int j = 0; j < mm; ++j) acc += wi[j] * a[j];
      tape.pre[l][i] = acc;
    }
    tape.act[l + 1] = tape.pre[l];
    if (l + 2 < ls.size())
      for (double& v : tape.act[l + 1]) v = activate(m.activation(), v);
    off += static_cast<std::size_t>(n) * mm + n;
  }
}

void backward_tape(const MlpScoreModel& m, const Tape& tape, const Vec& dout,
                   Vec& grad_accum, Vec* input_grad) {
  const auto& ls = m.layer_sizes();
  const Vec& p = m.params();

  std::vector<std::size_t> offsets(ls.size() - 1);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(ls[l + 1]) * ls[l] + ls[l + 1];
  }

  Vec g = dout, gprev;
  for (std::size_t li = ls.size() - 1; li-- > 0;) {
    const int mm = ls[li];
    const int n = ls[li + 1];
    const double* w = p.data() + offsets[li];
    double* dw = grad_accum.data() + offsets[li];
    double* db = dw + static_cast<std::size_t>(n) * mm;
    const Vec& a = tape.act[li];

    gprev.assign(mm, 0.0);
    for (int i = 0; i < n; ++i) {
      const double gi = g[i];
      double* dwi = dw + static_cast<std::size_t>(i) * mm;
      const double* wi = w + static_cast<std::size_t>(i) * mm;
      for (int j = 0; j < mm; ++j) {
        dwi[j] += gi * a[j];
        gprev[j] += gi * wi[j];
      }
      db[i] += gi;
    }
    if (li > 0) {
      for (int j = 0; j < mm; ++j)
        gprev[j] *= activate_deriv(m.activation(), tape.pre[li - 1][j]);
    }
    g.swap(gprev);
  }
  if (input_grad) *input_grad = g;
}

}  // namespace

void MlpScoreModel::backward_raw(const Vec& input, const Vec& output_grad,
                                 Vec& grad_accum, Vec* input_grad) const {
  if (grad_accum.size() != params_.size())
    grad_accum.assign(params_.size(), 0.0);
  Tape tape;
  forward_tape(*this, input, tape);
  backward_tape(*this, tape, output_grad, grad_accum, input_grad);
}

// ============================================================================
// Batched gradients
// ============================================================================

LossGrad mlp_gradients(const MlpScoreModel& model, const LossClosure& loss,
                       Exec mode) {
  const int count = loss.count();
  if (count <= 0) throw ValidationError("mlp_gradients: empty batch");

  constexpr int kBlock = 16;
  const int blocks = (count + kBlock - 1) / kBlock;
  std::vector<Vec> block_grad(blocks);
  Vec block_loss(blocks, 0.0);

  for_index(blocks, mode, [&](std::int64_t b) {
    block_grad[b].assign(model.param_count(), 0.0);
    Tape tape;
    Vec input, dout;
    const int lo = static_cast<int>(b) * kBlock;
    const int hi = std::min(count, lo + kBlock);
    for (int i = lo; i < hi; ++i) {
      loss.input(i, input);
      forward_tape(model, input, tape);
      block_loss[b] += loss.loss_and_output_grad(i, tape.act.back(), dout);
      backward_tape(model, tape, dout, block_grad[b], nullptr);
    }
  });

  LossGrad out;
  out.grad.assign(model.param_count(), 0.0);
  for (int b = 0; b < blocks; ++b) {  // fixed reduction order
    out.loss += block_loss[b];
    for (std::size_t k = 0; k < out.grad.size(); ++k)
      out.grad[k] += block_grad[b][k];
  }
  const double inv = 1.0 / count;
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  out.loss += loss.param_term(model.params(), out.grad);
  if (!std::isfinite(out.loss))
    throw NumericError("mlp_gradients: non-finite loss");
  return out;
}

// ============================================================================
// DSM loss
// ============================================================================

void DemoDataset::validate() const {
  if (records.empty()) throw ValidationError("dataset: empty");
  if (chunk_len < 1) throw ValidationError("dataset: chunk length must be >= 1");
  for (const auto& r : records) {
    if (static_cast<int>(r.state.size()) != state_dim ||
        static_cast<int>(r.chunk.size()) != chunk_width())
      throw ValidationError("dataset: inconsistent record shapes");
  }
}

double DemoDataset::action_std() const {
  double mean = 0.0;
  std::size_t n = 0;
  for (const auto& r : records)
    for (double v : r.chunk) {
      mean += v;
      ++n;
    }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& r : records)
    for (double v : r.chunk) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(n));
}

DsmDraws make_dsm_draws(int count, int dim,
                        const diffusion::NoiseSchedule& schedule, Rng& rng) {
  DsmDraws d;
  d.t.resize(count);
  d.eps.resize(count);
  for (int i = 0; i < count; ++i) {
    d.t[i] = diffusion::noise_time_sample(schedule, rng);
    d.eps[i] = rng.normal_vec(dim);
  }
  return d;
}

double dsm_loss_given(const diffusion::ScoreField& model,
                      std::span<const DemoRecord> batch, const DsmDraws& draws,
                      std::span<const double> weights, Exec mode) {
  const int count = static_cast<int>(batch.size());
  Vec per_record(count, 0.0);
  for_index(count, mode, [&](std::int64_t i) {
    const double t = draws.t[i];
    const Vec& a = batch[i].chunk;
    const Vec& eps = draws.eps[i];
    Vec x_t(a.size());
    for (std::size_t d = 0; d < a.size(); ++d) x_t[d] = a[d] + t * eps[d];
    Vec s(a.size());
    model.eval(x_t, t, batch[i].state, s);
    double r2 = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
      const double r = t * t * s[d] + t * eps[d];
      r2 += r * r;
    }
    per_record[i] = (weights.empty() ? 1.0 : weights[i]) * r2;
  });
  double loss = 0.0;
  for (double v : per_record) loss += v;
  return loss / count;
}

double dsm_loss(const diffusion::ScoreField& model,
                std::span<const DemoRecord> batch,
                const diffusion::NoiseSchedule& schedule, Rng& rng, Exec mode) {
  if (batch.empty()) throw ValidationError("dsm_loss: empty batch");
  const DsmDraws draws =
      make_dsm_draws(static_cast<int>(batch.size()), model.dim(), schedule, rng);
  return dsm_loss_given(model, batch, draws, {}, mode);
}

// ============================================================================
// Training
// ============================================================================

void TrainConfig::validate() const {
  if (batch_size < 1 || step_count < 1)
    throw ValidationError("train config: counts must be positive");
  if (!(learning_rate > 0.0))
    throw ValidationError("train config: learning rate must be positive");
  if (ema_decay < 0.0 || ema_decay >= 1.0)
    throw ValidationError("train config: ema decay must lie in [0, 1)");
  schedule.validate();
}

void AdamState::init(std::size_t n) {
  m.assign(n, 0.0);
  v.assign(n, 0.0);
  step = 0;
}

void AdamState::update(Vec& params, const Vec& grad_in, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  constexpr double max_norm = 100.0;
  Vec grad = grad_in;
  const double gnorm = std::sqrt(norm2(grad));
  if (gnorm > max_norm)
    for (double& g : grad) g *= max_norm / gnorm;
  ++step;
  const double c1 = 1.0 - std::pow(b1, step);
  const double c2 = 1.0 - std::pow(b2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
    params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

namespace {

// DSM loss head over a fixed set of records and pre-made draws. When a base
// field is present its score is added to the trainable model's output before
// forming the residual (residual fine-tuning); the base is constant w.r.t.
// the trainable parameters.
//
// Training uses the residual scaled per record by
//   w(t) = sd^4 / (t^2 (t^2 + sd^2)),
// which has the same pointwise minimizer as the plain residual but equalizes
// gradient magnitudes across noise times; the raw t^4-weighted gradients let
// large-t draws starve the small-t score entirely.
class DsmClosure final : public LossClosure {
 public:
  static double time_weight(double t, double sd) {
    const double sd2 = sd * sd;
    const double tc = std::max(t, 0.02 * sd);  // bound the noise of tiny-t draws
    return sd2 * sd2 / (tc * tc * (tc * tc + sd2));
  }

  DsmClosure(const MlpScoreModel& model, const diffusion::ScoreField* base,
             std::span<const DemoRecord> batch, const DsmDraws& draws,
             std::span<const double> weights, Exec mode)
      : model_(model), batch_(batch), draws_(draws), weights_(weights) {
    inputs_.resize(batch.size());
    x_t_.resize(batch.size());
    base_scores_.resize(batch.size());
    for_index(static_cast<std::int64_t>(batch.size()), mode, [&](std::int64_t i) {
      const double t = draws.t[i];
      const Vec& a = batch[i].chunk;
      Vec x_t(a.size());
      for (std::size_t d = 0; d < a.size(); ++d)
        x_t[d] = a[d] + t * draws.eps[i][d];
      inputs_[i] = model.assemble_input(x_t, t, batch[i].state);
      x_t_[i] = std::move(x_t);
      if (base) {
        base_scores_[i].assign(a.size(), 0.0);
        base->eval(x_t_[i], t, batch[i].state, base_scores_[i]);
      }
    });
  }

  int count() const override { return static_cast<int>(batch_.size()); }
  void input(int i, Vec& input) const override { input = inputs_[i]; }

  double loss_and_output_grad(int i, const Vec& out, Vec& dout) const override {
    const double t = draws_.t[i];
    double w = weights_.empty() ? 1.0 : weights_[i];
    w *= time_weight(t, model_.data_std);
    const Vec& eps = draws_.eps[i];
    dout.assign(out.size(), 0.0);
    double r2 = 0.0;
    for (std::size_t d = 0; d < out.size(); ++d) {
      const double s = out[d] + (base_scores_[i].empty() ? 0.0 : base_scores_[i][d]);
      const double r = t * t * s + t * eps[d];
      r2 += r * r;
      dout[d] = w * 2.0 * t * t * r;
    }
    return w * r2;
  }

 private:
  const MlpScoreModel& model_;
  std::span<const DemoRecord> batch_;
  const DsmDraws& draws_;
  std::span<const double> weights_;
  std::vector<Vec> inputs_;
  std::vector<Vec> x_t_;
  std::vector<Vec> base_scores_;
};

}  // namespace

TrainResult train_dsm(const DemoDataset& dataset, const TrainConfig& config) {
  dataset.validate();
  config.validate();

  Rng rng(config.seed);
  Rng init_rng = rng.split(0);
  Rng batch_rng = rng.split(1);
  Rng draw_rng = rng.split(2);

  TrainResult result{
      MlpScoreModel::make(dataset.chunk_width(), dataset.state_dim, config.hidden,
                          config.activation, init_rng, dataset.chunk_len),
      {}};
  MlpScoreModel& model = result.model;
  const double std = dataset.action_std();
  model.data_std = std > 1e-9 ? std : 1.0;

  AdamState adam;
  adam.init(model.param_count());
  std::vector<DemoRecord> batch(config.batch_size);
  result.loss_trace.reserve(config.step_count);
  Vec ema = model.params();

  for (int step = 0; step < config.step_count; ++step) {
    for (int i = 0; i < config.batch_size; ++i)
      batch[i] = dataset.records[batch_rng.below(dataset.records.size())];
    const DsmDraws draws =
        make_dsm_draws(config.batch_size, model.dim(), config.schedule, draw_rng);
    DsmClosure closure(model, nullptr, batch, draws, {}, config.exec);
    const LossGrad lg = mlp_gradients(model, closure, config.exec);
    if (!std::isfinite(lg.loss) || lg.loss > 1e6)
      throw TrainingDivergenceError("train_dsm: loss diverged", step);
    adam.update(model.params(), lg.grad, config.learning_rate);
    const double d = config.ema_decay;
    for (std::size_t k = 0; k < ema.size(); ++k)
      ema[k] = d * ema[k] + (1.0 - d) * model.params()[k];
    result.loss_trace.push_back(lg.loss);
  }
  model.params() = ema;
  return result;
}

double weighted_dsm_pass(MlpScoreModel& model,
                         const diffusion::ScoreField* base_field,
                         std::span<const DemoRecord> batch,
                         std::span<const double> weights,
                         const diffusion::NoiseSchedule& schedule, AdamState& adam,
                         double lr, Rng& rng, Exec mode) {
  if (batch.empty()) throw ValidationError("weighted_dsm_pass: empty batch");

  // Self-normalized weights (mean one) so a constant cost reduces exactly to
  // an unweighted pass.
  Vec w(batch.size(), 1.0);
  if (!weights.empty()) {
    double mean = 0.0;
    for (double v : weights) mean += v;
    mean /= static_cast<double>(weights.size());
    if (!(mean > 0.0) || !std::isfinite(mean))
      throw DegenerateWeightsError("weighted_dsm_pass: degenerate weight batch");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = weights[i] / mean;
  }

  const DsmDraws draws =
      make_dsm_draws(static_cast<int>(batch.size()), model.dim(), schedule, rng);
  DsmClosure closure(model, base_field, batch, draws, w, mode);
  const LossGrad lg = mlp_gradients(model, closure, mode);
  adam.update(model.params(), lg.grad, lr);
  return lg.loss;
}

// ============================================================================
// Checkpoint format
// ============================================================================

namespace {

constexpr char kModelMagic[8] = {'C', 'O', 'D', 'I', 'M', 'D', 'L', '1'};
constexpr std::uint32_t kModelVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& buf, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(buf, v);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw TruncatedFileError("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const std::uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return buf;
}

void write_file(const std::string& path, const std::string& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

void save_model(const MlpScoreModel& model, const std::string& path) {
  std::string buf;
  buf.append(kModelMagic, sizeof(kModelMagic));
  put_u32(buf, kModelVersion);
  char tag[16] = {};
  std::strncpy(tag, model.method_tag.c_str(), sizeof(tag) - 1);
  buf.append(tag, sizeof(tag));
  put_u32(buf, static_cast<std::uint32_t>(model.activation()));
  put_u32(buf, static_cast<std::uint32_t>(model.action_dim()));
  put_u32(buf, static_cast<std::uint32_t>(model.cond_dim()));
  put_u32(buf, static_cast<std::uint32_t>(model.chunk_len()));
  put_u32(buf, static_cast<std::uint32_t>(kTimeFeatures));
  put_u32(buf, static_cast<std::uint32_t>(model.layer_sizes().size()));
  for (int s : model.layer_sizes()) put_u32(buf, static_cast<std::uint32_t>(s));
  put_f64(buf, model.data_std);
  put_u64(buf, model.param_count());
  for (double p : model.params()) put_f64(buf, p);
  put_u64(buf, fnv1a(buf.data(), buf.size()));
  write_file(path, buf);
}

MlpScoreModel load_model(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < sizeof(kModelMagic) + 4)
    throw TruncatedFileError("checkpoint: file too short");
  if (std::memcmp(buf.data(), kModelMagic, sizeof(kModelMagic)) != 0)
    throw VersionMismatchError("checkpoint: bad magic");

  Reader r{buf, sizeof(kModelMagic)};
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw VersionMismatchError("checkpoint: unsupported version " +
                               std::to_string(version));
  r.need(16);
  std::string tag(buf.data() + r.pos, 16);
  tag.resize(std::strlen(tag.c_str()));
  r.pos += 16;

  const auto activation = static_cast<Activation>(r.u32());
  const int action_dim = static_cast<int>(r.u32());
  const int cond_dim = static_cast<int>(r.u32());
  const int chunk_len = static_cast<int>(r.u32());
  const std::uint32_t time_feats = r.u32();
  if (time_feats != static_cast<std::uint32_t>(kTimeFeatures))
    throw VersionMismatchError("checkpoint: incompatible time feature width");
  const std::uint32_t n_layers = r.u32();
  std::vector<int> sizes(n_layers);
  for (auto& s : sizes) s = static_cast<int>(r.u32());
  const double data_std = r.f64();
  const std::uint64_t n_params = r.u64();

  MlpScoreModel model(sizes, action_dim, cond_dim, activation, chunk_len);
  model.method_tag = tag;
  model.data_std = data_std;
  if (model.param_count() != n_params)
    throw TruncatedFileError("checkpoint: parameter count mismatch");
  for (std::uint64_t i = 0; i < n_params; ++i) model.params_[i] = r.f64();

  const std::uint64_t stored = r.u64();
  const std::uint64_t computed = fnv1a(buf.data(), r.pos - 8);
  if (stored != computed) throw ChecksumError("checkpoint: checksum mismatch");
  return model;
}

}  // namespace codi::net
