#pragma once

// Audit-selection policy built on a conditional denoising diffusion chain.
//
// The reverse chain starts from x_Y ~ N(0, I) over the 2^N action logits and
// runs Y denoising steps conditioned on the belief. A softmax over x_0 gives
// the action distribution. There is no forward-noising loss: the denoiser is
// trained only through the actor-critic objective, with the chain's Gaussian
// draws held fixed (pathwise gradients).

#include <vector>

#include "hiaudit/actor.hpp"

namespace hiaudit {

// Noise scale of the reparameterised reverse step.
//   kPaper:    (tilde_beta_y / 2)^2
//   kStandard: sqrt(tilde_beta_y)
enum class VarianceConvention { kPaper, kStandard };

std::string to_string(VarianceConvention v);
VarianceConvention variance_from_string(const std::string& s);

// Vectors are indexed by y - 1 for y = 1..Y.
struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> omega;      // 1 - beta_y
  std::vector<double> omega_bar;  // prod_{s <= y} omega_s
  std::vector<double> tilde_beta; // (1 - omega_bar_{y-1}) / (1 - omega_bar_y) * beta_y

  double beta_at(int y) const { return beta.at(y - 1); }
  double omega_at(int y) const { return omega.at(y - 1); }
  double omega_bar_at(int y) const { return y == 0 ? 1.0 : omega_bar.at(y - 1); }
  double tilde_beta_at(int y) const { return tilde_beta.at(y - 1); }
  double noise_scale(int y, VarianceConvention v) const;
};

// beta linearly spaced over [beta_min, beta_max]; a single step takes beta_max.
DiffusionSchedule make_schedule(int steps, double beta_min = 0.05, double beta_max = 0.5);

// x_0 recovered from x_y and a (squashed) noise estimate.
Vector predict_x0(const DiffusionSchedule& s, int y, const Vector& x_y, const Vector& noise);
// Mean of q(x_{y-1} | x_y, x_0).
Vector posterior_mean(const DiffusionSchedule& s, int y, const Vector& x0, const Vector& x_y);
// Same mean written directly in terms of the noise estimate.
Vector reverse_mean(const DiffusionSchedule& s, int y, const Vector& x_y, const Vector& noise);
// Forward marginal: sqrt(omega_bar) x_0 + sqrt(1 - omega_bar) eps.
Vector forward_sample(const DiffusionSchedule& s, int y, const Vector& x0, const Vector& eps);

struct DiffusionOptions {
  int embed_dim = 16;
  std::vector<int> hidden = {32, 256, 256};
  double beta_min = 0.05;
  double beta_max = 0.5;
  VarianceConvention variance = VarianceConvention::kPaper;
  bool noise_at_final_step = false;  // add noise at y = 1 too, as the printed update rule does
};

// Gaussian draws for one batched run of the chain.
struct ChainNoise {
  Matrix x_final;            // x_Y, action_dim x batch
  std::vector<Matrix> step;  // step[y - 1]: noise injected when leaving x_y
};

class AssPolicy : public Actor {
 public:
  AssPolicy(int num_clients, int diffusion_steps, DiffusionOptions options, Rng& init_rng);
  AssPolicy(DenseNet denoiser, int num_clients, int diffusion_steps, DiffusionOptions options);

  std::string name() const override { return "drl_ass"; }
  int action_dim() const override { return static_cast<int>(hypothesis_count(num_clients_)); }
  int num_clients() const { return num_clients_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  const DiffusionOptions& options() const { return options_; }

  // tanh-squashed noise estimate for a batch of x_y columns at step y.
  Matrix noise_estimate(const Matrix& x_y, int y, const Matrix& beliefs, DenseNet::Cache* cache = nullptr) const;

  Vector predict_x0(const Vector& x_y, int y, std::span<const double> belief) const;
  Vector reverse_mean(const Vector& x_y, int y, std::span<const double> belief) const;
  Vector reverse_step(const Vector& x_y, int y, std::span<const double> belief, Rng& rng) const;
  std::vector<double> generate(std::span<const double> belief, Rng& rng) const;

  ChainNoise sample_noise(Eigen::Index batch, Rng& rng) const;
  // Runs the chain with fixed noise. Returns probabilities; fills the trace when given.
  Matrix run_chain(const Matrix& beliefs, const ChainNoise& noise, ActorTrace* trace) const;

  Matrix forward(const Matrix& beliefs, Rng& rng, ActorTrace* trace) const override;
  void backward(const ActorTrace& trace, const Matrix& logits_grad, Gradients& grads) const override;

  const DenseNet& net() const override { return denoiser_; }
  DenseNet& mutable_net() override { return denoiser_; }
  std::unique_ptr<Actor> clone() const override { return std::make_unique<AssPolicy>(*this); }
  nlohmann::json to_json() const override;
  static AssPolicy from_json(const nlohmann::json& j);

 private:
  Matrix denoiser_input(const Matrix& x_y, int y, const Matrix& beliefs) const;

  int num_clients_;
  DiffusionOptions options_;
  DiffusionSchedule schedule_;
  DenseNet denoiser_;
};

}  // namespace hiaudit
