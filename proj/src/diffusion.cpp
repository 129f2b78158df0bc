#include "hiaudit/diffusion.hpp"

#include <cmath>

#include "hiaudit/errors.hpp"

namespace hiaudit {

std::string to_string(VarianceConvention v) { return v == VarianceConvention::kPaper ? "paper" : "standard"; }

VarianceConvention variance_from_string(const std::string& s) {
  if (s == "paper") return VarianceConvention::kPaper;
  if (s == "standard") return VarianceConvention::kStandard;
  throw ConfigError("variance convention must be 'paper' or 'standard', got '" + s + "'");
}

double DiffusionSchedule::noise_scale(int y, VarianceConvention v) const {
  const double tb = tilde_beta_at(y);
  if (v == VarianceConvention::kPaper) return (tb / 2.0) * (tb / 2.0);
  return std::sqrt(tb);
}

DiffusionSchedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw std::invalid_argument("diffusion needs at least one step");
  if (!(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max))
    throw std::invalid_argument("beta range must satisfy 0 < beta_min <= beta_max < 1");
  DiffusionSchedule s;
  s.steps = steps;
  for (int y = 1; y <= steps; ++y) {
    const double beta =
        steps == 1 ? beta_max : beta_min + (beta_max - beta_min) * static_cast<double>(y - 1) / (steps - 1);
    s.beta.push_back(beta);
    s.omega.push_back(1.0 - beta);
    s.omega_bar.push_back((y == 1 ? 1.0 : s.omega_bar.back()) * (1.0 - beta));
  }
  for (int y = 1; y <= steps; ++y)
    s.tilde_beta.push_back((1.0 - s.omega_bar_at(y - 1)) / (1.0 - s.omega_bar_at(y)) * s.beta_at(y));
  return s;
}

Vector predict_x0(const DiffusionSchedule& s, int y, const Vector& x_y, const Vector& noise) {
  const double ob = s.omega_bar_at(y);
  return x_y / std::sqrt(ob) - std::sqrt(1.0 / ob - 1.0) * noise;
}

Vector posterior_mean(const DiffusionSchedule& s, int y, const Vector& x0, const Vector& x_y) {
  const double ob = s.omega_bar_at(y);
  const double ob_prev = s.omega_bar_at(y - 1);
  const double c0 = std::sqrt(ob_prev) * s.beta_at(y) / (1.0 - ob);
  const double ct = std::sqrt(s.omega_at(y)) * (1.0 - ob_prev) / (1.0 - ob);
  return c0 * x0 + ct * x_y;
}

Vector reverse_mean(const DiffusionSchedule& s, int y, const Vector& x_y, const Vector& noise) {
  return (x_y - s.beta_at(y) * noise / std::sqrt(1.0 - s.omega_bar_at(y))) / std::sqrt(s.omega_at(y));
}

Vector forward_sample(const DiffusionSchedule& s, int y, const Vector& x0, const Vector& eps) {
  const double ob = s.omega_bar_at(y);
  return std::sqrt(ob) * x0 + std::sqrt(1.0 - ob) * eps;
}

namespace {

std::vector<int> denoiser_dims(int action_dim, const DiffusionOptions& o) {
  std::vector<int> dims{2 * action_dim + o.embed_dim};
  dims.insert(dims.end(), o.hidden.begin(), o.hidden.end());
  dims.push_back(action_dim);
  return dims;
}

std::vector<Activation> denoiser_activations(const DiffusionOptions& o) {
  std::vector<Activation> acts(o.hidden.size(), Activation::kMish);
  acts.push_back(Activation::kTanh);
  return acts;
}

}  // namespace

AssPolicy::AssPolicy(int num_clients, int diffusion_steps, DiffusionOptions options, Rng& init_rng)
    : num_clients_(num_clients),
      options_(std::move(options)),
      schedule_(make_schedule(diffusion_steps, options_.beta_min, options_.beta_max)) {
  if (num_clients < 1 || num_clients > kMaxClients) throw ConfigError("client count out of range");
  if (options_.embed_dim <= 0 || options_.embed_dim % 2) throw ConfigError("embed_dim must be positive and even");
  const int a = static_cast<int>(hypothesis_count(num_clients));
  denoiser_ = DenseNet(denoiser_dims(a, options_), denoiser_activations(options_), init_rng);
}

AssPolicy::AssPolicy(DenseNet denoiser, int num_clients, int diffusion_steps, DiffusionOptions options)
    : num_clients_(num_clients),
      options_(std::move(options)),
      schedule_(make_schedule(diffusion_steps, options_.beta_min, options_.beta_max)),
      denoiser_(std::move(denoiser)) {
  const int a = static_cast<int>(hypothesis_count(num_clients));
  if (denoiser_.input_dim() != 2 * a + options_.embed_dim || denoiser_.output_dim() != a)
    throw ShapeError("denoiser dims do not match the action space and embedding width");
}

Matrix AssPolicy::denoiser_input(const Matrix& x_y, int y, const Matrix& beliefs) const {
  const auto a = static_cast<Eigen::Index>(action_dim());
  if (x_y.rows() != a || beliefs.rows() != a || x_y.cols() != beliefs.cols())
    throw ShapeError("chain state and belief batch disagree");
  const auto e = static_cast<Eigen::Index>(options_.embed_dim);
  const auto embed = sinusoidal_embed(y, options_.embed_dim);
  Matrix in(2 * a + e, x_y.cols());
  in.topRows(a) = x_y;
  in.middleRows(a, e) = Eigen::Map<const Vector>(embed.data(), e).replicate(1, x_y.cols());
  in.bottomRows(a) = beliefs;
  return in;
}

Matrix AssPolicy::noise_estimate(const Matrix& x_y, int y, const Matrix& beliefs, DenseNet::Cache* cache) const {
  if (y < 1 || y > schedule_.steps) throw std::out_of_range("diffusion step outside [1, Y]");
  return denoiser_.forward(denoiser_input(x_y, y, beliefs), cache);
}

namespace {

Matrix belief_column(std::span<const double> belief) {
  return Eigen::Map<const Vector>(belief.data(), static_cast<Eigen::Index>(belief.size()));
}

}  // namespace

Vector AssPolicy::predict_x0(const Vector& x_y, int y, std::span<const double> belief) const {
  const Vector noise = noise_estimate(x_y, y, belief_column(belief)).col(0);
  return hiaudit::predict_x0(schedule_, y, x_y, noise);
}

Vector AssPolicy::reverse_mean(const Vector& x_y, int y, std::span<const double> belief) const {
  const Vector noise = noise_estimate(x_y, y, belief_column(belief)).col(0);
  return hiaudit::reverse_mean(schedule_, y, x_y, noise);
}

Vector AssPolicy::reverse_step(const Vector& x_y, int y, std::span<const double> belief, Rng& rng) const {
  Vector next = reverse_mean(x_y, y, belief);
  if (y > 1 || options_.noise_at_final_step) {
    const double scale = schedule_.noise_scale(y, options_.variance);
    for (Eigen::Index i = 0; i < next.size(); ++i) next(i) += scale * rng.normal();
  }
  return next;
}

std::vector<double> AssPolicy::generate(std::span<const double> belief, Rng& rng) const {
  return distribution(belief, rng);
}

ChainNoise AssPolicy::sample_noise(Eigen::Index batch, Rng& rng) const {
  const auto a = static_cast<Eigen::Index>(action_dim());
  auto draw = [&] {
    Matrix m(a, batch);
    for (Eigen::Index c = 0; c < batch; ++c)
      for (Eigen::Index r = 0; r < a; ++r) m(r, c) = rng.normal();
    return m;
  };
  ChainNoise noise;
  noise.x_final = draw();
  noise.step.resize(schedule_.steps);
  for (int y = schedule_.steps; y >= 1; --y) {
    if (y > 1 || options_.noise_at_final_step)
      noise.step[y - 1] = draw();
    else
      noise.step[y - 1] = Matrix::Zero(a, batch);
  }
  return noise;
}

Matrix AssPolicy::run_chain(const Matrix& beliefs, const ChainNoise& noise, ActorTrace* trace) const {
  if (trace) trace->caches.assign(schedule_.steps, {});
  Matrix x = noise.x_final;
  for (int y = schedule_.steps; y >= 1; --y) {
    DenseNet::Cache* cache = trace ? &trace->caches[schedule_.steps - y] : nullptr;
    const Matrix s = noise_estimate(x, y, beliefs, cache);
    const double c1 = 1.0 / std::sqrt(schedule_.omega_at(y));
    const double c2 = c1 * schedule_.beta_at(y) / std::sqrt(1.0 - schedule_.omega_bar_at(y));
    x = c1 * x - c2 * s;
    if (y > 1 || options_.noise_at_final_step) x += schedule_.noise_scale(y, options_.variance) * noise.step[y - 1];
  }
  Matrix probs = softmax_columns(x);
  if (trace) {
    trace->logits = x;
    trace->probs = probs;
  }
  return probs;
}

Matrix AssPolicy::forward(const Matrix& beliefs, Rng& rng, ActorTrace* trace) const {
  return run_chain(beliefs, sample_noise(beliefs.cols(), rng), trace);
}

void AssPolicy::backward(const ActorTrace& trace, const Matrix& logits_grad, Gradients& grads) const {
  if (static_cast<int>(trace.caches.size()) != schedule_.steps) throw UsageError("trace was not recorded by this chain");
  const auto a = static_cast<Eigen::Index>(action_dim());
  Matrix g = logits_grad;  // d loss / d x_{y-1}, starting from x_0
  for (int y = 1; y <= schedule_.steps; ++y) {
    const double c1 = 1.0 / std::sqrt(schedule_.omega_at(y));
    const double c2 = c1 * schedule_.beta_at(y) / std::sqrt(1.0 - schedule_.omega_bar_at(y));
    const Matrix d_input = denoiser_.backward(trace.caches[schedule_.steps - y], -c2 * g, grads);
    g = c1 * g + d_input.topRows(a);
  }
}

nlohmann::json AssPolicy::to_json() const {
  return {{"kind", "diffusion"},
          {"num_clients", num_clients_},
          {"steps", schedule_.steps},
          {"embed_dim", options_.embed_dim},
          {"hidden", options_.hidden},
          {"beta_min", options_.beta_min},
          {"beta_max", options_.beta_max},
          {"variance", to_string(options_.variance)},
          {"noise_at_final_step", options_.noise_at_final_step},
          {"net", denoiser_.to_json()}};
}

AssPolicy AssPolicy::from_json(const nlohmann::json& j) {
  DiffusionOptions o;
  o.embed_dim = j.at("embed_dim").get<int>();
  o.hidden = j.at("hidden").get<std::vector<int>>();
  o.beta_min = j.at("beta_min").get<double>();
  o.beta_max = j.at("beta_max").get<double>();
  o.variance = variance_from_string(j.at("variance").get<std::string>());
  o.noise_at_final_step = j.at("noise_at_final_step").get<bool>();
  return AssPolicy(DenseNet::from_json(j.at("net")), j.at("num_clients").get<int>(), j.at("steps").get<int>(), o);
}

}  // namespace hiaudit
