#include "hiaudit/actor.hpp"

#include <algorithm>
#include <cmath>

#include "hiaudit/baselines.hpp"
#include "hiaudit/diffusion.hpp"
#include "hiaudit/errors.hpp"

namespace hiaudit {

std::vector<double> Actor::distribution(std::span<const double> belief, Rng& rng) const {
  Matrix b = Eigen::Map<const Vector>(belief.data(), static_cast<Eigen::Index>(belief.size()));
  const Matrix probs = forward(b, rng, nullptr);
  return {probs.data(), probs.data() + probs.size()};
}

std::unique_ptr<Actor> actor_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "diffusion") return std::make_unique<AssPolicy>(AssPolicy::from_json(j));
  if (kind == "softmax") return std::make_unique<SoftmaxActor>(SoftmaxActor::from_json(j));
  throw ConfigError("unknown actor kind '" + kind + "'");
}

Matrix beliefs_to_matrix(std::span<const Belief> beliefs) {
  if (beliefs.empty()) return {};
  const auto h = static_cast<Eigen::Index>(beliefs.front().size());
  Matrix m(h, static_cast<Eigen::Index>(beliefs.size()));
  for (std::size_t c = 0; c < beliefs.size(); ++c) {
    if (static_cast<Eigen::Index>(beliefs[c].size()) != h) throw ShapeError("beliefs of different sizes in one batch");
    m.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Vector>(beliefs[c].data(), h);
  }
  return m;
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - m).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

Matrix softmax_backward(const Matrix& probs, const Matrix& probs_grad) {
  // dx_a = p_a (g_a - sum_k p_k g_k)
  const Eigen::RowVectorXd inner = (probs.array() * probs_grad.array()).colwise().sum();
  return (probs.array() * (probs_grad.rowwise() - inner).array()).matrix();
}

std::uint32_t sample_action(std::span<const double> probs, Rng& rng) {
  if (probs.empty()) throw std::invalid_argument("empty action distribution");
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return static_cast<std::uint32_t>(a);
  }
  // Rounding left u above the running sum; fall back to the last action with mass.
  for (std::size_t a = probs.size(); a-- > 0;)
    if (probs[a] > 0.0) return static_cast<std::uint32_t>(a);
  return static_cast<std::uint32_t>(probs.size() - 1);
}

std::uint32_t argmax_action(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("empty action distribution");
  return static_cast<std::uint32_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace hiaudit
