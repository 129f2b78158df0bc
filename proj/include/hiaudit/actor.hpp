#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hiaudit/belief.hpp"
#include "hiaudit/net.hpp"
#include "hiaudit/rng.hpp"

namespace hiaudit {

// Anything that maps a belief to a distribution over the 2^N audit actions.
// Policies only ever receive the belief, never the hidden client states.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual int action_dim() const = 0;
  virtual std::vector<double> distribution(std::span<const double> belief, Rng& rng) const = 0;
};

// Everything backward() needs from a batched forward pass.
struct ActorTrace {
  std::vector<DenseNet::Cache> caches;
  Matrix logits;  // action_dim x batch
  Matrix probs;   // softmax of logits
};

// A trainable policy: a single network whose output logits go through softmax.
class Actor : public Policy {
 public:
  // Beliefs are columns. Stochastic actors draw their noise from rng.
  virtual Matrix forward(const Matrix& beliefs, Rng& rng, ActorTrace* trace) const = 0;
  // Accumulates parameter gradients for d loss / d logits.
  virtual void backward(const ActorTrace& trace, const Matrix& logits_grad, Gradients& grads) const = 0;

  virtual const DenseNet& net() const = 0;
  virtual DenseNet& mutable_net() = 0;
  virtual std::unique_ptr<Actor> clone() const = 0;
  virtual nlohmann::json to_json() const = 0;

  std::vector<double> distribution(std::span<const double> belief, Rng& rng) const override;
};

// Rebuilds whichever actor kind a checkpoint describes.
std::unique_ptr<Actor> actor_from_json(const nlohmann::json& j);

Matrix beliefs_to_matrix(std::span<const Belief> beliefs);

// Column-wise numerically stable softmax.
Matrix softmax_columns(const Matrix& logits);

// d loss / d logits given d loss / d probs, for column-wise softmax.
Matrix softmax_backward(const Matrix& probs, const Matrix& probs_grad);

std::uint32_t sample_action(std::span<const double> probs, Rng& rng);
// Deterministic evaluation mode: lowest index among the maxima.
std::uint32_t argmax_action(std::span<const double> probs);

}  // namespace hiaudit
