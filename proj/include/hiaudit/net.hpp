#pragma once

// Small feed-forward networks with hand-written reverse mode, Adam and
// JSON checkpoints. Samples are stored column-wise: a batch of B inputs of
// width D is a D x B matrix.

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hiaudit/rng.hpp"
#include "json.hpp"

namespace hiaudit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { kMish, kTanh, kIdentity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

double mish(double x);
double mish_grad(double x);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
  Activation activation = Activation::kIdentity;
};

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  void set_zero();
  bool all_finite() const;
  double squared_norm() const;
  Gradients& operator+=(const Gradients& other);
};

class DenseNet {
 public:
  // Activations recorded by forward() and consumed by backward().
  struct Cache {
    std::vector<Matrix> inputs;  // input of each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
    std::uint64_t generation = 0;
    const DenseNet* owner = nullptr;
  };

  DenseNet() = default;

  // dims has one more entry than activations. Weights get He-normal init for
  // mish layers and Xavier-normal otherwise; biases start at zero.
  DenseNet(std::vector<int> dims, std::vector<Activation> activations, Rng& rng);

  // Same architecture with every parameter zero.
  static DenseNet zeros(std::vector<int> dims, std::vector<Activation> activations);

  int input_dim() const;
  int output_dim() const;
  std::vector<int> dims() const;
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  // Any mutable access invalidates outstanding caches.
  std::vector<DenseLayer>& mutable_layers() {
    ++generation_;
    return layers_;
  }

  Matrix forward(const Matrix& input, Cache* cache = nullptr) const;
  Vector forward(const Vector& input) const;

  // Accumulates parameter gradients into `grads` and returns d loss / d input.
  // Throws UsageError when the cache was produced by another net or before a
  // parameter update.
  Matrix backward(const Cache& cache, const Matrix& output_grad, Gradients& grads) const;

  Gradients zero_gradients() const;

  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool all_finite() const;

  nlohmann::json to_json() const;
  static DenseNet from_json(const nlohmann::json& j);

 private:
  std::vector<DenseLayer> layers_;
  std::uint64_t generation_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const DenseNet& net, AdamConfig config);

  // Throws TrainingError when the gradients contain NaN/Inf.
  void step(DenseNet& net, const Gradients& grads);

  long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  nlohmann::json to_json() const;
  static Adam from_json(const nlohmann::json& j);

 private:
  AdamConfig config_;
  long steps_ = 0;
  Gradients m_;
  Gradients v_;
};

// target <- iota * live + (1 - iota) * target
void soft_update(const DenseNet& live, DenseNet& target, double iota);

// Interleaved sin/cos encoding of an integer step. Throws on odd dim.
std::vector<double> sinusoidal_embed(int step, int dim);

// Base64 of the raw little-endian bytes of a float64 array.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(const std::string& text);

}  // namespace hiaudit
