#include "hiaudit/net.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>

#include "hiaudit/errors.hpp"

namespace hiaudit {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kMish: return "mish";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "mish") return Activation::kMish;
  if (s == "tanh") return Activation::kTanh;
  if (s == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + s + "'");
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix activate(const Matrix& pre, Activation a) {
  switch (a) {
    case Activation::kMish: {
      const Eigen::ArrayXXd x = pre.array();
      const Eigen::ArrayXXd softplus = x.max(0.0) + (-x.abs()).exp().log1p();
      return (x * softplus.tanh()).matrix();
    }
    case Activation::kTanh: return pre.array().tanh().matrix();
    case Activation::kIdentity: return pre;
  }
  return pre;
}

Matrix activation_grad(const Matrix& pre, Activation a) {
  switch (a) {
    case Activation::kMish: {
      const Eigen::ArrayXXd x = pre.array();
      const Eigen::ArrayXXd e = (-x.abs()).exp();
      const Eigen::ArrayXXd t = (x.max(0.0) + e.log1p()).tanh();
      const Eigen::ArrayXXd sigmoid = (x >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
      return (t + x * (1.0 - t * t) * sigmoid).matrix();
    }
    case Activation::kTanh: {
      const Eigen::ArrayXXd t = pre.array().tanh();
      return (1.0 - t * t).matrix();
    }
    case Activation::kIdentity: return Matrix::Ones(pre.rows(), pre.cols());
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

void check_dims(const std::vector<int>& dims, const std::vector<Activation>& activations) {
  if (dims.size() < 2 || activations.size() + 1 != dims.size())
    throw ShapeError("a net needs dims.size() == activations.size() + 1 >= 2");
  for (int d : dims)
    if (d < 1) throw ShapeError("layer widths must be positive");
}

}  // namespace

double mish(double x) { return x * std::tanh(softplus(x)); }

double mish_grad(double x) {
  const double t = std::tanh(softplus(x));
  return t + x * (1.0 - t * t) * sigmoid(x);
}

void Gradients::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

bool Gradients::all_finite() const {
  for (const auto& w : weight)
    if (!w.allFinite()) return false;
  for (const auto& b : bias)
    if (!b.allFinite()) return false;
  return true;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weight) s += w.squaredNorm();
  for (const auto& b : bias) s += b.squaredNorm();
  return s;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.weight.size() != weight.size()) throw ShapeError("gradient layouts differ");
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  return *this;
}

DenseNet::DenseNet(std::vector<int> dims, std::vector<Activation> activations, Rng& rng) {
  *this = zeros(dims, activations);
  for (auto& layer : layers_) {
    const double fan_in = static_cast<double>(layer.weight.cols());
    const double fan_out = static_cast<double>(layer.weight.rows());
    const double scale = layer.activation == Activation::kMish ? std::sqrt(2.0 / fan_in)
                                                               : std::sqrt(2.0 / (fan_in + fan_out));
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = scale * rng.normal();
  }
}

DenseNet DenseNet::zeros(std::vector<int> dims, std::vector<Activation> activations) {
  check_dims(dims, activations);
  DenseNet net;
  for (std::size_t l = 0; l < activations.size(); ++l)
    net.layers_.push_back({Matrix::Zero(dims[l + 1], dims[l]), Vector::Zero(dims[l + 1]), activations[l]});
  return net;
}

int DenseNet::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
int DenseNet::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

std::vector<int> DenseNet::dims() const {
  std::vector<int> d;
  if (layers_.empty()) return d;
  d.push_back(input_dim());
  for (const auto& l : layers_) d.push_back(static_cast<int>(l.weight.rows()));
  return d;
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Matrix DenseNet::forward(const Matrix& input, Cache* cache) const {
  if (input.rows() != input_dim())
    throw ShapeError("net expects input width " + std::to_string(input_dim()) + ", got " +
                     std::to_string(input.rows()));
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->generation = generation_;
    cache->owner = this;
  }
  Matrix x = input;
  for (const auto& layer : layers_) {
    Matrix pre = layer.weight * x;
    pre.colwise() += layer.bias;
    Matrix out = activate(pre, layer.activation);
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->pre.push_back(std::move(pre));
    }
    x = std::move(out);
  }
  return x;
}

Vector DenseNet::forward(const Vector& input) const {
  return forward(Matrix(input)).col(0);
}

Matrix DenseNet::backward(const Cache& cache, const Matrix& output_grad, Gradients& grads) const {
  if (cache.owner != this || cache.generation != generation_ || cache.pre.size() != layers_.size())
    throw UsageError("backward() needs the cache of the latest forward() on this net");
  if (grads.weight.size() != layers_.size()) throw ShapeError("gradient buffer does not match the net");
  if (output_grad.rows() != output_dim() || output_grad.cols() != cache.pre.back().cols())
    throw ShapeError("output gradient shape mismatch");

  Matrix g = output_grad;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    const Matrix dpre = (g.array() * activation_grad(cache.pre[k], layer.activation).array()).matrix();
    grads.weight[k].noalias() += dpre * cache.inputs[k].transpose();
    grads.bias[k] += dpre.rowwise().sum();
    g.noalias() = layer.weight.transpose() * dpre;
  }
  return g;
}

Gradients DenseNet::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

std::vector<double> DenseNet::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers_) {
    flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
    flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return flat;
}

void DenseNet::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeError("flat parameter vector has the wrong length");
  ++generation_;
  std::size_t pos = 0;
  for (auto& l : layers_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.weight.size(), l.weight.data());
    pos += static_cast<std::size_t>(l.weight.size());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.data());
    pos += static_cast<std::size_t>(l.bias.size());
  }
}

bool DenseNet::all_finite() const {
  for (const auto& l : layers_)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

nlohmann::json DenseNet::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) {
    layers.push_back({{"in", l.weight.cols()},
                      {"out", l.weight.rows()},
                      {"activation", to_string(l.activation)},
                      {"weight", encode_doubles({l.weight.data(), static_cast<std::size_t>(l.weight.size())})},
                      {"bias", encode_doubles({l.bias.data(), static_cast<std::size_t>(l.bias.size())})}});
  }
  return {{"dims", dims()}, {"layers", layers}};
}

DenseNet DenseNet::from_json(const nlohmann::json& j) {
  std::vector<int> dims;
  std::vector<Activation> acts;
  const auto& layers = j.at("layers");
  if (layers.empty()) throw ConfigError("checkpoint net has no layers");
  dims.push_back(layers.front().at("in").get<int>());
  for (const auto& l : layers) {
    dims.push_back(l.at("out").get<int>());
    acts.push_back(activation_from_string(l.at("activation").get<std::string>()));
  }
  DenseNet net = zeros(dims, acts);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto w = decode_doubles(layers[k].at("weight").get<std::string>());
    const auto b = decode_doubles(layers[k].at("bias").get<std::string>());
    auto& layer = net.layers_[k];
    if (w.size() != static_cast<std::size_t>(layer.weight.size()) ||
        b.size() != static_cast<std::size_t>(layer.bias.size()))
      throw ConfigError("checkpoint layer " + std::to_string(k) + " has the wrong parameter count");
    std::copy(w.begin(), w.end(), layer.weight.data());
    std::copy(b.begin(), b.end(), layer.bias.data());
  }
  return net;
}

Adam::Adam(const DenseNet& net, AdamConfig config)
    : config_(config), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

void Adam::step(DenseNet& net, const Gradients& grads) {
  if (!grads.all_finite()) throw TrainingError("non-finite gradient passed to Adam");
  if (grads.weight.size() != m_.weight.size()) throw ShapeError("optimizer state does not match gradients");
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.lr, eps = config_.eps;

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  auto& layers = net.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, m_.weight[l], v_.weight[l], grads.weight[l]);
    update(layers[l].bias, m_.bias[l], v_.bias[l], grads.bias[l]);
  }
  if (!net.all_finite()) throw TrainingError("Adam produced non-finite parameters");
}

namespace {

nlohmann::json gradients_to_json(const Gradients& g) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t l = 0; l < g.weight.size(); ++l)
    out.push_back({{"weight", encode_doubles({g.weight[l].data(), static_cast<std::size_t>(g.weight[l].size())})},
                   {"bias", encode_doubles({g.bias[l].data(), static_cast<std::size_t>(g.bias[l].size())})},
                   {"rows", g.weight[l].rows()},
                   {"cols", g.weight[l].cols()}});
  return out;
}

Gradients gradients_from_json(const nlohmann::json& j) {
  Gradients g;
  for (const auto& l : j) {
    const auto rows = l.at("rows").get<Eigen::Index>();
    const auto cols = l.at("cols").get<Eigen::Index>();
    const auto w = decode_doubles(l.at("weight").get<std::string>());
    const auto b = decode_doubles(l.at("bias").get<std::string>());
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows)
      throw ConfigError("optimizer moment has the wrong size");
    g.weight.push_back(Eigen::Map<const Matrix>(w.data(), rows, cols));
    g.bias.push_back(Eigen::Map<const Vector>(b.data(), rows));
  }
  return g;
}

}  // namespace

nlohmann::json Adam::to_json() const {
  return {{"lr", config_.lr},
          {"beta1", config_.beta1},
          {"beta2", config_.beta2},
          {"eps", config_.eps},
          {"steps", steps_},
          {"m", gradients_to_json(m_)},
          {"v", gradients_to_json(v_)}};
}

Adam Adam::from_json(const nlohmann::json& j) {
  Adam a;
  a.config_ = {j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
               j.at("eps").get<double>()};
  a.steps_ = j.at("steps").get<long>();
  a.m_ = gradients_from_json(j.at("m"));
  a.v_ = gradients_from_json(j.at("v"));
  return a;
}

void soft_update(const DenseNet& live, DenseNet& target, double iota) {
  if (!(iota > 0.0 && iota <= 1.0)) throw std::invalid_argument("soft update rate must lie in (0, 1]");
  if (live.dims() != target.dims()) throw ShapeError("target net differs structurally from live net");
  auto& dst = target.mutable_layers();
  const auto& src = live.layers();
  for (std::size_t l = 0; l < dst.size(); ++l) {
    dst[l].weight = iota * src[l].weight + (1.0 - iota) * dst[l].weight;
    dst[l].bias = iota * src[l].bias + (1.0 - iota) * dst[l].bias;
  }
}

std::vector<double> sinusoidal_embed(int step, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("embedding width must be positive and even");
  std::vector<double> out(dim);
  for (int k = 0; k < dim / 2; ++k) {
    const double freq = std::pow(10000.0, -2.0 * k / dim);
    out[2 * k] = std::sin(step * freq);
    out[2 * k + 1] = std::cos(step * freq);
  }
  return out;
}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::array<std::uint8_t, 8> le_bytes(double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<std::uint8_t, 8> out{};
  for (auto& b : out) {
    b = static_cast<std::uint8_t>(bits & 0xFF);
    bits >>= 8;
  }
  return out;
}

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string encode_doubles(std::span<const double> values) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) {
    const auto b = le_bytes(v);
    bytes.insert(bytes.end(), b.begin(), b.end());
  }
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t chunk = (static_cast<std::uint32_t>(bytes[i]) << 16) |
                                (i + 1 < bytes.size() ? static_cast<std::uint32_t>(bytes[i + 1]) << 8 : 0) |
                                (i + 2 < bytes.size() ? static_cast<std::uint32_t>(bytes[i + 2]) : 0);
    out += kAlphabet[(chunk >> 18) & 63];
    out += kAlphabet[(chunk >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(chunk >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[chunk & 63] : '=';
  }
  return out;
}

std::vector<double> decode_doubles(const std::string& text) {
  if (text.size() % 4 != 0) throw ConfigError("base64 payload length is not a multiple of 4");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t chunk = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int v = 0;
      if (c == '=') {
        ++pad;
      } else {
        v = decode_char(c);
        if (v < 0 || pad > 0) throw ConfigError("invalid base64 payload");
      }
      chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
    }
    bytes.push_back(static_cast<std::uint8_t>(chunk >> 16));
    if (pad < 2) bytes.push_back(static_cast<std::uint8_t>(chunk >> 8));
    if (pad < 1) bytes.push_back(static_cast<std::uint8_t>(chunk));
  }
  if (bytes.size() % 8 != 0) throw ConfigError("base64 payload is not a float64 array");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int k = 7; k >= 0; --k) bits = (bits << 8) | bytes[i * 8 + k];
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace hiaudit
