#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sketchforge/core/rng.hpp"
#include "sketchforge/core/tensor.hpp"

namespace sf::nn {

/// A learnable tensor and its accumulated gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}
};

/// Activations recorded by a training-mode forward pass; mirrors the layer tree.
struct Cache {
  std::vector<Tensor> tensors;
  std::vector<Cache> children;
  Shape input_shape{};
};

/// A differentiable map on NCHW tensors.
///
/// `forward` is const and may run concurrently. Passing a cache records what
/// `backward` needs. `backward` returns dL/dx and, when `param_grads` is true,
/// adds dL/dtheta into each Param::grad.
class Layer {
public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor &x, Cache *cache) const = 0;
  virtual Tensor backward(const Cache &cache, const Tensor &dy, bool param_grads) = 0;
  virtual void collect(std::vector<Param *> &out) { (void)out; }
  virtual std::string kind() const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv2d : public Layer {
public:
  /// Square kernel, zero padding `kernel / 2` unless given.
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride = 1,
         int padding = -1);

  Tensor forward(const Tensor &x, Cache *cache) const override;
  Tensor backward(const Cache &cache, const Tensor &dy, bool param_grads) override;
  void collect(std::vector<Param *> &out) override;
  std::string kind() const override { return "conv2d"; }

  /// He-normal weights scaled by `gain`, zero bias.
  void init_he(Rng &rng, double gain = 1.0);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int padding() const { return pad_; }
  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Param weight;
  Param bias;

private:
  int in_, out_, k_, stride_, pad_;
};

class Relu : public Layer {
public:
  Tensor forward(const Tensor &x, Cache *cache) const override;
  Tensor backward(const Cache &cache, const Tensor &dy, bool param_grads) override;
  std::string kind() const override { return "relu"; }
};

class LeakyRelu : public Layer {
public:
  explicit LeakyRelu(double slope = 0.2) : slope_(slope) {}
  Tensor forward(const Tensor &x, Cache *cache) const override;
  Tensor backward(const Cache &cache, const Tensor &dy, bool param_grads) override;
  std::string kind() const override { return "leaky_relu"; }

private:
  double slope_;
};

class Tanh : public Layer {
public:
  Tensor forward(const Tensor &x, Cache *cache) const override;
  Tensor backward(const Cache &cache, const Tensor &dy, bool param_grads) override;
  std::string kind() const override { return "tanh"; }
};

/// x2 bilinear upsampling (pixel-centre sampling, edge clamp; see resize_bilinear).
class Upsample2x : public Layer {
public:
  Tensor forward(const Tensor &x, Cache *cache) const override;
  Tensor backward(const Cache &cache, const Tensor &dy, bool param_grads) override;
  std::string kind() const override { return "upsample_bilinear2x"; }
};

/// 2x2 max pooling, stride 2.
class MaxPool2x : public Layer {
public:
  Tensor forward(const Tensor &x, Cache *cache) const override;
  Tensor backward(const Cache &cache, const Tensor &dy, bool param_grads) override;
  std::string kind() const override { return "maxpool2x"; }
};

/// out = shortcut(x) + conv2(relu(conv1(x))). The shortcut is the identity
/// when channel counts agree and a 1x1 convolution otherwise.
class ResidualBlock : public Layer {
public:
  ResidualBlock(const std::string &name, int in_channels, int out_channels);
  Tensor forward(const Tensor &x, Cache *cache) const override;
  Tensor backward(const Cache &cache, const Tensor &dy, bool param_grads) override;
  void collect(std::vector<Param *> &out) override;
  std::string kind() const override { return "residual"; }

  /// He init; the second branch conv is scaled by `branch_gain` so a deep
  /// stack starts near the identity.
  void init(Rng &rng, double branch_gain);

  Conv2d &conv1() { return conv1_; }
  Conv2d &conv2() { return conv2_; }
  bool has_projection() const { return projection_ != nullptr; }

private:
  Conv2d conv1_;
  Relu relu_;
  Conv2d conv2_;
  std::unique_ptr<Conv2d> projection_;
};

class Sequential : public Layer {
public:
  Sequential() = default;
  Sequential(Sequential &&) = default;
  Sequential &operator=(Sequential &&) = default;

  template <typename L, typename... Args> L &add(Args &&...args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L &ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }
  void push(LayerPtr layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor &x, Cache *cache) const override;
  Tensor backward(const Cache &cache, const Tensor &dy, bool param_grads) override;
  void collect(std::vector<Param *> &out) override;
  std::string kind() const override { return "sequential"; }

  std::size_t size() const { return layers_.size(); }
  Layer &at(std::size_t i) { return *layers_.at(i); }
  const Layer &at(std::size_t i) const { return *layers_.at(i); }

private:
  std::vector<LayerPtr> layers_;
};

/// Functional bilinear resize of an NCHW tensor and its adjoint.
Tensor bilinear_resize(const Tensor &x, int height, int width);
Tensor bilinear_resize_backward(const Tensor &dy, const Shape &input_shape);

std::size_t count_parameters(const std::vector<Param *> &params);
void zero_grads(const std::vector<Param *> &params);

} // namespace sf::nn
