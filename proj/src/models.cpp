#include <array>
#include <cmath>
#include <random>

#include "rcomm/harness.hpp"

namespace rcomm {

namespace {

// f_i(x) = 0.5 * ||x - a_i||^2 over target rows a_i; single layer.
class QuadraticModel : public Model {
 public:
  QuadraticModel(std::size_t d, std::uint32_t)
      : x_("x", {d}), g_("x.grad", {d}) {}

  std::size_t layer_count() const override { return 1; }
  FlatTensor& params(std::size_t) override { return x_; }
  FlatTensor& grads(std::size_t) override { return g_; }

  double loss(const Batch& batch) const override {
    const std::size_t d = x_.size();
    double total = 0.0;
    for (std::size_t i = batch.begin; i < batch.end; ++i) {
      const float* a = batch.data->row(i);
      for (std::size_t j = 0; j < d; ++j) {
        double r = static_cast<double>(x_[j]) - a[j];
        total += 0.5 * r * r;
      }
    }
    return total / static_cast<double>(batch.size());
  }

  void backward(const Batch& batch) override {
    const std::size_t d = x_.size();
    std::vector<double> acc(d, 0.0);
    for (std::size_t i = batch.begin; i < batch.end; ++i) {
      const float* a = batch.data->row(i);
      for (std::size_t j = 0; j < d; ++j)
        acc[j] += static_cast<double>(x_[j]) - a[j];
    }
    for (std::size_t j = 0; j < d; ++j)
      g_[j] = static_cast<float>(acc[j] / static_cast<double>(batch.size()));
  }

 private:
  FlatTensor x_, g_;
};

// loss_i(w) = log(1 + exp(-y_i w.x_i)); single layer, no bias.
class LogisticModel : public Model {
 public:
  LogisticModel(std::size_t d, std::uint32_t)
      : w_("w", {d}), g_("w.grad", {d}) {}

  std::size_t layer_count() const override { return 1; }
  FlatTensor& params(std::size_t) override { return w_; }
  FlatTensor& grads(std::size_t) override { return g_; }

  double loss(const Batch& batch) const override {
    const std::size_t d = w_.size();
    double total = 0.0;
    for (std::size_t i = batch.begin; i < batch.end; ++i) {
      const float* x = batch.data->row(i);
      double margin = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        margin += static_cast<double>(w_[j]) * x[j];
      margin *= batch.data->labels[i];
      // log1p(exp(-m)) with the stable branch for large |m|
      total += margin > 0 ? std::log1p(std::exp(-margin))
                          : -margin + std::log1p(std::exp(margin));
    }
    return total / static_cast<double>(batch.size());
  }

  void backward(const Batch& batch) override {
    const std::size_t d = w_.size();
    std::vector<double> acc(d, 0.0);
    for (std::size_t i = batch.begin; i < batch.end; ++i) {
      const float* x = batch.data->row(i);
      const double y = batch.data->labels[i];
      double margin = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        margin += static_cast<double>(w_[j]) * x[j];
      margin *= y;
      const double sig = 1.0 / (1.0 + std::exp(margin));  // sigma(-m)
      for (std::size_t j = 0; j < d; ++j) acc[j] += -y * x[j] * sig;
    }
    for (std::size_t j = 0; j < d; ++j)
      g_[j] = static_cast<float>(acc[j] / static_cast<double>(batch.size()));
  }

 private:
  FlatTensor w_, g_;
};

// Two-layer tanh network with a logistic loss on the scalar output:
//   out = w2 . tanh(W1 x + b1) + b2,  loss = log(1 + exp(-y out)).
// Four layers so bucketing has something to group.
class MlpModel : public Model {
 public:
  MlpModel(std::size_t d, std::size_t hidden, std::uint32_t seed)
      : d_(d), h_(hidden) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> gauss(0.0f, 0.5f);
    auto init = [&](FlatTensor& t) {
      for (std::size_t k = 0; k < t.size(); ++k) t[k] = gauss(rng);
    };
    layers_[0] = FlatTensor("W1", {h_, d_});
    layers_[1] = FlatTensor("b1", {h_});
    layers_[2] = FlatTensor("w2", {h_});
    layers_[3] = FlatTensor("b2", {1});
    for (auto& t : layers_) init(t);
    grads_[0] = FlatTensor("W1.grad", {h_, d_});
    grads_[1] = FlatTensor("b1.grad", {h_});
    grads_[2] = FlatTensor("w2.grad", {h_});
    grads_[3] = FlatTensor("b2.grad", {1});
  }

  std::size_t layer_count() const override { return 4; }
  FlatTensor& params(std::size_t l) override { return layers_.at(l); }
  FlatTensor& grads(std::size_t l) override { return grads_.at(l); }

  double loss(const Batch& batch) const override {
    double total = 0.0;
    std::vector<double> hidden(h_);
    for (std::size_t i = batch.begin; i < batch.end; ++i) {
      double m = forward(batch.data->row(i), hidden) *
                 batch.data->labels[i];
      total += m > 0 ? std::log1p(std::exp(-m))
                     : -m + std::log1p(std::exp(m));
    }
    return total / static_cast<double>(batch.size());
  }

  void backward(const Batch& batch) override {
    std::vector<double> gW1(h_ * d_, 0.0), gb1(h_, 0.0), gw2(h_, 0.0);
    double gb2 = 0.0;
    std::vector<double> hidden(h_);
    for (std::size_t i = batch.begin; i < batch.end; ++i) {
      const float* x = batch.data->row(i);
      const double y = batch.data->labels[i];
      const double out = forward(x, hidden);
      const double dout = -y / (1.0 + std::exp(y * out));
      gb2 += dout;
      for (std::size_t k = 0; k < h_; ++k) {
        gw2[k] += dout * hidden[k];
        const double dpre =
            dout * layers_[2][k] * (1.0 - hidden[k] * hidden[k]);
        gb1[k] += dpre;
        for (std::size_t j = 0; j < d_; ++j) gW1[k * d_ + j] += dpre * x[j];
      }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t k = 0; k < gW1.size(); ++k)
      grads_[0][k] = static_cast<float>(gW1[k] * inv);
    for (std::size_t k = 0; k < h_; ++k) {
      grads_[1][k] = static_cast<float>(gb1[k] * inv);
      grads_[2][k] = static_cast<float>(gw2[k] * inv);
    }
    grads_[3][0] = static_cast<float>(gb2 * inv);
  }

 private:
  double forward(const float* x, std::vector<double>& hidden) const {
    double out = layers_[3][0];
    for (std::size_t k = 0; k < h_; ++k) {
      double pre = layers_[1][k];
      for (std::size_t j = 0; j < d_; ++j)
        pre += static_cast<double>(layers_[0][k * d_ + j]) * x[j];
      hidden[k] = std::tanh(pre);
      out += static_cast<double>(layers_[2][k]) * hidden[k];
    }
    return out;
  }

  std::size_t d_, h_;
  std::array<FlatTensor, 4> layers_;
  std::array<FlatTensor, 4> grads_;
};

}  // namespace

std::unique_ptr<Model> make_model(ModelKind kind, std::size_t d,
                                  std::size_t hidden, std::uint32_t seed) {
  switch (kind) {
    case ModelKind::quadratic:
      return std::make_unique<QuadraticModel>(d, seed);
    case ModelKind::logistic:
      return std::make_unique<LogisticModel>(d, seed);
    case ModelKind::mlp:
      return std::make_unique<MlpModel>(d, hidden ? hidden : 8, seed);
  }
  throw Error("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "quadratic") return ModelKind::quadratic;
  if (s == "logistic") return ModelKind::logistic;
  if (s == "mlp") return ModelKind::mlp;
  throw Error("unknown model kind '" + s + "'");
}

}  // namespace rcomm
