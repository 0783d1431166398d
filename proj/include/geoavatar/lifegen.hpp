// Life-pattern generation: a gradient-penalty Wasserstein GAN over vectorized
// life patterns.
//
// Networks are plain tanh MLPs with manual backprop. The gradient penalty
// needs the gradient of (|grad_x D(x_hat)| - 1)^2 with respect to the critic
// weights, i.e. backprop through the input-gradient computation itself; that
// double-backprop pass is hand-derived here and is checked against central
// finite differences in the test suite.
//
// Batch convention: matrices carry one sample per column.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "geoavatar/core.hpp"

namespace geoavatar {

namespace nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Grads {
  std::vector<Mat> W;
  std::vector<Vec> b;
  void setZero() {
    for (auto& w : W) w.setZero();
    for (auto& v : b) v.setZero();
  }
};

// Fully connected net, tanh hidden activations, linear output. Supports zero
// hidden layers (a plain affine map).
class Mlp {
 public:
  Mlp() = default;

  // layers = {in, h1, ..., out}
  Mlp(const std::vector<int>& layers, Rng& rng, double weight_scale = 0.0) {
    require_config(layers.size() >= 2, "mlp: need at least input and output sizes");
    for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
      const int fan_in = layers[k], fan_out = layers[k + 1];
      // Xavier-ish init unless an explicit scale is given
      const double s = weight_scale > 0 ? weight_scale : std::sqrt(2.0 / double(fan_in + fan_out));
      Mat w(fan_out, fan_in);
      for (int i = 0; i < fan_out; ++i)
        for (int j = 0; j < fan_in; ++j) w(i, j) = s * rng.normal();
      W_.push_back(std::move(w));
      b_.push_back(Vec::Zero(fan_out));
    }
  }

  int input_dim() const { return int(W_.front().cols()); }
  int output_dim() const { return int(W_.back().rows()); }
  int depth() const { return int(W_.size()); }  // number of affine layers

  std::vector<Mat>& weights() { return W_; }
  std::vector<Vec>& biases() { return b_; }
  const std::vector<Mat>& weights() const { return W_; }
  const std::vector<Vec>& biases() const { return b_; }

  Grads zero_grads() const {
    Grads g;
    for (const auto& w : W_) g.W.push_back(Mat::Zero(w.rows(), w.cols()));
    for (const auto& v : b_) g.b.push_back(Vec::Zero(v.size()));
    return g;
  }

  struct Cache {
    Mat x;                // input, in x B
    std::vector<Mat> h;   // h[k] = activations after layer k (tanh), k < depth-1
    Mat y;                // linear output, out x B
  };

  Cache forward(const Mat& x) const {
    require(int(x.rows()) == input_dim(), "mlp: input dimension mismatch");
    Cache c;
    c.x = x;
    Mat cur = x;
    const int K = depth();
    for (int k = 0; k < K; ++k) {
      Mat a = (W_[static_cast<std::size_t>(k)] * cur).colwise() + b_[static_cast<std::size_t>(k)];
      if (k + 1 < K) {
        cur = a.array().tanh().matrix();
        c.h.push_back(cur);
      } else {
        c.y = std::move(a);
      }
    }
    return c;
  }

  // Standard reverse pass: given dL/dy, accumulates parameter gradients and
  // returns dL/dx.
  Mat backward(const Cache& c, const Mat& gy, Grads& grads) const {
    const int K = depth();
    Mat delta = gy;  // dL/da at the current layer
    for (int k = K - 1; k >= 0; --k) {
      const Mat& below = (k == 0) ? c.x : c.h[static_cast<std::size_t>(k - 1)];
      grads.W[static_cast<std::size_t>(k)] += delta * below.transpose();
      grads.b[static_cast<std::size_t>(k)] += delta.rowwise().sum();
      if (k == 0) return W_[0].transpose() * delta;
      Mat gh = W_[static_cast<std::size_t>(k)].transpose() * delta;
      // through tanh: sigma' = 1 - h^2
      delta = gh.cwiseProduct((1.0 - c.h[static_cast<std::size_t>(k - 1)].array().square()).matrix());
    }
    return {};
  }

  // ---- input-gradient machinery (scalar-output critics only) --------------

  struct InputGradCache {
    std::vector<Mat> delta;  // delta[k]: dD/da_{k+1}... indexed 0..K-1, delta[K-1] = ones
    std::vector<Mat> m;      // m[k] = W_{k+1}^T delta_{k+1} for k = 0..K-2
    Mat g;                   // dD/dx per column, in x B
  };

  // Gradient of the scalar output with respect to the input, per column.
  InputGradCache input_gradient(const Cache& c) const {
    require(output_dim() == 1, "input_gradient: critic must have scalar output");
    const int K = depth();
    const int B = int(c.x.cols());
    InputGradCache ig;
    ig.delta.resize(static_cast<std::size_t>(K));
    ig.m.resize(static_cast<std::size_t>(std::max(0, K - 1)));
    ig.delta[static_cast<std::size_t>(K - 1)] = Mat::Ones(1, B);
    for (int k = K - 2; k >= 0; --k) {
      ig.m[static_cast<std::size_t>(k)] = W_[static_cast<std::size_t>(k + 1)].transpose() * ig.delta[static_cast<std::size_t>(k + 1)];
      // sigma'(a_k) from cached tanh values
      ig.delta[static_cast<std::size_t>(k)] = ig.m[static_cast<std::size_t>(k)].cwiseProduct(
          (1.0 - c.h[static_cast<std::size_t>(k)].array().square()).matrix());
    }
    ig.g = W_[0].transpose() * ig.delta[0];
    return ig;
  }

  // Backprop of a loss through the input-gradient computation: given
  // dL/dg (same shape as g), accumulates dL/dtheta. This is the
  // double-backprop path of the gradient penalty.
  void input_gradient_backward(const Cache& c, const InputGradCache& ig, const Mat& gbar,
                               Grads& grads) const {
    const int K = depth();
    const int B = int(c.x.cols());
    // g = W_1^T delta_1 (with delta_1 == delta[0])
    Mat delta_bar = W_[0] * gbar;                       // dL/ddelta_0
    grads.W[0] += ig.delta[0] * gbar.transpose();       // direct W_1 path
    std::vector<Mat> a_bar(static_cast<std::size_t>(K));             // dL/da_k from sigma'' paths
    for (int k = 0; k <= K - 2; ++k) {
      // delta_k = m_k .* sigma'(a_k)
      const Mat& h = c.h[static_cast<std::size_t>(k)];
      Mat sp = (1.0 - h.array().square()).matrix();           // sigma'
      Mat spp = (-2.0 * h.array() * (1.0 - h.array().square())).matrix();  // sigma''
      Mat m_bar = delta_bar.cwiseProduct(sp);
      Mat s_bar = delta_bar.cwiseProduct(ig.m[static_cast<std::size_t>(k)]);
      a_bar[static_cast<std::size_t>(k)] = s_bar.cwiseProduct(spp);
      // m_k = W_{k+1}^T delta_{k+1}
      grads.W[static_cast<std::size_t>(k + 1)] += ig.delta[static_cast<std::size_t>(k + 1)] * m_bar.transpose();
      delta_bar = W_[static_cast<std::size_t>(k + 1)] * m_bar;  // dL/ddelta_{k+1}
    }
    // propagate the sigma'' contributions back through the forward pass
    Mat h_bar = Mat::Zero(1, B);  // re-sized below; dL/dh_k running buffer
    bool have_h_bar = false;
    for (int k = K - 2; k >= 0; --k) {
      Mat a_total = a_bar[static_cast<std::size_t>(k)];
      if (have_h_bar) {
        const Mat& h = c.h[static_cast<std::size_t>(k)];
        a_total += h_bar.cwiseProduct((1.0 - h.array().square()).matrix());
      }
      const Mat& below = (k == 0) ? c.x : c.h[static_cast<std::size_t>(k - 1)];
      grads.W[static_cast<std::size_t>(k)] += a_total * below.transpose();
      grads.b[static_cast<std::size_t>(k)] += a_total.rowwise().sum();
      if (k > 0) {
        h_bar = W_[static_cast<std::size_t>(k)].transpose() * a_total;
        have_h_bar = true;
      }
    }
  }

  // flat parameter access for optimizers and serialization
  int parameter_count() const {
    int n = 0;
    for (const auto& w : W_) n += int(w.size());
    for (const auto& v : b_) n += int(v.size());
    return n;
  }
  std::vector<double> parameters() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(parameter_count()));
    for (const auto& w : W_) out.insert(out.end(), w.data(), w.data() + w.size());
    for (const auto& v : b_) out.insert(out.end(), v.data(), v.data() + v.size());
    return out;
  }
  void set_parameters(const std::vector<double>& p) {
    require(int(p.size()) == parameter_count(), "mlp: parameter vector size mismatch");
    std::size_t pos = 0;
    for (auto& w : W_) {
      std::copy(p.begin() + long(pos), p.begin() + long(pos + static_cast<std::size_t>(w.size())), w.data());
      pos += static_cast<std::size_t>(w.size());
    }
    for (auto& v : b_) {
      std::copy(p.begin() + long(pos), p.begin() + long(pos + static_cast<std::size_t>(v.size())), v.data());
      pos += static_cast<std::size_t>(v.size());
    }
  }
  std::vector<int> layer_sizes() const {
    std::vector<int> s{input_dim()};
    for (const auto& w : W_) s.push_back(int(w.rows()));
    return s;
  }

 private:
  std::vector<Mat> W_;
  std::vector<Vec> b_;
};

struct Adam {
  double lr = 1e-4, beta1 = 0.5, beta2 = 0.9, eps = 1e-8;
  Grads m, v;
  long t = 0;

  void init(const Mlp& net) {
    m = net.zero_grads();
    v = net.zero_grads();
    t = 0;
  }
  void step(Mlp& net, const Grads& g) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (std::size_t k = 0; k < net.weights().size(); ++k) {
      m.W[k] = beta1 * m.W[k] + (1.0 - beta1) * g.W[k];
      v.W[k] = beta2 * v.W[k] + (1.0 - beta2) * g.W[k].cwiseProduct(g.W[k]);
      net.weights()[k] -=
          (lr * (m.W[k] / bc1).array() / ((v.W[k] / bc2).array().sqrt() + eps)).matrix();
      m.b[k] = beta1 * m.b[k] + (1.0 - beta1) * g.b[k];
      v.b[k] = beta2 * v.b[k] + (1.0 - beta2) * g.b[k].cwiseProduct(g.b[k]);
      net.biases()[k] -=
          (lr * (m.b[k] / bc1).array() / ((v.b[k] / bc2).array().sqrt() + eps)).matrix();
    }
  }
};

}  // namespace nn

// ---------------------------------------------------------------------------
// Pattern parameterization
// ---------------------------------------------------------------------------

// Row-blockwise softmax over a raw pattern vector batch (pi block first, then
// the 24*L transition rows).
inline nn::Mat pattern_softmax(const nn::Mat& raw, int L) {
  require(int(raw.rows()) == pattern_dim(L), "pattern_softmax: dimension mismatch");
  nn::Mat out(raw.rows(), raw.cols());
  const int n_rows = 1 + kHoursPerDay * L;
  for (int col = 0; col < raw.cols(); ++col) {
    for (int r = 0; r < n_rows; ++r) {
      const int off = r == 0 ? 0 : L + (r - 1) * L;
      double mx = raw(off, col);
      for (int k = 1; k < L; ++k) mx = std::max(mx, raw(off + k, col));
      double z = 0.0;
      for (int k = 0; k < L; ++k) {
        const double e = std::exp(raw(off + k, col) - mx);
        out(off + k, col) = e;
        z += e;
      }
      for (int k = 0; k < L; ++k) out(off + k, col) /= z;
    }
  }
  return out;
}

// Jacobian-vector product of the blockwise softmax: given dL/dp returns
// dL/draw, using p = softmax(raw).
inline nn::Mat pattern_softmax_backward(const nn::Mat& p, const nn::Mat& gp, int L) {
  nn::Mat out(p.rows(), p.cols());
  const int n_rows = 1 + kHoursPerDay * L;
  for (int col = 0; col < p.cols(); ++col) {
    for (int r = 0; r < n_rows; ++r) {
      const int off = r == 0 ? 0 : L + (r - 1) * L;
      double dot = 0.0;
      for (int k = 0; k < L; ++k) dot += p(off + k, col) * gp(off + k, col);
      for (int k = 0; k < L; ++k)
        out(off + k, col) = p(off + k, col) * (gp(off + k, col) - dot);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Models and config
// ---------------------------------------------------------------------------

struct GeneratorModel {
  nn::Mlp net;  // z_dim -> pattern_dim(L), raw logits
  int z_dim = 64;
  int L = kDefaultAlphabetSize;
};

struct CriticModel {
  nn::Mlp net;  // pattern_dim(L) -> 1
};

struct TrainConfig {
  double lambda_gp = 10.0;
  int n_critic = 5;
  int batch = 32;
  int epochs = 60;
  double lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  std::uint64_t seed = 0;
  std::vector<int> gen_hidden{256, 256};
  std::vector<int> critic_hidden{256, 256};
  int z_dim = 64;
};

struct TrainLogEntry {
  int epoch = 0;
  double wasserstein = 0;  // mean D(real) - mean D(fake) on the probe batch
  double critic_loss = 0;
  double penalty = 0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline LifePattern generator_forward(const GeneratorModel& model, const std::vector<double>& z) {
  require(int(z.size()) == model.z_dim, "generator_forward: z has wrong length");
  nn::Mat zin = Eigen::Map<const nn::Vec>(z.data(), long(z.size()));
  const auto cache = model.net.forward(zin);
  const nn::Mat p = pattern_softmax(cache.y, model.L);
  std::vector<double> v(p.data(), p.data() + p.size());
  return devectorize(model.L, v);
}

inline std::vector<LifePattern> sample_life_patterns(const GeneratorModel& model, int n,
                                                     Rng& rng) {
  std::vector<LifePattern> out;
  out.reserve(static_cast<std::size_t>(std::max(0, n)));
  for (int i = 0; i < n; ++i) {
    std::vector<double> z(static_cast<std::size_t>(model.z_dim));
    for (auto& v : z) v = rng.normal();
    out.push_back(generator_forward(model, z));
  }
  return out;
}

namespace detail {

// Penalty values and critic-parameter gradients for a batch of interpolates.
// Returns mean (|g|-1)^2; adds lambda-scaled gradients into `grads` when
// grads != nullptr.
inline double gradient_penalty_batch(const nn::Mlp& critic, const nn::Mat& x_hat, double lambda,
                                     nn::Grads* grads) {
  const int B = int(x_hat.cols());
  const auto cache = critic.forward(x_hat);
  const auto ig = critic.input_gradient(cache);
  nn::Vec norms(B);
  for (int b = 0; b < B; ++b) norms(b) = ig.g.col(b).norm();
  double penalty = 0.0;
  for (int b = 0; b < B; ++b) penalty += (norms(b) - 1.0) * (norms(b) - 1.0);
  penalty /= B;
  if (grads) {
    nn::Mat gbar(ig.g.rows(), B);
    for (int b = 0; b < B; ++b) {
      if (norms(b) > 1e-12)
        gbar.col(b) = (lambda / B) * 2.0 * (norms(b) - 1.0) / norms(b) * ig.g.col(b);
      else
        gbar.col(b).setZero();
    }
    critic.input_gradient_backward(cache, ig, gbar, *grads);
  }
  return penalty;
}

}  // namespace detail

// Single-interpolate gradient penalty term (|grad D at u*x_real +
// (1-u)*x_fake| - 1)^2.
inline double gradient_penalty(const CriticModel& critic, const std::vector<double>& x_real,
                               const std::vector<double>& x_fake, double u) {
  require(u >= 0.0 && u <= 1.0, "gradient_penalty: u must be in [0, 1]");
  require(x_real.size() == x_fake.size(), "gradient_penalty: dimension mismatch");
  nn::Mat x_hat(long(x_real.size()), 1);
  for (std::size_t i = 0; i < x_real.size(); ++i)
    x_hat(long(i), 0) = u * x_real[i] + (1.0 - u) * x_fake[i];
  return detail::gradient_penalty_batch(critic.net, x_hat, 0.0, nullptr);
}

// Full critic loss on a batch: mean D(fake) - mean D(real) + lambda * mean
// penalty. Accumulates critic gradients when grads != nullptr. Split out so
// the finite-difference tests can drive the exact training computation.
inline double critic_loss(const nn::Mlp& critic, const nn::Mat& x_real, const nn::Mat& x_fake,
                          const nn::Vec& u, double lambda, nn::Grads* grads,
                          double* penalty_out = nullptr) {
  const int B = int(x_real.cols());
  require(int(x_fake.cols()) == B && int(u.size()) == B, "critic_loss: batch size mismatch");
  const auto cache_f = critic.forward(x_fake);
  const auto cache_r = critic.forward(x_real);
  double loss = cache_f.y.sum() / B - cache_r.y.sum() / B;
  if (grads) {
    nn::Mat gy = nn::Mat::Constant(1, B, 1.0 / B);
    critic.backward(cache_f, gy, *grads);
    gy = nn::Mat::Constant(1, B, -1.0 / B);
    critic.backward(cache_r, gy, *grads);
  }
  nn::Mat x_hat(x_real.rows(), B);
  for (int b = 0; b < B; ++b)
    x_hat.col(b) = u(b) * x_real.col(b) + (1.0 - u(b)) * x_fake.col(b);
  const double penalty = detail::gradient_penalty_batch(critic, x_hat, lambda, grads);
  if (penalty_out) *penalty_out = penalty;
  return loss + lambda * penalty;
}

// Generator loss -mean D(softmax(G(z))); accumulates generator gradients when
// grads != nullptr.
inline double generator_loss(const nn::Mlp& gen, const nn::Mlp& critic, const nn::Mat& z, int L,
                             nn::Grads* grads) {
  const int B = int(z.cols());
  const auto cache_g = gen.forward(z);
  const nn::Mat fake = pattern_softmax(cache_g.y, L);
  const auto cache_d = critic.forward(fake);
  const double loss = -cache_d.y.sum() / B;
  if (grads) {
    nn::Grads dummy = critic.zero_grads();
    nn::Mat gy = nn::Mat::Constant(1, B, -1.0 / B);
    nn::Mat gfake = critic.backward(cache_d, gy, dummy);
    nn::Mat graw = pattern_softmax_backward(fake, gfake, L);
    gen.backward(cache_g, graw, *grads);
  }
  return loss;
}

struct TrainResult {
  GeneratorModel generator;
  CriticModel critic;
  std::vector<TrainLogEntry> log;
};

// Standard WGAN-GP loop: n_critic critic updates per generator update, Adam
// on both nets, fully seeded. The corpus matrix carries one vectorized
// pattern per column.
inline TrainResult train_wgan(const nn::Mat& corpus, int L, const TrainConfig& cfg) {
  const int M = pattern_dim(L);
  require(int(corpus.rows()) == M, "train_wgan: corpus dimension mismatch");
  const int N = int(corpus.cols());
  require_config(cfg.batch >= 1 && cfg.n_critic >= 1 && cfg.lambda_gp >= 0.0,
                 "train_wgan: invalid config");
  require_config(N >= 2 * cfg.batch, "train_wgan: corpus must hold at least 2*batch patterns");

  Rng init_rng(derive_seed(cfg.seed, "wgan-init"));
  TrainResult out;
  out.generator.z_dim = cfg.z_dim;
  out.generator.L = L;
  {
    std::vector<int> layers{cfg.z_dim};
    for (int h : cfg.gen_hidden) layers.push_back(h);
    layers.push_back(M);
    out.generator.net = nn::Mlp(layers, init_rng);
  }
  {
    std::vector<int> layers{M};
    for (int h : cfg.critic_hidden) layers.push_back(h);
    layers.push_back(1);
    out.critic.net = nn::Mlp(layers, init_rng);
  }

  nn::Adam opt_g{cfg.lr, cfg.adam_beta1, cfg.adam_beta2};
  nn::Adam opt_d{cfg.lr, cfg.adam_beta1, cfg.adam_beta2};
  opt_g.init(out.generator.net);
  opt_d.init(out.critic.net);

  Rng rng(derive_seed(cfg.seed, "wgan-train"));
  std::vector<int> order(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;
  std::size_t cursor = 0;
  auto next_real_batch = [&](nn::Mat& dst) {
    for (int b = 0; b < cfg.batch; ++b) {
      if (cursor == 0) {  // reshuffle at epoch boundary of the stream
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[rng.uniform_int(i)]);
      }
      dst.col(b) = corpus.col(order[cursor]);
      cursor = (cursor + 1) % order.size();
    }
  };
  auto sample_z = [&](nn::Mat& z) {
    for (int c = 0; c < z.cols(); ++c)
      for (int r = 0; r < z.rows(); ++r) z(r, c) = rng.normal();
  };

  // fixed probe for the per-epoch Wasserstein estimate
  const int probe_n = std::min(N, 4 * cfg.batch);
  nn::Mat probe_real = corpus.leftCols(probe_n);
  nn::Mat probe_z(cfg.z_dim, probe_n);
  {
    Rng probe_rng(derive_seed(cfg.seed, "wgan-probe"));
    for (int c = 0; c < probe_n; ++c)
      for (int r = 0; r < cfg.z_dim; ++r) probe_z(r, c) = probe_rng.normal();
  }

  const int iters_per_epoch = std::max(1, N / cfg.batch);
  nn::Mat x_real(M, cfg.batch), z(cfg.z_dim, cfg.batch);
  nn::Vec u(cfg.batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_critic_loss = 0, epoch_penalty = 0;
    int critic_steps = 0;
    for (int iter = 0; iter < iters_per_epoch; ++iter) {
      for (int t = 0; t < cfg.n_critic; ++t) {
        next_real_batch(x_real);
        sample_z(z);
        const auto gcache = out.generator.net.forward(z);
        const nn::Mat x_fake = pattern_softmax(gcache.y, L);
        for (int b = 0; b < cfg.batch; ++b) u(b) = rng.uniform();
        nn::Grads gd = out.critic.net.zero_grads();
        double penalty = 0;
        const double loss =
            critic_loss(out.critic.net, x_real, x_fake, u, cfg.lambda_gp, &gd, &penalty);
        require(std::isfinite(loss),
                "train_wgan: non-finite critic loss at epoch " + std::to_string(epoch));
        opt_d.step(out.critic.net, gd);
        epoch_critic_loss += loss;
        epoch_penalty += penalty;
        ++critic_steps;
      }
      sample_z(z);
      nn::Grads gg = out.generator.net.zero_grads();
      const double gloss = generator_loss(out.generator.net, out.critic.net, z, L, &gg);
      require(std::isfinite(gloss),
              "train_wgan: non-finite generator loss at epoch " + std::to_string(epoch));
      opt_g.step(out.generator.net, gg);
    }
    TrainLogEntry e;
    e.epoch = epoch;
    const auto pg = out.generator.net.forward(probe_z);
    const nn::Mat probe_fake = pattern_softmax(pg.y, L);
    e.wasserstein = out.critic.net.forward(probe_real).y.mean() -
                    out.critic.net.forward(probe_fake).y.mean();
    e.critic_loss = epoch_critic_loss / std::max(1, critic_steps);
    e.penalty = epoch_penalty / std::max(1, critic_steps);
    require(std::isfinite(e.wasserstein),
            "train_wgan: non-finite Wasserstein estimate at epoch " + std::to_string(epoch));
    out.log.push_back(e);
  }
  return out;
}

}  // namespace geoavatar
