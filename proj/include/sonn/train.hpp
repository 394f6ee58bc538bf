#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sonn/data.hpp"
#include "sonn/errors.hpp"
#include "sonn/layers.hpp"
#include "sonn/tensor.hpp"

namespace sonn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Mean squared error over all elements and its gradient w.r.t. pred.
template <class T>
std::pair<double, Tensor4T<T>> mse_loss(const Tensor4T<T>& pred,
                                        const Tensor4T<T>& target) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("mse_loss: shape mismatch " + pred.shape_str() +
                                " vs " + target.shape_str());
  const double numel = static_cast<double>(pred.size());
  Tensor4T<T> grad(pred.n(), pred.c(), pred.h(), pred.w());
  const T scale = static_cast<T>(2.0 / numel);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    acc += static_cast<double>(d) * static_cast<double>(d);
    grad[i] = scale * d;
  }
  return {acc / numel, std::move(grad)};
}

// One Adam update over a flat parameter array. bc1/bc2 are the bias
// corrections 1 - beta^t for the step being applied. Gradients are assumed
// finite (the network-level adam_step pre-checks).
template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n,
                 const AdamConfig& cfg, double bc1, double bc2) {
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.learning_rate);
  const T eps = static_cast<T>(cfg.epsilon);
  const T c1 = static_cast<T>(bc1);
  const T c2 = static_cast<T>(bc2);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    const T mhat = m[i] / c1;
    const T vhat = v[i] / c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

// Moment tensors mirroring the network's parameters, plus the shared step
// counter and running beta powers for bias correction.
template <class T>
struct AdamStateT {
  std::vector<GenerativeConvParamsT<T>> m, v;
  std::int64_t t = 0;
  double pow_beta1 = 1.0;
  double pow_beta2 = 1.0;
};
using AdamState = AdamStateT<float>;

template <class T>
AdamStateT<T> make_adam_state(const NetworkT<T>& net) {
  AdamStateT<T> st;
  for (const auto& layer : net.layers) {
    st.m.emplace_back(layer.q_order, layer.cout(), layer.cin(), layer.k());
    st.v.emplace_back(layer.q_order, layer.cout(), layer.cin(), layer.k());
  }
  return st;
}

template <class T>
void adam_step(NetworkT<T>& net, const NetworkGradsT<T>& grads,
               AdamStateT<T>& st, const AdamConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate) ||
      !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) ||
      !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.epsilon > 0.0))
    throw std::invalid_argument("adam_step: invalid optimizer configuration");
  const std::size_t L = net.layers.size();
  if (grads.layers.size() != L || st.m.size() != L || st.v.size() != L)
    throw std::invalid_argument("adam_step: state/gradient layer count differs "
                                "from the network");
  for (std::size_t li = 0; li < L; ++li) {
    const auto& p = net.layers[li];
    const auto& g = grads.layers[li];
    if (g.kernels.size() != p.kernels.size() ||
        st.m[li].kernels.size() != p.kernels.size())
      throw std::invalid_argument("adam_step: q order mismatch at layer " +
                                  std::to_string(li));
    for (std::size_t qi = 0; qi < p.kernels.size(); ++qi)
      if (g.kernels[qi].weights.size() != p.kernels[qi].weights.size() ||
          st.m[li].kernels[qi].weights.size() != p.kernels[qi].weights.size())
        throw std::invalid_argument("adam_step: parameter shape mismatch at "
                                    "layer " +
                                    std::to_string(li));
  }
  // abort before touching any state so a bad step never half-applies
  for (std::size_t li = 0; li < L; ++li)
    for (std::size_t qi = 0; qi < grads.layers[li].kernels.size(); ++qi) {
      const auto& k = grads.layers[li].kernels[qi];
      for (const T w : k.weights)
        if (!std::isfinite(w))
          throw NumericError("adam_step: non-finite weight gradient in layer " +
                             std::to_string(li) + ", q " + std::to_string(qi + 1));
      for (const T b : k.bias)
        if (!std::isfinite(b))
          throw NumericError("adam_step: non-finite bias gradient in layer " +
                             std::to_string(li) + ", q " + std::to_string(qi + 1));
    }

  ++st.t;
  st.pow_beta1 *= cfg.beta1;
  st.pow_beta2 *= cfg.beta2;
  const double bc1 = 1.0 - st.pow_beta1;
  const double bc2 = 1.0 - st.pow_beta2;
  for (std::size_t li = 0; li < L; ++li)
    for (std::size_t qi = 0; qi < net.layers[li].kernels.size(); ++qi) {
      auto& pk = net.layers[li].kernels[qi];
      const auto& gk = grads.layers[li].kernels[qi];
      auto& mk = st.m[li].kernels[qi];
      auto& vk = st.v[li].kernels[qi];
      adam_update(pk.weights.data(), gk.weights.data(), mk.weights.data(),
                  vk.weights.data(), pk.weights.size(), cfg, bc1, bc2);
      adam_update(pk.bias.data(), gk.bias.data(), mk.bias.data(),
                  vk.bias.data(), pk.bias.size(), cfg, bc1, bc2);
    }
}

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  std::uint64_t seed = 0;   // shuffles and the train/val split
  NoiseConfig noise;        // sigma plus the noise seed
  double split_ratio = 0.95;
  AdamConfig adam;
};

struct EpochStats {
  int epoch;          // 1-based
  double train_loss;  // epoch MSE over all processed elements
  double val_psnr;    // mean per-patch PSNR on the frozen noisy validation set
};

struct FitResult {
  Network best;
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_psnr = -std::numeric_limits<double>::infinity();
  // PSNR of leaving the noisy validation patches untouched
  double identity_val_psnr = -std::numeric_limits<double>::infinity();
};

// Epoch loop: seeded shuffle, fresh per-epoch noise on train patches, Adam on
// minibatches, validation PSNR per epoch, best-epoch snapshot (ties keep the
// earliest).
FitResult fit(const Network& net, const PatchSet& patches,
              const TrainConfig& cfg);

// "epoch,train_loss,val_psnr" rows, 6 decimal places.
std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace sonn
