#include "sonn/train.hpp"

#include <algorithm>
#include <cstdio>

#include "sonn/eval.hpp"
#include "sonn/rng.hpp"

namespace sonn {

namespace {

// per-patch mean PSNR of pred vs clean over one batch tensor
void accumulate_patch_psnr(const Tensor4& pred, const Tensor4& clean,
                           double& psnr_sum, std::size_t& count) {
  const std::size_t per = static_cast<std::size_t>(pred.c()) * pred.h() * pred.w();
  for (int n = 0; n < pred.n(); ++n) {
    const float* p = &pred.at(n, 0, 0, 0);
    const float* c = &clean.at(n, 0, 0, 0);
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      // score what denoise_image would emit: clipped into [0,1]
      float v = p[i];
      v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      const double d = static_cast<double>(v) - c[i];
      acc += d * d;
    }
    psnr_sum += psnr_from_mse(acc / static_cast<double>(per));
    count += 1;
  }
}

}  // namespace

FitResult fit(const Network& net, const PatchSet& patches,
              const TrainConfig& cfg) {
  if (cfg.epochs < 1)
    throw std::invalid_argument("fit: epochs must be >= 1");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("fit: batch size must be >= 1");
  if (patches.patches.empty())
    throw std::invalid_argument("fit: empty patch set");
  const Image& first = patches.patches[0];
  if (first.channels != net.channels())
    throw std::invalid_argument(
        "fit: patches have " + std::to_string(first.channels) +
        " channels but the network expects " + std::to_string(net.channels()));
  int footprint = 1;
  for (const auto& ls : net.spec.layers)
    footprint = std::max(footprint, ls.kernel_size);
  if (first.height < footprint || first.width < footprint)
    throw std::invalid_argument("fit: patch size " +
                                std::to_string(first.height) + "x" +
                                std::to_string(first.width) +
                                " is smaller than the kernel footprint " +
                                std::to_string(footprint));

  auto [train, val] = split_train_val(patches, cfg.split_ratio, cfg.seed);

  // validation noise is drawn once and frozen
  std::vector<Image> val_noisy(val.patches.size());
  for (std::size_t j = 0; j < val.patches.size(); ++j)
    val_noisy[j] =
        add_awgn(val.patches[j], cfg.noise, stream_key(stream::val_noise, j));

  FitResult result;
  result.best = net;
  {
    double psum = 0.0;
    for (std::size_t j = 0; j < val.patches.size(); ++j)
      psum += psnr(val.patches[j], val_noisy[j]);
    result.identity_val_psnr =
        val.patches.empty()
            ? -std::numeric_limits<double>::infinity()
            : psum / static_cast<double>(val.patches.size());
  }

  // pre-batched validation tensors, reused every epoch
  std::vector<std::pair<Tensor4, Tensor4>> val_batches;  // (noisy, clean)
  for (std::size_t b0 = 0; b0 < val.patches.size();
       b0 += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t b1 = std::min(
        val.patches.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
    std::vector<Image> noisy(val_noisy.begin() + b0, val_noisy.begin() + b1);
    std::vector<Image> clean(val.patches.begin() + b0, val.patches.begin() + b1);
    val_batches.emplace_back(images_to_tensor(noisy), images_to_tensor(clean));
  }

  Network model = net;
  AdamState state = make_adam_state(model);
  std::vector<std::size_t> order(train.patches.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const CounterRng shuffle_rng(
        cfg.seed, stream_key(stream::shuffle, static_cast<std::uint64_t>(epoch)));
    seeded_shuffle(order, shuffle_rng);

    double sq_sum = 0.0;
    std::size_t el_sum = 0;
    int batch_index = 0;
    for (std::size_t b0 = 0; b0 < order.size();
         b0 += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t b1 = std::min(
          order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Image> clean, noisy;
      clean.reserve(b1 - b0);
      noisy.reserve(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) {
        const std::size_t idx = order[i];
        clean.push_back(train.patches[idx]);
        noisy.push_back(add_awgn(
            train.patches[idx], cfg.noise,
            stream_key(stream::train_noise, static_cast<std::uint64_t>(epoch),
                       idx)));
      }
      const Tensor4 clean_t = images_to_tensor(clean);
      const Tensor4 noisy_t = images_to_tensor(noisy);

      auto [pred, caches] = network_forward(model, noisy_t);
      auto [loss, grad] = mse_loss(pred, clean_t);
      if (!std::isfinite(loss))
        throw NumericError("fit: non-finite training loss " +
                           std::to_string(loss) + " at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index + 1));
      sq_sum += loss * static_cast<double>(pred.size());
      el_sum += pred.size();

      const NetworkGradsT<float> grads = network_backward(model, caches, grad);
      try {
        adam_step(model, grads, state, cfg.adam);
      } catch (const NumericError& e) {
        throw NumericError("fit: epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index + 1) + ": " + e.what());
      }
    }

    double val_psnr = -std::numeric_limits<double>::infinity();
    if (!val_batches.empty()) {
      double psum = 0.0;
      std::size_t count = 0;
      for (const auto& [noisy_t, clean_t] : val_batches) {
        const auto [pred, caches] = network_forward(model, noisy_t);
        accumulate_patch_psnr(pred, clean_t, psum, count);
      }
      val_psnr = psum / static_cast<double>(count);
    }

    result.history.push_back(
        {epoch, el_sum ? sq_sum / static_cast<double>(el_sum) : 0.0, val_psnr});
    if (result.best_epoch == 0 || val_psnr > result.best_val_psnr) {
      result.best = model;
      result.best_epoch = epoch;
      result.best_val_psnr = val_psnr;
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,train_loss,val_psnr\n";
  for (const auto& e : history) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", e.epoch, e.train_loss,
                  e.val_psnr);
    out += buf;
  }
  return out;
}

}  // namespace sonn
