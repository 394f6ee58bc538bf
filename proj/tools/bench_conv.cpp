// Micro-benchmark for the convolution kernels at training-relevant shapes.
#include <chrono>
#include <cstdio>

#include "sonn/conv.hpp"
#include "sonn/rng.hpp"
#include "sonn/tensor.hpp"

using namespace sonn;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void bench(int n, int cin, int cout, int hw, int reps) {
  CounterRng rng(7, stream::synth);
  Tensor4 x(n, cin, hw, hw);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(rng.unit01(i)) - 0.5f;
  ConvKernel k(cout, cin, 3);
  for (std::size_t i = 0; i < k.weights.size(); ++i)
    k.weights[i] = static_cast<float>(rng.unit01(1000000 + i)) * 0.2f - 0.1f;

  const double flops =
      2.0 * n * cout * cin * 9.0 * hw * hw;  // MACs * 2, per pass

  Tensor4 y = conv2d_forward(x, k, 1);
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) y = conv2d_forward(x, k, 1);
  const double fwd = seconds_since(t0) / reps;

  ConvKernel g = conv2d_grad_wb(x, y, 3, 1);
  t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) g = conv2d_grad_wb(x, y, 3, 1);
  const double gwb = seconds_since(t0) / reps;

  Tensor4 gx = conv2d_grad_x(k, y, 1);
  t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) gx = conv2d_grad_x(k, y, 1);
  const double gxs = seconds_since(t0) / reps;

  std::printf("%dx%dx%dx%d cout=%d  fwd %7.2f GF/s  grad_wb %7.2f GF/s  "
              "grad_x %7.2f GF/s  (checksum %g)\n",
              n, cin, hw, hw, cout, flops / fwd * 1e-9, flops / gwb * 1e-9,
              flops / gxs * 1e-9, static_cast<double>(gx[0] + g.bias[0]));
}

}  // namespace

int main() {
  bench(64, 32, 32, 40, 10);   // hidden layer, training batch
  bench(64, 1, 32, 40, 10);    // input layer
  bench(64, 32, 1, 40, 10);    // output layer
  bench(1, 32, 32, 320, 10);   // full-image inference
  return 0;
}
