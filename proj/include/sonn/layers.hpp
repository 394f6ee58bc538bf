#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sonn/conv.hpp"
#include "sonn/errors.hpp"
#include "sonn/rng.hpp"
#include "sonn/tensor.hpp"

namespace sonn {

enum class Activation : std::uint8_t { linear = 0, tanh = 1 };

// A generative-neuron convolution: Q stacked kernels, the q-th applied to
// the q-th elementwise power of the input. The layer's single per-channel
// bias lives on the q=1 kernel; bias slots of kernels q >= 2 stay exactly
// zero for the lifetime of the layer.
template <class T>
struct GenerativeConvParamsT {
  int q_order = 1;
  std::vector<ConvKernelT<T>> kernels;  // kernels[qi] holds the (qi+1)-th power's weights

  GenerativeConvParamsT() = default;
  GenerativeConvParamsT(int q, int cout, int cin, int k) : q_order(q) {
    if (q < 1)
      throw std::invalid_argument("GenerativeConvParams: Q must be >= 1, got " +
                                  std::to_string(q));
    kernels.reserve(q);
    for (int i = 0; i < q; ++i) kernels.emplace_back(cout, cin, k);
  }

  int cout() const noexcept { return kernels.empty() ? 0 : kernels[0].cout; }
  int cin() const noexcept { return kernels.empty() ? 0 : kernels[0].cin; }
  int k() const noexcept { return kernels.empty() ? 0 : kernels[0].k; }
};

using GenerativeConvParams = GenerativeConvParamsT<float>;

struct LayerSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 3;
  int q_order = 1;
  Activation activation = Activation::linear;
};

struct NetworkSpec {
  std::string name;
  std::array<LayerSpec, 3> layers{};
  int channels = 1;
};

template <class T>
struct NetworkT {
  NetworkSpec spec;
  std::vector<GenerativeConvParamsT<T>> layers;  // size 3

  int channels() const noexcept { return spec.channels; }
};

using Network = NetworkT<float>;
using Networkd = NetworkT<double>;

namespace detail {

template <class T>
void check_gen_params(const GenerativeConvParamsT<T>& p) {
  if (p.q_order < 1 || p.kernels.size() != static_cast<std::size_t>(p.q_order))
    throw std::invalid_argument("generative conv: kernel list does not match Q=" +
                                std::to_string(p.q_order));
  for (const auto& k : p.kernels)
    if (k.cout != p.kernels[0].cout || k.cin != p.kernels[0].cin ||
        k.k != p.kernels[0].k)
      throw std::invalid_argument(
          "generative conv: kernels disagree on shape across q slices");
}

}  // namespace detail

// Power maps x^1..x^Q retained by the forward pass for the backward pass.
template <class T>
struct GenConvCacheT {
  std::vector<Tensor4T<T>> powers;
};

// y = bias + sum_q conv(x^q, w_q); bias applied exactly once via the q=1
// kernel. With Q=1 this is byte-for-byte a plain convolution.
template <class T>
std::pair<Tensor4T<T>, GenConvCacheT<T>> gen_conv_forward(
    const Tensor4T<T>& x, const GenerativeConvParamsT<T>& p, int pad) {
  detail::check_gen_params(p);
  GenConvCacheT<T> cache;
  cache.powers.reserve(p.q_order);
  cache.powers.push_back(x);
  Tensor4T<T> y = conv2d_forward(x, p.kernels[0], pad);
  for (int q = 2; q <= p.q_order; ++q) {
    Tensor4T<T> xq = cache.powers.back();
    const T* base = x.data();
    T* v = xq.data();
    for (std::size_t i = 0; i < xq.size(); ++i) v[i] *= base[i];
    cache.powers.push_back(std::move(xq));
    const Tensor4T<T> term = conv2d_forward(cache.powers.back(), p.kernels[q - 1], pad);
    T* yp = y.data();
    const T* tp = term.data();
    for (std::size_t i = 0; i < y.size(); ++i) yp[i] += tp[i];
  }
  return {std::move(y), std::move(cache)};
}

// Per-q weight gradients plus the input gradient. The bias gradient is
// accumulated once, on the q=1 slot; q >= 2 bias slots are returned zero so
// the optimizer never moves them.
template <class T>
std::pair<GenerativeConvParamsT<T>, Tensor4T<T>> gen_conv_backward(
    const GenConvCacheT<T>& cache, const GenerativeConvParamsT<T>& p,
    const Tensor4T<T>& gy, int pad) {
  detail::check_gen_params(p);
  if (cache.powers.size() != static_cast<std::size_t>(p.q_order))
    throw std::invalid_argument(
        "gen_conv_backward: cache holds " + std::to_string(cache.powers.size()) +
        " power maps but params expect Q=" + std::to_string(p.q_order));

  GenerativeConvParamsT<T> grads;
  grads.q_order = p.q_order;
  grads.kernels.reserve(p.q_order);
  grads.kernels.push_back(conv2d_grad_wb(cache.powers[0], gy, p.k(), pad));
  for (int q = 2; q <= p.q_order; ++q) {
    ConvKernelT<T> g = conv2d_grad_wb(cache.powers[q - 1], gy, p.k(), pad);
    std::fill(g.bias.begin(), g.bias.end(), T(0));
    grads.kernels.push_back(std::move(g));
  }

  Tensor4T<T> gx = conv2d_grad_x(p.kernels[0], gy, pad);
  for (int q = 2; q <= p.q_order; ++q) {
    const Tensor4T<T> t = conv2d_grad_x(p.kernels[q - 1], gy, pad);
    const Tensor4T<T>& xq1 = cache.powers[q - 2];  // x^(q-1)
    T* gp = gx.data();
    const T* tp = t.data();
    const T* xp = xq1.data();
    const T qf = static_cast<T>(q);
    for (std::size_t i = 0; i < gx.size(); ++i) gp[i] += tp[i] * qf * xp[i];
  }
  return {std::move(grads), std::move(gx)};
}

template <class T>
Tensor4T<T> tanh_forward(const Tensor4T<T>& x) {
  Tensor4T<T> y = x;
  T* v = y.data();
  for (std::size_t i = 0; i < y.size(); ++i) v[i] = std::tanh(v[i]);
  return y;
}

// gx = gy * (1 - y^2), with y the forward output.
template <class T>
Tensor4T<T> tanh_backward(const Tensor4T<T>& y, const Tensor4T<T>& gy) {
  if (!y.same_shape(gy))
    throw std::invalid_argument("tanh_backward: shape mismatch " +
                                y.shape_str() + " vs " + gy.shape_str());
  Tensor4T<T> gx = gy;
  T* g = gx.data();
  const T* yp = y.data();
  for (std::size_t i = 0; i < gx.size(); ++i)
    g[i] = g[i] * (T(1) - yp[i] * yp[i]);
  return gx;
}

// "CNN-<X>" (Q=1) or "Self-ONN-<Q>-<X>" (Q >= 2); returns {q, width}.
inline std::pair<int, int> parse_network_name(const std::string& name) {
  const auto parse_positive = [&](const std::string& tok, const char* what,
                                  int minimum) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("network name \"" + name + "\": " + what +
                                  " \"" + tok + "\" is not a positive integer");
    long v = 0;
    try {
      v = std::stol(tok);
    } catch (const std::out_of_range&) {
      v = -1;
    }
    if (v < minimum)
      throw std::invalid_argument("network name \"" + name + "\": " + what +
                                  " \"" + tok + "\" must be >= " +
                                  std::to_string(minimum));
    return static_cast<int>(v);
  };

  constexpr const char* kCnn = "CNN-";
  constexpr const char* kOnn = "Self-ONN-";
  if (name.rfind(kCnn, 0) == 0) {
    const int width = parse_positive(name.substr(4), "width", 1);
    return {1, width};
  }
  if (name.rfind(kOnn, 0) == 0) {
    const std::string rest = name.substr(9);
    const std::size_t dash = rest.find('-');
    if (dash == std::string::npos)
      throw std::invalid_argument("network name \"" + name +
                                  "\": expected Self-ONN-<Q>-<X>, token \"" +
                                  rest + "\" is missing Q");
    const int q = parse_positive(rest.substr(0, dash), "Q", 2);
    const int width = parse_positive(rest.substr(dash + 1), "width", 1);
    return {q, width};
  }
  throw std::invalid_argument("network name \"" + name +
                              "\": expected CNN-<X> or Self-ONN-<Q>-<X>");
}

inline std::string render_network_name(int q, int width) {
  return q == 1 ? "CNN-" + std::to_string(width)
                : "Self-ONN-" + std::to_string(q) + "-" + std::to_string(width);
}

inline NetworkSpec make_network_spec(int q, int width, int channels) {
  if (channels < 1)
    throw std::invalid_argument("network spec: channels must be >= 1, got " +
                                std::to_string(channels));
  NetworkSpec spec;
  spec.name = render_network_name(q, width);
  spec.channels = channels;
  spec.layers[0] = {channels, width, 3, q, Activation::tanh};
  spec.layers[1] = {width, width, 3, q, Activation::tanh};
  spec.layers[2] = {width, channels, 3, q, Activation::linear};
  return spec;
}

// Fresh parameters: every q slice uniform in [-b, b] with
// b = sqrt(6 / (fan_in + fan_out)); biases zero. Draws are keyed by
// (seed, layer, q, element) so construction order can never change them.
template <class T>
NetworkT<T> build_network_t(const std::string& name, int channels,
                            std::uint64_t seed) {
  const auto [q, width] = parse_network_name(name);
  NetworkT<T> net;
  net.spec = make_network_spec(q, width, channels);
  net.layers.reserve(3);
  for (int li = 0; li < 3; ++li) {
    const LayerSpec& ls = net.spec.layers[li];
    GenerativeConvParamsT<T> p(ls.q_order, ls.out_channels, ls.in_channels,
                               ls.kernel_size);
    const double fan_in = static_cast<double>(ls.in_channels) *
                          ls.kernel_size * ls.kernel_size;
    const double fan_out = static_cast<double>(ls.out_channels) *
                           ls.kernel_size * ls.kernel_size;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (int qi = 0; qi < ls.q_order; ++qi) {
      CounterRng rng(seed, stream_key(stream::init, static_cast<std::uint64_t>(li),
                                      static_cast<std::uint64_t>(qi)));
      auto& w = p.kernels[qi].weights;
      for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = static_cast<T>((rng.unit01(i) * 2.0 - 1.0) * bound);
    }
    net.layers.push_back(std::move(p));
  }
  return net;
}

inline Network build_network(const std::string& name, int channels,
                             std::uint64_t seed) {
  return build_network_t<float>(name, channels, seed);
}

template <class T>
struct NetCachesT {
  std::array<GenConvCacheT<T>, 3> conv;
  std::array<Tensor4T<T>, 2> hidden;  // tanh outputs of layers 0 and 1
};

template <class T>
int layer_pad(const NetworkT<T>& net, int li) {
  return (net.spec.layers[li].kernel_size - 1) / 2;
}

template <class T>
std::pair<Tensor4T<T>, NetCachesT<T>> network_forward(const NetworkT<T>& net,
                                                      const Tensor4T<T>& x) {
  if (net.layers.size() != 3)
    throw std::invalid_argument("network_forward: network must have 3 layers");
  if (x.c() != net.channels())
    throw std::invalid_argument(
        "network_forward: input has " + std::to_string(x.c()) +
        " channels but network expects " + std::to_string(net.channels()));
  NetCachesT<T> caches;
  auto [y0, c0] = gen_conv_forward(x, net.layers[0], layer_pad(net, 0));
  caches.conv[0] = std::move(c0);
  caches.hidden[0] = tanh_forward(y0);
  auto [y1, c1] =
      gen_conv_forward(caches.hidden[0], net.layers[1], layer_pad(net, 1));
  caches.conv[1] = std::move(c1);
  caches.hidden[1] = tanh_forward(y1);
  auto [y2, c2] =
      gen_conv_forward(caches.hidden[1], net.layers[2], layer_pad(net, 2));
  caches.conv[2] = std::move(c2);
  return {std::move(y2), std::move(caches)};
}

template <class T>
struct NetworkGradsT {
  std::vector<GenerativeConvParamsT<T>> layers;  // same shapes as the network
};

template <class T>
NetworkGradsT<T> network_backward(const NetworkT<T>& net,
                                  const NetCachesT<T>& caches,
                                  const Tensor4T<T>& gy) {
  if (net.layers.size() != 3)
    throw std::invalid_argument("network_backward: network must have 3 layers");
  for (int li = 0; li < 3; ++li) {
    const auto& powers = caches.conv[li].powers;
    if (powers.size() != static_cast<std::size_t>(net.spec.layers[li].q_order) ||
        powers.empty() || powers[0].c() != net.spec.layers[li].in_channels)
      throw std::invalid_argument(
          "network_backward: cache does not match network layer " +
          std::to_string(li) + " (stale or foreign cache)");
  }
  if (gy.c() != net.channels() || gy.n() != caches.conv[0].powers[0].n() ||
      gy.h() != caches.conv[0].powers[0].h() ||
      gy.w() != caches.conv[0].powers[0].w())
    throw std::invalid_argument(
        "network_backward: upstream gradient shape " + gy.shape_str() +
        " does not match the cached forward pass");

  NetworkGradsT<T> grads;
  grads.layers.resize(3);
  auto [g2, gx2] = gen_conv_backward(caches.conv[2], net.layers[2], gy,
                                     layer_pad(net, 2));
  grads.layers[2] = std::move(g2);
  const Tensor4T<T> h1 = tanh_backward(caches.hidden[1], gx2);
  auto [g1, gx1] = gen_conv_backward(caches.conv[1], net.layers[1], h1,
                                     layer_pad(net, 1));
  grads.layers[1] = std::move(g1);
  const Tensor4T<T> h0 = tanh_backward(caches.hidden[0], gx1);
  auto [g0, gx0] = gen_conv_backward(caches.conv[0], net.layers[0], h0,
                                     layer_pad(net, 0));
  grads.layers[0] = std::move(g0);
  (void)gx0;
  return grads;
}

template <class To, class From>
NetworkT<To> network_cast(const NetworkT<From>& net) {
  NetworkT<To> out;
  out.spec = net.spec;
  out.layers.reserve(net.layers.size());
  for (const auto& layer : net.layers) {
    GenerativeConvParamsT<To> p(layer.q_order, layer.cout(), layer.cin(),
                                layer.k());
    for (int qi = 0; qi < layer.q_order; ++qi) {
      for (std::size_t i = 0; i < layer.kernels[qi].weights.size(); ++i)
        p.kernels[qi].weights[i] =
            static_cast<To>(layer.kernels[qi].weights[i]);
      for (std::size_t i = 0; i < layer.kernels[qi].bias.size(); ++i)
        p.kernels[qi].bias[i] = static_cast<To>(layer.kernels[qi].bias[i]);
    }
    out.layers.push_back(std::move(p));
  }
  return out;
}

// ---- model file (binary, little-endian) ----
//   magic "SONN" | version u16 = 1 | channels u16 | layer_count u16 = 3 |
//   per layer: in u16, out u16, K u16, Q u16, activation u8 |
//   per layer: q=1 weights f32 [out][in][kh][kw], bias f32 [out],
//              then q=2..Q weights.

namespace detail {

template <class V>
void put_bytes(std::vector<std::uint8_t>& out, V v) {
  static_assert(std::is_trivially_copyable_v<V>);
  std::uint8_t buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));  // little-endian host
  out.insert(out.end(), buf, buf + sizeof(V));
}

struct ByteReader {
  const std::uint8_t* p;
  std::size_t len;
  std::size_t pos = 0;

  template <class V>
  V take() {
    static_assert(std::is_trivially_copyable_v<V>);
    if (pos + sizeof(V) > len)
      throw DecodeError(DecodeError::Code::truncated,
                        "model file: truncated at byte " + std::to_string(pos));
    V v;
    std::memcpy(&v, p + pos, sizeof(V));
    pos += sizeof(V);
    return v;
  }
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const Network& net) {
  if (net.layers.size() != 3)
    throw std::invalid_argument("serialize_model: network must have 3 layers");
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'S', 'O', 'N', 'N'});
  detail::put_bytes<std::uint16_t>(out, 1);  // version
  detail::put_bytes<std::uint16_t>(out, static_cast<std::uint16_t>(net.channels()));
  detail::put_bytes<std::uint16_t>(out, 3);  // layer count
  for (const LayerSpec& ls : net.spec.layers) {
    detail::put_bytes<std::uint16_t>(out, static_cast<std::uint16_t>(ls.in_channels));
    detail::put_bytes<std::uint16_t>(out, static_cast<std::uint16_t>(ls.out_channels));
    detail::put_bytes<std::uint16_t>(out, static_cast<std::uint16_t>(ls.kernel_size));
    detail::put_bytes<std::uint16_t>(out, static_cast<std::uint16_t>(ls.q_order));
    detail::put_bytes<std::uint8_t>(out, static_cast<std::uint8_t>(ls.activation));
  }
  for (const auto& layer : net.layers) {
    for (int qi = 0; qi < layer.q_order; ++qi) {
      for (const float w : layer.kernels[qi].weights)
        detail::put_bytes<float>(out, w);
      if (qi == 0)
        for (const float b : layer.kernels[0].bias) detail::put_bytes<float>(out, b);
    }
  }
  return out;
}

inline Network deserialize_model(const std::uint8_t* bytes, std::size_t len) {
  detail::ByteReader r{bytes, len};
  if (len < 4 || std::memcmp(bytes, "SONN", 4) != 0)
    throw DecodeError(DecodeError::Code::bad_magic,
                      "model file: bad magic (expected \"SONN\")");
  r.pos = 4;
  const auto version = r.take<std::uint16_t>();
  if (version != 1)
    throw DecodeError(DecodeError::Code::bad_version,
                      "model file: unsupported version " +
                          std::to_string(version) + " (expected 1)");
  const int channels = r.take<std::uint16_t>();
  const int layer_count = r.take<std::uint16_t>();
  if (layer_count != 3)
    throw DecodeError(DecodeError::Code::malformed,
                      "model file: expected 3 layers, got " +
                          std::to_string(layer_count));
  if (channels < 1)
    throw DecodeError(DecodeError::Code::malformed,
                      "model file: channel count must be >= 1");

  Network net;
  net.spec.channels = channels;
  int li = 0;
  for (LayerSpec& ls : net.spec.layers) {
    ls.in_channels = r.take<std::uint16_t>();
    ls.out_channels = r.take<std::uint16_t>();
    ls.kernel_size = r.take<std::uint16_t>();
    ls.q_order = r.take<std::uint16_t>();
    const auto act = r.take<std::uint8_t>();
    if (act > 1)
      throw DecodeError(DecodeError::Code::malformed,
                        "model file: layer " + std::to_string(li) +
                            " has unknown activation code " +
                            std::to_string(act));
    ls.activation = static_cast<Activation>(act);
    if (ls.in_channels < 1 || ls.out_channels < 1 || ls.kernel_size < 1 ||
        ls.q_order < 1 || ls.kernel_size % 2 == 0)
      throw DecodeError(DecodeError::Code::malformed,
                        "model file: layer " + std::to_string(li) +
                            " has invalid shape fields");
    ++li;
  }

  const auto& l = net.spec.layers;
  const bool chained = l[0].in_channels == channels &&
                       l[1].in_channels == l[0].out_channels &&
                       l[2].in_channels == l[1].out_channels &&
                       l[2].out_channels == channels &&
                       l[1].out_channels == l[0].out_channels;
  const bool uniform_q =
      l[0].q_order == l[1].q_order && l[1].q_order == l[2].q_order;
  if (!chained || !uniform_q)
    throw DecodeError(DecodeError::Code::malformed,
                      "model file: layer shapes do not form a C-X-X-C "
                      "network with uniform Q");
  net.spec.name = render_network_name(l[0].q_order, l[0].out_channels);

  net.layers.reserve(3);
  for (int li = 0; li < 3; ++li) {
    const LayerSpec& ls = net.spec.layers[li];
    GenerativeConvParams p(ls.q_order, ls.out_channels, ls.in_channels,
                           ls.kernel_size);
    for (int qi = 0; qi < ls.q_order; ++qi) {
      for (float& w : p.kernels[qi].weights) w = r.take<float>();
      if (qi == 0)
        for (float& b : p.kernels[0].bias) b = r.take<float>();
    }
    net.layers.push_back(std::move(p));
  }
  if (r.pos != len)
    throw DecodeError(DecodeError::Code::malformed,
                      "model file: " + std::to_string(len - r.pos) +
                          " trailing bytes after parameters");
  return net;
}

inline Network deserialize_model(const std::vector<std::uint8_t>& bytes) {
  return deserialize_model(bytes.data(), bytes.size());
}

}  // namespace sonn
