#include "sonn/data.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "sonn/rng.hpp"

namespace sonn {

Image::Image(int h, int w, int c, float fill)
    : height(h), width(w), channels(c) {
  if (h < 1 || w < 1 || (c != 1 && c != 3))
    throw std::invalid_argument("Image: bad shape " + std::to_string(h) + "x" +
                                std::to_string(w) + "x" + std::to_string(c));
  pixels.assign(static_cast<std::size_t>(c) * h * w, fill);
}

namespace {

struct Cursor {
  const std::uint8_t* b;
  std::size_t len;
  std::size_t pos;
  const std::string& origin;

  void skip_space() {
    while (pos < len) {
      const std::uint8_t ch = b[pos];
      if (ch == '#') {
        while (pos < len && b[pos] != '\n') ++pos;
      } else if (std::isspace(ch)) {
        ++pos;
      } else {
        break;
      }
    }
  }

  long next_uint(const char* what) {
    skip_space();
    if (pos >= len)
      throw DecodeError(DecodeError::Code::truncated,
                        origin + ": truncated before " + what);
    if (!std::isdigit(b[pos]))
      throw DecodeError(DecodeError::Code::malformed,
                        origin + ": expected unsigned integer for " +
                            std::string(what));
    long v = 0;
    while (pos < len && std::isdigit(b[pos])) {
      v = v * 10 + (b[pos] - '0');
      if (v > 1000000000)
        throw DecodeError(DecodeError::Code::malformed,
                          origin + ": " + what + " out of range");
      ++pos;
    }
    return v;
  }
};

}  // namespace

Image decode_pnm(const std::uint8_t* bytes, std::size_t len,
                 const std::string& origin) {
  if (len < 2 || bytes[0] != 'P' ||
      (bytes[1] != '2' && bytes[1] != '3' && bytes[1] != '5' && bytes[1] != '6') ||
      (len > 2 && !std::isspace(bytes[2]) && bytes[2] != '#'))
    throw DecodeError(DecodeError::Code::bad_magic,
                      origin + ": unknown magic (expected P2/P3/P5/P6)");
  const char type = static_cast<char>(bytes[1]);
  const bool ascii = type == '2' || type == '3';
  const int channels = (type == '3' || type == '6') ? 3 : 1;

  Cursor c{bytes, len, 2, origin};
  const long w = c.next_uint("width");
  const long h = c.next_uint("height");
  const long maxval = c.next_uint("maxval");
  if (w < 1 || h < 1 || w > 65535 || h > 65535)
    throw DecodeError(DecodeError::Code::malformed,
                      origin + ": bad dimensions " + std::to_string(w) + "x" +
                          std::to_string(h));
  if (maxval != 255)
    throw DecodeError(DecodeError::Code::bad_maxval,
                      origin + ": unsupported maxval " + std::to_string(maxval) +
                          " (only 255)");

  Image img(static_cast<int>(h), static_cast<int>(w), channels);
  const std::size_t need =
      static_cast<std::size_t>(channels) * h * w;

  if (ascii) {
    for (std::size_t s = 0; s < need; ++s) {
      const long v = c.next_uint("sample");
      if (v > 255)
        throw DecodeError(DecodeError::Code::malformed,
                          origin + ": sample value " + std::to_string(v) +
                              " exceeds maxval 255");
      const std::size_t p = s / channels;
      const int ch = static_cast<int>(s % channels);
      img.pixels[static_cast<std::size_t>(ch) * h * w + p] =
          static_cast<float>(v) / 255.0f;
    }
  } else {
    if (c.pos >= len)
      throw DecodeError(DecodeError::Code::truncated,
                        origin + ": truncated before payload");
    if (!std::isspace(bytes[c.pos]))
      throw DecodeError(DecodeError::Code::malformed,
                        origin + ": expected whitespace after maxval");
    ++c.pos;
    if (len - c.pos < need)
      throw DecodeError(DecodeError::Code::truncated,
                        origin + ": payload truncated (expected " +
                            std::to_string(need) + " bytes, found " +
                            std::to_string(len - c.pos) + ")");
    const std::uint8_t* pay = bytes + c.pos;
    for (std::size_t s = 0; s < need; ++s) {
      const std::size_t p = s / channels;
      const int ch = static_cast<int>(s % channels);
      img.pixels[static_cast<std::size_t>(ch) * h * w + p] =
          static_cast<float>(pay[s]) / 255.0f;
    }
  }
  return img;
}

Image load_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_pnm(bytes.data(), bytes.size(), path);
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
  if (img.height < 1 || img.width < 1 ||
      (img.channels != 1 && img.channels != 3) ||
      img.pixels.size() !=
          static_cast<std::size_t>(img.channels) * img.height * img.width)
    throw std::invalid_argument("encode_pnm: malformed image");
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") +
                             "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t hw = static_cast<std::size_t>(img.height) * img.width;
  out.reserve(out.size() + hw * img.channels);
  for (std::size_t p = 0; p < hw; ++p)
    for (int ch = 0; ch < img.channels; ++ch) {
      float v = img.pixels[static_cast<std::size_t>(ch) * hw + p];
      v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      out.push_back(static_cast<std::uint8_t>(std::floor(v * 255.0f + 0.5f)));
    }
  return out;
}

void save_image(const Image& img, const std::string& path) {
  const auto bytes = encode_pnm(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open output file: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<float> awgn_noise(std::size_t count, const NoiseConfig& cfg,
                              std::uint64_t key) {
  if (!(cfg.sigma255 >= 0.0f) || !std::isfinite(cfg.sigma255))
    throw std::invalid_argument("awgn_noise: sigma255 must be finite and >= 0");
  const double sigma = cfg.sigma255 / 255.0;
  const CounterRng rng(cfg.seed, key);
  std::vector<float> n(count);
  for (std::size_t i = 0; i < count; ++i)
    n[i] = static_cast<float>(sigma * rng.gaussian(i));
  return n;
}

Image add_awgn(const Image& img, const NoiseConfig& cfg, std::uint64_t key) {
  if (!(cfg.sigma255 >= 0.0f) || !std::isfinite(cfg.sigma255))
    throw std::invalid_argument("add_awgn: sigma255 must be finite and >= 0");
  if (cfg.sigma255 == 0.0f) return img;
  const auto n = awgn_noise(img.numel(), cfg, key);
  Image out = img;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const float v = out.pixels[i] + n[i];
    out.pixels[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
  return out;
}

PatchSet extract_patches(const std::vector<Image>& images, int patch_size,
                         int count, std::uint64_t seed) {
  if (images.empty())
    throw std::invalid_argument("extract_patches: no source images");
  if (patch_size < 1)
    throw std::invalid_argument("extract_patches: patch size must be >= 1");
  if (count < 1)
    throw std::invalid_argument("extract_patches: count must be >= 1");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height < patch_size || images[i].width < patch_size)
      throw std::invalid_argument(
          "extract_patches: image " + std::to_string(i) + " is " +
          std::to_string(images[i].height) + "x" +
          std::to_string(images[i].width) + ", smaller than patch size " +
          std::to_string(patch_size));
    if (images[i].channels != images[0].channels)
      throw std::invalid_argument(
          "extract_patches: image " + std::to_string(i) +
          " has a different channel count than image 0");
  }

  const CounterRng rng(seed, stream::patches);
  PatchSet ps;
  ps.patch_size = patch_size;
  ps.patches.reserve(count);
  ps.meta.reserve(count);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t c0 = 3ull * static_cast<std::uint64_t>(i);
    const auto id =
        static_cast<int>(rng.below(c0, images.size()));
    const Image& src = images[id];
    const auto top = static_cast<int>(
        rng.below(c0 + 1, static_cast<std::uint64_t>(src.height - patch_size + 1)));
    const auto left = static_cast<int>(
        rng.below(c0 + 2, static_cast<std::uint64_t>(src.width - patch_size + 1)));
    Image patch(patch_size, patch_size, src.channels);
    for (int c = 0; c < src.channels; ++c)
      for (int y = 0; y < patch_size; ++y)
        std::memcpy(&patch.at(c, y, 0), &src.at(c, top + y, left),
                    sizeof(float) * patch_size);
    ps.patches.push_back(std::move(patch));
    ps.meta.push_back({id, top, left});
  }
  return ps;
}

std::pair<PatchSet, PatchSet> split_train_val(const PatchSet& p, double ratio,
                                              std::uint64_t seed) {
  const std::size_t n = p.patches.size();
  if (n == 0) throw std::invalid_argument("split_train_val: empty patch set");
  if (!(ratio > 0.0) || !(ratio < 1.0))
    throw std::invalid_argument("split_train_val: ratio must be in (0,1), got " +
                                std::to_string(ratio));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const CounterRng rng(seed, stream::split);
  seeded_shuffle(order, rng);

  // ceil(ratio*n) of the exact product; the epsilon keeps a representation
  // error like 0.95*100 = 95.000000000000002 from bumping the ceiling.
  const auto n_train = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(n) - 1e-9));

  PatchSet train, val;
  train.patch_size = val.patch_size = p.patch_size;
  for (std::size_t i = 0; i < n; ++i) {
    PatchSet& dst = i < n_train ? train : val;
    dst.patches.push_back(p.patches[order[i]]);
    dst.meta.push_back(p.meta[order[i]]);
  }
  return {std::move(train), std::move(val)};
}

Tensor4 images_to_tensor(const std::vector<Image>& images) {
  if (images.empty())
    throw std::invalid_argument("images_to_tensor: empty batch");
  const Image& first = images[0];
  Tensor4 t(static_cast<int>(images.size()), first.channels, first.height,
            first.width);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.channels != first.channels || img.height != first.height ||
        img.width != first.width)
      throw std::invalid_argument("images_to_tensor: image " +
                                  std::to_string(n) + " shape differs");
    std::memcpy(&t.at(static_cast<int>(n), 0, 0, 0), img.pixels.data(),
                sizeof(float) * img.pixels.size());
  }
  return t;
}

Tensor4 image_to_tensor(const Image& img) {
  return images_to_tensor({img});
}

Image tensor_to_image(const Tensor4& t, int n) {
  if (n < 0 || n >= t.n())
    throw std::invalid_argument("tensor_to_image: batch index out of range");
  if (t.c() != 1 && t.c() != 3)
    throw std::invalid_argument("tensor_to_image: channel count must be 1 or 3");
  Image img(t.h(), t.w(), t.c());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = (&t.at(n, 0, 0, 0))[i];
    img.pixels[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
  return img;
}

}  // namespace sonn
