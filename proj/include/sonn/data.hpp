#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonn/errors.hpp"
#include "sonn/tensor.hpp"

namespace sonn {

// Channel-planar float image, pixels in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;  // 1 (grayscale) or 3 (color)
  std::vector<float> pixels;  // [channels][height][width]

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f);

  std::size_t numel() const { return pixels.size(); }
  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  const float& at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

struct NoiseConfig {
  float sigma255 = 0.0f;      // noise std on the 0-255 scale
  std::uint64_t seed = 0;
};

struct PatchMeta {
  int image_id = 0;
  int top = 0;
  int left = 0;
};

struct PatchSet {
  int patch_size = 40;
  std::vector<Image> patches;
  std::vector<PatchMeta> meta;  // parallel to patches
};

// PGM/PPM codec: P2/P3 (ASCII) and P5/P6 (binary), maxval 255 only.
// Decode failures raise DecodeError with a distinguishing code.
Image load_image(const std::string& path);
Image decode_pnm(const std::uint8_t* bytes, std::size_t len,
                 const std::string& origin);
void save_image(const Image& img, const std::string& path);
std::vector<std::uint8_t> encode_pnm(const Image& img);

// Unclipped noise samples: i.i.d. N(0, (sigma255/255)^2) from a counter
// generator keyed by (cfg.seed, key), so a (stream, index) key reproduces the
// same field no matter the iteration or thread order.
std::vector<float> awgn_noise(std::size_t count, const NoiseConfig& cfg,
                              std::uint64_t key);

// clip01(img + noise). sigma255 == 0 returns the input bitwise.
Image add_awgn(const Image& img, const NoiseConfig& cfg, std::uint64_t key);

// count patches, uniformly random (image, top-left) draws, duplicates
// permitted; deterministic in seed.
PatchSet extract_patches(const std::vector<Image>& images, int patch_size,
                         int count, std::uint64_t seed);

// Seeded shuffle, then first ceil(ratio*n) patches become the train split.
std::pair<PatchSet, PatchSet> split_train_val(const PatchSet& p, double ratio,
                                              std::uint64_t seed);

// Bridges to the numeric core. tensor_to_image clips into [0,1] to restore
// the Image invariant.
Tensor4 images_to_tensor(const std::vector<Image>& images);
Tensor4 image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor4& t, int n);

}  // namespace sonn
