#pragma once

#include "common.h"

namespace dreamingv2
{

inline constexpr int64_t kImageSize = 64;
inline constexpr int64_t kImageChannels = 3;
inline constexpr int64_t kShiftPad = 4;

// Translates an HWC image by (dx, dy) pixels with replicate padding at the
// exposed borders: out[r][c] = in[clamp(r - dy)][clamp(c - dx)].
// (0, 0) returns the input bit-exactly. |dx|, |dy| <= kShiftPad.
torch::Tensor shift_image(const torch::Tensor& image, int64_t dx, int64_t dy);

// The random-shift augmentation: pads each side by 4 pixels (repeating
// boundary pixels) and crops a random 64x64 box, i.e. a uniform integer
// shift over {-4..4}^2. Input and output are [64, 64, 3].
torch::Tensor random_shift(const torch::Tensor& image, RandomSource& rng);

// Batched variant over [..., 64, 64, 3] with an independent draw per frame.
torch::Tensor random_shift_batch(const torch::Tensor& images, RandomSource& rng);

} // namespace dreamingv2
