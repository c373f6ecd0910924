#include "dreamingv2/augment.h"

namespace dreamingv2
{

namespace
{

void check_image_shape(const torch::Tensor& image)
{
	check(
		image.dim() >= 3 && image.size(-1) == kImageChannels && image.size(-2) == kImageSize &&
			image.size(-3) == kImageSize,
		"random_shift: expected trailing [64, 64, 3] image dims");
}

torch::Tensor clamped_index(int64_t shift, const torch::TensorOptions& options)
{
	return (torch::arange(kImageSize, options) - shift).clamp(0, kImageSize - 1);
}

} // namespace

torch::Tensor shift_image(const torch::Tensor& image, int64_t dx, int64_t dy)
{
	check_image_shape(image);
	check(std::abs(dx) <= kShiftPad && std::abs(dy) <= kShiftPad, "shift_image: offset exceeds the pad width");
	if (dx == 0 && dy == 0)
	{
		return image;
	}
	auto options = torch::TensorOptions(torch::kLong).device(image.device());
	auto rows = clamped_index(dy, options);
	auto cols = clamped_index(dx, options);
	return image.index_select(-3, rows).index_select(-2, cols);
}

torch::Tensor random_shift(const torch::Tensor& image, RandomSource& rng)
{
	check_image_shape(image);
	auto offsets = torch::randint(-kShiftPad, kShiftPad + 1, {2}, rng, torch::TensorOptions(torch::kLong));
	return shift_image(image, offsets[0].item<int64_t>(), offsets[1].item<int64_t>());
}

torch::Tensor random_shift_batch(const torch::Tensor& images, RandomSource& rng)
{
	check_image_shape(images);
	if (images.dim() == 3)
	{
		return random_shift(images, rng);
	}
	auto flat = images.reshape({-1, kImageSize, kImageSize, kImageChannels});
	auto out = torch::empty_like(flat);
	auto offsets = torch::randint(-kShiftPad, kShiftPad + 1, {flat.size(0), 2}, rng, torch::TensorOptions(torch::kLong));
	for (int64_t i = 0; i < flat.size(0); ++i)
	{
		out[i] = shift_image(flat[i], offsets[i][0].item<int64_t>(), offsets[i][1].item<int64_t>());
	}
	return out.reshape(images.sizes());
}

} // namespace dreamingv2
