#pragma once

#include "augment.h"
#include "common.h"

#include <deque>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace dreamingv2
{

// One environment rollout. Observations are stored quantized (uint8, exact
// multiples of 1/255 as produced by the renderers); actions/rewards float32.
// actions[t] is the action that preceded observations[t] (zero at t = 0) and
// rewards[t] arrived together with observations[t].
struct ReplayEpisode
{
	torch::Tensor observations; // [T, 64, 64, 3] uint8
	torch::Tensor actions;      // [T, Da] float32
	torch::Tensor rewards;      // [T] float32
	uint64_t episode_id = 0;
	uint64_t seed = 0;
	std::string env_name;

	int64_t length() const { return observations.size(0); }
	int64_t action_dim() const { return actions.size(1); }

	// Throws on length mismatch, wrong image shape or out-of-range pixels.
	void validate() const;

	// Quantizes float [0,1] HWC observations to the stored uint8 layout.
	static torch::Tensor quantize(const torch::Tensor& float_observations);
};

// B aligned slices of length L with two independently augmented views per
// frame. All image tensors are float32 HWC in [0,1].
struct ReplayBatch
{
	torch::Tensor observations; // [B, L, 64, 64, 3] un-augmented
	torch::Tensor online_view;  // [B, L, 64, 64, 3]
	torch::Tensor target_view;  // [B, L, 64, 64, 3]
	torch::Tensor actions;      // [B, L, Da]
	torch::Tensor rewards;      // [B, L]
	std::vector<uint64_t> episode_ids;
	std::vector<int64_t> starts;

	int64_t batch_size() const { return observations.size(0); }
	int64_t slice_length() const { return observations.size(1); }
};

// Episode store with drop-oldest eviction once the configured step capacity
// is exceeded. One writer and any number of concurrent samplers; a pushed
// episode is only visible once complete.
class ReplayBuffer
{
public:
	explicit ReplayBuffer(int64_t capacity_steps = 100000) : capacity_steps_(capacity_steps) {}

	// Validates and stores the episode; evicts oldest episodes as needed.
	void push_episode(ReplayEpisode episode);

	// Uniform over (episode, start) pairs valid for slice length L. Returns
	// nullopt while no stored episode is long enough.
	std::optional<ReplayBatch> sample_batch(int64_t batch_size, int64_t slice_length, RandomSource& rng) const;

	int64_t num_episodes() const;
	int64_t num_steps() const;
	std::vector<uint64_t> episode_ids() const;

private:
	int64_t capacity_steps_;
	mutable std::shared_mutex mutex_;
	std::deque<ReplayEpisode> episodes_;
	int64_t total_steps_ = 0;
};

// Episode file layout (documented in the README, little-endian throughout):
//   "dreamingv2-episode-v1\n"
//   u32 T, u32 Da, u64 seed, u64 episode_id, u32 name_len, name bytes
//   u8  observations[T*64*64*3], f32 actions[T*Da], f32 rewards[T]
void save_episode(const ReplayEpisode& episode, const std::filesystem::path& path);
ReplayEpisode load_episode(const std::filesystem::path& path);

} // namespace dreamingv2
