#include "dreamingv2/replay.h"

#include <fstream>

namespace dreamingv2
{

namespace
{
constexpr char kEpisodeMagic[] = "dreamingv2-episode-v1\n";

template <typename T>
void write_pod(std::ostream& out, T value)
{
	out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in)
{
	T value{};
	in.read(reinterpret_cast<char*>(&value), sizeof(T));
	return value;
}
} // namespace

void ReplayEpisode::validate() const
{
	int64_t t = observations.size(0);
	check(t > 0, "ReplayEpisode: empty episode");
	check(
		observations.dim() == 4 && observations.size(1) == kImageSize && observations.size(2) == kImageSize &&
			observations.size(3) == kImageChannels,
		"ReplayEpisode: observations must be [T, 64, 64, 3]");
	check(observations.dtype() == torch::kUInt8, "ReplayEpisode: observations must be uint8-quantized");
	check(actions.dim() == 2 && actions.size(0) == t, "ReplayEpisode: actions must be [T, Da]");
	check(rewards.dim() == 1 && rewards.size(0) == t, "ReplayEpisode: rewards must be [T]");
	check(actions.isfinite().all().item<bool>(), "ReplayEpisode: non-finite action");
	check(rewards.isfinite().all().item<bool>(), "ReplayEpisode: non-finite reward");
}

torch::Tensor ReplayEpisode::quantize(const torch::Tensor& float_observations)
{
	check(
		float_observations.min().item<double>() >= 0.0 && float_observations.max().item<double>() <= 1.0,
		"ReplayEpisode: pixels must lie in [0,1]");
	return (float_observations * 255.0).round().to(torch::kUInt8);
}

void ReplayBuffer::push_episode(ReplayEpisode episode)
{
	episode.validate();
	std::unique_lock lock(mutex_);
	total_steps_ += episode.length();
	episodes_.push_back(std::move(episode));
	while (total_steps_ > capacity_steps_ && episodes_.size() > 1)
	{
		total_steps_ -= episodes_.front().length();
		episodes_.pop_front();
	}
}

std::optional<ReplayBatch> ReplayBuffer::sample_batch(int64_t batch_size, int64_t slice_length, RandomSource& rng) const
{
	check(batch_size >= 1 && slice_length >= 1, "sample_batch: batch size and slice length must be positive");
	std::shared_lock lock(mutex_);

	// Valid (episode, start) pairs, uniformly weighted.
	std::vector<int64_t> cumulative;
	int64_t total_pairs = 0;
	for (const auto& ep : episodes_)
	{
		total_pairs += std::max<int64_t>(0, ep.length() - slice_length + 1);
		cumulative.push_back(total_pairs);
	}
	if (total_pairs == 0)
	{
		return std::nullopt;
	}

	int64_t action_dim = episodes_.front().action_dim();
	ReplayBatch batch;
	batch.observations = torch::empty({batch_size, slice_length, kImageSize, kImageSize, kImageChannels});
	batch.actions = torch::empty({batch_size, slice_length, action_dim});
	batch.rewards = torch::empty({batch_size, slice_length});

	auto picks = torch::randint(0, total_pairs, {batch_size}, rng, torch::TensorOptions(torch::kLong));
	for (int64_t b = 0; b < batch_size; ++b)
	{
		int64_t pick = picks[b].item<int64_t>();
		size_t ep_index = std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin();
		const auto& ep = episodes_[ep_index];
		int64_t start = pick - (ep_index == 0 ? 0 : cumulative[ep_index - 1]);
		batch.observations[b] = ep.observations.narrow(0, start, slice_length).to(torch::kFloat32) / 255.0;
		batch.actions[b] = ep.actions.narrow(0, start, slice_length);
		batch.rewards[b] = ep.rewards.narrow(0, start, slice_length);
		batch.episode_ids.push_back(ep.episode_id);
		batch.starts.push_back(start);
	}
	batch.online_view = random_shift_batch(batch.observations, rng);
	batch.target_view = random_shift_batch(batch.observations, rng);
	return batch;
}

int64_t ReplayBuffer::num_episodes() const
{
	std::shared_lock lock(mutex_);
	return static_cast<int64_t>(episodes_.size());
}

int64_t ReplayBuffer::num_steps() const
{
	std::shared_lock lock(mutex_);
	return total_steps_;
}

std::vector<uint64_t> ReplayBuffer::episode_ids() const
{
	std::shared_lock lock(mutex_);
	std::vector<uint64_t> ids;
	for (const auto& ep : episodes_)
	{
		ids.push_back(ep.episode_id);
	}
	return ids;
}

void save_episode(const ReplayEpisode& episode, const std::filesystem::path& path)
{
	episode.validate();
	std::ofstream out(path, std::ios::binary);
	check(out.good(), "save_episode: cannot open " + path.string());
	out.write(kEpisodeMagic, sizeof(kEpisodeMagic) - 1);
	write_pod<uint32_t>(out, static_cast<uint32_t>(episode.length()));
	write_pod<uint32_t>(out, static_cast<uint32_t>(episode.action_dim()));
	write_pod<uint64_t>(out, episode.seed);
	write_pod<uint64_t>(out, episode.episode_id);
	write_pod<uint32_t>(out, static_cast<uint32_t>(episode.env_name.size()));
	out.write(episode.env_name.data(), static_cast<std::streamsize>(episode.env_name.size()));

	auto obs = episode.observations.contiguous();
	out.write(reinterpret_cast<const char*>(obs.data_ptr<uint8_t>()), obs.numel());
	auto actions = episode.actions.contiguous();
	out.write(reinterpret_cast<const char*>(actions.data_ptr<float>()), actions.numel() * sizeof(float));
	auto rewards = episode.rewards.contiguous();
	out.write(reinterpret_cast<const char*>(rewards.data_ptr<float>()), rewards.numel() * sizeof(float));
	check(out.good(), "save_episode: write failed for " + path.string());
}

ReplayEpisode load_episode(const std::filesystem::path& path)
{
	std::ifstream in(path, std::ios::binary);
	check(in.good(), "load_episode: cannot open " + path.string());
	char magic[sizeof(kEpisodeMagic) - 1];
	in.read(magic, sizeof(magic));
	check(std::string(magic, sizeof(magic)) == kEpisodeMagic, "load_episode: bad magic in " + path.string());

	ReplayEpisode episode;
	auto t = read_pod<uint32_t>(in);
	auto action_dim = read_pod<uint32_t>(in);
	episode.seed = read_pod<uint64_t>(in);
	episode.episode_id = read_pod<uint64_t>(in);
	auto name_len = read_pod<uint32_t>(in);
	episode.env_name.resize(name_len);
	in.read(episode.env_name.data(), name_len);

	episode.observations = torch::empty({t, kImageSize, kImageSize, kImageChannels}, torch::kUInt8);
	in.read(reinterpret_cast<char*>(episode.observations.data_ptr<uint8_t>()), episode.observations.numel());
	episode.actions = torch::empty({t, action_dim}, torch::kFloat32);
	in.read(reinterpret_cast<char*>(episode.actions.data_ptr<float>()), episode.actions.numel() * sizeof(float));
	episode.rewards = torch::empty({t}, torch::kFloat32);
	in.read(reinterpret_cast<char*>(episode.rewards.data_ptr<float>()), episode.rewards.numel() * sizeof(float));
	check(in.good(), "load_episode: truncated file " + path.string());
	episode.validate();
	return episode;
}

} // namespace dreamingv2
