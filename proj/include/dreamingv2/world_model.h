#pragma once

#include "categorical.h"
#include "common.h"

#include <vector>

namespace dreamingv2
{

struct WorldModelConfig
{
	int64_t action_dim = 2;
	int64_t latent_vars = 32;    // V
	int64_t latent_classes = 32; // C
	std::vector<int64_t> encoder_channels = {32, 64, 128, 256};
	int64_t embed_dim = 1024;  // D_e
	int64_t hidden_dim = 256;  // D_h (GRU state)
	int64_t head_hidden = 256; // hidden width of the prior/posterior/reward heads
	bool with_decoder = false;

	int64_t latent_flat_dim() const { return latent_vars * latent_classes; }
};

// The paired deterministic/stochastic latent (h_t, z_t).
struct RssmState
{
	torch::Tensor h;
	LatentSample z;

	RssmState detach() const { return {h.detach(), z.detach()}; }
	torch::Tensor feature() const { return torch::cat({h, z.flat()}, -1); }
};

// Filtering pass over an observed slice: per step the recurrent state, the
// posterior and prior PMFs, and the posterior sample driving the recursion.
struct SequenceRollout
{
	std::vector<torch::Tensor> h;
	std::vector<CategoricalPmf> posterior;
	std::vector<CategoricalPmf> prior;
	std::vector<LatentSample> z;
	torch::Tensor embeddings; // [B, T, D_e] encoder features, kept for reuse

	int64_t length() const { return static_cast<int64_t>(h.size()); }
	RssmState state_at(int64_t t) const { return {h[t], z[t]}; }
};

// Closed-loop generative rollout: z is drawn from the prior at every step.
struct PriorRollout
{
	std::vector<torch::Tensor> h;
	std::vector<CategoricalPmf> prior;
	std::vector<LatentSample> z;

	int64_t length() const { return static_cast<int64_t>(h.size()); }
};

class ConvEncoderImpl : public torch::nn::Module
{
public:
	explicit ConvEncoderImpl(const WorldModelConfig& config);

	// Accepts HWC images [..., 64, 64, 3] in [0,1]; returns [..., D_e].
	torch::Tensor forward(const torch::Tensor& observations);

private:
	torch::nn::Sequential conv_{nullptr};
	torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(ConvEncoder);

class ConvDecoderImpl : public torch::nn::Module
{
public:
	ConvDecoderImpl(const WorldModelConfig& config);

	// (h, z) features -> mean image [..., 64, 64, 3].
	torch::Tensor forward(const torch::Tensor& features);

private:
	torch::nn::Linear fc_{nullptr};
	torch::nn::Sequential deconv_{nullptr};
	int64_t base_channels_;
	int64_t base_size_;
};
TORCH_MODULE(ConvDecoder);

class WorldModelImpl : public torch::nn::Module
{
public:
	explicit WorldModelImpl(const WorldModelConfig& config);

	const WorldModelConfig& config() const { return config_; }

	torch::Tensor encode(const torch::Tensor& observations);
	torch::Tensor recurrent_step(const torch::Tensor& h, const LatentSample& z, const torch::Tensor& action);
	CategoricalPmf prior(const torch::Tensor& h);
	CategoricalPmf posterior(const torch::Tensor& h, const torch::Tensor& observations);
	CategoricalPmf posterior_from_embedding(const torch::Tensor& h, const torch::Tensor& embedding);
	torch::Tensor predict_reward(const torch::Tensor& h, const LatentSample& z);

	// Mean image of the unit-variance Gaussian likelihood. Throws
	// ConfigurationError when the model was built without a decoder.
	torch::Tensor decode(const torch::Tensor& h, const LatentSample& z);

	// h = 0, z ~ st_sample(uniform): the documented episode-start state.
	RssmState initial_state(int64_t batch_size, RandomSource& rng, bool deterministic = false);

	// Filtering recursion over aligned [B, T, ...] observations/actions where
	// actions[t] precedes observations[t]. The recursion starts from
	// initial_state and consumes the posterior sample at every step.
	SequenceRollout observe_sequence(
		const torch::Tensor& observations,
		const torch::Tensor& actions,
		RandomSource& rng,
		bool deterministic = false);

	// K-step closed-loop prediction from (h, z) driven by replayed actions
	// [B, K, Da]; z is drawn from the prior at each step.
	PriorRollout rollout_prior(
		const RssmState& start, const torch::Tensor& actions, RandomSource& rng, bool deterministic = false);

	// Parameters of the CNN encoder (the set tracked by the momentum copy).
	std::vector<torch::Tensor> encoder_parameters() const { return encoder_->parameters(); }
	ConvEncoder encoder() { return encoder_; }
	bool has_decoder() const { return decoder_ != nullptr; }

private:
	WorldModelConfig config_;
	ConvEncoder encoder_{nullptr};
	ConvDecoder decoder_{nullptr};
	torch::nn::Linear gru_input_{nullptr};
	torch::nn::GRUCell gru_{nullptr};
	torch::nn::Sequential prior_head_{nullptr};
	torch::nn::Sequential posterior_head_{nullptr};
	torch::nn::Sequential reward_head_{nullptr};
};
TORCH_MODULE(WorldModel);

} // namespace dreamingv2
