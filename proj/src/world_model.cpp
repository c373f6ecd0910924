#include "dreamingv2/world_model.h"

namespace dreamingv2
{

namespace
{

torch::nn::Sequential make_head(int64_t in_dim, int64_t hidden, int64_t out_dim)
{
	using namespace torch::nn;
	return Sequential(Linear(in_dim, hidden), Functional(torch::silu), Linear(hidden, out_dim));
}

// Collapses leading batch dims before a [B, ...] module call, restores after.
template <typename Fn>
torch::Tensor with_flat_batch(const torch::Tensor& input, int64_t event_dims, Fn&& fn)
{
	auto lead = input.sizes().vec();
	lead.resize(lead.size() - event_dims);
	auto event = input.sizes().slice(input.dim() - event_dims).vec();
	std::vector<int64_t> flat_shape = {-1};
	flat_shape.insert(flat_shape.end(), event.begin(), event.end());
	auto out = fn(input.reshape(flat_shape));
	auto out_shape = lead;
	auto out_event = out.sizes().slice(1).vec();
	out_shape.insert(out_shape.end(), out_event.begin(), out_event.end());
	return out.reshape(out_shape);
}

} // namespace

ConvEncoderImpl::ConvEncoderImpl(const WorldModelConfig& config)
{
	using namespace torch::nn;
	conv_ = Sequential();
	int64_t in_channels = kImageChannels;
	int64_t spatial = kImageSize;
	for (int64_t channels : config.encoder_channels)
	{
		conv_->push_back(Conv2d(Conv2dOptions(in_channels, channels, 4).stride(2).padding(1)));
		conv_->push_back(Functional(torch::silu));
		in_channels = channels;
		spatial /= 2;
	}
	fc_ = Linear(in_channels * spatial * spatial, config.embed_dim);
	register_module("conv", conv_);
	register_module("fc", fc_);
}

torch::Tensor ConvEncoderImpl::forward(const torch::Tensor& observations)
{
	check(
		observations.size(-1) == kImageChannels && observations.size(-2) == kImageSize &&
			observations.size(-3) == kImageSize,
		"encode: expected trailing [64, 64, 3] dims");
	return with_flat_batch(
		observations,
		3,
		[this](const torch::Tensor& x)
		{
			auto chw = x.permute({0, 3, 1, 2}).contiguous();
			auto features = conv_->forward(chw);
			return fc_->forward(features.flatten(1));
		});
}

ConvDecoderImpl::ConvDecoderImpl(const WorldModelConfig& config)
{
	using namespace torch::nn;
	auto channels = config.encoder_channels;
	base_channels_ = channels.back();
	base_size_ = kImageSize >> channels.size();
	fc_ = Linear(config.hidden_dim + config.latent_flat_dim(), base_channels_ * base_size_ * base_size_);
	deconv_ = Sequential();
	for (size_t i = channels.size(); i-- > 1;)
	{
		deconv_->push_back(ConvTranspose2d(ConvTranspose2dOptions(channels[i], channels[i - 1], 4).stride(2).padding(1)));
		deconv_->push_back(Functional(torch::silu));
	}
	deconv_->push_back(ConvTranspose2d(ConvTranspose2dOptions(channels.front(), kImageChannels, 4).stride(2).padding(1)));
	register_module("fc", fc_);
	register_module("deconv", deconv_);
}

torch::Tensor ConvDecoderImpl::forward(const torch::Tensor& features)
{
	return with_flat_batch(
		features,
		1,
		[this](const torch::Tensor& x)
		{
			auto base = fc_->forward(x).reshape({-1, base_channels_, base_size_, base_size_});
			return deconv_->forward(base).permute({0, 2, 3, 1}).contiguous();
		});
}

WorldModelImpl::WorldModelImpl(const WorldModelConfig& config) : config_(config)
{
	encoder_ = ConvEncoder(config);
	gru_input_ = torch::nn::Linear(config.latent_flat_dim() + config.action_dim, config.hidden_dim);
	gru_ = torch::nn::GRUCell(torch::nn::GRUCellOptions(config.hidden_dim, config.hidden_dim));
	prior_head_ = make_head(config.hidden_dim, config.head_hidden, config.latent_flat_dim());
	posterior_head_ = make_head(config.hidden_dim + config.embed_dim, config.head_hidden, config.latent_flat_dim());
	reward_head_ = make_head(config.hidden_dim + config.latent_flat_dim(), config.head_hidden, 1);
	register_module("encoder", encoder_);
	register_module("gru_input", gru_input_);
	register_module("gru", gru_);
	register_module("prior_head", prior_head_);
	register_module("posterior_head", posterior_head_);
	register_module("reward_head", reward_head_);
	if (config.with_decoder)
	{
		decoder_ = ConvDecoder(config);
		register_module("decoder", decoder_);
	}
}

torch::Tensor WorldModelImpl::encode(const torch::Tensor& observations)
{
	return encoder_->forward(observations);
}

torch::Tensor WorldModelImpl::recurrent_step(const torch::Tensor& h, const LatentSample& z, const torch::Tensor& action)
{
	check(h.size(-1) == config_.hidden_dim, "recurrent_step: bad hidden dim");
	check(action.size(-1) == config_.action_dim, "recurrent_step: bad action dim");
	auto input = torch::silu(gru_input_->forward(torch::cat({z.flat(), action}, -1)));
	return gru_->forward(input, h);
}

CategoricalPmf WorldModelImpl::prior(const torch::Tensor& h)
{
	auto logits = prior_head_->forward(h);
	auto shape = h.sizes().vec();
	shape.back() = config_.latent_vars;
	shape.push_back(config_.latent_classes);
	return CategoricalPmf::from_logits(logits.reshape(shape));
}

CategoricalPmf WorldModelImpl::posterior(const torch::Tensor& h, const torch::Tensor& observations)
{
	return posterior_from_embedding(h, encode(observations));
}

CategoricalPmf WorldModelImpl::posterior_from_embedding(const torch::Tensor& h, const torch::Tensor& embedding)
{
	auto logits = posterior_head_->forward(torch::cat({h, embedding}, -1));
	auto shape = h.sizes().vec();
	shape.back() = config_.latent_vars;
	shape.push_back(config_.latent_classes);
	return CategoricalPmf::from_logits(logits.reshape(shape));
}

torch::Tensor WorldModelImpl::predict_reward(const torch::Tensor& h, const LatentSample& z)
{
	return reward_head_->forward(torch::cat({h, z.flat()}, -1)).squeeze(-1);
}

torch::Tensor WorldModelImpl::decode(const torch::Tensor& h, const LatentSample& z)
{
	if (!decoder_)
	{
		throw ConfigurationError("decode: model was built without a decoder (contrastive-only mode)");
	}
	return decoder_->forward(torch::cat({h, z.flat()}, -1));
}

RssmState WorldModelImpl::initial_state(int64_t batch_size, RandomSource& rng, bool deterministic)
{
	auto options = parameters().front().options();
	auto h = torch::zeros({batch_size, config_.hidden_dim}, options);
	auto uniform = CategoricalPmf::from_logits(
		torch::zeros({batch_size, config_.latent_vars, config_.latent_classes}, options));
	return {h, st_sample(uniform, rng, deterministic)};
}

SequenceRollout WorldModelImpl::observe_sequence(
	const torch::Tensor& observations, const torch::Tensor& actions, RandomSource& rng, bool deterministic)
{
	check(observations.dim() == 5 && actions.dim() == 3, "observe_sequence: expected [B, T, ...] inputs");
	check(observations.size(0) == actions.size(0), "observe_sequence: batch size mismatch");
	check(observations.size(1) == actions.size(1), "observe_sequence: observation/action length mismatch");
	int64_t batch = observations.size(0);
	int64_t steps = observations.size(1);

	SequenceRollout out;
	out.embeddings = encode(observations);
	auto state = initial_state(batch, rng, deterministic);
	for (int64_t t = 0; t < steps; ++t)
	{
		auto h = recurrent_step(state.h, state.z, actions.select(1, t));
		auto posterior_pmf = posterior_from_embedding(h, out.embeddings.select(1, t));
		auto prior_pmf = prior(h);
		auto z = st_sample(posterior_pmf, rng, deterministic);
		state = {h, z};
		out.h.push_back(std::move(h));
		out.posterior.push_back(std::move(posterior_pmf));
		out.prior.push_back(std::move(prior_pmf));
		out.z.push_back(std::move(z));
	}
	return out;
}

PriorRollout WorldModelImpl::rollout_prior(
	const RssmState& start, const torch::Tensor& actions, RandomSource& rng, bool deterministic)
{
	check(actions.dim() == 3 && actions.size(1) >= 1, "rollout_prior: expected [B, K>=1, Da] actions");
	PriorRollout out;
	RssmState state = start;
	for (int64_t k = 0; k < actions.size(1); ++k)
	{
		auto h = recurrent_step(state.h, state.z, actions.select(1, k));
		auto prior_pmf = prior(h);
		auto z = st_sample(prior_pmf, rng, deterministic);
		state = {h, z};
		out.h.push_back(std::move(h));
		out.prior.push_back(std::move(prior_pmf));
		out.z.push_back(std::move(z));
	}
	return out;
}

} // namespace dreamingv2
