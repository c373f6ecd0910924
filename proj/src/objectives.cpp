#include "dreamingv2/objectives.h"

namespace dreamingv2
{

namespace
{

namespace F = torch::nn::functional;

// Anchored multi-step prediction shared by the NCE-k and KL-k terms: the
// filtering chain covers the whole slice (burn-in included); the anchor is
// the last index from which a full K-step overshoot fits.
struct AnchoredPrediction
{
	int64_t anchor = 0;
	std::vector<CategoricalPmf> overshoot_prior; // k = 1..K, RSSM closed loop
	std::vector<LatentSample> predicted;         // k = 0..K latents for the NCE term
};

int64_t anchor_index(const ReplayBatch& batch, const ObjectiveConfig& cfg)
{
	int64_t slice_length = batch.slice_length();
	check(cfg.horizon_k + 1 <= slice_length, "nce_k_loss: K+1 exceeds the slice length");
	return slice_length - 1 - cfg.horizon_k;
}

AnchoredPrediction predict_from_anchor(
	const ReplayBatch& batch,
	const SequenceRollout& chain,
	WorldModel world_model,
	LinearDynamics aux_linear,
	const ObjectiveConfig& cfg,
	RandomSource& rng,
	bool deterministic)
{
	AnchoredPrediction out;
	out.anchor = anchor_index(batch, cfg);
	out.predicted.push_back(chain.z[out.anchor]);
	if (cfg.horizon_k < 1)
	{
		return out;
	}

	auto future_actions = batch.actions.narrow(1, out.anchor + 1, cfg.horizon_k);
	auto rollout = world_model->rollout_prior(chain.state_at(out.anchor), future_actions, rng, deterministic);
	out.overshoot_prior = rollout.prior;

	if (cfg.aux_dynamics == AuxDynamics::rssm)
	{
		for (auto& z : rollout.z)
		{
			out.predicted.push_back(std::move(z));
		}
	}
	else
	{
		auto z = chain.z[out.anchor];
		for (int64_t k = 0; k < cfg.horizon_k; ++k)
		{
			auto pmf = aux_linear->forward(z, future_actions.select(1, k));
			z = st_sample(pmf, rng, deterministic);
			out.predicted.push_back(z);
		}
	}
	return out;
}

LatentSample stack_slicewise(const std::vector<LatentSample>& per_k)
{
	std::vector<torch::Tensor> onehots;
	onehots.reserve(per_k.size());
	for (const auto& z : per_k)
	{
		onehots.push_back(z.onehots);
	}
	// [B, K+1, V, C] -> [B*(K+1), V, C]: row index b*(K+1)+k pairs with the
	// identically ordered target, putting positives on the diagonal.
	auto stacked = torch::stack(onehots, 1);
	return {stacked.reshape({-1, stacked.size(2), stacked.size(3)})};
}

torch::Tensor per_row_nce(const torch::Tensor& logit_matrix)
{
	check(logit_matrix.dim() == 2 && logit_matrix.size(0) == logit_matrix.size(1), "nce_loss: logit matrix must be square");
	auto targets = torch::arange(logit_matrix.size(0), torch::TensorOptions(torch::kLong).device(logit_matrix.device()));
	return F::cross_entropy(logit_matrix, targets, F::CrossEntropyFuncOptions().reduction(torch::kNone));
}

NceKResult nce_rows_from_prediction(
	const ReplayBatch& batch,
	const AnchoredPrediction& prediction,
	Critic critic,
	const MomentumEncoderState& momentum,
	const ObjectiveConfig& cfg)
{
	auto target_frames = batch.target_view.narrow(1, prediction.anchor, cfg.horizon_k + 1);
	auto targets = momentum.target_pmf(target_frames, critic); // [B, K+1, V, C]

	auto latents = stack_slicewise(prediction.predicted);
	auto target_flat = targets.reshape_batch({-1});
	auto logits = contrastive_logits(latents, target_flat);
	auto rows = per_row_nce(logits);

	NceKResult result;
	result.loss = rows.mean();
	auto by_k = rows.detach().reshape({batch.batch_size(), cfg.horizon_k + 1}).mean(0);
	for (int64_t k = 0; k <= cfg.horizon_k; ++k)
	{
		result.per_k.push_back(by_k[k].item<double>());
	}
	return result;
}

KlKResult kl_from_chain(
	const ReplayBatch& batch,
	const SequenceRollout& chain,
	const AnchoredPrediction& prediction,
	const ObjectiveConfig& cfg)
{
	KlKResult result;
	auto loss = torch::zeros({}, chain.h.front().options());
	for (int64_t k = 0; k <= cfg.horizon_k; ++k)
	{
		const auto& posterior = chain.posterior[prediction.anchor + k];
		const auto& prior = k == 0 ? chain.prior[prediction.anchor] : prediction.overshoot_prior[k - 1];
		auto term = kl_balanced(posterior, prior, cfg.kl_balance).mean();
		result.per_k.push_back(term.item<double>());
		loss = loss + term;
	}
	result.loss = loss;
	return result;
}

} // namespace

CriticImpl::CriticImpl(int64_t embed_dim, int64_t latent_vars, int64_t latent_classes)
		: vars_(latent_vars), classes_(latent_classes)
{
	w_ = torch::nn::Linear(torch::nn::LinearOptions(embed_dim, latent_vars * latent_classes).bias(false));
	register_module("w", w_);
}

CategoricalPmf CriticImpl::calc_pmf(const torch::Tensor& embedding)
{
	auto logits = w_->forward(embedding);
	auto shape = embedding.sizes().vec();
	shape.back() = vars_;
	shape.push_back(classes_);
	return CategoricalPmf::from_logits(logits.reshape(shape));
}

LinearDynamicsImpl::LinearDynamicsImpl(int64_t latent_vars, int64_t latent_classes, int64_t action_dim)
		: vars_(latent_vars), classes_(latent_classes)
{
	map_ = torch::nn::Linear(latent_vars * latent_classes + action_dim, latent_vars * latent_classes);
	register_module("map", map_);
}

CategoricalPmf LinearDynamicsImpl::forward(const LatentSample& z, const torch::Tensor& action)
{
	auto logits = map_->forward(torch::cat({z.flat(), action}, -1));
	auto shape = action.sizes().vec();
	shape.back() = vars_;
	shape.push_back(classes_);
	return CategoricalPmf::from_logits(logits.reshape(shape));
}

MomentumEncoderState MomentumEncoderState::create(
	const WorldModelConfig& config, ConvEncoder online_encoder, Critic online_critic, double eta, bool cover_critic)
{
	check(eta > 0.0 && eta <= 1.0, "momentum eta must lie in (0, 1]");
	MomentumEncoderState state;
	state.eta = eta;
	state.encoder = ConvEncoder(config);
	state.encoder->to(online_encoder->parameters().front().dtype());
	if (cover_critic)
	{
		state.critic = Critic(config.embed_dim, config.latent_vars, config.latent_classes);
		state.critic->to(online_critic->parameters().front().dtype());
	}
	{
		torch::NoGradGuard no_grad;
		auto copy_all = [](const std::vector<torch::Tensor>& src, std::vector<torch::Tensor> dst)
		{
			for (size_t i = 0; i < src.size(); ++i)
			{
				dst[i].copy_(src[i]);
			}
		};
		copy_all(online_encoder->parameters(), state.encoder->parameters());
		if (state.critic)
		{
			copy_all(online_critic->parameters(), state.critic->parameters());
		}
	}
	for (auto& p : state.encoder->parameters())
	{
		p.set_requires_grad(false);
	}
	if (state.critic)
	{
		for (auto& p : state.critic->parameters())
		{
			p.set_requires_grad(false);
		}
	}
	return state;
}

CategoricalPmf MomentumEncoderState::target_pmf(const torch::Tensor& observations, Critic online_critic) const
{
	torch::NoGradGuard no_grad;
	auto embedding = encoder->forward(observations);
	auto pmf = critic ? critic->calc_pmf(embedding) : online_critic->calc_pmf(embedding);
	return pmf.detach();
}

void ema_update(const std::vector<torch::Tensor>& online, const std::vector<torch::Tensor>& shadow, double eta)
{
	check(online.size() == shadow.size(), "ema_update: parameter count mismatch");
	torch::NoGradGuard no_grad;
	for (size_t i = 0; i < online.size(); ++i)
	{
		check(online[i].sizes() == shadow[i].sizes(), "ema_update: parameter shape mismatch");
		shadow[i].mul_(1.0 - eta).add_(online[i], eta);
	}
}

void momentum_update(ConvEncoder online_encoder, Critic online_critic, MomentumEncoderState& state)
{
	ema_update(online_encoder->parameters(), state.encoder->parameters(), state.eta);
	if (state.critic)
	{
		ema_update(online_critic->parameters(), state.critic->parameters(), state.eta);
	}
}

torch::Tensor contrastive_logits(const LatentSample& latents, const CategoricalPmf& targets)
{
	check(latents.onehots.dim() == 3 && targets.probs().dim() == 3, "contrastive_logits: expected [N, V, C] inputs");
	check(latents.onehots.size(0) == targets.probs().size(0), "contrastive_logits: list length mismatch");
	check(
		latents.vars() == targets.vars() && latents.classes() == targets.classes(),
		"contrastive_logits: latent/target shape mismatch");
	auto z = latents.flat();
	auto log_probs = targets.log_probs().reshape({targets.probs().size(0), -1});
	return z.matmul(log_probs.t());
}

torch::Tensor nce_loss(const torch::Tensor& logit_matrix)
{
	return per_row_nce(logit_matrix).mean();
}

NceKResult nce_k_loss(
	const ReplayBatch& batch,
	WorldModel world_model,
	Critic critic,
	LinearDynamics aux_linear,
	const MomentumEncoderState& momentum,
	const ObjectiveConfig& cfg,
	RandomSource& rng,
	bool deterministic)
{
	anchor_index(batch, cfg);
	auto chain = world_model->observe_sequence(batch.online_view, batch.actions, rng, deterministic);
	auto prediction = predict_from_anchor(batch, chain, world_model, aux_linear, cfg, rng, deterministic);
	return nce_rows_from_prediction(batch, prediction, critic, momentum, cfg);
}

KlKResult kl_k_loss(
	const ReplayBatch& batch, WorldModel world_model, const ObjectiveConfig& cfg, RandomSource& rng, bool deterministic)
{
	auto chain = world_model->observe_sequence(batch.online_view, batch.actions, rng, deterministic);
	auto prediction = predict_from_anchor(batch, chain, world_model, nullptr, cfg, rng, deterministic);
	return kl_from_chain(batch, chain, prediction, cfg);
}

namespace
{

AuxNceResult aux_from_embedding(
	const torch::Tensor& online_embedding,
	const torch::Tensor& frames_target,
	Critic critic,
	const MomentumEncoderState& momentum,
	RandomSource& rng,
	bool deterministic)
{
	auto online_pmf = critic->calc_pmf(online_embedding);
	auto z = st_sample(online_pmf, rng, deterministic);
	auto targets = momentum.target_pmf(frames_target, critic);

	auto logits = contrastive_logits(z, targets);
	auto rows = per_row_nce(logits);

	AuxNceResult result;
	result.loss = rows.mean();
	auto hits = logits.detach().argmax(1).eq(torch::arange(logits.size(0), torch::kLong));
	result.retrieval_accuracy = hits.to(torch::kFloat64).mean().item<double>();
	return result;
}

} // namespace

AuxNceResult aux_nce_loss(
	const torch::Tensor& frames_online,
	const torch::Tensor& frames_target,
	ConvEncoder encoder,
	Critic critic,
	const MomentumEncoderState& momentum,
	RandomSource& rng,
	bool deterministic)
{
	check(frames_online.dim() == 4 && frames_online.size(0) >= 2, "aux_nce_loss: needs B >= 2 frames (no negatives otherwise)");
	check(frames_online.sizes() == frames_target.sizes(), "aux_nce_loss: view shapes disagree");
	auto embedding = encoder->forward(frames_online);
	return aux_from_embedding(embedding, frames_target, critic, momentum, rng, deterministic);
}

WorldModelLossBreakdown total_world_model_loss(
	const ReplayBatch& batch,
	WorldModel world_model,
	Critic critic,
	LinearDynamics aux_linear,
	const MomentumEncoderState& momentum,
	const ObjectiveConfig& cfg,
	RandomSource& rng,
	bool deterministic,
	int64_t global_step)
{
	bool wants_elbo = cfg.mode == ObjectiveMode::elbo || cfg.mode == ObjectiveMode::hybrid;
	bool wants_contrastive = cfg.mode == ObjectiveMode::contrastive || cfg.mode == ObjectiveMode::hybrid;
	if (wants_elbo && !world_model->has_decoder())
	{
		throw ConfigurationError("total_world_model_loss: elbo/hybrid mode requires a decoder");
	}

	WorldModelLossBreakdown breakdown;
	auto chain = world_model->observe_sequence(batch.online_view, batch.actions, rng, deterministic);
	auto options = chain.h.front().options();
	auto total = torch::zeros({}, options);

	torch::Tensor aux_term;
	if (wants_contrastive)
	{
		// One anchored rollout feeds both the NCE latents and the overshoot KL.
		auto prediction = predict_from_anchor(batch, chain, world_model, aux_linear, cfg, rng, deterministic);
		auto nce = nce_rows_from_prediction(batch, prediction, critic, momentum, cfg);
		auto kl = kl_from_chain(batch, chain, prediction, cfg);

		auto anchor = prediction.anchor;
		check(batch.batch_size() >= 2, "total_world_model_loss: contrastive training needs B >= 2");
		// The chain already encoded the anchor frames; reuse those embeddings.
		auto aux = aux_from_embedding(
			chain.embeddings.select(1, anchor),
			batch.target_view.select(1, anchor),
			critic,
			momentum,
			rng,
			deterministic);

		breakdown.nce_k = nce.per_k;
		breakdown.kl_k = kl.per_k;
		breakdown.nce_sum = nce.loss.item<double>();
		breakdown.kl_sum = kl.loss.item<double>();
		breakdown.aux = aux.loss.item<double>();
		breakdown.retrieval_accuracy = aux.retrieval_accuracy;
		aux_term = aux.loss;

		total = total + cfg.nce_weight * nce.loss + cfg.kl_weight * kl.loss + cfg.aux_weight * aux.loss;
	}

	// Reward regression over the filtering chain (unit-variance Gaussian NLL
	// up to a constant).
	auto h_all = torch::stack(chain.h, 1);
	std::vector<torch::Tensor> onehots;
	for (const auto& z : chain.z)
	{
		onehots.push_back(z.onehots);
	}
	auto z_all = LatentSample{torch::stack(onehots, 1)};
	auto predicted_reward = world_model->predict_reward(h_all, z_all);
	auto reward_loss = 0.5 * (predicted_reward - batch.rewards.to(options)).pow(2).mean();
	breakdown.reward = reward_loss.item<double>();
	total = total + reward_loss;

	breakdown.chain_h = h_all.detach().reshape({-1, h_all.size(-1)});
	breakdown.chain_z = z_all.onehots.detach().reshape({-1, z_all.onehots.size(-2), z_all.onehots.size(-1)});

	if (wants_elbo)
	{
		auto decoded = world_model->decode(h_all, z_all);
		auto recon = 0.5 * (decoded - batch.online_view.to(options)).pow(2).sum({-3, -2, -1}).mean();
		breakdown.reconstruction = recon.item<double>();

		auto kl_elbo = torch::zeros({}, options);
		for (int64_t t = 0; t < chain.length(); ++t)
		{
			kl_elbo = kl_elbo + kl_balanced(chain.posterior[t], chain.prior[t], cfg.kl_balance).mean();
		}
		if (cfg.mode == ObjectiveMode::elbo)
		{
			breakdown.kl_k = {kl_elbo.item<double>()};
			breakdown.kl_sum = kl_elbo.item<double>();
		}
		total = total + recon + cfg.kl_weight * kl_elbo;
	}

	if (wants_contrastive && global_step < cfg.aux_warmup_steps && aux_term.defined())
	{
		// Warm-up: only the auxiliary objective triggers the optimization.
		total = cfg.aux_weight * aux_term;
	}

	breakdown.total = total;
	return breakdown;
}

} // namespace dreamingv2
