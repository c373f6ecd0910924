#pragma once

#include "categorical.h"
#include "common.h"
#include "replay.h"
#include "world_model.h"

#include <vector>

namespace dreamingv2
{

enum class ObjectiveMode
{
	contrastive,
	elbo,
	hybrid
};

enum class AuxDynamics
{
	rssm,
	linear
};

struct ObjectiveConfig
{
	int64_t horizon_k = 3; // K, the multi-step prediction horizon
	ObjectiveMode mode = ObjectiveMode::contrastive;
	AuxDynamics aux_dynamics = AuxDynamics::rssm;
	double nce_weight = 1.0;
	double kl_weight = 1.0;
	double aux_weight = 1.0;
	KlBalanceConfig kl_balance;
	double momentum_eta = 0.05;
	bool momentum_covers_critic = true;
	int64_t aux_warmup_steps = 0; // steps where only the aux objective is applied
};

// The contrastive critic p(z|x): a bias-free linear map from the embedding
// to V x C logits, turned into a PMF by a row-wise softmax.
class CriticImpl : public torch::nn::Module
{
public:
	CriticImpl(int64_t embed_dim, int64_t latent_vars, int64_t latent_classes);

	CategoricalPmf calc_pmf(const torch::Tensor& embedding);

private:
	torch::nn::Linear w_{nullptr};
	int64_t vars_;
	int64_t classes_;
};
TORCH_MODULE(Critic);

// Auxiliary dynamics alternative to the RSSM rollout: one linear layer
// mapping (z, action) to the next-step latent logits.
class LinearDynamicsImpl : public torch::nn::Module
{
public:
	LinearDynamicsImpl(int64_t latent_vars, int64_t latent_classes, int64_t action_dim);

	CategoricalPmf forward(const LatentSample& z, const torch::Tensor& action);

private:
	torch::nn::Linear map_{nullptr};
	int64_t vars_;
	int64_t classes_;
};
TORCH_MODULE(LinearDynamics);

// Slowly updated shadow copy of the encoder (and, by default, the critic)
// that produces contrastive targets. Its parameters never require grad.
struct MomentumEncoderState
{
	ConvEncoder encoder{nullptr};
	Critic critic{nullptr}; // null when the momentum copy excludes the critic
	double eta = 0.05;

	static MomentumEncoderState create(
		const WorldModelConfig& config, ConvEncoder online_encoder, Critic online_critic, double eta,
		bool cover_critic);

	// Target-path PMF with fully detached parameters and outputs; falls back
	// to the (detached) online critic when the copy excludes it.
	CategoricalPmf target_pmf(const torch::Tensor& observations, Critic online_critic) const;
};

// theta_bar <- (1 - eta) * theta_bar + eta * theta, elementwise.
void ema_update(const std::vector<torch::Tensor>& online, const std::vector<torch::Tensor>& shadow, double eta);

void momentum_update(ConvEncoder online_encoder, Critic online_critic, MomentumEncoderState& state);

// Pairwise logit matrix: values[i][j] = log_mass(latents[i], targets[j]).
// Row i's positive pair sits on the diagonal; every entry is <= 0.
torch::Tensor contrastive_logits(const LatentSample& latents, const CategoricalPmf& targets);

// Mean softmax cross-entropy over rows with target class = row index.
// Equals log N for an all-equal logit matrix.
torch::Tensor nce_loss(const torch::Tensor& logit_matrix);

struct NceKResult
{
	torch::Tensor loss;
	std::vector<double> per_k; // mean row loss grouped by prediction depth k
};

struct KlKResult
{
	torch::Tensor loss;
	std::vector<double> per_k;
};

struct AuxNceResult
{
	torch::Tensor loss;
	double retrieval_accuracy = 0.0; // fraction of rows whose argmax is the diagonal
};

struct WorldModelLossBreakdown
{
	torch::Tensor total;
	std::vector<double> nce_k;
	std::vector<double> kl_k;
	double nce_sum = 0.0;
	double kl_sum = 0.0;
	double aux = 0.0;
	double reward = 0.0;
	double reconstruction = 0.0;
	double retrieval_accuracy = -1.0;
	// Detached posterior states of the filtering chain, flattened over
	// (batch, time): the imagination start states for the policy step.
	torch::Tensor chain_h; // [B*L, Dh]
	torch::Tensor chain_z; // [B*L, V, C]
};

// Multi-step InfoNCE over a batch of augmented slices: posterior sample at
// the anchor, closed-loop prediction for k=1..K (RSSM or linear dynamics),
// momentum-critic targets from the second view, one joint (B*(K+1))^2 logit
// matrix with all cross-episode and cross-timestep pairs as negatives.
NceKResult nce_k_loss(
	const ReplayBatch& batch,
	WorldModel world_model,
	Critic critic,
	LinearDynamics aux_linear,
	const MomentumEncoderState& momentum,
	const ObjectiveConfig& cfg,
	RandomSource& rng,
	bool deterministic = false);

// Overshooting KL: sum over k of the balanced KL between the same-step
// posterior and the k-step-ahead prior; k=0 is the standard one-step KL.
KlKResult kl_k_loss(
	const ReplayBatch& batch,
	WorldModel world_model,
	const ObjectiveConfig& cfg,
	RandomSource& rng,
	bool deterministic = false);

// MoCo-style auxiliary loss over B paired frames: online z ~ calc_pmf(e),
// momentum-path target PMFs, B x B logit matrix. Requires B >= 2.
AuxNceResult aux_nce_loss(
	const torch::Tensor& frames_online,
	const torch::Tensor& frames_target,
	ConvEncoder encoder,
	Critic critic,
	const MomentumEncoderState& momentum,
	RandomSource& rng,
	bool deterministic = false);

// Assembles the configured training objective from one shared filtering
// chain: contrastive terms, overshoot KL, auxiliary NCE, reward regression
// and (for elbo/hybrid modes) the reconstruction likelihood.
WorldModelLossBreakdown total_world_model_loss(
	const ReplayBatch& batch,
	WorldModel world_model,
	Critic critic,
	LinearDynamics aux_linear,
	const MomentumEncoderState& momentum,
	const ObjectiveConfig& cfg,
	RandomSource& rng,
	bool deterministic = false,
	int64_t global_step = 0);

} // namespace dreamingv2
