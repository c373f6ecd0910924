#pragma once

#include "common.h"
#include "world_model.h"

namespace dreamingv2
{

struct PolicyConfig
{
	int64_t horizon = 15; // imagination horizon H
	double gamma = 0.99;
	double lambda = 0.95;
	double entropy_coeff = 1e-4;
	double actor_lr = 1e-4;
	double value_lr = 1e-4;
	double grad_clip = 100.0;
	int64_t target_update_every = 100; // value-target refresh period, in updates
	int64_t hidden = 256;
};

// tanh-squashed diagonal Gaussian; actions always satisfy the [-1,1] bounds.
struct SquashedNormal
{
	torch::Tensor mean; // pre-squash
	torch::Tensor std;

	struct Sample
	{
		torch::Tensor action;   // tanh(u)
		torch::Tensor pre_tanh; // u
	};

	Sample rsample(RandomSource& rng) const;
	torch::Tensor mode() const { return torch::tanh(mean); }
	// log pi(a) with the tanh change-of-variables correction, summed over dims.
	torch::Tensor log_prob(const torch::Tensor& pre_tanh) const;
};

class ActorImpl : public torch::nn::Module
{
public:
	ActorImpl(int64_t feature_dim, int64_t action_dim, int64_t hidden);

	SquashedNormal forward(const torch::Tensor& features);

private:
	torch::nn::Sequential body_{nullptr};
	int64_t action_dim_;
};
TORCH_MODULE(Actor);

class ValueNetImpl : public torch::nn::Module
{
public:
	ValueNetImpl(int64_t feature_dim, int64_t hidden);

	torch::Tensor forward(const torch::Tensor& features);

private:
	torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ValueNet);

// Latent rollout produced without environment interaction. Per-step
// sequences have length H; features/values carry the H+1 bootstrap entry.
struct ImaginedTrajectory
{
	torch::Tensor h;              // [H+1, B, Dh]
	torch::Tensor z;              // [H+1, B, V, C]
	torch::Tensor features;       // [H+1, B, Dh + V*C]
	torch::Tensor actions;        // [H, B, Da]
	torch::Tensor rewards;        // [H, B], predict_reward at states 1..H
	torch::Tensor values;         // [H+1, B], target value net
	torch::Tensor lambda_returns; // [H, B], targets for states 0..H-1
	torch::Tensor entropy;        // [H, B], -log pi(a|s) estimate

	int64_t horizon() const { return actions.size(0); }
};

// Backward TD(lambda) recursion V_t = r_t + gamma ((1-lambda) v_{t+1} +
// lambda V_{t+1}), bootstrapped with the final value entry.
torch::Tensor lambda_returns(
	const torch::Tensor& rewards, const torch::Tensor& values, double gamma, double lambda);

struct PolicyLossBreakdown
{
	double actor_loss = 0.0;
	double value_loss = 0.0;
	double entropy = 0.0;
	double mean_return = 0.0;
};

// Actor-critic trained purely inside the learned model. World-model
// parameters are frozen around imagination, so policy updates can never
// touch them (and their grads stay exactly zero).
class PolicyLearner
{
public:
	PolicyLearner(const PolicyConfig& cfg, int64_t feature_dim, int64_t action_dim);

	// Closed-loop latent rollout from detached start states: action from the
	// actor, next state via recurrent_step + prior + st_sample, reward from
	// the reward head, values from the target net, lambda-returns attached.
	ImaginedTrajectory imagine(
		WorldModel world_model, const RssmState& start, RandomSource& rng, bool deterministic = false) const;

	// value loss = MSE to stop-gradient lambda-returns; actor loss =
	// -(dynamics-backprop lambda-return) - entropy_coeff * entropy.
	PolicyLossBreakdown update(const ImaginedTrajectory& trajectory);

	Actor actor() { return actor_; }
	ValueNet value() { return value_; }
	ValueNet value_target() { return value_target_; }
	const PolicyConfig& config() const { return cfg_; }
	int64_t updates_done() const { return updates_done_; }
	void restore_updates_done(int64_t updates) { updates_done_ = updates; }

	void copy_value_target();

	torch::optim::Adam& actor_optimizer() { return *actor_optimizer_; }
	torch::optim::Adam& value_optimizer() { return *value_optimizer_; }

private:
	PolicyConfig cfg_;
	Actor actor_{nullptr};
	ValueNet value_{nullptr};
	ValueNet value_target_{nullptr};
	std::unique_ptr<torch::optim::Adam> actor_optimizer_;
	std::unique_ptr<torch::optim::Adam> value_optimizer_;
	int64_t updates_done_ = 0;
};

} // namespace dreamingv2
