#include "dreamingv2/policy.h"

namespace dreamingv2
{

namespace
{

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;
constexpr double kTanhEps = 1e-6;

// Temporarily clears requires_grad on a parameter set; restores on exit.
class FreezeParams
{
public:
	explicit FreezeParams(std::vector<torch::Tensor> params) : params_(std::move(params))
	{
		for (auto& p : params_)
		{
			previous_.push_back(p.requires_grad());
			p.set_requires_grad(false);
		}
	}
	~FreezeParams()
	{
		for (size_t i = 0; i < params_.size(); ++i)
		{
			params_[i].set_requires_grad(previous_[i]);
		}
	}

private:
	std::vector<torch::Tensor> params_;
	std::vector<bool> previous_;
};

} // namespace

SquashedNormal::Sample SquashedNormal::rsample(RandomSource& rng) const
{
	auto eps = torch::randn(mean.sizes(), rng, mean.options());
	auto pre_tanh = mean + std * eps;
	return {torch::tanh(pre_tanh), pre_tanh};
}

torch::Tensor SquashedNormal::log_prob(const torch::Tensor& pre_tanh) const
{
	auto normalized = (pre_tanh - mean) / std;
	auto base = -0.5 * normalized.pow(2) - std.log() - 0.5 * std::log(2.0 * M_PI);
	auto correction = torch::log1p(-torch::tanh(pre_tanh).pow(2) + kTanhEps);
	return (base - correction).sum(-1);
}

ActorImpl::ActorImpl(int64_t feature_dim, int64_t action_dim, int64_t hidden) : action_dim_(action_dim)
{
	using namespace torch::nn;
	body_ = Sequential(
		Linear(feature_dim, hidden),
		Functional(torch::silu),
		Linear(hidden, hidden),
		Functional(torch::silu),
		Linear(hidden, 2 * action_dim));
	register_module("body", body_);
}

SquashedNormal ActorImpl::forward(const torch::Tensor& features)
{
	auto out = body_->forward(features);
	auto mean = out.narrow(-1, 0, action_dim_);
	auto raw_std = out.narrow(-1, action_dim_, action_dim_);
	// Soft clamp of log-std into [kLogStdMin, kLogStdMax].
	auto log_std = kLogStdMin + 0.5 * (kLogStdMax - kLogStdMin) * (torch::tanh(raw_std) + 1.0);
	return {mean, log_std.exp()};
}

ValueNetImpl::ValueNetImpl(int64_t feature_dim, int64_t hidden)
{
	using namespace torch::nn;
	body_ = Sequential(
		Linear(feature_dim, hidden),
		Functional(torch::silu),
		Linear(hidden, hidden),
		Functional(torch::silu),
		Linear(hidden, 1));
	register_module("body", body_);
}

torch::Tensor ValueNetImpl::forward(const torch::Tensor& features)
{
	return body_->forward(features).squeeze(-1);
}

torch::Tensor lambda_returns(const torch::Tensor& rewards, const torch::Tensor& values, double gamma, double lambda)
{
	check(values.size(0) == rewards.size(0) + 1, "lambda_returns: values must carry one bootstrap entry");
	int64_t steps = rewards.size(0);
	std::vector<torch::Tensor> returns(steps);
	auto next = values[steps];
	for (int64_t t = steps - 1; t >= 0; --t)
	{
		returns[t] = rewards[t] + gamma * ((1.0 - lambda) * values[t + 1] + lambda * next);
		next = returns[t];
	}
	return torch::stack(returns, 0);
}

PolicyLearner::PolicyLearner(const PolicyConfig& cfg, int64_t feature_dim, int64_t action_dim) : cfg_(cfg)
{
	actor_ = Actor(feature_dim, action_dim, cfg.hidden);
	value_ = ValueNet(feature_dim, cfg.hidden);
	value_target_ = ValueNet(feature_dim, cfg.hidden);
	copy_value_target();
	for (auto& p : value_target_->parameters())
	{
		p.set_requires_grad(false);
	}
	actor_optimizer_ = std::make_unique<torch::optim::Adam>(actor_->parameters(), cfg.actor_lr);
	value_optimizer_ = std::make_unique<torch::optim::Adam>(value_->parameters(), cfg.value_lr);
}

void PolicyLearner::copy_value_target()
{
	torch::NoGradGuard no_grad;
	auto src = value_->parameters();
	auto dst = value_target_->parameters();
	for (size_t i = 0; i < src.size(); ++i)
	{
		dst[i].copy_(src[i]);
	}
}

ImaginedTrajectory PolicyLearner::imagine(
	WorldModel world_model, const RssmState& start, RandomSource& rng, bool deterministic) const
{
	check(cfg_.horizon >= 1, "imagine: horizon must be >= 1");
	FreezeParams freeze(world_model->parameters());

	RssmState state = start.detach();
	std::vector<torch::Tensor> h{state.h};
	std::vector<torch::Tensor> z{state.z.onehots};
	std::vector<torch::Tensor> features{state.feature()};
	std::vector<torch::Tensor> actions;
	std::vector<torch::Tensor> rewards;
	std::vector<torch::Tensor> entropies;

	for (int64_t i = 0; i < cfg_.horizon; ++i)
	{
		auto dist = actor_->forward(features.back());
		torch::Tensor action;
		if (deterministic)
		{
			action = dist.mode();
			entropies.push_back(-dist.log_prob(dist.mean));
		}
		else
		{
			auto sample = dist.rsample(rng);
			action = sample.action;
			entropies.push_back(-dist.log_prob(sample.pre_tanh));
		}
		actions.push_back(action);

		auto next_h = world_model->recurrent_step(state.h, state.z, action);
		auto prior_pmf = world_model->prior(next_h);
		auto next_z = st_sample(prior_pmf, rng, deterministic);
		state = {next_h, next_z};
		h.push_back(state.h);
		z.push_back(state.z.onehots);
		features.push_back(state.feature());
		rewards.push_back(world_model->predict_reward(state.h, state.z));
	}

	ImaginedTrajectory traj;
	traj.h = torch::stack(h, 0);
	traj.z = torch::stack(z, 0);
	traj.features = torch::stack(features, 0);
	traj.actions = torch::stack(actions, 0);
	traj.rewards = torch::stack(rewards, 0);
	traj.values = value_target_->forward(traj.features);
	traj.lambda_returns = lambda_returns(traj.rewards, traj.values, cfg_.gamma, cfg_.lambda);
	traj.entropy = torch::stack(entropies, 0);
	return traj;
}

PolicyLossBreakdown PolicyLearner::update(const ImaginedTrajectory& trajectory)
{
	int64_t horizon = trajectory.horizon();
	auto actor_loss = -trajectory.lambda_returns.mean() - cfg_.entropy_coeff * trajectory.entropy.mean();

	auto value_features = trajectory.features.narrow(0, 0, horizon).detach();
	auto value_pred = value_->forward(value_features);
	auto value_loss = (value_pred - trajectory.lambda_returns.detach()).pow(2).mean();

	PolicyLossBreakdown breakdown;
	breakdown.actor_loss = actor_loss.item<double>();
	breakdown.value_loss = value_loss.item<double>();
	breakdown.entropy = trajectory.entropy.mean().item<double>();
	breakdown.mean_return = trajectory.lambda_returns.mean().item<double>();

	actor_optimizer_->zero_grad();
	actor_loss.backward();
	torch::nn::utils::clip_grad_norm_(actor_->parameters(), cfg_.grad_clip);
	actor_optimizer_->step();

	value_optimizer_->zero_grad();
	value_loss.backward();
	torch::nn::utils::clip_grad_norm_(value_->parameters(), cfg_.grad_clip);
	value_optimizer_->step();

	++updates_done_;
	if (updates_done_ % cfg_.target_update_every == 0)
	{
		copy_value_target();
	}
	return breakdown;
}

} // namespace dreamingv2
