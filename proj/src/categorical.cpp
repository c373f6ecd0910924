#include "dreamingv2/categorical.h"

namespace dreamingv2
{

void CategoricalPmf::validate(double tolerance) const
{
	auto row_sums = probs_.sum(-1);
	auto max_err = (row_sums - 1.0).abs().max().item<double>();
	if (max_err > tolerance)
	{
		throw InvariantViolation("CategoricalPmf: row sum off by " + std::to_string(max_err));
	}
	if (probs_.min().item<double>() < 0.0)
	{
		throw InvariantViolation("CategoricalPmf: negative probability entry");
	}
}

void LatentSample::validate() const
{
	auto values = onehots.detach();
	bool binary = values.eq(0.0).logical_or(values.eq(1.0)).all().item<bool>();
	bool one_per_row = values.sum(-1).eq(1.0).all().item<bool>();
	if (!binary || !one_per_row)
	{
		throw InvariantViolation("LatentSample: rows must be exactly one-hot");
	}
}

LatentSample st_sample(const CategoricalPmf& pmf, RandomSource& rng, bool deterministic)
{
	pmf.validate();
	const auto& probs = pmf.probs();
	auto flat = probs.detach().reshape({-1, pmf.classes()});
	torch::Tensor index;
	if (deterministic)
	{
		index = flat.argmax(-1);
	}
	else
	{
		index = torch::multinomial(flat, 1, /*replacement=*/true, rng).squeeze(-1);
	}
	auto onehot = torch::one_hot(index, pmf.classes()).to(probs.dtype()).reshape(probs.sizes());
	// Forward value stays the one-hot; gradient passes straight through probs.
	return LatentSample{onehot + probs - probs.detach()};
}

torch::Tensor log_mass(const LatentSample& z, const CategoricalPmf& pmf)
{
	check(
		z.onehots.size(-1) == pmf.classes() && z.onehots.size(-2) == pmf.vars(),
		"log_mass: sample and pmf shapes disagree");
	return (z.onehots * pmf.log_probs()).sum({-2, -1});
}

torch::Tensor kl_divergence(const CategoricalPmf& q, const CategoricalPmf& p)
{
	auto q_probs = q.probs();
	// q log q with the 0 log 0 -> 0 convention via the shared floor.
	auto elementwise = q_probs * (q.log_probs() - p.log_probs());
	return elementwise.sum({-2, -1});
}

torch::Tensor kl_balanced(const CategoricalPmf& posterior, const CategoricalPmf& prior, const KlBalanceConfig& cfg)
{
	posterior.validate();
	prior.validate();
	auto prior_training = kl_divergence(posterior.detach(), prior);
	auto posterior_training = kl_divergence(posterior, prior.detach());
	auto balanced = cfg.alpha * prior_training + (1.0 - cfg.alpha) * posterior_training;
	return balanced.clamp_min(cfg.free_nats);
}

torch::Tensor entropy(const CategoricalPmf& pmf)
{
	pmf.validate();
	return -(pmf.probs() * pmf.log_probs()).sum({-2, -1});
}

} // namespace dreamingv2
