#pragma once

#include "common.h"

namespace dreamingv2
{

// Floor applied inside every log over probabilities; keeps log-mass and KL
// finite for (numerically) zero entries.
inline constexpr double kProbFloor = 1e-8;

// Row-sum tolerance used when validating PMFs handed to an operation.
inline constexpr double kRowSumTolerance = 1e-4;

struct KlBalanceConfig
{
	// Weight on the prior-training direction KL(sg(posterior) || prior).
	double alpha = 0.8;
	// Free-nats floor on the balanced KL; 0 disables it.
	double free_nats = 0.0;
};

// A vector of independent categorical distributions: trailing dims [V, C],
// any number of leading batch dims. Rows are produced exclusively by a
// softmax over unconstrained logits, so they are nonnegative and sum to 1.
class CategoricalPmf
{
public:
	static CategoricalPmf from_logits(const torch::Tensor& logits)
	{
		check(logits.dim() >= 2, "CategoricalPmf: logits must have trailing [vars, classes] dims");
		return CategoricalPmf(torch::softmax(logits, -1));
	}

	// Routes given probabilities through log+softmax so that construction
	// still funnels through the softmax contract. Exact for one-hot rows.
	static CategoricalPmf from_probs(const torch::Tensor& probs)
	{
		check(probs.dim() >= 2, "CategoricalPmf: probs must have trailing [vars, classes] dims");
		return CategoricalPmf(torch::softmax(probs.log(), -1));
	}

	static CategoricalPmf uniform(int64_t vars, int64_t classes, torch::TensorOptions options = torch::TensorOptions())
	{
		return from_logits(torch::zeros({vars, classes}, options));
	}

	const torch::Tensor& probs() const { return probs_; }

	// log(probs) clamped to [kProbFloor, 1]; entries are always <= 0.
	torch::Tensor log_probs() const { return probs_.clamp(kProbFloor, 1.0).log(); }

	int64_t vars() const { return probs_.size(-2); }
	int64_t classes() const { return probs_.size(-1); }

	CategoricalPmf detach() const { return CategoricalPmf(probs_.detach()); }
	CategoricalPmf to(torch::ScalarType dtype) const { return CategoricalPmf(probs_.to(dtype)); }

	// Reshapes leading batch dims; the trailing [V, C] dims stay put.
	CategoricalPmf reshape_batch(std::vector<int64_t> batch_dims) const
	{
		batch_dims.push_back(vars());
		batch_dims.push_back(classes());
		return CategoricalPmf(probs_.reshape(batch_dims));
	}

	// Throws InvariantViolation when a row sum is off by more than `tolerance`
	// or any entry is negative.
	void validate(double tolerance = kRowSumTolerance) const;

private:
	explicit CategoricalPmf(torch::Tensor probs) : probs_(std::move(probs)) {}

	torch::Tensor probs_;
};

// One one-hot row per categorical variable: trailing dims [V, C]. The value
// is exactly one-hot; under autograd it carries straight-through gradients.
struct LatentSample
{
	torch::Tensor onehots;

	torch::Tensor flat() const
	{
		auto shape = onehots.sizes().vec();
		int64_t classes = shape.back();
		shape.pop_back();
		shape.back() *= classes;
		return onehots.reshape(shape);
	}

	int64_t vars() const { return onehots.size(-2); }
	int64_t classes() const { return onehots.size(-1); }

	LatentSample detach() const { return {onehots.detach()}; }

	void validate() const;
};

// Draws one class per variable. Forward value is the one-hot sample; the
// backward pass behaves as probs (z = onehot + probs - sg(probs)), so the
// pathwise derivative w.r.t. probs is the identity. `deterministic` replaces
// sampling with a row-wise argmax and keeps the same gradient path.
LatentSample st_sample(const CategoricalPmf& pmf, RandomSource& rng, bool deterministic = false);

// sum_v sum_c z[v,c] * log pmf[v,c], the contrastive logit of the pair.
// Reduces the trailing [V, C] dims; leading batch dims broadcast.
torch::Tensor log_mass(const LatentSample& z, const CategoricalPmf& pmf);

// KL(q || p) summed over the independent variables; trailing dims reduced.
torch::Tensor kl_divergence(const CategoricalPmf& q, const CategoricalPmf& p);

// alpha * KL(sg(q) || p) + (1 - alpha) * KL(q || sg(p)), floored at free_nats.
torch::Tensor kl_balanced(const CategoricalPmf& posterior, const CategoricalPmf& prior, const KlBalanceConfig& cfg);

// sum_v H(row_v); 0 for deterministic rows, V*log(C) for uniform ones.
torch::Tensor entropy(const CategoricalPmf& pmf);

} // namespace dreamingv2
