#pragma once

#include "checkpoint.h"
#include "common.h"
#include "envs.h"
#include "metrics.h"
#include "objectives.h"
#include "policy.h"
#include "replay.h"
#include "world_model.h"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dreamingv2
{

// Every tunable of a run. Defaults are the desk-scale schedule; everything
// can be overridden by config file and CLI flags.
struct TrainerConfig
{
	std::string env = "point_reach";
	int64_t total_env_steps = 100000;
	uint64_t seed = 0;

	// batch shape
	int64_t batch_size = 16;  // B
	int64_t slice_length = 8; // L
	int64_t horizon_k = 3;    // K

	// objective
	std::string mode = "contrastive";  // contrastive | elbo | hybrid
	std::string aux_dynamics = "rssm"; // rssm | linear
	double momentum_eta = 0.05;
	bool momentum_covers_critic = true;
	double kl_alpha = 0.8;
	double free_nats = 0.0;
	double nce_weight = 1.0;
	double kl_weight = 1.0;
	double aux_weight = 1.0;
	int64_t aux_warmup_steps = 0;

	// optimization
	double model_lr = 3e-4;
	double actor_lr = 1e-4;
	double value_lr = 1e-4;
	double grad_clip = 100.0;

	// schedule
	int64_t prefill_steps = 2000;
	int64_t collect_interval = 4; // env steps per (model + policy) gradient step
	int64_t eval_interval = 10000;
	int64_t eval_episodes = 10;
	int64_t checkpoint_interval = 25000;
	int64_t metrics_interval = 25; // gradient steps per metrics row
	int64_t replay_capacity = 100000;

	// network sizes (desk scale; configurable)
	std::vector<int64_t> encoder_channels = {32, 64, 128, 256};
	int64_t embed_dim = 1024;
	int64_t hidden_dim = 256;
	int64_t head_hidden = 256;
	int64_t latent_vars = 32;
	int64_t latent_classes = 32;

	// policy
	int64_t imagination_horizon = 15;
	double gamma = 0.99;
	double lambda = 0.95;
	double entropy_coeff = 1e-4;
	int64_t target_update_every = 100;

	std::string run_mode = "reference"; // reference | performance
	std::string output_dir = "runs/default";
	bool persist_episodes = true;

	// Throws ConfigurationError with the offending field.
	void validate() const;

	ObjectiveMode objective_mode() const;
	AuxDynamics aux_dynamics_mode() const;
	WorldModelConfig world_model_config(int64_t action_dim) const;
	ObjectiveConfig objective_config() const;
	PolicyConfig policy_config() const;

	// key = value text, all fields materialized; parseable by parse_config.
	std::string echo() const;
};

// key = value parsing ('#' comments); unknown keys are configuration errors.
TrainerConfig parse_config_text(const std::string& text, TrainerConfig base = TrainerConfig());
TrainerConfig parse_config_file(const std::filesystem::path& path, TrainerConfig base = TrainerConfig());
void apply_config_override(TrainerConfig& cfg, const std::string& key, const std::string& value);

// Resolves cfg.output_dir against the DREAMINGV2_OUTPUT_ROOT env var when
// the configured path is relative.
std::filesystem::path resolve_output_dir(const TrainerConfig& cfg);

// All learnable pieces of a run plus their optimizer.
struct Agent
{
	WorldModel world_model{nullptr};
	Critic critic{nullptr};
	LinearDynamics aux_linear{nullptr};
	MomentumEncoderState momentum;
	std::unique_ptr<PolicyLearner> policy;
	std::unique_ptr<torch::optim::Adam> model_optimizer;
	int64_t action_dim = 0;

	static Agent build(const TrainerConfig& cfg, int64_t action_dim);

	// Ordered (name, tensor) pairs of everything the model optimizer owns.
	std::vector<std::pair<std::string, torch::Tensor>> named_model_parameters() const;
};

struct EvalResult
{
	double mean_return = 0.0;
	double stddev_return = 0.0;
	std::vector<double> per_episode;
};

struct AblationCell
{
	std::string axis;
	std::string value;
	uint64_t seed = 0;
	double eval_return = 0.0;
	bool failed = false;
	std::string error;
};

class Trainer
{
public:
	explicit Trainer(TrainerConfig cfg);

	// The three-step loop: prefill with random actions, then interleave
	// model + policy gradient steps with policy-driven collection; emits
	// metrics, checkpoints and the resolved config into the output dir.
	MetricsRecord train(const std::optional<std::filesystem::path>& resume_from = std::nullopt);

	const TrainerConfig& config() const { return cfg_; }
	const std::filesystem::path& output_dir() const { return out_dir_; }
	std::filesystem::path latest_checkpoint() const { return out_dir_ / "ckpt_latest.dv2"; }

	void save_checkpoint(const std::filesystem::path& path);

	// Deterministic-mode rollouts (argmax latents, mean actions) from a saved
	// checkpoint; writes per-episode returns and per-step latent argmax
	// indices as CSV next to the checkpoint results.
	static EvalResult evaluate(
		const std::filesystem::path& checkpoint,
		const std::string& env_name,
		int64_t episodes,
		uint64_t seed,
		const std::filesystem::path& results_dir);

	// Grid runner for one ablation axis (K | aux_dynamics | mode) x seeds.
	// Cell failures are recorded and the remaining cells continue.
	static std::vector<AblationCell> ablate(
		const TrainerConfig& base,
		const std::string& axis,
		const std::vector<std::string>& values,
		const std::vector<uint64_t>& seeds,
		const std::filesystem::path& out_dir);

private:
	void load_checkpoint(const std::filesystem::path& path);

	TrainerConfig cfg_;
	std::filesystem::path out_dir_;
	std::unique_ptr<ToyEnv> env_;
	Agent agent_;
	ReplayBuffer buffer_;

	RandomSource rng_init_;
	RandomSource rng_sample_;
	RandomSource rng_batch_;
	RandomSource rng_policy_;
	RandomSource rng_collect_;
	RandomSource rng_env_seeds_;

	int64_t env_steps_ = 0;
	int64_t grad_steps_ = 0;
	int64_t episode_count_ = 0;
};

// Reads a metrics CSV and writes a standalone SVG line chart of the given
// columns (one polyline per column, missing cells skipped).
void plot_metrics_csv(
	const std::filesystem::path& csv_path, const std::filesystem::path& svg_path, const std::vector<std::string>& columns);

} // namespace dreamingv2
