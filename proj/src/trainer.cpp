#include "dreamingv2/trainer.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dreamingv2
{

namespace
{

enum RngStream : uint64_t
{
	kInitStream = 0,
	kSampleStream = 1,
	kBatchStream = 2,
	kPolicyStream = 3,
	kCollectStream = 4,
	kEnvSeedStream = 5,
	kEvalStream = 6,
};

uint64_t draw_seed(RandomSource& rng)
{
	auto t = torch::randint(std::numeric_limits<int64_t>::max(), {1}, rng, torch::TensorOptions(torch::kLong));
	return static_cast<uint64_t>(t.item<int64_t>());
}

void save_adam(
	TensorArchive& archive,
	const std::string& prefix,
	torch::optim::Adam& optimizer,
	const std::vector<std::pair<std::string, torch::Tensor>>& named_params)
{
	auto& state = optimizer.state();
	for (const auto& [name, param] : named_params)
	{
		auto it = state.find(param.unsafeGetTensorImpl());
		if (it == state.end())
		{
			continue;
		}
		auto& adam_state = static_cast<torch::optim::AdamParamState&>(*it->second);
		archive.put(prefix + name + ".exp_avg", adam_state.exp_avg());
		archive.put(prefix + name + ".exp_avg_sq", adam_state.exp_avg_sq());
		archive.put_scalar(prefix + name + ".step", adam_state.step());
	}
}

void load_adam(
	const TensorArchive& archive,
	const std::string& prefix,
	torch::optim::Adam& optimizer,
	const std::vector<std::pair<std::string, torch::Tensor>>& named_params)
{
	auto& state = optimizer.state();
	for (const auto& [name, param] : named_params)
	{
		if (!archive.contains(prefix + name + ".exp_avg"))
		{
			continue;
		}
		auto adam_state = std::make_unique<torch::optim::AdamParamState>();
		adam_state->exp_avg(archive.get(prefix + name + ".exp_avg").clone());
		adam_state->exp_avg_sq(archive.get(prefix + name + ".exp_avg_sq").clone());
		adam_state->step(archive.get_scalar(prefix + name + ".step"));
		state[param.unsafeGetTensorImpl()] = std::move(adam_state);
	}
}

std::vector<std::pair<std::string, torch::Tensor>> named_params(torch::nn::Module& module, const std::string& prefix)
{
	std::vector<std::pair<std::string, torch::Tensor>> out;
	for (const auto& pair : module.named_parameters())
	{
		out.emplace_back(prefix + pair.key(), pair.value());
	}
	return out;
}

void copy_params_into(const TensorArchive& archive, const std::vector<std::pair<std::string, torch::Tensor>>& named)
{
	torch::NoGradGuard no_grad;
	for (const auto& [name, param] : named)
	{
		param.copy_(archive.get(name));
	}
}

// Builds the policy collector's filtering update and action selection; kept
// free of gradient tracking.
struct Collector
{
	std::unique_ptr<ToyEnv> env;
	std::vector<torch::Tensor> observations;
	std::vector<torch::Tensor> actions;
	std::vector<float> rewards;
	torch::Tensor h;
	torch::Tensor z;
	uint64_t episode_seed = 0;
	bool active = false;
	double episode_return = 0.0;
};

} // namespace

Agent Agent::build(const TrainerConfig& cfg, int64_t action_dim)
{
	Agent agent;
	agent.action_dim = action_dim;
	auto wm_cfg = cfg.world_model_config(action_dim);
	agent.world_model = WorldModel(wm_cfg);
	agent.critic = Critic(cfg.embed_dim, cfg.latent_vars, cfg.latent_classes);
	agent.aux_linear = LinearDynamics(cfg.latent_vars, cfg.latent_classes, action_dim);
	agent.momentum = MomentumEncoderState::create(
		wm_cfg, agent.world_model->encoder(), agent.critic, cfg.momentum_eta, cfg.momentum_covers_critic);
	agent.policy = std::make_unique<PolicyLearner>(
		cfg.policy_config(), cfg.hidden_dim + cfg.latent_vars * cfg.latent_classes, action_dim);

	std::vector<torch::Tensor> model_params;
	for (auto& [name, p] : agent.named_model_parameters())
	{
		model_params.push_back(p);
	}
	agent.model_optimizer = std::make_unique<torch::optim::Adam>(model_params, cfg.model_lr);
	return agent;
}

std::vector<std::pair<std::string, torch::Tensor>> Agent::named_model_parameters() const
{
	std::vector<std::pair<std::string, torch::Tensor>> out;
	auto append = [&out](torch::nn::Module& m, const std::string& prefix)
	{
		for (const auto& pair : m.named_parameters())
		{
			out.emplace_back(prefix + pair.key(), pair.value());
		}
	};
	append(*world_model, "wm.");
	append(*critic, "critic.");
	append(*aux_linear, "aux_linear.");
	return out;
}

Trainer::Trainer(TrainerConfig cfg)
		: cfg_(std::move(cfg))
		, out_dir_(resolve_output_dir(cfg_))
		, rng_init_(make_random_source(derive_seed(cfg_.seed, kInitStream)))
		, rng_sample_(make_random_source(derive_seed(cfg_.seed, kSampleStream)))
		, rng_batch_(make_random_source(derive_seed(cfg_.seed, kBatchStream)))
		, rng_policy_(make_random_source(derive_seed(cfg_.seed, kPolicyStream)))
		, rng_collect_(make_random_source(derive_seed(cfg_.seed, kCollectStream)))
		, rng_env_seeds_(make_random_source(derive_seed(cfg_.seed, kEnvSeedStream)))
		, buffer_(cfg_.replay_capacity)
{
	cfg_.validate();
	env_ = make_env(cfg_.env);
	// Module construction consumes the global generator; pin it to the
	// init stream so weights depend only on the run seed.
	torch::manual_seed(derive_seed(cfg_.seed, kInitStream));
	agent_ = Agent::build(cfg_, env_->action_dim());
}

void Trainer::save_checkpoint(const std::filesystem::path& path)
{
	TensorArchive archive;
	archive.put_string("meta/config", cfg_.echo());
	archive.put_scalar("state/env_steps", env_steps_);
	archive.put_scalar("state/grad_steps", grad_steps_);
	archive.put_scalar("state/episode_count", episode_count_);
	archive.put_scalar("state/policy_updates", agent_.policy->updates_done());

	auto model_named = agent_.named_model_parameters();
	for (const auto& [name, p] : model_named)
	{
		archive.put("model/" + name, p);
	}
	for (const auto& [name, p] : named_params(*agent_.policy->actor(), "actor."))
	{
		archive.put("policy/" + name, p);
	}
	for (const auto& [name, p] : named_params(*agent_.policy->value(), "value."))
	{
		archive.put("policy/" + name, p);
	}
	for (const auto& [name, p] : named_params(*agent_.policy->value_target(), "value_target."))
	{
		archive.put("policy/" + name, p);
	}
	for (const auto& [name, p] : named_params(*agent_.momentum.encoder, "encoder."))
	{
		archive.put("momentum/" + name, p);
	}
	if (agent_.momentum.critic)
	{
		for (const auto& [name, p] : named_params(*agent_.momentum.critic, "critic."))
		{
			archive.put("momentum/" + name, p);
		}
	}

	{
		// The optimizer prefixes reuse the parameter names above.
		std::vector<std::pair<std::string, torch::Tensor>> prefixed;
		for (const auto& [name, p] : model_named)
		{
			prefixed.emplace_back(name, p);
		}
		save_adam(archive, "opt_model/", *agent_.model_optimizer, prefixed);
		save_adam(archive, "opt_actor/", agent_.policy->actor_optimizer(), named_params(*agent_.policy->actor(), "actor."));
		save_adam(archive, "opt_value/", agent_.policy->value_optimizer(), named_params(*agent_.policy->value(), "value."));
	}

	archive.put("rng/sample", rng_sample_.get_state());
	archive.put("rng/batch", rng_batch_.get_state());
	archive.put("rng/policy", rng_policy_.get_state());
	archive.put("rng/collect", rng_collect_.get_state());
	archive.put("rng/env_seeds", rng_env_seeds_.get_state());

	archive.save(path);
}

void Trainer::load_checkpoint(const std::filesystem::path& path)
{
	auto archive = TensorArchive::load(path);
	auto saved_config = archive.get_string("meta/config");
	if (saved_config != cfg_.echo())
	{
		throw ConfigurationError(
			"resume: checkpoint config does not match the current run config; diff the saved config_resolved.txt");
	}

	env_steps_ = archive.get_scalar("state/env_steps");
	grad_steps_ = archive.get_scalar("state/grad_steps");
	episode_count_ = archive.get_scalar("state/episode_count");
	agent_.policy->restore_updates_done(archive.get_scalar("state/policy_updates"));

	std::vector<std::pair<std::string, torch::Tensor>> all;
	for (const auto& [name, p] : agent_.named_model_parameters())
	{
		all.emplace_back("model/" + name, p);
	}
	for (const auto& [name, p] : named_params(*agent_.policy->actor(), "actor."))
	{
		all.emplace_back("policy/" + name, p);
	}
	for (const auto& [name, p] : named_params(*agent_.policy->value(), "value."))
	{
		all.emplace_back("policy/" + name, p);
	}
	for (const auto& [name, p] : named_params(*agent_.policy->value_target(), "value_target."))
	{
		all.emplace_back("policy/" + name, p);
	}
	for (const auto& [name, p] : named_params(*agent_.momentum.encoder, "encoder."))
	{
		all.emplace_back("momentum/" + name, p);
	}
	if (agent_.momentum.critic)
	{
		for (const auto& [name, p] : named_params(*agent_.momentum.critic, "critic."))
		{
			all.emplace_back("momentum/" + name, p);
		}
	}
	copy_params_into(archive, all);

	load_adam(archive, "opt_model/", *agent_.model_optimizer, agent_.named_model_parameters());
	load_adam(archive, "opt_actor/", agent_.policy->actor_optimizer(), named_params(*agent_.policy->actor(), "actor."));
	load_adam(archive, "opt_value/", agent_.policy->value_optimizer(), named_params(*agent_.policy->value(), "value."));

	rng_sample_.set_state(archive.get("rng/sample"));
	rng_batch_.set_state(archive.get("rng/batch"));
	rng_policy_.set_state(archive.get("rng/policy"));
	rng_collect_.set_state(archive.get("rng/collect"));
	rng_env_seeds_.set_state(archive.get("rng/env_seeds"));
}

MetricsRecord Trainer::train(const std::optional<std::filesystem::path>& resume_from)
{
	if (cfg_.run_mode == "reference")
	{
		at::set_num_threads(1);
	}
	std::filesystem::create_directories(out_dir_);
	auto episodes_dir = out_dir_ / "episodes";
	if (cfg_.persist_episodes)
	{
		std::filesystem::create_directories(episodes_dir);
	}
	{
		std::ofstream echo(out_dir_ / "config_resolved.txt");
		echo << cfg_.echo();
	}

	if (resume_from)
	{
		load_checkpoint(*resume_from);
		// Rebuild the buffer from persisted episodes; eviction replays the
		// same drop-oldest order, so its contents match the original run.
		std::vector<std::filesystem::path> files;
		if (std::filesystem::exists(episodes_dir))
		{
			for (const auto& entry : std::filesystem::directory_iterator(episodes_dir))
			{
				files.push_back(entry.path());
			}
		}
		std::vector<ReplayEpisode> episodes;
		episodes.reserve(files.size());
		for (const auto& f : files)
		{
			episodes.push_back(load_episode(f));
		}
		std::sort(
			episodes.begin(), episodes.end(), [](const auto& a, const auto& b) { return a.episode_id < b.episode_id; });
		for (auto& ep : episodes)
		{
			buffer_.push_episode(std::move(ep));
		}
		spdlog::info("resumed at env_steps={} grad_steps={} episodes={}", env_steps_, grad_steps_, episode_count_);
	}

	MetricsWriter metrics(out_dir_ / "metrics.csv", out_dir_ / "timing.csv", cfg_.horizon_k);
	auto started = std::chrono::steady_clock::now();
	auto obj_cfg = cfg_.objective_config();

	Collector collector;
	collector.env = make_env(cfg_.env);
	double last_train_return = std::numeric_limits<double>::quiet_NaN();
	double last_eval_return = std::numeric_limits<double>::quiet_NaN();
	int64_t last_checkpoint_steps = env_steps_;
	bool checkpoint_due = false;

	WorldModelLossBreakdown model_losses;
	PolicyLossBreakdown policy_losses;
	bool have_losses = false;

	auto begin_episode = [&]()
	{
		collector.episode_seed = draw_seed(rng_env_seeds_);
		auto first = collector.env->reset(collector.episode_seed);
		collector.observations = {first.observation};
		collector.actions = {torch::zeros({collector.env->action_dim()})};
		collector.rewards = {0.0f};
		collector.episode_return = 0.0;
		collector.active = true;
		torch::NoGradGuard no_grad;
		auto state = agent_.world_model->initial_state(1, rng_collect_);
		auto h = agent_.world_model->recurrent_step(state.h, state.z, collector.actions.back().unsqueeze(0));
		auto post = agent_.world_model->posterior(h, first.observation.unsqueeze(0));
		collector.h = h;
		collector.z = st_sample(post, rng_collect_).onehots;
	};

	auto finish_episode = [&]()
	{
		ReplayEpisode episode;
		episode.observations = ReplayEpisode::quantize(torch::stack(collector.observations, 0));
		episode.actions = torch::stack(collector.actions, 0);
		episode.rewards = torch::tensor(collector.rewards, torch::kFloat32);
		episode.episode_id = static_cast<uint64_t>(episode_count_);
		episode.seed = collector.episode_seed;
		episode.env_name = cfg_.env;
		if (cfg_.persist_episodes)
		{
			save_episode(episode, episodes_dir / ("ep_" + std::to_string(episode_count_) + ".dv2ep"));
		}
		buffer_.push_episode(std::move(episode));
		last_train_return = collector.episode_return;
		++episode_count_;
		collector.active = false;
	};

	auto env_step_once = [&]()
	{
		if (!collector.active)
		{
			begin_episode();
		}
		torch::Tensor action;
		{
			torch::NoGradGuard no_grad;
			if (env_steps_ < cfg_.prefill_steps)
			{
				action = torch::rand({collector.env->action_dim()}, rng_collect_) * 2.0 - 1.0;
			}
			else
			{
				auto features = torch::cat({collector.h, collector.z.reshape({1, -1})}, -1);
				auto dist = agent_.policy->actor()->forward(features);
				action = dist.rsample(rng_collect_).action.squeeze(0);
			}
		}
		auto result = collector.env->step(action);
		collector.observations.push_back(result.observation);
		collector.actions.push_back(action);
		collector.rewards.push_back(static_cast<float>(result.reward));
		collector.episode_return += result.reward;
		++env_steps_;
		{
			torch::NoGradGuard no_grad;
			auto h = agent_.world_model->recurrent_step(
				collector.h, LatentSample{collector.z}, action.unsqueeze(0));
			auto post = agent_.world_model->posterior(h, result.observation.unsqueeze(0));
			collector.h = h;
			collector.z = st_sample(post, rng_collect_).onehots;
		}
		if (result.done)
		{
			finish_episode();
		}
	};

	auto eval_pass = [&]()
	{
		torch::NoGradGuard no_grad;
		std::vector<double> returns;
		for (int64_t i = 0; i < cfg_.eval_episodes; ++i)
		{
			auto eval_env = make_env(cfg_.env);
			auto eval_rng = make_random_source(derive_seed(cfg_.seed, kEvalStream) + static_cast<uint64_t>(i));
			auto step = eval_env->reset(derive_seed(cfg_.seed, kEvalStream) ^ (0x51ed2701ULL + i));
			auto state = agent_.world_model->initial_state(1, eval_rng, true);
			auto action = torch::zeros({eval_env->action_dim()});
			double ep_return = 0.0;
			while (true)
			{
				auto h = agent_.world_model->recurrent_step(state.h, state.z, action.unsqueeze(0));
				auto post = agent_.world_model->posterior(h, step.observation.unsqueeze(0));
				state = {h, st_sample(post, eval_rng, true)};
				action = agent_.policy->actor()->forward(state.feature()).mode().squeeze(0);
				step = eval_env->step(action);
				ep_return += step.reward;
				if (step.done)
				{
					break;
				}
			}
			returns.push_back(ep_return);
		}
		last_eval_return = std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
	};

	auto train_step = [&]()
	{
		auto batch = buffer_.sample_batch(cfg_.batch_size, cfg_.slice_length, rng_batch_);
		if (!batch)
		{
			return;
		}
		model_losses = total_world_model_loss(
			*batch,
			agent_.world_model,
			agent_.critic,
			agent_.aux_linear,
			agent_.momentum,
			obj_cfg,
			rng_sample_,
			false,
			grad_steps_);
		agent_.model_optimizer->zero_grad();
		model_losses.total.backward();
		std::vector<torch::Tensor> model_params;
		for (auto& [name, p] : agent_.named_model_parameters())
		{
			model_params.push_back(p);
		}
		torch::nn::utils::clip_grad_norm_(model_params, cfg_.grad_clip);
		agent_.model_optimizer->step();
		if (obj_cfg.mode != ObjectiveMode::elbo)
		{
			momentum_update(agent_.world_model->encoder(), agent_.critic, agent_.momentum);
		}

		auto traj = agent_.policy->imagine(
			agent_.world_model, {model_losses.chain_h, LatentSample{model_losses.chain_z}}, rng_policy_, false);
		policy_losses = agent_.policy->update(traj);
		have_losses = true;
		++grad_steps_;

		if (grad_steps_ % cfg_.metrics_interval == 0)
		{
			MetricsRecord record;
			record.step = grad_steps_;
			record.env_steps = env_steps_;
			record.nce_k = model_losses.nce_k;
			record.kl_k = model_losses.kl_k;
			record.aux_loss = model_losses.aux;
			record.reward_loss = model_losses.reward;
			if (obj_cfg.mode != ObjectiveMode::contrastive)
			{
				record.recon_loss = model_losses.reconstruction;
			}
			record.total_loss = model_losses.total.item<double>();
			record.actor_loss = policy_losses.actor_loss;
			record.value_loss = policy_losses.value_loss;
			record.policy_entropy = policy_losses.entropy;
			record.imagined_return = policy_losses.mean_return;
			record.train_return = last_train_return;
			record.eval_return = last_eval_return;
			record.retrieval_accuracy = model_losses.retrieval_accuracy >= 0 ? model_losses.retrieval_accuracy
																			 : std::numeric_limits<double>::quiet_NaN();
			record.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
			metrics.append(record);
			last_eval_return = std::numeric_limits<double>::quiet_NaN();
		}
	};

	try
	{
		while (env_steps_ < cfg_.total_env_steps)
		{
			env_step_once();
			if (env_steps_ > cfg_.prefill_steps && env_steps_ % cfg_.collect_interval == 0)
			{
				train_step();
			}
			if (cfg_.eval_interval > 0 && env_steps_ > cfg_.prefill_steps && env_steps_ % cfg_.eval_interval == 0)
			{
				eval_pass();
			}
			if (env_steps_ - last_checkpoint_steps >= cfg_.checkpoint_interval)
			{
				checkpoint_due = true;
			}
			// Checkpoints land on episode boundaries so a resumed run restarts
			// collection exactly where the original would have.
			if (checkpoint_due && !collector.active)
			{
				save_checkpoint(out_dir_ / ("ckpt_" + std::to_string(env_steps_) + ".dv2"));
				save_checkpoint(latest_checkpoint());
				last_checkpoint_steps = env_steps_;
				checkpoint_due = false;
			}
		}
		save_checkpoint(latest_checkpoint());
	}
	catch (const std::exception& e)
	{
		// Abort path: leave a partial-state checkpoint behind for diagnosis.
		spdlog::error("training aborted: {}", e.what());
		try
		{
			save_checkpoint(out_dir_ / "ckpt_abort.dv2");
		}
		catch (...)
		{
		}
		throw;
	}

	MetricsRecord final_record;
	final_record.step = grad_steps_;
	final_record.env_steps = env_steps_;
	if (have_losses)
	{
		final_record.nce_k = model_losses.nce_k;
		final_record.kl_k = model_losses.kl_k;
		final_record.aux_loss = model_losses.aux;
		final_record.reward_loss = model_losses.reward;
		final_record.total_loss = model_losses.total.item<double>();
		final_record.actor_loss = policy_losses.actor_loss;
		final_record.value_loss = policy_losses.value_loss;
		final_record.retrieval_accuracy = model_losses.retrieval_accuracy;
	}
	final_record.train_return = last_train_return;
	final_record.eval_return = last_eval_return;
	final_record.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
	return final_record;
}

EvalResult Trainer::evaluate(
	const std::filesystem::path& checkpoint,
	const std::string& env_name,
	int64_t episodes,
	uint64_t seed,
	const std::filesystem::path& results_dir)
{
	auto archive = TensorArchive::load(checkpoint);
	auto cfg = parse_config_text(archive.get_string("meta/config"));
	std::string env_to_run = env_name.empty() ? cfg.env : env_name;
	auto env_probe = make_env(env_to_run);
	auto cfg_env = make_env(cfg.env);
	if (env_probe->action_dim() != cfg_env->action_dim())
	{
		throw ConfigurationError(
			"evaluate: checkpoint was trained on '" + cfg.env + "' (action dim " +
			std::to_string(cfg_env->action_dim()) + "), incompatible with '" + env_to_run + "'");
	}

	torch::manual_seed(derive_seed(cfg.seed, kInitStream));
	auto agent = Agent::build(cfg, cfg_env->action_dim());
	std::vector<std::pair<std::string, torch::Tensor>> all;
	for (const auto& [name, p] : agent.named_model_parameters())
	{
		all.emplace_back("model/" + name, p);
	}
	for (const auto& [name, p] : named_params(*agent.policy->actor(), "actor."))
	{
		all.emplace_back("policy/" + name, p);
	}
	copy_params_into(archive, all);

	std::filesystem::create_directories(results_dir);
	std::ofstream per_episode(results_dir / "per_episode.csv");
	per_episode << "episode,seed,return,final_phase\n";
	std::ofstream latents(results_dir / "latents.csv");
	latents << "episode,step,reward,phase";
	for (int64_t v = 0; v < cfg.latent_vars; ++v)
	{
		latents << ",z" << v;
	}
	latents << '\n';

	torch::NoGradGuard no_grad;
	EvalResult result;
	for (int64_t i = 0; i < episodes; ++i)
	{
		auto env = make_env(env_to_run);
		auto rng = make_random_source(derive_seed(seed, static_cast<uint64_t>(i)));
		uint64_t env_seed = derive_seed(seed, static_cast<uint64_t>(i) + 10000);
		auto step = env->reset(env_seed);
		auto state = agent.world_model->initial_state(1, rng, true);
		auto action = torch::zeros({env->action_dim()});
		double ep_return = 0.0;
		int64_t t = 0;
		std::string phase = step.phase;
		while (true)
		{
			auto h = agent.world_model->recurrent_step(state.h, state.z, action.unsqueeze(0));
			auto post = agent.world_model->posterior(h, step.observation.unsqueeze(0));
			state = {h, st_sample(post, rng, true)};

			auto indices = state.z.onehots.squeeze(0).argmax(-1);
			latents << i << ',' << t << ',' << MetricsWriter::format_field(step.reward) << ',' << step.phase;
			for (int64_t v = 0; v < indices.size(0); ++v)
			{
				latents << ',' << indices[v].item<int64_t>();
			}
			latents << '\n';

			action = agent.policy->actor()->forward(state.feature()).mode().squeeze(0);
			step = env->step(action);
			ep_return += step.reward;
			phase = step.phase;
			++t;
			if (step.done)
			{
				break;
			}
		}
		per_episode << i << ',' << env_seed << ',' << MetricsWriter::format_field(ep_return) << ',' << phase << '\n';
		result.per_episode.push_back(ep_return);
	}

	double n = static_cast<double>(result.per_episode.size());
	result.mean_return = std::accumulate(result.per_episode.begin(), result.per_episode.end(), 0.0) / n;
	double sq = 0.0;
	for (double r : result.per_episode)
	{
		sq += (r - result.mean_return) * (r - result.mean_return);
	}
	result.stddev_return = std::sqrt(sq / std::max(1.0, n - 1.0));
	return result;
}

std::vector<AblationCell> Trainer::ablate(
	const TrainerConfig& base,
	const std::string& axis,
	const std::vector<std::string>& values,
	const std::vector<uint64_t>& seeds,
	const std::filesystem::path& out_dir)
{
	check(!values.empty() && !seeds.empty(), "ablate: grid and seed list must be nonempty");
	std::string key = axis == "K" ? "horizon_k" : axis;
	if (key != "horizon_k" && key != "aux_dynamics" && key != "mode")
	{
		throw ConfigurationError("ablate: axis must be one of K|aux_dynamics|mode");
	}

	std::filesystem::create_directories(out_dir);
	std::vector<AblationCell> cells;
	for (const auto& value : values)
	{
		for (auto seed : seeds)
		{
			AblationCell cell{axis, value, seed};
			auto cfg = base;
			try
			{
				apply_config_override(cfg, key, value);
				cfg.seed = seed;
				cfg.output_dir =
					(out_dir / ("cell_" + key + "_" + value) / ("seed_" + std::to_string(seed))).string();
				Trainer trainer(cfg);
				trainer.train();
				auto eval = evaluate(
					trainer.latest_checkpoint(),
					cfg.env,
					cfg.eval_episodes,
					derive_seed(seed, 777),
					trainer.output_dir() / "eval");
				cell.eval_return = eval.mean_return;
			}
			catch (const std::exception& e)
			{
				cell.failed = true;
				cell.error = e.what();
				spdlog::error("ablation cell {}={} seed={} failed: {}", axis, value, seed, e.what());
			}
			cells.push_back(cell);
		}
	}

	std::ofstream csv(out_dir / "ablation.csv");
	csv << "axis,value,seed,eval_return,status\n";
	for (const auto& cell : cells)
	{
		csv << cell.axis << ',' << cell.value << ',' << cell.seed << ','
			<< MetricsWriter::format_field(cell.eval_return) << ',' << (cell.failed ? "failed" : "ok") << '\n';
	}

	std::ofstream summary(out_dir / "summary.txt");
	for (const auto& value : values)
	{
		std::vector<double> returns;
		for (const auto& cell : cells)
		{
			if (cell.value == value && !cell.failed)
			{
				returns.push_back(cell.eval_return);
			}
		}
		if (returns.empty())
		{
			summary << axis << "=" << value << ": all cells failed\n";
			continue;
		}
		double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
		double sq = 0.0;
		for (double r : returns)
		{
			sq += (r - mean) * (r - mean);
		}
		double sd = std::sqrt(sq / std::max<size_t>(1, returns.size() - 1));
		summary << axis << "=" << value << ": mean_return=" << mean << " stddev=" << sd << " n=" << returns.size()
				<< '\n';
	}
	return cells;
}

void plot_metrics_csv(
	const std::filesystem::path& csv_path, const std::filesystem::path& svg_path, const std::vector<std::string>& columns)
{
	std::ifstream in(csv_path);
	check(in.good(), "plot: cannot open " + csv_path.string());
	std::string header;
	std::getline(in, header);
	std::vector<std::string> names;
	{
		std::stringstream ss(header);
		std::string cell;
		while (std::getline(ss, cell, ','))
		{
			names.push_back(cell);
		}
	}
	std::vector<int> wanted;
	for (const auto& col : columns)
	{
		auto it = std::find(names.begin(), names.end(), col);
		check(it != names.end(), "plot: column '" + col + "' not in " + csv_path.string());
		wanted.push_back(static_cast<int>(it - names.begin()));
	}

	std::vector<std::vector<std::pair<double, double>>> series(wanted.size());
	std::string line;
	while (std::getline(in, line))
	{
		std::stringstream ss(line);
		std::string cell;
		std::vector<std::string> cells;
		while (std::getline(ss, cell, ','))
		{
			cells.push_back(cell);
		}
		if (cells.empty())
		{
			continue;
		}
		double step = std::atof(cells[0].c_str());
		for (size_t s = 0; s < wanted.size(); ++s)
		{
			if (wanted[s] < static_cast<int>(cells.size()) && !cells[wanted[s]].empty())
			{
				series[s].emplace_back(step, std::atof(cells[wanted[s]].c_str()));
			}
		}
	}

	double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
	bool first = true;
	for (const auto& s : series)
	{
		for (auto [x, y] : s)
		{
			if (first)
			{
				xmin = xmax = x;
				ymin = ymax = y;
				first = false;
			}
			xmin = std::min(xmin, x);
			xmax = std::max(xmax, x);
			ymin = std::min(ymin, y);
			ymax = std::max(ymax, y);
		}
	}
	if (xmax == xmin)
	{
		xmax = xmin + 1;
	}
	if (ymax == ymin)
	{
		ymax = ymin + 1;
	}

	const double width = 860, height = 420, pad = 50;
	const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
	std::ofstream svg(svg_path);
	check(svg.good(), "plot: cannot open " + svg_path.string());
	svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height << "'>\n";
	svg << "<rect width='100%' height='100%' fill='white'/>\n";
	svg << "<line x1='" << pad << "' y1='" << height - pad << "' x2='" << width - pad << "' y2='" << height - pad
		<< "' stroke='black'/>\n";
	svg << "<line x1='" << pad << "' y1='" << pad << "' x2='" << pad << "' y2='" << height - pad
		<< "' stroke='black'/>\n";
	svg << "<text x='" << width / 2 << "' y='" << height - 12 << "' font-size='12'>step</text>\n";
	svg << "<text x='" << pad << "' y='" << pad - 10 << "' font-size='12'>" << ymax << "</text>\n";
	svg << "<text x='" << pad << "' y='" << height - pad + 14 << "' font-size='12'>" << ymin << "</text>\n";
	for (size_t s = 0; s < series.size(); ++s)
	{
		if (series[s].empty())
		{
			continue;
		}
		svg << "<polyline fill='none' stroke='" << colors[s % 6] << "' stroke-width='1.5' points='";
		for (auto [x, y] : series[s])
		{
			double px = pad + (x - xmin) / (xmax - xmin) * (width - 2 * pad);
			double py = height - pad - (y - ymin) / (ymax - ymin) * (height - 2 * pad);
			svg << px << ',' << py << ' ';
		}
		svg << "'/>\n";
		svg << "<text x='" << width - pad - 150 << "' y='" << pad + 16 * s << "' font-size='12' fill='"
			<< colors[s % 6] << "'>" << columns[s] << "</text>\n";
	}
	svg << "</svg>\n";
}

} // namespace dreamingv2
