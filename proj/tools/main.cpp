#include "dreamingv2/trainer.h"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>
#include <sstream>

namespace
{

using dreamingv2::TrainerConfig;

// Flags mirror TrainerConfig fields; a config file provides the base and
// explicit flags override it.
struct ConfigCli
{
	std::string config_file;
	std::vector<std::string> overrides; // key=value pairs from --set

	CLI::Option* add_to(CLI::App& app)
	{
		app.add_option("--config", config_file, "key = value config file");
		return app.add_option("--set", overrides, "explicit key=value overrides (repeatable)")->expected(-1);
	}

	TrainerConfig resolve(const std::map<std::string, std::string>& flag_values) const
	{
		TrainerConfig cfg;
		if (!config_file.empty())
		{
			cfg = dreamingv2::parse_config_file(config_file, cfg);
		}
		for (const auto& [key, value] : flag_values)
		{
			dreamingv2::apply_config_override(cfg, key, value);
		}
		for (const auto& pair : overrides)
		{
			auto eq = pair.find('=');
			if (eq == std::string::npos)
			{
				throw dreamingv2::ConfigurationError("--set expects key=value, got '" + pair + "'");
			}
			dreamingv2::apply_config_override(cfg, pair.substr(0, eq), pair.substr(eq + 1));
		}
		cfg.validate();
		return cfg;
	}
};

// Collects only the flags the user actually passed, so file values survive.
class FlagCapture
{
public:
	void add(CLI::App& app, const std::string& name, const std::string& key, const std::string& desc)
	{
		auto storage = std::make_shared<std::string>();
		auto opt = app.add_option(name, *storage, desc);
		captures_.push_back({key, storage, opt});
	}

	std::map<std::string, std::string> passed() const
	{
		std::map<std::string, std::string> out;
		for (const auto& c : captures_)
		{
			if (c.option->count() > 0)
			{
				out[c.key] = *c.storage;
			}
		}
		return out;
	}

private:
	struct Capture
	{
		std::string key;
		std::shared_ptr<std::string> storage;
		CLI::Option* option;
	};
	std::vector<Capture> captures_;
};

void add_common_flags(CLI::App& app, FlagCapture& flags)
{
	flags.add(app, "--env", "env", "environment name (point_reach | phase_lift)");
	flags.add(app, "--seed", "seed", "run seed");
	flags.add(app, "--total-env-steps", "total_env_steps", "environment step budget");
	flags.add(app, "--batch-size", "batch_size", "slices per training batch (B)");
	flags.add(app, "--slice-length", "slice_length", "replay slice length (L)");
	flags.add(app, "-K,--horizon-k", "horizon_k", "multi-step prediction horizon (K)");
	flags.add(app, "--mode", "mode", "objective mode: contrastive | elbo | hybrid");
	flags.add(app, "--aux-dynamics", "aux_dynamics", "auxiliary dynamics: rssm | linear");
	flags.add(app, "--eta", "momentum_eta", "momentum coefficient");
	flags.add(app, "--alpha", "kl_alpha", "KL balancing weight");
	flags.add(app, "--model-lr", "model_lr", "world-model learning rate");
	flags.add(app, "--actor-lr", "actor_lr", "actor learning rate");
	flags.add(app, "--value-lr", "value_lr", "value learning rate");
	flags.add(app, "--prefill-steps", "prefill_steps", "random-policy seeding steps");
	flags.add(app, "--collect-interval", "collect_interval", "env steps per gradient step");
	flags.add(app, "--eval-interval", "eval_interval", "env steps between eval passes");
	flags.add(app, "--eval-episodes", "eval_episodes", "episodes per eval pass");
	flags.add(app, "--checkpoint-interval", "checkpoint_interval", "env steps between checkpoints");
	flags.add(app, "--encoder-channels", "encoder_channels", "comma-separated conv channels");
	flags.add(app, "--embed-dim", "embed_dim", "encoder embedding width");
	flags.add(app, "--hidden-dim", "hidden_dim", "recurrent state width");
	flags.add(app, "--run-mode", "run_mode", "reference | performance");
	flags.add(app, "--output-dir", "output_dir", "run output directory");
}

std::vector<std::string> split_csv(const std::string& text)
{
	std::vector<std::string> out;
	std::stringstream ss(text);
	std::string item;
	while (std::getline(ss, item, ','))
	{
		out.push_back(item);
	}
	return out;
}

} // namespace

int main(int argc, char** argv)
{
	CLI::App app{"dreamingv2: contrastive discrete world models on pixel toy environments"};
	app.require_subcommand(1);
	spdlog::set_pattern("[%H:%M:%S] %v");

	// train
	auto* train_cmd = app.add_subcommand("train", "run the train/imagine/collect loop");
	ConfigCli train_cfg;
	FlagCapture train_flags;
	train_cfg.add_to(*train_cmd);
	add_common_flags(*train_cmd, train_flags);
	std::string resume_path;
	train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");

	// eval
	auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint deterministically");
	std::string eval_ckpt, eval_env, eval_out = "eval_results";
	int64_t eval_episodes = 10;
	uint64_t eval_seed = 0;
	eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
	eval_cmd->add_option("--env", eval_env, "environment override (defaults to the checkpoint's)");
	eval_cmd->add_option("--episodes", eval_episodes, "number of episodes");
	eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
	eval_cmd->add_option("--output-dir", eval_out, "where to write per-episode and latent CSVs");

	// ablate
	auto* ablate_cmd = app.add_subcommand("ablate", "grid runner over one config axis");
	ConfigCli ablate_cfg;
	FlagCapture ablate_flags;
	ablate_cfg.add_to(*ablate_cmd);
	add_common_flags(*ablate_cmd, ablate_flags);
	std::string grid_spec, seeds_spec = "0,1,2", ablate_out = "ablation";
	ablate_cmd->add_option("--grid", grid_spec, "axis=v1,v2,... (axis: K | aux_dynamics | mode)")->required();
	ablate_cmd->add_option("--seeds", seeds_spec, "comma-separated seeds");
	ablate_cmd->add_option("--ablate-output", ablate_out, "ablation output directory");

	// plot
	auto* plot_cmd = app.add_subcommand("plot", "render a metrics CSV as an SVG line chart");
	std::string plot_csv, plot_svg = "metrics.svg", plot_columns = "total_loss";
	plot_cmd->add_option("--csv", plot_csv, "metrics.csv path")->required();
	plot_cmd->add_option("--out", plot_svg, "output SVG path");
	plot_cmd->add_option("--columns", plot_columns, "comma-separated column names");

	// inspect-latents
	auto* inspect_cmd = app.add_subcommand("inspect-latents", "dump per-step latent argmax indices to CSV");
	std::string inspect_ckpt, inspect_env, inspect_out = "latent_dump";
	int64_t inspect_episodes = 1;
	uint64_t inspect_seed = 0;
	inspect_cmd->add_option("--checkpoint", inspect_ckpt, "checkpoint file")->required();
	inspect_cmd->add_option("--env", inspect_env, "environment override");
	inspect_cmd->add_option("--episodes", inspect_episodes, "number of episodes");
	inspect_cmd->add_option("--seed", inspect_seed, "seed");
	inspect_cmd->add_option("--output-dir", inspect_out, "output directory");

	CLI11_PARSE(app, argc, argv);

	try
	{
		if (train_cmd->parsed())
		{
			TrainerConfig cfg;
			try
			{
				cfg = train_cfg.resolve(train_flags.passed());
			}
			catch (const std::exception& e)
			{
				std::cerr << "config error: " << e.what() << '\n';
				return 1;
			}
			dreamingv2::Trainer trainer(cfg);
			std::optional<std::filesystem::path> resume;
			if (!resume_path.empty())
			{
				resume = resume_path;
			}
			auto final_record = trainer.train(resume);
			spdlog::info(
				"done: env_steps={} grad_steps={} last_train_return={:.3f}",
				final_record.env_steps,
				final_record.step,
				final_record.train_return);
			spdlog::info("outputs in {}", trainer.output_dir().string());
		}
		else if (eval_cmd->parsed())
		{
			auto result = dreamingv2::Trainer::evaluate(eval_ckpt, eval_env, eval_episodes, eval_seed, eval_out);
			spdlog::info(
				"eval: mean_return={:.3f} stddev={:.3f} over {} episodes", result.mean_return, result.stddev_return,
				result.per_episode.size());
		}
		else if (ablate_cmd->parsed())
		{
			TrainerConfig base;
			try
			{
				base = ablate_cfg.resolve(ablate_flags.passed());
			}
			catch (const std::exception& e)
			{
				std::cerr << "config error: " << e.what() << '\n';
				return 1;
			}
			auto eq = grid_spec.find('=');
			if (eq == std::string::npos)
			{
				std::cerr << "config error: --grid expects axis=v1,v2,...\n";
				return 1;
			}
			std::vector<uint64_t> seeds;
			for (const auto& s : split_csv(seeds_spec))
			{
				seeds.push_back(std::stoull(s));
			}
			auto cells = dreamingv2::Trainer::ablate(
				base, grid_spec.substr(0, eq), split_csv(grid_spec.substr(eq + 1)), seeds, ablate_out);
			for (const auto& cell : cells)
			{
				spdlog::info(
					"{}={} seed={} -> {}", cell.axis, cell.value, cell.seed,
					cell.failed ? "FAILED: " + cell.error : std::to_string(cell.eval_return));
			}
		}
		else if (plot_cmd->parsed())
		{
			dreamingv2::plot_metrics_csv(plot_csv, plot_svg, split_csv(plot_columns));
			spdlog::info("wrote {}", plot_svg);
		}
		else if (inspect_cmd->parsed())
		{
			auto result =
				dreamingv2::Trainer::evaluate(inspect_ckpt, inspect_env, inspect_episodes, inspect_seed, inspect_out);
			spdlog::info("dumped latents for {} episodes to {}", result.per_episode.size(), inspect_out);
		}
	}
	catch (const dreamingv2::ConfigurationError& e)
	{
		std::cerr << "config error: " << e.what() << '\n';
		return 1;
	}
	catch (const std::invalid_argument& e)
	{
		std::cerr << "config error: " << e.what() << '\n';
		return 1;
	}
	catch (const std::exception& e)
	{
		std::cerr << "runtime failure: " << e.what() << '\n';
		return 2;
	}
	return 0;
}
