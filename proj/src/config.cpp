#include "dreamingv2/trainer.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dreamingv2
{

namespace
{

std::string trim(const std::string& s)
{
	auto begin = s.find_first_not_of(" \t\r\n");
	auto end = s.find_last_not_of(" \t\r\n");
	return begin == std::string::npos ? "" : s.substr(begin, end - begin + 1);
}

int64_t parse_int(const std::string& key, const std::string& value)
{
	try
	{
		size_t pos = 0;
		auto v = std::stoll(value, &pos);
		if (pos != value.size())
		{
			throw std::invalid_argument(value);
		}
		return v;
	}
	catch (const std::exception&)
	{
		throw ConfigurationError("config: bad integer for '" + key + "': '" + value + "'");
	}
}

double parse_real(const std::string& key, const std::string& value)
{
	try
	{
		size_t pos = 0;
		auto v = std::stod(value, &pos);
		if (pos != value.size())
		{
			throw std::invalid_argument(value);
		}
		return v;
	}
	catch (const std::exception&)
	{
		throw ConfigurationError("config: bad real for '" + key + "': '" + value + "'");
	}
}

bool parse_bool(const std::string& key, const std::string& value)
{
	if (value == "true" || value == "1")
	{
		return true;
	}
	if (value == "false" || value == "0")
	{
		return false;
	}
	throw ConfigurationError("config: bad bool for '" + key + "': '" + value + "'");
}

std::vector<int64_t> parse_int_list(const std::string& key, const std::string& value)
{
	std::vector<int64_t> out;
	std::stringstream ss(value);
	std::string item;
	while (std::getline(ss, item, ','))
	{
		out.push_back(parse_int(key, trim(item)));
	}
	if (out.empty())
	{
		throw ConfigurationError("config: empty list for '" + key + "'");
	}
	return out;
}

std::string join(const std::vector<int64_t>& values)
{
	std::ostringstream out;
	for (size_t i = 0; i < values.size(); ++i)
	{
		out << (i ? "," : "") << values[i];
	}
	return out.str();
}

void require(bool ok, const std::string& message)
{
	if (!ok)
	{
		throw ConfigurationError("config: " + message);
	}
}

} // namespace

void TrainerConfig::validate() const
{
	require(env == "point_reach" || env == "phase_lift", "unknown env '" + env + "'");
	require(total_env_steps >= 0, "total_env_steps must be >= 0");
	require(batch_size >= 1, "batch_size must be >= 1");
	require(slice_length >= 1, "slice_length must be >= 1");
	require(horizon_k >= 0, "horizon_k must be >= 0");
	require(horizon_k <= slice_length - 1, "horizon_k must satisfy K <= L-1");
	require(mode == "contrastive" || mode == "elbo" || mode == "hybrid", "mode must be contrastive|elbo|hybrid");
	require(aux_dynamics == "rssm" || aux_dynamics == "linear", "aux_dynamics must be rssm|linear");
	require(momentum_eta > 0.0 && momentum_eta <= 1.0, "momentum_eta must lie in (0,1]");
	require(kl_alpha >= 0.0 && kl_alpha <= 1.0, "kl_alpha must lie in [0,1]");
	require(free_nats >= 0.0, "free_nats must be >= 0");
	require(nce_weight >= 0.0 && kl_weight >= 0.0 && aux_weight >= 0.0, "loss weights must be >= 0");
	require(aux_warmup_steps >= 0, "aux_warmup_steps must be >= 0");
	require(model_lr > 0.0 && actor_lr > 0.0 && value_lr > 0.0, "learning rates must be > 0");
	require(grad_clip > 0.0, "grad_clip must be > 0");
	require(prefill_steps >= 0, "prefill_steps must be >= 0");
	require(collect_interval >= 1, "collect_interval must be >= 1");
	require(eval_interval >= 0, "eval_interval must be >= 0");
	require(eval_episodes >= 1, "eval_episodes must be >= 1");
	require(checkpoint_interval >= 1, "checkpoint_interval must be >= 1");
	require(metrics_interval >= 1, "metrics_interval must be >= 1");
	require(replay_capacity >= slice_length, "replay_capacity must hold at least one slice");
	require(!encoder_channels.empty() && encoder_channels.size() <= 5, "encoder_channels must have 1..5 entries");
	for (auto c : encoder_channels)
	{
		require(c >= 1, "encoder channels must be >= 1");
	}
	require(embed_dim >= 1 && hidden_dim >= 1 && head_hidden >= 1, "network dims must be >= 1");
	require(latent_vars >= 1 && latent_classes >= 2, "latent shape must be V >= 1, C >= 2");
	require(imagination_horizon >= 1, "imagination_horizon must be >= 1");
	require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0,1]");
	require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0,1]");
	require(entropy_coeff >= 0.0, "entropy_coeff must be >= 0");
	require(target_update_every >= 1, "target_update_every must be >= 1");
	require(run_mode == "reference" || run_mode == "performance", "run_mode must be reference|performance");
	require(!output_dir.empty(), "output_dir must not be empty");
}

ObjectiveMode TrainerConfig::objective_mode() const
{
	if (mode == "contrastive")
	{
		return ObjectiveMode::contrastive;
	}
	if (mode == "elbo")
	{
		return ObjectiveMode::elbo;
	}
	return ObjectiveMode::hybrid;
}

AuxDynamics TrainerConfig::aux_dynamics_mode() const
{
	return aux_dynamics == "linear" ? AuxDynamics::linear : AuxDynamics::rssm;
}

WorldModelConfig TrainerConfig::world_model_config(int64_t action_dim) const
{
	WorldModelConfig wm;
	wm.action_dim = action_dim;
	wm.latent_vars = latent_vars;
	wm.latent_classes = latent_classes;
	wm.encoder_channels = encoder_channels;
	wm.embed_dim = embed_dim;
	wm.hidden_dim = hidden_dim;
	wm.head_hidden = head_hidden;
	wm.with_decoder = objective_mode() != ObjectiveMode::contrastive;
	return wm;
}

ObjectiveConfig TrainerConfig::objective_config() const
{
	ObjectiveConfig obj;
	obj.horizon_k = horizon_k;
	obj.mode = objective_mode();
	obj.aux_dynamics = aux_dynamics_mode();
	obj.nce_weight = nce_weight;
	obj.kl_weight = kl_weight;
	obj.aux_weight = aux_weight;
	obj.kl_balance.alpha = kl_alpha;
	obj.kl_balance.free_nats = free_nats;
	obj.momentum_eta = momentum_eta;
	obj.momentum_covers_critic = momentum_covers_critic;
	obj.aux_warmup_steps = aux_warmup_steps;
	return obj;
}

PolicyConfig TrainerConfig::policy_config() const
{
	PolicyConfig pol;
	pol.horizon = imagination_horizon;
	pol.gamma = gamma;
	pol.lambda = lambda;
	pol.entropy_coeff = entropy_coeff;
	pol.actor_lr = actor_lr;
	pol.value_lr = value_lr;
	pol.grad_clip = grad_clip;
	pol.target_update_every = target_update_every;
	pol.hidden = head_hidden;
	return pol;
}

std::string TrainerConfig::echo() const
{
	std::ostringstream out;
	out << "env = " << env << '\n';
	out << "total_env_steps = " << total_env_steps << '\n';
	out << "seed = " << seed << '\n';
	out << "batch_size = " << batch_size << '\n';
	out << "slice_length = " << slice_length << '\n';
	out << "horizon_k = " << horizon_k << '\n';
	out << "mode = " << mode << '\n';
	out << "aux_dynamics = " << aux_dynamics << '\n';
	out << "momentum_eta = " << momentum_eta << '\n';
	out << "momentum_covers_critic = " << (momentum_covers_critic ? "true" : "false") << '\n';
	out << "kl_alpha = " << kl_alpha << '\n';
	out << "free_nats = " << free_nats << '\n';
	out << "nce_weight = " << nce_weight << '\n';
	out << "kl_weight = " << kl_weight << '\n';
	out << "aux_weight = " << aux_weight << '\n';
	out << "aux_warmup_steps = " << aux_warmup_steps << '\n';
	out << "model_lr = " << model_lr << '\n';
	out << "actor_lr = " << actor_lr << '\n';
	out << "value_lr = " << value_lr << '\n';
	out << "grad_clip = " << grad_clip << '\n';
	out << "prefill_steps = " << prefill_steps << '\n';
	out << "collect_interval = " << collect_interval << '\n';
	out << "eval_interval = " << eval_interval << '\n';
	out << "eval_episodes = " << eval_episodes << '\n';
	out << "checkpoint_interval = " << checkpoint_interval << '\n';
	out << "metrics_interval = " << metrics_interval << '\n';
	out << "replay_capacity = " << replay_capacity << '\n';
	out << "encoder_channels = " << join(encoder_channels) << '\n';
	out << "embed_dim = " << embed_dim << '\n';
	out << "hidden_dim = " << hidden_dim << '\n';
	out << "head_hidden = " << head_hidden << '\n';
	out << "latent_vars = " << latent_vars << '\n';
	out << "latent_classes = " << latent_classes << '\n';
	out << "imagination_horizon = " << imagination_horizon << '\n';
	out << "gamma = " << gamma << '\n';
	out << "lambda = " << lambda << '\n';
	out << "entropy_coeff = " << entropy_coeff << '\n';
	out << "target_update_every = " << target_update_every << '\n';
	out << "run_mode = " << run_mode << '\n';
	out << "output_dir = " << output_dir << '\n';
	out << "persist_episodes = " << (persist_episodes ? "true" : "false") << '\n';
	return out.str();
}

void apply_config_override(TrainerConfig& cfg, const std::string& key, const std::string& value)
{
	if (key == "env") cfg.env = value;
	else if (key == "total_env_steps") cfg.total_env_steps = parse_int(key, value);
	else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_int(key, value));
	else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
	else if (key == "slice_length") cfg.slice_length = parse_int(key, value);
	else if (key == "horizon_k" || key == "K") cfg.horizon_k = parse_int(key, value);
	else if (key == "mode") cfg.mode = value;
	else if (key == "aux_dynamics") cfg.aux_dynamics = value;
	else if (key == "momentum_eta" || key == "eta") cfg.momentum_eta = parse_real(key, value);
	else if (key == "momentum_covers_critic") cfg.momentum_covers_critic = parse_bool(key, value);
	else if (key == "kl_alpha" || key == "alpha") cfg.kl_alpha = parse_real(key, value);
	else if (key == "free_nats") cfg.free_nats = parse_real(key, value);
	else if (key == "nce_weight") cfg.nce_weight = parse_real(key, value);
	else if (key == "kl_weight") cfg.kl_weight = parse_real(key, value);
	else if (key == "aux_weight") cfg.aux_weight = parse_real(key, value);
	else if (key == "aux_warmup_steps") cfg.aux_warmup_steps = parse_int(key, value);
	else if (key == "model_lr") cfg.model_lr = parse_real(key, value);
	else if (key == "actor_lr") cfg.actor_lr = parse_real(key, value);
	else if (key == "value_lr") cfg.value_lr = parse_real(key, value);
	else if (key == "grad_clip") cfg.grad_clip = parse_real(key, value);
	else if (key == "prefill_steps") cfg.prefill_steps = parse_int(key, value);
	else if (key == "collect_interval") cfg.collect_interval = parse_int(key, value);
	else if (key == "eval_interval") cfg.eval_interval = parse_int(key, value);
	else if (key == "eval_episodes") cfg.eval_episodes = parse_int(key, value);
	else if (key == "checkpoint_interval") cfg.checkpoint_interval = parse_int(key, value);
	else if (key == "metrics_interval") cfg.metrics_interval = parse_int(key, value);
	else if (key == "replay_capacity") cfg.replay_capacity = parse_int(key, value);
	else if (key == "encoder_channels") cfg.encoder_channels = parse_int_list(key, value);
	else if (key == "embed_dim") cfg.embed_dim = parse_int(key, value);
	else if (key == "hidden_dim") cfg.hidden_dim = parse_int(key, value);
	else if (key == "head_hidden") cfg.head_hidden = parse_int(key, value);
	else if (key == "latent_vars") cfg.latent_vars = parse_int(key, value);
	else if (key == "latent_classes") cfg.latent_classes = parse_int(key, value);
	else if (key == "imagination_horizon") cfg.imagination_horizon = parse_int(key, value);
	else if (key == "gamma") cfg.gamma = parse_real(key, value);
	else if (key == "lambda") cfg.lambda = parse_real(key, value);
	else if (key == "entropy_coeff") cfg.entropy_coeff = parse_real(key, value);
	else if (key == "target_update_every") cfg.target_update_every = parse_int(key, value);
	else if (key == "run_mode") cfg.run_mode = value;
	else if (key == "output_dir") cfg.output_dir = value;
	else if (key == "persist_episodes") cfg.persist_episodes = parse_bool(key, value);
	else throw ConfigurationError("config: unknown key '" + key + "'");
}

TrainerConfig parse_config_text(const std::string& text, TrainerConfig base)
{
	std::stringstream ss(text);
	std::string line;
	int line_no = 0;
	while (std::getline(ss, line))
	{
		++line_no;
		auto stripped = trim(line);
		if (stripped.empty() || stripped[0] == '#')
		{
			continue;
		}
		auto eq = stripped.find('=');
		if (eq == std::string::npos)
		{
			throw ConfigurationError("config: line " + std::to_string(line_no) + " is not 'key = value'");
		}
		apply_config_override(base, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
	}
	return base;
}

TrainerConfig parse_config_file(const std::filesystem::path& path, TrainerConfig base)
{
	std::ifstream in(path);
	if (!in.good())
	{
		throw ConfigurationError("config: cannot open '" + path.string() + "'");
	}
	std::stringstream buffer;
	buffer << in.rdbuf();
	return parse_config_text(buffer.str(), std::move(base));
}

std::filesystem::path resolve_output_dir(const TrainerConfig& cfg)
{
	std::filesystem::path dir = cfg.output_dir;
	const char* root = std::getenv("DREAMINGV2_OUTPUT_ROOT");
	if (dir.is_relative() && root != nullptr && *root != '\0')
	{
		return std::filesystem::path(root) / dir;
	}
	return dir;
}

} // namespace dreamingv2
