#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace dreamingv2
{

// One training log row. NaN fields render as empty CSV cells. The wall-clock
// field is written to a sidecar timing file so the metrics CSV itself stays
// byte-identical across seeded reference runs.
struct MetricsRecord
{
	int64_t step = 0; // gradient step
	int64_t env_steps = 0;
	std::vector<double> nce_k;
	std::vector<double> kl_k;
	double aux_loss = std::numeric_limits<double>::quiet_NaN();
	double reward_loss = std::numeric_limits<double>::quiet_NaN();
	double recon_loss = std::numeric_limits<double>::quiet_NaN();
	double total_loss = std::numeric_limits<double>::quiet_NaN();
	double actor_loss = std::numeric_limits<double>::quiet_NaN();
	double value_loss = std::numeric_limits<double>::quiet_NaN();
	double policy_entropy = std::numeric_limits<double>::quiet_NaN();
	double imagined_return = std::numeric_limits<double>::quiet_NaN();
	double train_return = std::numeric_limits<double>::quiet_NaN();
	double eval_return = std::numeric_limits<double>::quiet_NaN();
	double retrieval_accuracy = std::numeric_limits<double>::quiet_NaN();
	double wall_clock_s = std::numeric_limits<double>::quiet_NaN();
};

// Append-only CSV writer with one flushed line per record, so the file stays
// parseable after a crash at any point. The step column must be monotone.
class MetricsWriter
{
public:
	MetricsWriter(const std::filesystem::path& csv_path, const std::filesystem::path& timing_path, int64_t horizon_k);

	void append(const MetricsRecord& record);

	static std::string format_field(double value);

private:
	std::ofstream csv_;
	std::ofstream timing_;
	int64_t horizon_k_;
	int64_t last_step_ = -1;
};

} // namespace dreamingv2
