#include "dreamingv2/metrics.h"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace dreamingv2
{

MetricsWriter::MetricsWriter(
	const std::filesystem::path& csv_path, const std::filesystem::path& timing_path, int64_t horizon_k)
		: csv_(csv_path, std::ios::app), timing_(timing_path, std::ios::app), horizon_k_(horizon_k)
{
	if (!csv_.good() || !timing_.good())
	{
		throw std::runtime_error("MetricsWriter: cannot open " + csv_path.string());
	}
	if (csv_.tellp() == 0)
	{
		std::ostringstream header;
		header << "step,env_steps";
		for (int64_t k = 0; k <= horizon_k_; ++k)
		{
			header << ",nce_k" << k;
		}
		for (int64_t k = 0; k <= horizon_k_; ++k)
		{
			header << ",kl_k" << k;
		}
		header << ",aux_loss,reward_loss,recon_loss,total_loss,actor_loss,value_loss,policy_entropy"
			   << ",imagined_return,train_return,eval_return,retrieval_accuracy";
		csv_ << header.str() << '\n' << std::flush;
	}
	if (timing_.tellp() == 0)
	{
		timing_ << "step,wall_clock_s\n" << std::flush;
	}
}

std::string MetricsWriter::format_field(double value)
{
	if (std::isnan(value))
	{
		return "";
	}
	char buffer[40];
	std::snprintf(buffer, sizeof(buffer), "%.8g", value);
	return buffer;
}

void MetricsWriter::append(const MetricsRecord& record)
{
	if (record.step < last_step_)
	{
		throw std::runtime_error("MetricsWriter: step field must be monotone");
	}
	last_step_ = record.step;

	std::ostringstream line;
	line << record.step << ',' << record.env_steps;
	for (int64_t k = 0; k <= horizon_k_; ++k)
	{
		line << ',' << (k < static_cast<int64_t>(record.nce_k.size()) ? format_field(record.nce_k[k]) : "");
	}
	for (int64_t k = 0; k <= horizon_k_; ++k)
	{
		line << ',' << (k < static_cast<int64_t>(record.kl_k.size()) ? format_field(record.kl_k[k]) : "");
	}
	line << ',' << format_field(record.aux_loss) << ',' << format_field(record.reward_loss) << ','
		 << format_field(record.recon_loss) << ',' << format_field(record.total_loss) << ','
		 << format_field(record.actor_loss) << ',' << format_field(record.value_loss) << ','
		 << format_field(record.policy_entropy) << ',' << format_field(record.imagined_return) << ','
		 << format_field(record.train_return) << ',' << format_field(record.eval_return) << ','
		 << format_field(record.retrieval_accuracy);
	csv_ << line.str() << '\n' << std::flush;

	timing_ << record.step << ',' << format_field(record.wall_clock_s) << '\n' << std::flush;
}

} // namespace dreamingv2
