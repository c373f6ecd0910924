#pragma once

#include "common.h"

#include <filesystem>
#include <map>
#include <string>

namespace dreamingv2
{

inline constexpr char kCheckpointHeader[] = "dreamingv2-ckpt-v1\n";

// Named-tensor archive with an explicit shape/dtype manifest. Entries are
// written sorted by name, so save -> load -> save is byte-identical.
// File layout (little-endian):
//   "dreamingv2-ckpt-v1\n"
//   u64 entry count
//   per entry: u32 name_len, name, u8 dtype, u32 ndim, i64 dims[ndim],
//              u64 payload bytes, raw data
class TensorArchive
{
public:
	void put(const std::string& name, const torch::Tensor& tensor);
	torch::Tensor get(const std::string& name) const;
	bool contains(const std::string& name) const { return entries_.count(name) > 0; }
	const std::map<std::string, torch::Tensor>& entries() const { return entries_; }

	void put_string(const std::string& name, const std::string& text);
	std::string get_string(const std::string& name) const;
	void put_scalar(const std::string& name, int64_t value);
	int64_t get_scalar(const std::string& name) const;

	void save(const std::filesystem::path& path) const;
	static TensorArchive load(const std::filesystem::path& path);

private:
	std::map<std::string, torch::Tensor> entries_;
};

} // namespace dreamingv2
