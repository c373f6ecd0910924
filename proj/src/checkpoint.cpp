#include "dreamingv2/checkpoint.h"

#include <cstring>
#include <fstream>

namespace dreamingv2
{

namespace
{

uint8_t dtype_code(torch::ScalarType type)
{
	switch (type)
	{
		case torch::kFloat32: return 0;
		case torch::kFloat64: return 1;
		case torch::kInt64: return 2;
		case torch::kUInt8: return 3;
		default: throw std::invalid_argument("TensorArchive: unsupported dtype");
	}
}

torch::ScalarType dtype_from_code(uint8_t code)
{
	switch (code)
	{
		case 0: return torch::kFloat32;
		case 1: return torch::kFloat64;
		case 2: return torch::kInt64;
		case 3: return torch::kUInt8;
		default: throw std::invalid_argument("TensorArchive: unknown dtype code");
	}
}

template <typename T>
void write_pod(std::ostream& out, T value)
{
	out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in)
{
	T value{};
	in.read(reinterpret_cast<char*>(&value), sizeof(T));
	return value;
}

} // namespace

void TensorArchive::put(const std::string& name, const torch::Tensor& tensor)
{
	dtype_code(tensor.scalar_type());
	entries_[name] = tensor.detach().cpu().contiguous().clone();
}

torch::Tensor TensorArchive::get(const std::string& name) const
{
	auto it = entries_.find(name);
	if (it == entries_.end())
	{
		throw std::invalid_argument("TensorArchive: missing entry '" + name + "'");
	}
	return it->second;
}

void TensorArchive::put_string(const std::string& name, const std::string& text)
{
	auto bytes = torch::empty({static_cast<int64_t>(text.size())}, torch::kUInt8);
	std::memcpy(bytes.data_ptr<uint8_t>(), text.data(), text.size());
	put(name, bytes);
}

std::string TensorArchive::get_string(const std::string& name) const
{
	auto bytes = get(name);
	return std::string(reinterpret_cast<const char*>(bytes.data_ptr<uint8_t>()), bytes.numel());
}

void TensorArchive::put_scalar(const std::string& name, int64_t value)
{
	put(name, torch::tensor(value, torch::kInt64));
}

int64_t TensorArchive::get_scalar(const std::string& name) const
{
	return get(name).item<int64_t>();
}

void TensorArchive::save(const std::filesystem::path& path) const
{
	std::ofstream out(path, std::ios::binary);
	check(out.good(), "TensorArchive: cannot open " + path.string());
	out.write(kCheckpointHeader, sizeof(kCheckpointHeader) - 1);
	write_pod<uint64_t>(out, entries_.size());
	for (const auto& [name, tensor] : entries_)
	{
		write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
		out.write(name.data(), static_cast<std::streamsize>(name.size()));
		write_pod<uint8_t>(out, dtype_code(tensor.scalar_type()));
		write_pod<uint32_t>(out, static_cast<uint32_t>(tensor.dim()));
		for (auto dim : tensor.sizes())
		{
			write_pod<int64_t>(out, dim);
		}
		uint64_t bytes = tensor.numel() * tensor.element_size();
		write_pod<uint64_t>(out, bytes);
		out.write(reinterpret_cast<const char*>(tensor.data_ptr()), static_cast<std::streamsize>(bytes));
	}
	check(out.good(), "TensorArchive: write failed for " + path.string());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path)
{
	std::ifstream in(path, std::ios::binary);
	check(in.good(), "TensorArchive: cannot open " + path.string());
	char header[sizeof(kCheckpointHeader) - 1];
	in.read(header, sizeof(header));
	if (std::string(header, sizeof(header)) != kCheckpointHeader)
	{
		throw InvariantViolation("TensorArchive: bad header in " + path.string());
	}
	TensorArchive archive;
	auto count = read_pod<uint64_t>(in);
	for (uint64_t i = 0; i < count; ++i)
	{
		auto name_len = read_pod<uint32_t>(in);
		std::string name(name_len, '\0');
		in.read(name.data(), name_len);
		auto dtype = dtype_from_code(read_pod<uint8_t>(in));
		auto ndim = read_pod<uint32_t>(in);
		std::vector<int64_t> dims(ndim);
		for (auto& dim : dims)
		{
			dim = read_pod<int64_t>(in);
		}
		auto bytes = read_pod<uint64_t>(in);
		auto tensor = torch::empty(dims, dtype);
		check(
			bytes == static_cast<uint64_t>(tensor.numel() * tensor.element_size()),
			"TensorArchive: payload size mismatch for '" + name + "'");
		in.read(reinterpret_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(bytes));
		archive.entries_[name] = std::move(tensor);
	}
	check(in.good(), "TensorArchive: truncated file " + path.string());
	return archive;
}

} // namespace dreamingv2
