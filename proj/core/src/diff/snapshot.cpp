#include "ssdlab/diff/snapshot.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace ssdlab::diff {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'D', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "snapshot format assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("snapshot truncated");
  return value;
}

void write_record(std::ostream& out, const std::string& name, const Shape& shape, std::span<const double> values) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (auto extent : shape) put<std::uint64_t>(out, extent);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::pair<std::string, Tensor> read_record(std::istream& in) {
  const auto name_len = get<std::uint32_t>(in);
  if (name_len > 4096) throw std::runtime_error("snapshot record name too long");
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  const auto rank = get<std::uint32_t>(in);
  if (rank > 8) throw std::runtime_error("snapshot record '" + name + "' has implausible rank");
  Shape shape(rank);
  for (auto& extent : shape) extent = get<std::uint64_t>(in);
  std::vector<double> values(shape_numel(shape));
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw std::runtime_error("snapshot truncated in record '" + name + "'");
  return {std::move(name), Tensor::from(std::move(shape), std::move(values))};
}

void write_header(std::ostream& out, std::uint64_t count) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, count);
}

std::uint64_t read_header(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a parameter snapshot");
  if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("unsupported snapshot version");
  return get<std::uint64_t>(in);
}

}  // namespace

void write_parameters(std::ostream& out, const ParameterSet& params) {
  write_header(out, params.size());
  for (const auto& [name, tensor] : params.entries) write_record(out, name, tensor.shape(), tensor.data());
}

ParameterSet read_parameters(std::istream& in) {
  const auto count = read_header(in);
  ParameterSet params;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto record = read_record(in);
    record.second.set_requires_grad(true);
    params.entries.push_back(std::move(record));
  }
  return params;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_parameters(out, params);
}

ParameterSet load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_parameters(in);
}

void write_sgd_state(std::ostream& out, const SgdState& state) {
  put<double>(out, state.learning_rate);
  put<double>(out, state.momentum);
  write_header(out, state.velocity.size());
  for (std::size_t i = 0; i < state.velocity.size(); ++i) {
    write_record(out, "velocity/" + std::to_string(i), {state.velocity[i].size()}, state.velocity[i]);
  }
}

SgdState read_sgd_state(std::istream& in) {
  SgdState state;
  state.learning_rate = get<double>(in);
  state.momentum = get<double>(in);
  const auto count = read_header(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto record = read_record(in);
    state.velocity.emplace_back(record.second.data().begin(), record.second.data().end());
  }
  return state;
}

}  // namespace ssdlab::diff
