#include "checkpoint.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "ssdlab/diff/snapshot.hpp"

namespace ssdlab::selftrain {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'D', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: unexpected end of file");
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1u << 26)) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: unexpected end of file");
  return s;
}

void put_row(std::ostream& out, const MetricsRow& row) {
  put_string(out, row.mode);
  put<double>(out, row.fraction);
  put<std::uint64_t>(out, row.seed);
  put<std::uint64_t>(out, row.iteration);
  put<double>(out, row.map_5095);
  put<double>(out, row.map_50);
  put<std::uint64_t>(out, row.per_class.size());
  for (const auto& v : row.per_class) {
    put<std::uint8_t>(out, v.has_value() ? 1 : 0);
    put<double>(out, v.value_or(0.0));
  }
  put<double>(out, row.seconds);
}

MetricsRow get_row(std::istream& in) {
  MetricsRow row;
  row.mode = get_string(in);
  row.fraction = get<double>(in);
  row.seed = get<std::uint64_t>(in);
  row.iteration = get<std::uint64_t>(in);
  row.map_5095 = get<double>(in);
  row.map_50 = get<double>(in);
  const auto n = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    const bool has = get<std::uint8_t>(in) != 0;
    const double v = get<double>(in);
    row.per_class.push_back(has ? std::optional<double>(v) : std::nullopt);
  }
  row.seconds = get<double>(in);
  return row;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    diff::write_parameters(out, ck.teacher);
    diff::write_parameters(out, ck.student);
    diff::write_sgd_state(out, ck.optimizer);
    put<std::uint64_t>(out, ck.iteration);
    put_string(out, ck.sampler_state);
    diff::write_parameters(out, ck.best);
    put<std::uint64_t>(out, ck.best_iteration);
    put<double>(out, ck.best_val_map);
    put<std::uint64_t>(out, ck.trajectory.size());
    for (const auto& row : ck.trajectory) put_row(out, row);
    put<double>(out, ck.elapsed_seconds);
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const detector::DetectorConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4)) throw std::runtime_error(path.string() + " is not a checkpoint");
  if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("unsupported checkpoint version in " + path.string());
  Checkpoint ck;
  ck.teacher = diff::read_parameters(in);
  ck.student = diff::read_parameters(in);
  ck.optimizer = diff::read_sgd_state(in);
  ck.iteration = get<std::uint64_t>(in);
  ck.sampler_state = get_string(in);
  ck.best = diff::read_parameters(in);
  ck.best_iteration = get<std::uint64_t>(in);
  ck.best_val_map = get<double>(in);
  const auto rows = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < rows; ++i) ck.trajectory.push_back(get_row(in));
  ck.elapsed_seconds = get<double>(in);

  const auto reference = detector::init_detector(config, 0);
  diff::require_same_layout(reference.params, ck.teacher, "checkpoint teacher");
  diff::require_same_layout(reference.params, ck.student, "checkpoint student");
  diff::require_same_layout(reference.params, ck.best, "checkpoint best model");
  if (ck.optimizer.velocity.size() != ck.student.size()) throw std::runtime_error("checkpoint optimizer does not match model");
  return ck;
}

}  // namespace ssdlab::selftrain
