#include "metaview/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "metaview/error.hpp"
#include "metaview/io.hpp"

namespace metaview {

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  std::filesystem::path p = stem;
  p += suffix;
  return p;
}

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

std::string encode_values(const std::vector<double>& values) {
  std::string bytes(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t le = to_little_endian(std::bit_cast<std::uint64_t>(values[i]));
    std::memcpy(bytes.data() + 8 * i, &le, 8);
  }
  return bytes;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& checkpoint) {
  const SequenceModelParams& p = checkpoint.params;
  if (p.values.size() != p.arch.param_count()) throw ShapeMismatch("checkpoint parameter count");
  nlohmann::ordered_json meta;
  meta["format"] = "f64-le";
  meta["kind"] = to_string(p.arch.kind);
  meta["input_dim"] = p.arch.input_dim;
  meta["hidden_dim"] = p.arch.hidden_dim;
  meta["output_dim"] = p.arch.output_dim;
  meta["sequence_length"] = p.arch.sequence_length;
  meta["seed"] = checkpoint.seed;
  meta["count"] = p.values.size();
  meta["hash"] = hex64(params_hash(p));
  atomic_write(with_suffix(stem, ".bin"), encode_values(p.values));
  atomic_write(with_suffix(stem, ".json"), meta.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(with_suffix(stem, ".json")));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint sidecar " + stem.string() + ".json: " + e.what());
  }
  Checkpoint cp;
  try {
    if (meta.at("format").get<std::string>() != "f64-le") throw IoError("unknown checkpoint format");
    cp.params.arch.kind = parse_model_kind(meta.at("kind").get<std::string>());
    cp.params.arch.input_dim = meta.at("input_dim").get<std::size_t>();
    cp.params.arch.hidden_dim = meta.at("hidden_dim").get<std::size_t>();
    cp.params.arch.output_dim = meta.at("output_dim").get<std::size_t>();
    cp.params.arch.sequence_length = meta.at("sequence_length").get<std::size_t>();
    cp.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint sidecar " + stem.string() + ".json: " + e.what());
  }
  const std::string bytes = read_file(with_suffix(stem, ".bin"));
  const std::size_t count = cp.params.arch.param_count();
  if (bytes.size() != 8 * count) {
    throw ShapeMismatch("checkpoint " + stem.string() + ".bin holds " +
                        std::to_string(bytes.size() / 8) + " values, expected " +
                        std::to_string(count));
  }
  cp.params.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t le = 0;
    std::memcpy(&le, bytes.data() + 8 * i, 8);
    cp.params.values[i] = std::bit_cast<double>(to_little_endian(le));
  }
  return cp;
}

std::uint64_t params_hash(const SequenceModelParams& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : encode_values(params.values)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << value;
  return ss.str();
}

}  // namespace metaview
