#include "logrep/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "logrep/error.hpp"
#include "logrep/io.hpp"

namespace logrep {
namespace {

using nlohmann::json;

constexpr std::string_view kFormatName = "logrep.checkpoint";

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t read_u64(std::string_view bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

}  // namespace

json config_to_json(const EncoderConfig& c) {
  return {{"num_layers", c.num_layers},   {"num_heads", c.num_heads},
          {"hidden_size", c.hidden_size}, {"ff_size", c.ff_size},
          {"vocab_size", c.vocab_size},   {"max_seq", c.max_seq},
          {"dropout_prob", c.dropout_prob}, {"num_classes", c.num_classes}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  try {
    c.num_layers = j.value("num_layers", c.num_layers);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    c.ff_size = j.value("ff_size", c.ff_size);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.max_seq = j.value("max_seq", c.max_seq);
    c.dropout_prob = j.value("dropout_prob", c.dropout_prob);
    c.num_classes = j.value("num_classes", c.num_classes);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad encoder config: ") + e.what());
  }
  return c;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  json manifest = json::array();
  std::size_t offset = 0;
  const auto views = parameter_views(checkpoint.params);
  for (const auto& v : views) {
    if (v.values.empty()) continue;
    manifest.push_back({{"name", v.name},
                        {"shape", {v.rows, v.cols}},
                        {"offset", offset},
                        {"dtype", "f64"}});
    offset += v.values.size() * sizeof(double);
  }
  const json header = {{"format", kFormatName},
                       {"format_version", kCheckpointVersion},
                       {"config", config_to_json(checkpoint.config)},
                       {"tensors", std::move(manifest)},
                       {"metadata", checkpoint.metadata.is_null() ? json::object() : checkpoint.metadata}};
  const std::string head = header.dump();
  std::string out;
  out.reserve(8 + head.size() + offset);
  append_u64(out, head.size());
  out += head;
  for (const auto& v : views) {
    if (v.values.empty()) continue;
    const auto* raw = reinterpret_cast<const char*>(v.values.data());
    out.append(raw, v.values.size() * sizeof(double));
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint truncated before header length");
  const std::uint64_t head_len = read_u64(bytes);
  if (head_len > bytes.size() - 8) throw FormatError("checkpoint header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.substr(8, head_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  if (header.value("format", "") != kFormatName) throw FormatError("not a logrep checkpoint");
  if (header.value("format_version", -1) != kCheckpointVersion) {
    throw FormatError("checkpoint format_version " + header.value("format_version", json()).dump() +
                      " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  ck.config = config_from_json(header.at("config"));
  ck.config.validate();
  ck.metadata = header.value("metadata", json::object());
  if (ck.metadata.is_null()) ck.metadata = json::object();
  if (!ck.metadata.is_object()) throw FormatError("checkpoint metadata must be an object");
  ck.params = ModelParameters::zeros(ck.config);

  const std::string_view payload = bytes.substr(8 + head_len);
  const json& manifest = header.at("tensors");
  std::size_t entry = 0;
  for (auto& v : parameter_views(ck.params)) {
    if (v.values.empty()) continue;
    if (entry >= manifest.size()) throw FormatError("checkpoint manifest lacks tensor " + v.name);
    const json& m = manifest[entry++];
    if (m.at("name").get<std::string>() != v.name) {
      throw FormatError("checkpoint tensor order mismatch at " + v.name);
    }
    const auto shape = m.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != v.rows || shape[1] != v.cols) {
      throw FormatError("checkpoint tensor " + v.name + " has unexpected shape");
    }
    if (m.value("dtype", "") != "f64") throw FormatError("checkpoint tensor " + v.name + " is not f64");
    const auto offset = m.at("offset").get<std::size_t>();
    const std::size_t n = v.values.size() * sizeof(double);
    if (offset > payload.size() || n > payload.size() - offset) {
      throw FormatError("checkpoint tensor " + v.name + " runs past end of file");
    }
    std::memcpy(v.values.data(), payload.data() + offset, n);
  }
  if (entry != manifest.size()) throw FormatError("checkpoint manifest has unexpected extra tensors");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  io::write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path));
}

}  // namespace logrep
