#include "invo/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "invo/config_io.hpp"

namespace invo {

namespace {

constexpr const char* kMagic = "invo-checkpoint";
constexpr int kVersion = 1;

template <typename U>
void put_le(std::string& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const char* in) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(static_cast<unsigned char>(in[i])) << (8 * i);
  return bits;
}

std::string next_line(std::istream& in, const char* expected_key) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError(std::string("checkpoint: missing '") + expected_key + "' line");
  return line;
}

// Splits "key rest" and checks the key.
std::string field(const std::string& line, const char* key) {
  const std::size_t sp = line.find(' ');
  if (sp == std::string::npos || line.compare(0, sp, key) != 0) {
    throw CheckpointError(std::string("checkpoint: expected '") + key + "', got '" + line.substr(0, 40) + "'");
  }
  return line.substr(sp + 1);
}

}  // namespace

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw CheckpointError("unknown dtype '" + name + "'");
}

std::size_t byte_width(Precision p) { return p == Precision::f32 ? 4 : 8; }

void append_le(std::string& out, double v, Precision p) {
  if (p == Precision::f32) {
    put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  } else {
    put_le(out, std::bit_cast<std::uint64_t>(v));
  }
}

double read_le(const char* in, Precision p) {
  if (p == Precision::f32) return static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in)));
  return std::bit_cast<double>(get_le<std::uint64_t>(in));
}

std::string serialize_checkpoint(const Model& model, const CheckpointInfo& info) {
  // state() hands out mutable pointers; only reads happen here.
  const std::vector<StateEntry> state = const_cast<Model&>(model).state();
  std::ostringstream head;
  head << kMagic << ' ' << kVersion << '\n';
  head << "dtype " << to_string(info.precision) << '\n';
  head << "seed " << info.seed << '\n';
  head << "epoch " << info.epoch << '\n';
  head << "config " << nlohmann::json(model.config()).dump() << '\n';
  head << "tensors " << state.size() << '\n';
  std::string blob;
  for (const StateEntry& e : state) {
    const Shape& s = e.tensor->shape();
    head << "tensor " << e.name << ' ' << (e.param ? "param" : "buffer") << ' ' << s.rank();
    for (std::size_t d : s.dims()) head << ' ' << d;
    head << '\n';
    for (double v : e.tensor->data()) append_le(blob, v, info.precision);
  }
  head << "blob " << blob.size() << '\n';
  return head.str() + blob;
}

LoadedCheckpoint parse_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string line = next_line(in, kMagic);
  {
    std::istringstream ls(line);
    std::string magic;
    int version = -1;
    ls >> magic >> version;
    if (magic != kMagic) throw CheckpointError("not a checkpoint file");
    if (version != kVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kVersion) + ")");
    }
  }
  LoadedCheckpoint out;
  out.info.precision = parse_precision(field(next_line(in, "dtype"), "dtype"));
  try {
    out.info.seed = std::stoull(field(next_line(in, "seed"), "seed"));
    out.info.epoch = std::stoi(field(next_line(in, "epoch"), "epoch"));
  } catch (const std::logic_error&) {
    throw CheckpointError("checkpoint: malformed seed or epoch");
  }
  ModelConfig config;
  try {
    config = nlohmann::json::parse(field(next_line(in, "config"), "config")).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad config: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: bad config: ") + e.what());
  }
  Rng rng(out.info.seed);
  out.model = Model::build(config, rng);
  std::vector<StateEntry> state = out.model.state();

  std::size_t count = 0;
  try {
    count = std::stoull(field(next_line(in, "tensors"), "tensors"));
  } catch (const std::logic_error&) {
    throw CheckpointError("checkpoint: malformed tensor count");
  }
  if (count != state.size()) {
    throw CheckpointError("checkpoint: " + std::to_string(count) + " arrays, model has " +
                          std::to_string(state.size()));
  }
  std::size_t expected_bytes = 0;
  for (const StateEntry& e : state) {
    std::istringstream ls(field(next_line(in, "tensor"), "tensor"));
    std::string name, kind;
    std::size_t rank = 0;
    ls >> name >> kind >> rank;
    std::vector<std::size_t> dims(rank);
    for (std::size_t& d : dims) ls >> d;
    if (!ls) throw CheckpointError("checkpoint: malformed tensor line for '" + name + "'");
    if (name != e.name) throw CheckpointError("checkpoint: expected array '" + e.name + "', found '" + name + "'");
    if (kind != (e.param ? "param" : "buffer")) throw CheckpointError("checkpoint: wrong kind for '" + name + "'");
    if (dims != e.tensor->shape().dims()) {
      Shape found = rank == 0 ? Shape() : Shape(dims);
      throw CheckpointError("checkpoint: shape mismatch for '" + name + "': manifest " + found.str() +
                            ", model " + e.tensor->shape().str());
    }
    expected_bytes += e.tensor->numel() * byte_width(out.info.precision);
  }
  std::size_t nbytes = 0;
  try {
    nbytes = std::stoull(field(next_line(in, "blob"), "blob"));
  } catch (const std::logic_error&) {
    throw CheckpointError("checkpoint: malformed blob line");
  }
  if (nbytes != expected_bytes) {
    throw CheckpointError("checkpoint: blob declares " + std::to_string(nbytes) + " bytes, manifest needs " +
                          std::to_string(expected_bytes));
  }
  const auto pos = static_cast<std::size_t>(in.tellg());
  if (bytes.size() - pos != nbytes) {
    throw CheckpointError("checkpoint: blob is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                          std::to_string(nbytes) + (bytes.size() - pos < nbytes ? " (truncated)" : ""));
  }
  const char* p = bytes.data() + pos;
  const std::size_t w = byte_width(out.info.precision);
  for (StateEntry& e : state) {
    for (double& v : e.tensor->data()) {
      v = read_le(p, out.info.precision);
      p += w;
    }
  }
  out.model.set_mode(nn::Mode::inference);
  return out;
}

void save_checkpoint(const Model& model, const CheckpointInfo& info, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model, info);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace invo
