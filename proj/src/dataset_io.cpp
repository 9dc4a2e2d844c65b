#include <fstream>
#include <sstream>

#include "invo/checkpoint.hpp"
#include "invo/config_io.hpp"
#include "invo/signal.hpp"

// index.txt:
//   invo-dataset 1
//   spec <DatasetSpec as one-line JSON>
//   classes <name> ...
//   frame_length <N>
//   frames <count>
//   <train|test> <label> <snr_db> <byte offset>     (one per frame)
// frames.bin: each frame 2 x N little-endian float32, row 0 I, row 1 Q.

namespace invo {

namespace {

constexpr const char* kMagic = "invo-dataset";
constexpr int kVersion = 1;

std::string expect(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw SignalError("dataset index: missing '" + key + "' line");
  if (line.rfind(key + ' ', 0) != 0) throw SignalError("dataset index: expected '" + key + "', got '" + line + "'");
  return line.substr(key.size() + 1);
}

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t n = data.spec.frame_length;
  std::ostringstream index;
  index.precision(17);
  index << kMagic << ' ' << kVersion << '\n';
  index << "spec " << nlohmann::json(data.spec).dump() << '\n';
  index << "classes";
  for (const std::string& c : data.class_names) index << ' ' << c;
  index << '\n' << "frame_length " << n << '\n';
  index << "frames " << data.train.size() + data.test.size() << '\n';
  std::string blob;
  auto put = [&](const SignalFrame& f, const char* split) {
    if (f.iq.shape() != Shape{2, n}) throw SignalError("save_dataset: frame shape differs from the spec");
    index << split << ' ' << f.label << ' ' << f.snr_db << ' ' << blob.size() << '\n';
    for (double v : f.iq.data()) append_le(blob, v, Precision::f32);
  };
  for (const SignalFrame& f : data.train) put(f, "train");
  for (const SignalFrame& f : data.test) put(f, "test");

  std::ofstream idx(dir / "index.txt");
  idx << index.str();
  std::ofstream bin(dir / "frames.bin", std::ios::binary);
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!idx || !bin) throw std::runtime_error("save_dataset: write failed under " + dir.string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream idx(dir / "index.txt");
  if (!idx) throw SignalError("cannot open " + (dir / "index.txt").string());
  std::ifstream bin(dir / "frames.bin", std::ios::binary);
  if (!bin) throw SignalError("cannot open " + (dir / "frames.bin").string());
  std::ostringstream raw;
  raw << bin.rdbuf();
  const std::string blob = raw.str();

  std::string line;
  std::getline(idx, line);
  if (line != std::string(kMagic) + ' ' + std::to_string(kVersion)) {
    throw SignalError("dataset index: unsupported header '" + line + "'");
  }
  Dataset data;
  try {
    data.spec = nlohmann::json::parse(expect(idx, "spec")).get<DatasetSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw SignalError(std::string("dataset index: bad spec: ") + e.what());
  } catch (const ConfigError& e) {
    throw SignalError(std::string("dataset index: bad spec: ") + e.what());
  }
  {
    std::istringstream ls(expect(idx, "classes"));
    for (std::string c; ls >> c;) data.class_names.push_back(c);
  }
  std::size_t n = 0, count = 0;
  try {
    n = std::stoull(expect(idx, "frame_length"));
    count = std::stoull(expect(idx, "frames"));
  } catch (const std::logic_error&) {
    throw SignalError("dataset index: malformed frame_length or frames line");
  }
  if (n != data.spec.frame_length) throw SignalError("dataset index: frame_length disagrees with the spec");
  const std::size_t frame_bytes = 2 * n * 4;
  if (blob.size() != count * frame_bytes) {
    throw SignalError("dataset blob is " + std::to_string(blob.size()) + " bytes, index needs " +
                      std::to_string(count * frame_bytes));
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(idx, line)) throw SignalError("dataset index: ends after " + std::to_string(i) + " frames");
    std::istringstream ls(line);
    std::string split;
    SignalFrame f;
    std::size_t offset = 0;
    ls >> split >> f.label >> f.snr_db >> offset;
    if (!ls || (split != "train" && split != "test")) throw SignalError("dataset index: bad frame line '" + line + "'");
    if (f.label < 0 || static_cast<std::size_t>(f.label) >= data.class_names.size()) {
      throw SignalError("dataset index: label out of range in '" + line + "'");
    }
    if (offset % frame_bytes != 0 || offset + frame_bytes > blob.size()) {
      throw SignalError("dataset index: bad offset in '" + line + "'");
    }
    f.iq = Tensor(Shape{2, n});
    for (std::size_t k = 0; k < 2 * n; ++k) f.iq[k] = read_le(blob.data() + offset + 4 * k, Precision::f32);
    (split == "train" ? data.train : data.test).push_back(std::move(f));
  }
  return data;
}

}  // namespace invo
