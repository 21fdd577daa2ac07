#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "biasner/error.hpp"
#include "biasner/model.hpp"

namespace biasner {

namespace {

constexpr char kMagic[8] = {'B', 'I', 'A', 'S', 'N', 'E', 'R', '\x01'};

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  size_t pos() const { return pos_; }

 private:
  void need(size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      fail(ErrorKind::kLoad, std::string("checkpoint truncated while reading ") + what);
  }

  std::string_view bytes_;
  size_t pos_ = 0;
};

std::string shape(const TensorInfo& t) { return std::to_string(t.rows) + "x" + std::to_string(t.cols); }

}  // namespace

uint64_t fnv1a64(std::string_view bytes, uint64_t seed) {
  uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string serialize_model(const ModelParams& params) {
  std::string out(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kCheckpointVersion);
  const std::string cfg = params.config.to_json();
  put<uint32_t>(out, static_cast<uint32_t>(cfg.size()));
  out += cfg;
  put<uint64_t>(out, params.values.size());
  for (double v : params.values) put<float>(out, static_cast<float>(v));
  put<uint64_t>(out, fnv1a64(out));
  return out;
}

ModelParams deserialize_model(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic), "magic") != std::string_view(kMagic, sizeof(kMagic)))
    fail(ErrorKind::kLoad, "not a model checkpoint (bad magic)");
  const auto version = r.get<uint32_t>("version");
  if (version != kCheckpointVersion)
    fail(ErrorKind::kLoad, "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                               std::to_string(kCheckpointVersion) + ")");
  const auto cfg_len = r.get<uint32_t>("config length");
  const std::string cfg_text(r.take(cfg_len, "config"));
  const auto count = r.get<uint64_t>("value count");
  if (count > (bytes.size() - r.pos()) / sizeof(float))
    fail(ErrorKind::kLoad, "checkpoint truncated: declares " + std::to_string(count) + " values");
  const auto raw = r.take(count * sizeof(float), "values");
  const size_t body_end = r.pos();
  const auto stored = r.get<uint64_t>("checksum");
  if (stored != fnv1a64(bytes.substr(0, body_end))) fail(ErrorKind::kLoad, "checkpoint checksum mismatch");
  if (r.pos() != bytes.size()) fail(ErrorKind::kLoad, "trailing bytes after checkpoint checksum");

  ModelParams p;
  try {
    p.config = ModelConfig::from_json(cfg_text);
    p.config.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kLoad, std::string("checkpoint config: ") + e.what());
  }
  p.layout = make_layout(p.config);
  const size_t expected = p.layout.empty() ? 0 : p.layout.back().offset + p.layout.back().size();
  if (count != expected)
    fail(ErrorKind::kLoad, "checkpoint holds " + std::to_string(count) + " values but its config needs " +
                               std::to_string(expected));
  p.values.resize(count);
  for (size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, raw.data() + i * sizeof(float), sizeof(float));
    p.values[i] = f;
  }
  return p;
}

void save_model(const ModelParams& params, const std::string& path) { write_file_atomic(path, serialize_model(params)); }

ModelParams load_model(const std::string& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::kLoad, e.what());
  }
  return deserialize_model(bytes);
}

ModelParams load_model(const std::string& path, const ModelConfig& expected) {
  ModelParams p = load_model(path);
  const auto want = make_layout(expected);
  for (size_t i = 0; i < want.size(); ++i) {
    if (i >= p.layout.size())
      fail(ErrorKind::kLoad, "checkpoint is missing tensor '" + want[i].name + "'");
    const auto& have = p.layout[i];
    if (have.name != want[i].name || have.rows != want[i].rows || have.cols != want[i].cols)
      fail(ErrorKind::kLoad, "tensor '" + want[i].name + "' has shape " + shape(have) + " in checkpoint, expected " +
                                 shape(want[i]));
  }
  if (p.layout.size() != want.size())
    fail(ErrorKind::kLoad, "checkpoint has unexpected tensor '" + p.layout[want.size()].name + "'");
  return p;
}

uint64_t model_checksum(const ModelParams& params) { return fnv1a64(serialize_model(params)); }

void save_vocab(const Vocab& vocab, const std::string& path) { write_file_atomic(path, vocab.serialize()); }

Vocab load_vocab(const std::string& path) {
  try {
    return Vocab::deserialize(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kLoad) throw;
    fail(ErrorKind::kLoad, "vocabulary '" + path + "': " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorKind::kIo, "read failed for '" + path + "'");
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  static std::atomic<uint64_t> counter{0};
  const std::string tmp = path + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write '" + tmp + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) fail(ErrorKind::kIo, "write failed for '" + tmp + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::kIo, "cannot rename into '" + path + "'");
  }
}

}  // namespace biasner
