#include "cyclelab/checkpoint.hpp"

#include "cyclelab/png_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace cyclelab {
namespace {

constexpr std::array<char, 4> kMagic{'C', 'Y', 'C', 'D'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptCheckpoint("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointArray& CheckpointFile::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw CorruptCheckpoint("checkpoint has no array named '" + name + "'");
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
  nlohmann::json meta = file.metadata;
  meta["num_arrays"] = file.arrays.size();
  const std::string meta_text = meta.dump();

  std::string out(kMagic.begin(), kMagic.end());
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  for (const auto& a : file.arrays) {
    std::size_t expected = 1;
    for (auto d : a.dims) expected *= d;
    if (expected != a.values.size()) throw std::invalid_argument("checkpoint array '" + a.name + "' dims mismatch");
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put_u32(out, static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) put_u32(out, d);
    for (float v : a.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw IoError("failed writing checkpoint " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot finalize checkpoint " + path.string() + ": " + ec.message());
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (is.bad()) throw IoError("failed reading checkpoint " + path.string());

  Reader r(bytes);
  if (r.take(4) != std::string(kMagic.begin(), kMagic.end())) {
    throw CorruptCheckpoint("not a checkpoint (bad magic): " + path.string());
  }
  const auto version = static_cast<std::uint8_t>(r.take(1)[0]);
  if (version != kCheckpointVersion) {
    throw CorruptCheckpoint("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointFile file;
  std::size_t count = 0;
  try {
    file.metadata = nlohmann::json::parse(r.take(r.u32()));
    count = file.metadata.at("num_arrays").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("malformed checkpoint metadata: ") + e.what());
  }
  for (std::size_t k = 0; k < count; ++k) {
    CheckpointArray a;
    a.name = r.take(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CorruptCheckpoint("implausible array rank in checkpoint");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.dims.push_back(r.u32());
      n *= a.dims.back();
    }
    if (n > r.remaining() / 4) throw CorruptCheckpoint("checkpoint truncated");
    a.values.resize(n);
    for (auto& v : a.values) v = std::bit_cast<float>(r.u32());
    file.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw CorruptCheckpoint("trailing bytes after checkpoint arrays");
  return file;
}

}  // namespace cyclelab
