#include "spikereg/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace spikereg {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'P', 'K', 'R', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T value) {
  using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  static_assert(sizeof(T) == sizeof(Bits));
  Bits bits = std::bit_cast<Bits>(value);
  for (std::size_t i = 0; i < sizeof(Bits); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
  }
}

class Reader {
 public:
  Reader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <typename T>
  T get() {
    using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(Bits));
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(Bits); ++i) {
      bits |= static_cast<Bits>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(Bits);
    return std::bit_cast<T>(bits);
  }

  std::string text(std::uint64_t length) {
    need(length);
    std::string out = bytes_.substr(pos_, length);
    pos_ += length;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(source_ + ": truncated checkpoint");
  }

  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointTensor& Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw UsageError("checkpoint has no tensor named '" + name + "'");
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::string out(kMagic.begin(), kMagic.end());
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint64_t>(out, checkpoint.epoch);
  put<std::uint64_t>(out, checkpoint.config_text.size());
  out += checkpoint.config_text;
  put<std::uint64_t>(out, checkpoint.tensors.size());
  for (const auto& t : checkpoint.tensors) {
    if (static_cast<Index>(t.values.size()) != numel(t.shape)) {
      throw UsageError("checkpoint tensor '" + t.name + "' does not match its shape");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (Index extent : t.shape) put<std::int64_t>(out, extent);
    for (double v : t.values) put<double>(out, v);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write checkpoint " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  Reader in(std::move(bytes), path.string());
  const std::string magic = in.text(kMagic.size());
  if (magic != std::string(kMagic.begin(), kMagic.end())) throw FormatError(path.string() + ": not a checkpoint");
  const auto version = in.get<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.epoch = in.get<std::uint64_t>();
  ck.config_text = in.text(in.get<std::uint64_t>());
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = in.text(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(in.get<std::int64_t>());
    t.values.resize(static_cast<std::size_t>(numel(t.shape)));
    for (double& v : t.values) v = in.get<double>();
    ck.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw FormatError(path.string() + ": trailing bytes after checkpoint");
  return ck;
}

}  // namespace spikereg
