#include "v2v/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace v2v {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  const auto v = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return std::bit_cast<float>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(std::string name, Tensor<float> tensor) {
  for (auto& e : entries_) {
    if (e.name == name) {
      e.tensor = std::move(tensor);
      return;
    }
  }
  entries_.push_back({std::move(name), std::move(tensor)});
}

void Checkpoint::put_text(std::string name, const std::string& text) {
  std::vector<float> bytes;
  bytes.reserve(text.size() + 1);
  for (unsigned char c : text) bytes.push_back(static_cast<float>(c));
  if (bytes.empty()) bytes.push_back(0.0f);
  const std::size_t n = bytes.size();
  put(std::move(name), Tensor<float>({n}, std::move(bytes)));
}

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

const Tensor<float>& Checkpoint::get(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw std::runtime_error("checkpoint has no tensor named '" + name + "'");
}

std::optional<std::string> Checkpoint::text(const std::string& name) const {
  const auto* t = find(name);
  if (!t) return std::nullopt;
  std::string s;
  s.reserve(t->size());
  for (float f : t->data()) {
    if (f == 0.0f) continue;
    s.push_back(static_cast<char>(static_cast<unsigned char>(f)));
  }
  return s;
}

std::string Checkpoint::serialize() const {
  std::string out(kCheckpointMagic, 8);
  put_u64(out, entries_.size());
  for (const auto& e : entries_) {
    put_u64(out, e.name.size());
    out += e.name;
    put_u64(out, e.tensor.rank());
    for (std::size_t d : e.tensor.shape()) put_u64(out, d);
    for (float f : e.tensor.data()) put_f32(out, f);
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(8) != std::string(kCheckpointMagic, 8)) throw std::runtime_error("not a V2VCKPT1 checkpoint (bad magic)");
  Checkpoint ck;
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = r.u64();
    std::string name = r.str(name_len);
    const std::uint64_t rank = r.u64();
    if (rank > 16) throw std::runtime_error("checkpoint tensor '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t n = shape_numel(shape);
    r.need(4 * n);
    std::vector<float> data(n);
    for (auto& f : data) f = r.f32();
    ck.entries_.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(data))});
  }
  if (!r.done()) throw std::runtime_error("checkpoint has trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

}  // namespace v2v
