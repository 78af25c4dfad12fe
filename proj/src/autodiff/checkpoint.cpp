#include "msrnn/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "msrnn/error.hpp"

namespace msrnn::ad {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ArtifactError("checkpoint truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint Checkpoint::capture(std::span<Parameter* const> params, std::string metadata) {
  Checkpoint c;
  c.metadata = std::move(metadata);
  for (const Parameter* p : params) c.tensors.push_back({p->name, p->value});
  return c;
}

void Checkpoint::restore(std::span<Parameter* const> params) const {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& e : tensors) by_name.emplace(e.name, &e.value);
  if (by_name.size() != params.size()) {
    throw ArtifactError("checkpoint holds " + std::to_string(by_name.size()) +
                        " tensors but the model has " + std::to_string(params.size()) +
                        " parameters");
  }
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ArtifactError("checkpoint is missing parameter " + p->name);
    if (!(it->second->shape() == p->value.shape())) {
      throw ArtifactError("checkpoint shape " + it->second->shape().str() + " for " + p->name +
                          " does not match model shape " + p->value.shape().str());
    }
    p->value = *it->second;
  }
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(metadata.size()));
  out += metadata;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& e : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    const Shape& s = e.value.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.rank()));
    for (std::size_t i = 0; i < s.rank(); ++i) put<std::uint64_t>(out, s[i]);
    for (double v : e.value.data()) put<double>(out, v);
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ArtifactError("not a checkpoint file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw ArtifactError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.metadata = r.str(r.get<std::uint32_t>());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    Entry e;
    e.name = r.str(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > Shape::kMaxRank) throw ArtifactError("tensor rank too large in checkpoint");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    Shape shape{std::span<const std::size_t>(dims)};
    std::vector<double> data(shape.numel());
    for (auto& v : data) v = r.get<double>();
    e.value = Tensor(shape, std::move(data));
    c.tensors.push_back(std::move(e));
  }
  if (!r.done()) throw ArtifactError("trailing bytes after checkpoint payload");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str());
}

}  // namespace msrnn::ad
