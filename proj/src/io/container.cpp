#include "se/io/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "se/errors.hpp"

namespace se::io {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void raw(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string where) : in_(in), where_(std::move(where)) {}
  void raw(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in_) throw DataError(where_ + ": truncated container");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) throw DataError(where_ + ": implausible string length");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
  std::string where_;
};

}  // namespace

const std::string& Container::attr(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw DataError("container '" + kind + "' lacks attribute '" + key + "'");
  return it->second;
}

const grad::Tensor& Container::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw DataError("container '" + kind + "' lacks tensor '" + name + "'");
}

bool Container::has_tensor(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

void write_container(const std::filesystem::path& path, const Container& container) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  Writer w(out);
  w.raw(kContainerMagic, sizeof kContainerMagic);
  w.u32(kContainerVersion);
  w.str(container.kind);
  w.u32(static_cast<std::uint32_t>(container.attrs.size()));
  for (const auto& [k, v] : container.attrs) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(container.tensors.size()));
  for (const auto& [name, t] : container.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    w.raw(t.data(), t.size() * sizeof(double));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  Reader r(in, path.string());
  char magic[sizeof kContainerMagic];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kContainerMagic, sizeof magic) != 0) throw DataError(path.string() + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw DataError(path.string() + ": unsupported container version " + std::to_string(version));
  }
  Container c;
  c.kind = r.str();
  const std::uint32_t attr_count = r.u32();
  for (std::uint32_t i = 0; i < attr_count; ++i) {
    std::string key = r.str();
    c.attrs[key] = r.str();
  }
  const std::uint32_t tensor_count = r.u32();
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw DataError(path.string() + ": implausible tensor rank");
    grad::Tensor::Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = r.u64();
      count *= d;
    }
    if (count > (1ull << 32)) throw DataError(path.string() + ": implausible tensor size");
    std::vector<double> values(count);
    r.raw(values.data(), count * sizeof(double));
    c.tensors.emplace_back(std::move(name), grad::Tensor(std::move(shape), std::move(values)));
  }
  return c;
}

}  // namespace se::io
