#include "dfcn/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dfcn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

void ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw Error("ParamStore: duplicate parameter " + name);
  Entry e;
  e.grad = Tensor(init.shape);
  e.value = std::move(init);
  map_.emplace(name, std::move(e));
  order_.push_back(name);
}

Tensor& ParamStore::value(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw Error("ParamStore: unknown parameter " + name);
  return it->second.value;
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw Error("ParamStore: unknown parameter " + name);
  return it->second.value;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw Error("ParamStore: unknown parameter " + name);
  return it->second.grad;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw Error("ParamStore: unknown parameter " + name);
  return it->second.grad;
}

std::int64_t ParamStore::total_scalars() const {
  std::int64_t n = 0;
  for (const auto& name : order_) n += value(name).numel();
  return n;
}

void ParamStore::zero_grads() {
  for (const auto& name : order_) grad(name).fill(0.0);
}

std::uint64_t fnv1a64(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'D', 'F', 'C', 'N', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(order_.size()));

  std::ostringstream manifest;
  for (const auto& name : order_) {
    const Tensor& t = value(name);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) write_pod<std::int64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));

    manifest << name;
    for (std::size_t i = 0; i < t.shape.size(); ++i)
      manifest << (i == 0 ? ' ' : 'x') << t.shape[i];
    char hex[32];
    std::snprintf(hex, sizeof(hex), " %016llx",
                  static_cast<unsigned long long>(
                      fnv1a64(t.data.data(), t.data.size() * sizeof(double))));
    manifest << hex << '\n';
  }
  if (!os) throw DataError("checkpoint: write failed: " + path);

  std::ofstream mf(path + ".manifest");
  if (!mf) throw DataError("checkpoint: cannot write manifest for " + path);
  mf << manifest.str();
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic in " + path);

  ParamStore store;
  const auto count = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto ndim = read_pod<std::uint32_t>(is);
    std::vector<std::int64_t> shape(ndim);
    for (auto& d : shape) d = read_pod<std::int64_t>(is);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) throw DataError("checkpoint: truncated payload in " + path);
    store.add(name, std::move(t));
  }
  return store;
}

}  // namespace dfcn
