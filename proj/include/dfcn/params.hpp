#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dfcn/tensor.hpp"

namespace dfcn {

// Named parameters with gradient buffers of identical shape. Insertion
// order is preserved; it fixes initialization, serialization, and
// optimizer traversal order.
class ParamStore {
 public:
  void add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return map_.count(name) > 0; }

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::size_t count() const { return order_.size(); }
  std::int64_t total_scalars() const;

  void zero_grads();

  // Binary checkpoint: magic, version, then per parameter the name, the
  // shape, and a little-endian IEEE-754 double payload. A text manifest
  // (name, shape, FNV-1a checksum of the payload) is written alongside
  // as <path>.manifest.
  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
  };
  std::vector<std::string> order_;
  std::unordered_map<std::string, Entry> map_;
};

std::uint64_t fnv1a64(const void* data, std::size_t bytes);

}  // namespace dfcn
