#ifndef DCLM_PARAMS_HPP
#define DCLM_PARAMS_HPP

#include "dclm/tensor.hpp"
#include "dclm/types.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace dclm {

// Named tensors iterated in sorted-name order. Tensor addresses stay
// valid for the lifetime of the set, so gradient buffers may key on them.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::int64_t scalar_count() const;
  void zero_grads();
  void drop_grads();

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Tensor> by_name_;
};

// Binary container: "DCLM" magic, format version, then each tensor as
// name, rank, dims, and row-major float64 payload, all little-endian.
void save_checkpoint(const std::string& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::string& path);

}  // namespace dclm

#endif  // DCLM_PARAMS_HPP
