#include "dclm/params.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dclm {

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
  if (by_name_.count(name)) {
    throw ConfigError("parameter already present: " + name);
  }
  if (t.rank() < 1 || t.rank() > 2) {
    throw ShapeError("parameter " + name + ": rank must be 1 or 2");
  }
  names_.insert(std::lower_bound(names_.begin(), names_.end(), name), name);
  return by_name_.emplace(name, std::move(t)).first->second;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) {
    throw ConfigError("no such parameter: " + name);
  }
  return it->second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) {
    throw ConfigError("no such parameter: " + name);
  }
  return it->second;
}

bool ParameterSet::has(const std::string& name) const {
  return by_name_.count(name) > 0;
}

std::int64_t ParameterSet::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& name : names_) n += by_name_.at(name).size();
  return n;
}

void ParameterSet::zero_grads() {
  for (const auto& name : names_) by_name_.at(name).zero_grad();
}

void ParameterSet::drop_grads() {
  for (const auto& name : names_) by_name_.at(name).drop_grad();
}

namespace {

constexpr char kMagic[4] = {'D', 'C', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u8(std::string& out, std::uint8_t v) {
  out.push_back(static_cast<char>(v));
}

void put_f64(std::string& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& path)
      : data_(data), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(
        static_cast<unsigned char>(data_[pos_]) |
        (static_cast<unsigned char>(data_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<unsigned char>(data_[pos_++]);
  }

  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(data_[pos_ + i]))
              << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw DataError("checkpoint " + path_ + ": truncated");
    }
  }

  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& name : params.names()) {
    const Tensor& t = params.get(name);
    if (name.size() > 0xffff) {
      throw ConfigError("checkpoint: parameter name too long: " + name);
    }
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    put_u8(out, static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (int r = 0; r < t.value.rows(); ++r) {
      for (int c = 0; c < t.value.cols(); ++c) {
        put_f64(out, t.value(r, c));
      }
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint " + path + ": cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("checkpoint " + path + ": write failed");
}

ParameterSet load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint " + path + ": cannot open");
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string data = buf.str();

  Reader r(data, path);
  if (r.bytes(4) != std::string(kMagic, 4)) {
    throw DataError("checkpoint " + path + ": bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError("checkpoint " + path + ": unsupported format version " +
                    std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  ParameterSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.bytes(name_len);
    const std::uint8_t rank = r.u8();
    if (rank < 1 || rank > 2) {
      throw DataError("checkpoint " + path + ": tensor " + name +
                      " has unsupported rank " + std::to_string(rank));
    }
    std::vector<int> dims(rank);
    for (auto& d : dims) d = static_cast<int>(r.u32());
    const int rows = dims[0];
    const int cols = rank == 2 ? dims[1] : 1;
    Tensor t;
    t.shape = dims;
    t.value.resize(rows, cols);
    for (int row = 0; row < rows; ++row) {
      for (int col = 0; col < cols; ++col) {
        t.value(row, col) = r.f64();
      }
    }
    params.add(name, std::move(t));
  }
  if (!r.at_end()) {
    throw DataError("checkpoint " + path + ": trailing bytes");
  }
  return params;
}

}  // namespace dclm
