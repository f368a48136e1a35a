#pragma once

// Parameter checkpoint container.
//
//   magic   8 bytes  "FGCNCKPT"
//   version u32      currently 1
//   count   u64      number of records
//   record  u32 name length, UTF-8 name bytes, u32 rank, u64 dims[rank],
//           f64 values[prod(dims)]
//
// All integers and floats are little-endian. Values are stored as IEEE-754
// binary64 regardless of the in-memory precision.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "fgcn/error.hpp"
#include "fgcn/tensor.hpp"

namespace fgcn {

inline constexpr std::array<char, 8> checkpoint_magic{'F', 'G', 'C', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t checkpoint_version = 1;

struct NamedTensor {
  std::string name;
  Tensor<double> tensor;
};

namespace detail {

template <typename U>
void put_le(std::ostream& os, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) os.put(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::istream& is, const std::string& what) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof())
      throw DataError("checkpoint truncated while reading " + what);
    value |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return value;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& records) {
  os.write(checkpoint_magic.data(), checkpoint_magic.size());
  detail::put_le<std::uint32_t>(os, checkpoint_version);
  detail::put_le<std::uint64_t>(os, records.size());
  for (const auto& r : records) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.tensor.shape.size()));
    for (std::size_t d : r.tensor.shape) detail::put_le<std::uint64_t>(os, d);
    for (double x : r.tensor.data) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(x));
  }
  if (!os) throw DataError("failed writing checkpoint");
}

inline std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != checkpoint_magic) throw DataError("not a checkpoint file (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(is, "version");
  if (version != checkpoint_version)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto count = detail::get_le<std::uint64_t>(is, "record count");
  std::vector<NamedTensor> out;
  for (std::uint64_t r = 0; r < count; ++r) {
    NamedTensor nt;
    const auto len = detail::get_le<std::uint32_t>(is, "name length");
    nt.name.resize(len);
    is.read(nt.name.data(), len);
    if (!is) throw DataError("checkpoint truncated in record name");
    const auto rank = detail::get_le<std::uint32_t>(is, "rank of " + nt.name);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(detail::get_le<std::uint64_t>(is, "dims of " + nt.name));
    std::vector<double> data(numel(shape));
    for (auto& x : data) x = std::bit_cast<double>(detail::get_le<std::uint64_t>(is, "values of " + nt.name));
    nt.tensor = Tensor<double>(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, records);
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  return read_checkpoint(is);
}

template <typename T>
std::vector<NamedTensor> export_params(const ParamStore<T>& params, const std::string& prefix = "") {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    Tensor<double> t(p.value.shape);
    for (std::size_t j = 0; j < t.size(); ++j) t.data[j] = static_cast<double>(p.value.data[j]);
    out.push_back({prefix + p.name, std::move(t)});
  }
  return out;
}

// Copies matching records into `params`. Every parameter must be present with
// an identical shape; the first mismatch is reported by name.
template <typename T>
void import_params(ParamStore<T>& params, const std::vector<NamedTensor>& records,
                   const std::string& prefix = "") {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const std::string key = prefix + p.name;
    const NamedTensor* found = nullptr;
    for (const auto& r : records)
      if (r.name == key) {
        found = &r;
        break;
      }
    if (!found) throw ConfigError("checkpoint is missing tensor " + key);
    if (found->tensor.shape != p.value.shape)
      throw ConfigError("checkpoint tensor " + key + " has shape " +
                        shape_string(found->tensor.shape) + " but the model expects " +
                        shape_string(p.value.shape));
    for (std::size_t j = 0; j < p.value.size(); ++j)
      p.value.data[j] = static_cast<T>(found->tensor.data[j]);
  }
}

}  // namespace fgcn
