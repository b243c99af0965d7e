#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "mdrl/common.hpp"

namespace mdrl {

// One named, contiguous sub-range of a flat parameter vector.
struct LayoutEntry {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
};

// Flat array of 64-bit reals holding all trainable parameters of a network,
// with named sub-ranges per layer. Sub-ranges are contiguous, non-overlapping
// and cover [0, len).
class ParamVector {
 public:
  ParamVector() = default;

  std::size_t add(const std::string& name, std::vector<std::size_t> shape) {
    if (index_.count(name))
      throw config_error("ParamVector: duplicate layer name " + name);
    LayoutEntry e;
    e.name = name;
    e.offset = values_.size();
    e.shape = std::move(shape);
    values_.resize(e.offset + e.size(), 0.0);
    index_[name] = layout_.size();
    layout_.push_back(std::move(e));
    return layout_.back().offset;
  }

  std::size_t size() const { return values_.size(); }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  const std::vector<LayoutEntry>& layout() const { return layout_; }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const LayoutEntry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw config_error("ParamVector: unknown layer " + name);
    return layout_[it->second];
  }

  double* range(const std::string& name) {
    return values_.data() + entry(name).offset;
  }
  const double* range(const std::string& name) const {
    return values_.data() + entry(name).offset;
  }
  std::size_t range_size(const std::string& name) const {
    return entry(name).size();
  }

  std::uint64_t checksum_of(const std::string& name) const {
    const LayoutEntry& e = entry(name);
    return checksum(values_.data() + e.offset, e.size());
  }

  bool same_layout(const ParamVector& other) const {
    if (layout_.size() != other.layout_.size()) return false;
    for (std::size_t i = 0; i < layout_.size(); ++i) {
      const LayoutEntry &a = layout_[i], &b = other.layout_[i];
      if (a.name != b.name || a.offset != b.offset || a.shape != b.shape)
        return false;
    }
    return values_.size() == other.values_.size();
  }

  // Same layout, all values zero. Used for gradients over this parameter set.
  ParamVector zeros_like() const {
    ParamVector g = *this;
    std::fill(g.values_.begin(), g.values_.end(), 0.0);
    return g;
  }

  void check_layout() const {
    std::size_t pos = 0;
    for (const LayoutEntry& e : layout_) {
      if (e.offset != pos)
        throw contract_error("ParamVector layout not contiguous at " + e.name);
      pos += e.size();
    }
    if (pos != values_.size())
      throw contract_error("ParamVector layout does not cover storage");
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open checkpoint for write: " + path);
    out.write("MDRL", 4);
    write_u32(out, kFormatVersion);
    write_u32(out, static_cast<std::uint32_t>(layout_.size()));
    for (const LayoutEntry& e : layout_) {
      write_u32(out, static_cast<std::uint32_t>(e.name.size()));
      out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      write_u64(out, e.offset);
      write_u32(out, static_cast<std::uint32_t>(e.shape.size()));
      for (std::size_t d : e.shape) write_u64(out, d);
    }
    write_u64(out, values_.size());
    // raw little-endian 64-bit reals (build targets are little-endian)
    out.write(reinterpret_cast<const char*>(values_.data()),
              static_cast<std::streamsize>(values_.size() * sizeof(double)));
    if (!out) throw config_error("checkpoint write failed: " + path);
  }

  static ParamVector load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw artifact_missing_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MDRL", 4) != 0)
      throw config_error("bad checkpoint magic in " + path);
    std::uint32_t version = read_u32(in);
    if (version != kFormatVersion)
      throw config_error("unsupported checkpoint version in " + path);
    ParamVector pv;
    std::uint32_t n_entries = read_u32(in);
    for (std::uint32_t i = 0; i < n_entries; ++i) {
      LayoutEntry e;
      std::uint32_t name_len = read_u32(in);
      e.name.resize(name_len);
      in.read(e.name.data(), name_len);
      e.offset = read_u64(in);
      std::uint32_t ndims = read_u32(in);
      e.shape.resize(ndims);
      for (std::uint32_t d = 0; d < ndims; ++d) e.shape[d] = read_u64(in);
      pv.index_[e.name] = pv.layout_.size();
      pv.layout_.push_back(std::move(e));
    }
    std::uint64_t n_values = read_u64(in);
    pv.values_.resize(n_values);
    in.read(reinterpret_cast<char*>(pv.values_.data()),
            static_cast<std::streamsize>(n_values * sizeof(double)));
    if (!in) throw config_error("truncated checkpoint: " + path);
    pv.check_layout();
    return pv;
  }

 private:
  static constexpr std::uint32_t kFormatVersion = 1;

  static void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  static std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }

  std::vector<double> values_;
  std::vector<LayoutEntry> layout_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mdrl
