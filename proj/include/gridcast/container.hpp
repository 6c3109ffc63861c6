#pragma once

// One container format for datasets, forecasts, and checkpoints: a text
// manifest (key-value lines) followed by named binary sections of
// little-endian 32-bit floats, each with a CRC32. Round-trips are bit-exact.

#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/forecast.hpp"
#include "gridcast/tensor.hpp"
#include "gridcast/toydata.hpp"

namespace gridcast {

std::uint32_t crc32(const void* data, std::size_t n);

struct Container {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> manifest;

  struct Section {
    std::string name;
    Shape dims;
    std::vector<float> data;
  };
  std::vector<Section> sections;

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::int64_t> get_ints(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, std::int64_t v);
  void set_double(const std::string& key, double v);
  void set_uint(const std::string& key, std::uint64_t v);
  void set_doubles(const std::string& key, const std::vector<double>& v);
  void set_ints(const std::string& key, const std::vector<std::int64_t>& v);

  const Section& section(const std::string& name) const;
  Section& add_section(const std::string& name, Shape dims);
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

// ------------------------------------------------------- typed containers

void save_dataset(const std::string& path, const TrajectoryDataset& data);
TrajectoryDataset load_dataset(const std::string& path);

void save_forecast(const std::string& path, const EnsembleForecast& ens);
EnsembleForecast load_forecast(const std::string& path);

}  // namespace gridcast
