#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "panelcrypt/panel_store.hpp"

namespace fixture {

namespace fs = std::filesystem;
using panelcrypt::Date;
using panelcrypt::Field;

inline fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("panelcrypt_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline panelcrypt::Observation bar(Date d, double close, double range = 0.02, double volume = 1e6,
                                   double mcap = 1e9, double attention = 20.0) {
  panelcrypt::Observation o;
  o.date = d;
  o.set(Field::open, close);
  o.set(Field::close, close);
  o.set(Field::high, close * (1.0 + range / 2));
  o.set(Field::low, close * (1.0 - range / 2));
  o.set(Field::volume, volume);
  o.set(Field::mcap, mcap);
  o.set(Field::attention, attention);
  return o;
}

inline panelcrypt::EntityMeta meta(const std::string& symbol, bool hyfi, Date listing,
                                   std::array<double, 5> gini = {0.5, 0.5, 0.5, 0.5, 0.5}) {
  return {symbol, hyfi ? "payment" : "defi", hyfi, listing, gini};
}

inline std::vector<panelcrypt::MarketRow> market(Date start, int days, double level = 100.0) {
  std::vector<panelcrypt::MarketRow> m;
  for (int i = 0; i < days; ++i)
    m.push_back({start + i, level * (1.0 + 0.01 * ((i * 7) % 5 - 2)), i % 3 == 0 ? 1000.0 : 0.0});
  return m;
}

}  // namespace fixture
