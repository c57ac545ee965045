#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "panelcrypt/core/date.hpp"

namespace panelcrypt {

// Dated value sequence with an explicit presence mask. Masked entries keep a
// placeholder of 0.0 in `values` and must never be read as data.
struct Series {
  std::vector<Date> dates;
  std::vector<double> values;
  std::vector<bool> present;

  std::size_t size() const noexcept { return dates.size(); }
  bool empty() const noexcept { return dates.empty(); }

  void push(Date d, std::optional<double> v) {
    dates.push_back(d);
    values.push_back(v.value_or(0.0));
    present.push_back(v.has_value());
  }

  std::optional<double> at(std::size_t i) const {
    if (!present[i]) return std::nullopt;
    return values[i];
  }

  std::size_t count_present() const {
    std::size_t n = 0;
    for (bool p : present) n += p ? 1 : 0;
    return n;
  }

  std::vector<double> present_values() const {
    std::vector<double> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i)
      if (present[i]) out.push_back(values[i]);
    return out;
  }

  // Index of `d`, or nullopt. Dates are sorted ascending.
  std::optional<std::size_t> find(Date d) const {
    std::size_t lo = 0, hi = dates.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (dates[mid] < d) lo = mid + 1;
      else hi = mid;
    }
    if (lo < dates.size() && dates[lo] == d) return lo;
    return std::nullopt;
  }
};

}  // namespace panelcrypt
