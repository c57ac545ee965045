#pragma once

// Loading, validation and slicing of the unbalanced daily panel.
//
// Three inputs make up a panel: one CSV per entity with daily OHLCV rows, a
// market CSV carrying the index level and fraud losses, and a metadata CSV
// with one row per entity. The consolidated panel file bundles all three in
// a sectioned CSV so later subcommands need only one path.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "panelcrypt/core/csv.hpp"
#include "panelcrypt/core/date.hpp"
#include "panelcrypt/core/error.hpp"
#include "panelcrypt/core/series.hpp"

namespace panelcrypt {

enum class Field : std::uint8_t { open, high, low, close, volume, mcap, attention };

inline constexpr std::array<Field, 7> kAllFields{Field::open,   Field::high, Field::low,
                                                 Field::close,  Field::volume, Field::mcap,
                                                 Field::attention};

inline constexpr std::string_view field_name(Field f) {
  constexpr std::array<std::string_view, 7> names{"open",   "high", "low",      "close",
                                                  "volume", "mcap", "attention"};
  return names[static_cast<std::size_t>(f)];
}

inline std::optional<Field> parse_field(std::string_view s) {
  for (Field f : kAllFields)
    if (field_name(f) == s) return f;
  return std::nullopt;
}

// Order of the five decentralization components.
inline constexpr std::array<std::string_view, 5> kGiniDimensions{"network", "wealth", "node",
                                                                 "code", "information"};

struct EntityMeta {
  std::string symbol;
  std::string category;
  bool hyfi = false;
  Date listing_date;
  std::array<double, 5> gini_components{};
};

struct Observation {
  Date date;
  std::array<double, 7> value{};
  std::uint8_t mask = 0;  // bit i set when field i is present

  bool has(Field f) const noexcept { return (mask >> static_cast<unsigned>(f)) & 1u; }

  std::optional<double> get(Field f) const {
    if (!has(f)) return std::nullopt;
    return value[static_cast<std::size_t>(f)];
  }

  void set(Field f, std::optional<double> v) {
    const auto bit = static_cast<std::uint8_t>(1u << static_cast<unsigned>(f));
    if (v) {
      value[static_cast<std::size_t>(f)] = *v;
      mask |= bit;
    } else {
      value[static_cast<std::size_t>(f)] = 0.0;
      mask &= static_cast<std::uint8_t>(~bit);
    }
  }

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct MarketRow {
  Date date;
  std::optional<double> index_level;
  std::optional<double> shock_loss;

  friend bool operator==(const MarketRow&, const MarketRow&) = default;
};

struct EntityData {
  EntityMeta meta;
  std::vector<Observation> rows;
};

inline bool operator==(const EntityMeta& a, const EntityMeta& b) {
  return a.symbol == b.symbol && a.category == b.category && a.hyfi == b.hyfi &&
         a.listing_date == b.listing_date && a.gini_components == b.gini_components;
}

// Checks the per-row invariants of an observation. Returns an error message or
// an empty string.
inline std::string check_observation(const Observation& o) {
  for (Field f : {Field::open, Field::high, Field::low, Field::close}) {
    if (auto v = o.get(f); v && !(*v > 0.0))
      return std::string(field_name(f)) + " must be strictly positive";
  }
  if (auto v = o.get(Field::volume); v && *v < 0.0) return "volume must be nonnegative";
  if (auto v = o.get(Field::mcap); v && !(*v > 0.0)) return "mcap must be strictly positive";
  if (auto v = o.get(Field::attention); v && (*v < 0.0 || *v > 100.0))
    return "attention must lie in [0, 100]";
  const auto hi = o.get(Field::high), lo = o.get(Field::low);
  if (hi && lo && *hi < *lo) return "high is below low";
  for (Field f : {Field::open, Field::close}) {
    if (auto v = o.get(f)) {
      if (hi && *hi < *v) return "high is below " + std::string(field_name(f));
      if (lo && *lo > *v) return "low is above " + std::string(field_name(f));
    }
  }
  return {};
}

inline std::string check_meta(const EntityMeta& m) {
  if (m.symbol.empty()) return "empty symbol";
  for (std::size_t k = 0; k < 5; ++k) {
    const double g = m.gini_components[k];
    if (!(g >= 0.0 && g <= 1.0))
      return "gini_" + std::string(kGiniDimensions[k]) + " must lie in [0, 1]";
  }
  return {};
}

// Immutable, validated panel. Entities keep the order they were supplied in.
class PanelDataset {
 public:
  PanelDataset() = default;

  PanelDataset(std::vector<EntityData> entities, std::vector<MarketRow> market)
      : entities_(std::move(entities)), market_(std::move(market)) {
    validate();
    std::set<Date> cal;
    for (const auto& e : entities_)
      for (const auto& o : e.rows) cal.insert(o.date);
    calendar_.assign(cal.begin(), cal.end());
  }

  const std::vector<EntityData>& entities() const noexcept { return entities_; }
  const std::vector<MarketRow>& market() const noexcept { return market_; }
  const std::vector<Date>& calendar() const noexcept { return calendar_; }

  bool empty() const noexcept { return entities_.empty(); }
  std::size_t entity_count() const noexcept { return entities_.size(); }

  std::size_t observation_count() const {
    std::size_t n = 0;
    for (const auto& e : entities_) n += e.rows.size();
    return n;
  }

  std::optional<std::size_t> find(std::string_view symbol) const {
    for (std::size_t i = 0; i < entities_.size(); ++i)
      if (entities_[i].meta.symbol == symbol) return i;
    return std::nullopt;
  }

  const EntityData& entity(std::string_view symbol) const {
    if (auto i = find(symbol)) return entities_[*i];
    throw DomainError("unknown entity '" + std::string(symbol) + "'");
  }

  friend bool operator==(const PanelDataset& a, const PanelDataset& b) {
    if (a.entities_.size() != b.entities_.size() || a.market_ != b.market_) return false;
    for (std::size_t i = 0; i < a.entities_.size(); ++i) {
      if (!(a.entities_[i].meta == b.entities_[i].meta) ||
          a.entities_[i].rows != b.entities_[i].rows)
        return false;
    }
    return true;
  }

 private:
  void validate() const {
    std::set<std::string> seen;
    for (const auto& e : entities_) {
      if (auto msg = check_meta(e.meta); !msg.empty())
        throw DomainError("entity " + e.meta.symbol + ": " + msg);
      if (!seen.insert(e.meta.symbol).second)
        throw DomainError("duplicate entity symbol '" + e.meta.symbol + "'");
      for (std::size_t i = 0; i < e.rows.size(); ++i) {
        const auto& o = e.rows[i];
        if (i > 0 && !(e.rows[i - 1].date < o.date))
          throw DomainError("entity " + e.meta.symbol + ": dates not strictly increasing at " +
                            o.date.iso());
        if (auto msg = check_observation(o); !msg.empty())
          throw DomainError("entity " + e.meta.symbol + " on " + o.date.iso() + ": " + msg);
      }
      if (!e.rows.empty() && e.rows.front().date < e.meta.listing_date)
        throw DomainError("entity " + e.meta.symbol + ": first observation precedes listing date");
    }
    for (std::size_t i = 0; i < market_.size(); ++i) {
      const auto& m = market_[i];
      if (i > 0 && !(market_[i - 1].date < m.date))
        throw DomainError("market series: dates not strictly increasing at " + m.date.iso());
      if (m.index_level && !(*m.index_level > 0.0))
        throw DomainError("market series on " + m.date.iso() + ": index_level must be positive");
      if (m.shock_loss && *m.shock_loss < 0.0)
        throw DomainError("market series on " + m.date.iso() + ": shock_loss must be nonnegative");
    }
  }

  std::vector<EntityData> entities_;
  std::vector<MarketRow> market_;
  std::vector<Date> calendar_;
};

namespace detail {

enum class DateStyle { iso_only, flexible };

inline Date read_date(const csv::Reader& r, const std::string& s, DateStyle style) {
  const auto d = style == DateStyle::iso_only ? try_parse_iso_date(s) : try_parse_date(s);
  if (!d) r.fail("unparseable date '" + s + "'");
  return *d;
}

inline std::optional<double> read_number(const csv::Reader& r, const std::string& s,
                                         std::string_view column) {
  if (s.empty()) return std::nullopt;
  auto v = csv::try_parse_double(s);
  if (!v) r.fail("unparseable numeric '" + s + "' in column " + std::string(column));
  return v;
}

inline bool read_bool(const csv::Reader& r, const std::string& s) {
  if (s == "1" || s == "true" || s == "TRUE" || s == "True") return true;
  if (s == "0" || s == "false" || s == "FALSE" || s == "False") return false;
  r.fail("unparseable boolean '" + s + "'");
}

inline Observation parse_observation(const csv::Reader& r, const csv::Row& row,
                                     const csv::Header& h, DateStyle style) {
  if (row.size() != h.size()) r.fail("expected " + std::to_string(h.size()) + " fields");
  Observation o;
  o.date = read_date(r, row[h.index("date")], style);
  for (Field f : kAllFields) {
    const auto name = std::string(field_name(f));
    o.set(f, read_number(r, row[h.index(name)], name));
  }
  if (auto msg = check_observation(o); !msg.empty()) r.fail(msg);
  return o;
}

inline std::vector<std::string> entity_columns() {
  std::vector<std::string> cols{"date"};
  for (Field f : kAllFields) cols.emplace_back(field_name(f));
  return cols;
}

inline std::vector<std::string> meta_columns() {
  std::vector<std::string> cols{"symbol", "category", "hyfi", "listing_date"};
  for (auto d : kGiniDimensions) cols.push_back("gini_" + std::string(d));
  return cols;
}

inline EntityMeta parse_meta(const csv::Reader& r, const csv::Row& row, const csv::Header& h,
                             DateStyle style) {
  if (row.size() != h.size()) r.fail("expected " + std::to_string(h.size()) + " fields");
  EntityMeta m;
  m.symbol = row[h.index("symbol")];
  m.category = row[h.index("category")];
  m.hyfi = read_bool(r, row[h.index("hyfi")]);
  m.listing_date = read_date(r, row[h.index("listing_date")], style);
  for (std::size_t k = 0; k < 5; ++k) {
    const std::string col = "gini_" + std::string(kGiniDimensions[k]);
    const auto v = read_number(r, row[h.index(col)], col);
    if (!v) r.fail("missing " + col);
    m.gini_components[k] = *v;
  }
  if (auto msg = check_meta(m); !msg.empty()) r.fail(msg);
  return m;
}

inline MarketRow parse_market(const csv::Reader& r, const csv::Row& row, const csv::Header& h,
                              DateStyle style) {
  if (row.size() != h.size()) r.fail("expected " + std::to_string(h.size()) + " fields");
  MarketRow m;
  m.date = read_date(r, row[h.index("date")], style);
  m.index_level = read_number(r, row[h.index("index_level")], "index_level");
  m.shock_loss = read_number(r, row[h.index("shock_loss")], "shock_loss");
  if (m.index_level && !(*m.index_level > 0.0)) r.fail("index_level must be positive");
  if (m.shock_loss && *m.shock_loss < 0.0) r.fail("shock_loss must be nonnegative");
  return m;
}

inline std::string cell(std::optional<double> v) { return v ? csv::format_double(*v) : ""; }

}  // namespace detail

inline std::vector<EntityMeta> load_meta(const std::filesystem::path& meta_file) {
  csv::Reader r(meta_file.string());
  csv::Row row;
  if (!r.next(row)) r.fail("empty file");
  const csv::Header h(row, detail::meta_columns(), r);
  std::vector<EntityMeta> out;
  std::set<std::string> seen;
  while (r.next(row)) {
    out.push_back(detail::parse_meta(r, row, h, detail::DateStyle::flexible));
    if (!seen.insert(out.back().symbol).second)
      r.fail("duplicate symbol '" + out.back().symbol + "'");
  }
  return out;
}

inline std::vector<MarketRow> load_market(const std::filesystem::path& market_file) {
  csv::Reader r(market_file.string());
  csv::Row row;
  if (!r.next(row)) r.fail("empty file");
  const csv::Header h(row, {"date", "index_level", "shock_loss"}, r);
  std::vector<MarketRow> out;
  while (r.next(row)) {
    out.push_back(detail::parse_market(r, row, h, detail::DateStyle::flexible));
    if (out.size() > 1 && !(out[out.size() - 2].date < out.back().date))
      r.fail("dates not strictly increasing");
  }
  return out;
}

// Reads one entity file. Rows are validated as they are read.
inline std::vector<Observation> load_entity_rows(const std::filesystem::path& file,
                                                 const EntityMeta& meta) {
  csv::Reader r(file.string());
  csv::Row row;
  if (!r.next(row)) r.fail("empty file");
  const csv::Header h(row, detail::entity_columns(), r);
  std::vector<Observation> out;
  while (r.next(row)) {
    out.push_back(detail::parse_observation(r, row, h, detail::DateStyle::flexible));
    if (out.size() > 1 && !(out[out.size() - 2].date < out.back().date))
      r.fail("dates not strictly increasing");
    if (out.size() == 1 && out.front().date < meta.listing_date)
      r.fail("first observation precedes listing date " + meta.listing_date.iso());
  }
  return out;
}

// Loads one file per entity; the file stem is the entity symbol and must have
// a metadata row. Entities are ordered as in the metadata file.
inline PanelDataset load_panel(std::span<const std::filesystem::path> entity_files,
                               const std::filesystem::path& market_file,
                               const std::filesystem::path& meta_file) {
  const auto metas = load_meta(meta_file);
  std::map<std::string, std::filesystem::path> by_symbol;
  for (const auto& f : entity_files) {
    const std::string sym = f.stem().string();
    if (!by_symbol.emplace(sym, f).second)
      throw LoadError(f.string(), 0, "duplicate entity file for " + sym);
    const bool known = std::any_of(metas.begin(), metas.end(),
                                   [&](const EntityMeta& m) { return m.symbol == sym; });
    if (!known) throw LoadError(f.string(), 0, "no metadata row for entity " + sym);
  }
  std::vector<EntityData> entities;
  for (const auto& m : metas) {
    auto it = by_symbol.find(m.symbol);
    if (it == by_symbol.end())
      throw LoadError(meta_file.string(), 0, "no entity file for " + m.symbol);
    entities.push_back({m, load_entity_rows(it->second, m)});
  }
  return PanelDataset(std::move(entities), load_market(market_file));
}

// All *.csv files in `dir`, sorted by name.
inline std::vector<std::filesystem::path> entity_files_in(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw LoadError(dir.string(), 0, "not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

// Consolidated panel file: a CSV in three sections, each introduced by a
// bracketed marker line.
//
//   [meta]          symbol,category,hyfi,listing_date,gini_network,...
//   [market]        date,index_level,shock_loss
//   [observations]  entity,date,open,high,low,close,volume,mcap,attention
//
// Numbers are written with 17 significant digits so a reload is bit-exact.
inline void write_panel(const PanelDataset& panel, const std::filesystem::path& out_file) {
  std::ofstream out(out_file);
  if (!out) throw Error("cannot write " + out_file.string());
  out << "[meta]\n" << csv::join(detail::meta_columns()) << '\n';
  for (const auto& e : panel.entities()) {
    const auto& m = e.meta;
    csv::Row row{m.symbol, m.category, m.hyfi ? "1" : "0", m.listing_date.iso()};
    for (double g : m.gini_components) row.push_back(csv::format_double(g));
    out << csv::join(row) << '\n';
  }
  out << "[market]\ndate,index_level,shock_loss\n";
  for (const auto& m : panel.market())
    out << m.date.iso() << ',' << detail::cell(m.index_level) << ','
        << detail::cell(m.shock_loss) << '\n';
  out << "[observations]\nentity," << csv::join(detail::entity_columns()) << '\n';
  for (const auto& e : panel.entities()) {
    for (const auto& o : e.rows) {
      out << csv::quote(e.meta.symbol) << ',' << o.date.iso();
      for (Field f : kAllFields) out << ',' << detail::cell(o.get(f));
      out << '\n';
    }
  }
}

inline PanelDataset read_panel(const std::filesystem::path& file) {
  csv::Reader r(file.string());
  std::string line;
  enum class Section { none, meta, market, observations } section = Section::none;
  std::optional<csv::Header> header;
  std::vector<EntityMeta> metas;
  std::vector<MarketRow> market;
  std::map<std::string, std::vector<Observation>> rows;
  bool expect_header = false;
  using detail::DateStyle;
  while (r.next_line(line)) {
    const std::string t = csv::trim(line);
    if (t == "[meta]" || t == "[market]" || t == "[observations]") {
      section = t == "[meta]" ? Section::meta
                : t == "[market]" ? Section::market
                                  : Section::observations;
      expect_header = true;
      continue;
    }
    if (section == Section::none) r.fail("content before the first section marker");
    auto row = csv::split(line);
    for (auto& f : row) f = csv::trim(f);
    if (expect_header) {
      std::vector<std::string> req;
      if (section == Section::meta) req = detail::meta_columns();
      else if (section == Section::market) req = {"date", "index_level", "shock_loss"};
      else {
        req = detail::entity_columns();
        req.insert(req.begin(), "entity");
      }
      header.emplace(row, req, r);
      expect_header = false;
      continue;
    }
    switch (section) {
      case Section::meta:
        metas.push_back(detail::parse_meta(r, row, *header, DateStyle::iso_only));
        break;
      case Section::market:
        market.push_back(detail::parse_market(r, row, *header, DateStyle::iso_only));
        if (market.size() > 1 && !(market[market.size() - 2].date < market.back().date))
          r.fail("market dates not strictly increasing");
        break;
      case Section::observations: {
        const std::string sym = row.at(header->index("entity"));
        auto& v = rows[sym];
        v.push_back(detail::parse_observation(r, row, *header, DateStyle::iso_only));
        if (v.size() > 1 && !(v[v.size() - 2].date < v.back().date))
          r.fail("dates not strictly increasing for entity " + sym);
        break;
      }
      case Section::none:
        break;
    }
  }
  std::vector<EntityData> entities;
  for (auto& m : metas) {
    auto it = rows.find(m.symbol);
    std::vector<Observation> obs;
    if (it != rows.end()) {
      obs = std::move(it->second);
      rows.erase(it);
    }
    entities.push_back({std::move(m), std::move(obs)});
  }
  if (!rows.empty())
    throw LoadError(file.string(), 0, "observations for unknown entity " + rows.begin()->first);
  return PanelDataset(std::move(entities), std::move(market));
}

// Writes the three-file layout accepted by load_panel: <dir>/meta.csv,
// <dir>/market.csv and <dir>/entities/<SYMBOL>.csv.
inline void write_panel_files(const PanelDataset& panel, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "entities");
  {
    std::ofstream out(dir / "meta.csv");
    out << csv::join(detail::meta_columns()) << '\n';
    for (const auto& e : panel.entities()) {
      const auto& m = e.meta;
      csv::Row row{m.symbol, m.category, m.hyfi ? "1" : "0", m.listing_date.iso()};
      for (double g : m.gini_components) row.push_back(csv::format_double(g));
      out << csv::join(row) << '\n';
    }
  }
  {
    std::ofstream out(dir / "market.csv");
    out << "date,index_level,shock_loss\n";
    for (const auto& m : panel.market())
      out << m.date.iso() << ',' << detail::cell(m.index_level) << ','
          << detail::cell(m.shock_loss) << '\n';
  }
  for (const auto& e : panel.entities()) {
    std::ofstream out(dir / "entities" / (e.meta.symbol + ".csv"));
    out << csv::join(detail::entity_columns()) << '\n';
    for (const auto& o : e.rows) {
      out << o.date.iso();
      for (Field f : kAllFields) out << ',' << detail::cell(o.get(f));
      out << '\n';
    }
  }
}

// Observations and market rows inside [start, end]. Entities left without
// rows are dropped.
inline PanelDataset subsample(const PanelDataset& panel, Date start, Date end) {
  if (end < start) throw DomainError("subsample: start date after end date");
  std::vector<EntityData> entities;
  for (const auto& e : panel.entities()) {
    EntityData kept{e.meta, {}};
    for (const auto& o : e.rows)
      if (!(o.date < start) && !(end < o.date)) kept.rows.push_back(o);
    if (!kept.rows.empty()) entities.push_back(std::move(kept));
  }
  std::vector<MarketRow> market;
  for (const auto& m : panel.market())
    if (!(m.date < start) && !(end < m.date)) market.push_back(m);
  return PanelDataset(std::move(entities), std::move(market));
}

// Pseudo-entity name under which series() exposes the market file.
inline constexpr std::string_view kMarketEntity = "MARKET";

// One field of one entity in date order, with its presence mask.
inline Series series(const PanelDataset& panel, std::string_view symbol, std::string_view field) {
  Series s;
  if (symbol == kMarketEntity) {
    if (field != "index_level" && field != "shock_loss")
      throw DomainError("unknown market field '" + std::string(field) + "'");
    for (const auto& m : panel.market())
      s.push(m.date, field == "index_level" ? m.index_level : m.shock_loss);
    return s;
  }
  const auto f = parse_field(field);
  if (!f) throw DomainError("unknown field '" + std::string(field) + "'");
  const auto& e = panel.entity(symbol);
  for (const auto& o : e.rows) s.push(o.date, o.get(*f));
  return s;
}

}  // namespace panelcrypt
