#include <gtest/gtest.h>

#include "oracles/fixtures.hpp"
#include "panelcrypt/core/csv.hpp"
#include "panelcrypt/core/date.hpp"
#include "panelcrypt/core/linalg.hpp"
#include "panelcrypt/panel_store.hpp"

using namespace panelcrypt;
namespace fs = std::filesystem;

TEST(Date, ParsesIsoAndDayFirstForms) {
  EXPECT_EQ(parse_date("2022-05-07"), Date(2022, 5, 7));
  EXPECT_EQ(parse_date("07.05.2022"), Date(2022, 5, 7));
  EXPECT_FALSE(try_parse_iso_date("07.05.2022"));
  EXPECT_FALSE(try_parse_date("2022-02-30"));
  EXPECT_EQ(Date(2022, 5, 7) - Date(2020, 1, 1), 857);
  EXPECT_EQ((Date(2024, 2, 28) + 1).iso(), "2024-02-29");
}

TEST(Csv, SplitHandlesQuotesAndRoundTripsDoubles) {
  const auto r = csv::split(R"(a,"b,c","d""e",)");
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[1], "b,c");
  EXPECT_EQ(r[2], "d\"e");
  EXPECT_EQ(r[3], "");
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 123456789.123456789})
    EXPECT_EQ(*csv::try_parse_double(csv::format_double(v)), v);
  EXPECT_FALSE(csv::try_parse_double("1.5x"));
}

TEST(LeastSquares, TwoPointExactSolve) {
  Eigen::MatrixXd X(2, 2);
  X << 1, 0, 1, 1;
  Eigen::VectorXd y(2);
  y << 1, 3;
  const auto ls = linalg::least_squares(X, y);
  EXPECT_NEAR(ls.beta(0), 1.0, 1e-14);
  EXPECT_NEAR(ls.beta(1), 2.0, 1e-14);
}

TEST(LeastSquares, DuplicatedColumnNamesBothColumns) {
  Eigen::MatrixXd X(4, 3);
  X << 1, 2, 2, 1, 3, 3, 1, 5, 5, 1, 7, 7;
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  try {
    linalg::least_squares(X, y, {"Intercept", "a", "b"});
    FAIL() << "expected rank deficiency";
  } catch (const RankDeficiencyError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("a"), std::string::npos);
    EXPECT_NE(msg.find("b"), std::string::npos);
    EXPECT_EQ(msg.find("Intercept"), std::string::npos);
  }
}

namespace {

PanelDataset two_entity_panel() {
  const Date d0(2021, 1, 1);
  EntityData a{fixture::meta("AAA", true, d0), {}};
  EntityData b{fixture::meta("BBB", false, d0 + 2), {}};
  for (int i = 0; i < 10; ++i) a.rows.push_back(fixture::bar(d0 + i, 100.0 + i, 0.03));
  for (int i = 2; i < 10; ++i)
    if (i != 5) b.rows.push_back(fixture::bar(d0 + i, 10.0 + 0.1 * i));
  b.rows[1].set(Field::attention, std::nullopt);
  return PanelDataset({a, b}, fixture::market(d0, 10));
}

}  // namespace

TEST(PanelStore, WriteAndReloadIsBitwiseIdentical) {
  const auto dir = fixture::scratch("roundtrip");
  const auto p = two_entity_panel();
  write_panel_files(p, dir);
  const auto files = entity_files_in(dir / "entities");
  const auto loaded = load_panel(files, dir / "market.csv", dir / "meta.csv");
  EXPECT_TRUE(loaded == p);
  write_panel(loaded, dir / "panel.csv");
  EXPECT_TRUE(read_panel(dir / "panel.csv") == p);
}

TEST(PanelStore, DayFirstDatesAreNormalizedOnIngest) {
  const auto dir = fixture::scratch("dayfirst");
  fixture::write_text(dir / "meta.csv",
                      "symbol,category,hyfi,listing_date,gini_network,gini_wealth,gini_node,gini_code,gini_information\n"
                      "ZZZ,defi,0,01.02.2021,0.1,0.2,0.3,0.4,0.5\n");
  fixture::write_text(dir / "market.csv", "date,index_level,shock_loss\n01.02.2021,100,0\n02.02.2021,101,5\n");
  fixture::write_text(dir / "entities/ZZZ.csv",
                      "date,open,high,low,close,volume,mcap,attention\n"
                      "01.02.2021,1,1.1,0.9,1,10,100,5\n02.02.2021,1,1.2,0.95,1.1,10,110,\n");
  const auto files = entity_files_in(dir / "entities");
  const auto p = load_panel(files, dir / "market.csv", dir / "meta.csv");
  ASSERT_EQ(p.entity_count(), 1u);
  EXPECT_EQ(p.entities()[0].rows[1].date, Date(2021, 2, 2));
  EXPECT_FALSE(p.entities()[0].rows[1].has(Field::attention));
  write_panel(p, dir / "panel.csv");
  EXPECT_NE(fixture::slurp(dir / "panel.csv").find("2021-02-02"), std::string::npos);
}

TEST(PanelStore, HighBelowLowNamesTheRow) {
  const auto dir = fixture::scratch("badrow");
  fixture::write_text(dir / "meta.csv",
                      "symbol,category,hyfi,listing_date,gini_network,gini_wealth,gini_node,gini_code,gini_information\n"
                      "ZZZ,defi,0,2021-02-01,0.1,0.2,0.3,0.4,0.5\n");
  fixture::write_text(dir / "market.csv", "date,index_level,shock_loss\n2021-02-01,100,0\n");
  fixture::write_text(dir / "entities/ZZZ.csv",
                      "date,open,high,low,close,volume,mcap,attention\n"
                      "2021-02-01,1,1.1,0.9,1,10,100,5\n2021-02-02,1,0.8,0.9,0.85,10,110,5\n");
  try {
    const auto files = entity_files_in(dir / "entities");
    load_panel(files, dir / "market.csv", dir / "meta.csv");
    FAIL() << "expected a load error";
  } catch (const LoadError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("high"), std::string::npos);
  }
}

TEST(PanelStore, SingleRowEntityIsValid) {
  const Date d0(2021, 1, 1);
  PanelDataset p({EntityData{fixture::meta("ONE", false, d0), {fixture::bar(d0, 5.0)}}}, fixture::market(d0, 1));
  EXPECT_EQ(p.entity_count(), 1u);
  EXPECT_EQ(p.observation_count(), 1u);
}

TEST(PanelStore, SubsampleIsIdempotentAndFullRangeIsIdentity) {
  const auto p = two_entity_panel();
  const Date a(2021, 1, 3), b(2021, 1, 7);
  const auto once = subsample(p, a, b);
  EXPECT_TRUE(subsample(once, a, b) == once);
  EXPECT_TRUE(subsample(p, Date(2020, 1, 1), Date(2030, 1, 1)) == p);
  EXPECT_TRUE(subsample(p, Date(2019, 1, 1), Date(2019, 12, 31)).empty());
  EXPECT_THROW(subsample(p, b, a), DomainError);
}

TEST(PanelStore, SeriesFollowsCalendarWithMask) {
  const auto p = two_entity_panel();
  const auto s = series(p, "BBB", "attention");
  ASSERT_EQ(s.size(), 7u);
  EXPECT_EQ(s.dates.front(), Date(2021, 1, 3));
  EXPECT_FALSE(s.at(1).has_value());
  EXPECT_EQ(series(p, "MARKET", "index_level").size(), 10u);
  EXPECT_THROW(series(p, "NOPE", "close"), DomainError);
  EXPECT_THROW(series(p, "AAA", "colour"), DomainError);
}
