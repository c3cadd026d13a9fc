#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "support.hpp"

using namespace geaf;
using Catch::Approx;

namespace {

DatasetSchema tokens(const char* pos, const char* neg) {
    DatasetSchema s;
    s.name = "t";
    s.positive_label = pos;
    s.negative_label = neg;
    return s;
}

}  // namespace

TEST_CASE("bundled WBCD file loads with its published shape", "[dataset]") {
    const Dataset ds = testing::wbcd();
    CHECK(ds.size() == 569);
    CHECK(ds.features.cols == 30);
    CHECK(std::count(ds.labels.begin(), ds.labels.end(), 1) == 212);
}

TEST_CASE("heart rows with missing values are skipped and labels binarised", "[dataset]") {
    const Dataset ds = testing::heart();
    CHECK(ds.size() == 297);
    CHECK(ds.features.cols == 13);
    for (int y : ds.labels) CHECK((y == 0 || y == 1));
}

TEST_CASE("synthetic sonar fixture has the sonar shape", "[dataset]") {
    const Dataset ds = testing::synthetic_sonar();
    CHECK(ds.size() == 208);
    CHECK(ds.features.cols == 60);
    for (double v : ds.features.data) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("CSV errors are reported with context", "[dataset]") {
    const auto schema = *bundled_schema("sonar");
    SECTION("malformed row") {
        try {
            parse_csv("1,2,M\n1,M\n", tokens("M", "R"), "t.csv");
            FAIL("no exception");
        } catch (const DatasetError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SECTION("unknown label") {
        CHECK_THROWS_AS(parse_csv("1,2,M\n1,2,X\n", tokens("M", "R")), DatasetError);
    }
    SECTION("non-numeric feature") {
        CHECK_THROWS_AS(parse_csv("1,2,M\n1,abc,R\n", tokens("M", "R")), DatasetError);
    }
    SECTION("identical label tokens") {
        CHECK_THROWS_AS(parse_csv("1,2,M\n", tokens("M", "M")), DatasetError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_csv("/nonexistent/geaf.csv", schema), DatasetError);
    }
}

TEST_CASE("header rows are detected", "[dataset]") {
    const auto ds = parse_csv("a,b,label\n1,2,M\n3,4,R\n", tokens("M", "R"));
    CHECK(ds.size() == 2);
    CHECK(ds.features(1, 0) == 3.0);
}

TEST_CASE("split sizes follow the floor rule", "[split]") {
    const Dataset ds = testing::synthetic_sonar();
    const Split s = shuffle_split(ds, 42);
    CHECK(s.test.size() == 52);
    CHECK(s.validation.size() == 31);
    CHECK(s.train.size() == 125);

    std::vector<std::size_t> all;
    for (const auto* rows : {&s.train_rows, &s.validation_rows, &s.test_rows}) all.insert(all.end(), rows->begin(), rows->end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(208);
    std::iota(expect.begin(), expect.end(), std::size_t{0});
    CHECK(all == expect);
}

TEST_CASE("splits are deterministic per seed", "[split]") {
    const Dataset ds = testing::wbcd();
    CHECK(shuffle_split(ds, 7).train_rows == shuffle_split(ds, 7).train_rows);
    CHECK(shuffle_split(ds, 7).train_rows != shuffle_split(ds, 8).train_rows);
}

TEST_CASE("tiny datasets are rejected", "[split]") {
    const auto ds = parse_csv("1,M\n2,R\n3,M\n", tokens("M", "R"));
    CHECK_THROWS_AS(shuffle_split(ds, 1), DatasetError);
}

TEST_CASE("standardization uses training statistics only", "[standardize]") {
    const Dataset ds = testing::wbcd();
    const Split raw = shuffle_split(ds, 3);
    const Split st = standardize(raw);
    for (std::size_t c = 0; c < st.train.X.cols; ++c) {
        double m = 0.0;
        double v = 0.0;
        for (std::size_t r = 0; r < st.train.X.rows; ++r) m += st.train.X(r, c);
        m /= static_cast<double>(st.train.X.rows);
        for (std::size_t r = 0; r < st.train.X.rows; ++r) v += std::pow(st.train.X(r, c) - m, 2);
        v /= static_cast<double>(st.train.X.rows);
        CHECK(m == Approx(0.0).margin(1e-9));
        CHECK(v == Approx(1.0).epsilon(1e-9));
    }
    // Changing a test row must not move the fitted statistics.
    Split tampered = raw;
    tampered.test.X(0, 0) = 1e9;
    const Split st2 = standardize(tampered);
    CHECK(st2.train.X == st.train.X);
    CHECK(st2.validation.X == st.validation.X);
}

TEST_CASE("constant features are centred only", "[standardize]") {
    Matrix X(3, 2);
    X(0, 0) = 5;
    X(1, 0) = 5;
    X(2, 0) = 5;
    X(0, 1) = 1;
    X(1, 1) = 2;
    X(2, 1) = 3;
    const auto st = Standardizer::fit(X);
    const Matrix out = st.apply(X);
    CHECK(st.scale[0] == 1.0);
    CHECK(out(0, 0) == 0.0);
    CHECK(std::isfinite(out(0, 1)));
}
