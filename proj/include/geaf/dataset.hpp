#pragma once

// CSV ingestion, label remapping, seeded splitting and train-only standardization.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "geaf/error.hpp"
#include "geaf/matrix.hpp"

namespace geaf {

struct Dataset {
    std::string name;
    Matrix features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

enum class LabelMode : std::uint8_t {
    tokens,   // positive_label -> 1, negative_label -> 0
    numeric,  // 0 -> 0, any other finite number -> 1
};

enum class HeaderMode : std::uint8_t { absent, present, detect };

struct DatasetSchema {
    std::string name;
    int label_column = -1;  // negative counts from the end
    LabelMode label_mode = LabelMode::tokens;
    std::string positive_label = "1";
    std::string negative_label = "0";
    std::vector<int> drop_columns;           // identifier columns
    HeaderMode header = HeaderMode::detect;
    std::optional<std::string> missing_token;  // rows containing it are skipped
    // Published dimensions of the dataset, for reference and sanity checks.
    std::size_t table_attributes = 0;
    std::size_t table_instances = 0;
};

/// Schemas for the four benchmark datasets, as distributed by UCI.
inline std::optional<DatasetSchema> bundled_schema(std::string_view name) {
    DatasetSchema s;
    if (name == "heart") {
        // processed.cleveland.data: 13 attributes + diagnosis 0..4
        s = {"heart", 13, LabelMode::numeric, "1", "0", {}, HeaderMode::detect, "?", 14, 303};
    } else if (name == "pima") {
        s = {"pima", 8, LabelMode::numeric, "1", "0", {}, HeaderMode::detect, std::nullopt, 9, 768};
    } else if (name == "sonar") {
        s = {"sonar", 60, LabelMode::tokens, "M", "R", {}, HeaderMode::detect, std::nullopt, 60, 208};
    } else if (name == "wbcd") {
        // wdbc.data: id, diagnosis, 30 real-valued features
        s = {"wbcd", 1, LabelMode::tokens, "M", "B", {0}, HeaderMode::detect, std::nullopt, 32, 569};
    } else {
        return std::nullopt;
    }
    return s;
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        auto comma = line.find(',', pos);
        std::string_view f = line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
        while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
        if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
        out.push_back(f);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

/// Parses CSV text under `schema`. `source` names the input in error messages.
inline Dataset parse_csv(std::string_view text, const DatasetSchema& schema, const std::string& source = "<csv>") {
    if (schema.label_mode == LabelMode::tokens && schema.positive_label == schema.negative_label)
        throw DatasetError(source + ": positive and negative label tokens must differ");

    Dataset ds;
    ds.name = schema.name;
    std::vector<double> values;
    std::size_t n_cols = 0;
    std::size_t label_idx = 0;
    std::vector<bool> is_feature;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool first_record = true;

    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

        const auto fields = detail::split_csv(line);
        if (first_record) {
            n_cols = fields.size();
            const long li = schema.label_column < 0 ? static_cast<long>(n_cols) + schema.label_column : schema.label_column;
            if (li < 0 || li >= static_cast<long>(n_cols))
                throw DatasetError(source + ": label column " + std::to_string(schema.label_column) + " out of range for " +
                                   std::to_string(n_cols) + " columns");
            label_idx = static_cast<std::size_t>(li);
            is_feature.assign(n_cols, true);
            is_feature[label_idx] = false;
            for (int d : schema.drop_columns) {
                const long di = d < 0 ? static_cast<long>(n_cols) + d : d;
                if (di < 0 || di >= static_cast<long>(n_cols))
                    throw DatasetError(source + ": drop column " + std::to_string(d) + " out of range");
                is_feature[static_cast<std::size_t>(di)] = false;
            }
            ds.features.cols = static_cast<std::size_t>(std::count(is_feature.begin(), is_feature.end(), true));
            first_record = false;

            bool header = schema.header == HeaderMode::present;
            if (schema.header == HeaderMode::detect) {
                for (std::size_t c = 0; c < n_cols && !header; ++c)
                    if (is_feature[c] && !detail::parse_double(fields[c]) &&
                        !(schema.missing_token && fields[c] == *schema.missing_token))
                        header = true;
            }
            if (header) continue;
        }

        if (fields.size() != n_cols)
            throw DatasetError(source + ": malformed row at line " + std::to_string(line_no) + ": expected " +
                               std::to_string(n_cols) + " fields, got " + std::to_string(fields.size()));
        if (schema.missing_token &&
            std::find(fields.begin(), fields.end(), std::string_view(*schema.missing_token)) != fields.end())
            continue;

        for (std::size_t c = 0; c < n_cols; ++c) {
            if (!is_feature[c]) continue;
            auto v = detail::parse_double(fields[c]);
            if (!v)
                throw DatasetError(source + ": malformed row at line " + std::to_string(line_no) + ": column " +
                                   std::to_string(c) + " value '" + std::string(fields[c]) + "' is not numeric");
            values.push_back(*v);
        }

        const std::string_view lab = fields[label_idx];
        int y = 0;
        if (schema.label_mode == LabelMode::tokens) {
            if (lab == schema.positive_label) {
                y = 1;
            } else if (lab == schema.negative_label) {
                y = 0;
            } else {
                throw DatasetError(source + ": unknown label token '" + std::string(lab) + "' at line " +
                                   std::to_string(line_no));
            }
        } else {
            auto v = detail::parse_double(lab);
            if (!v)
                throw DatasetError(source + ": unknown label token '" + std::string(lab) + "' at line " +
                                   std::to_string(line_no));
            y = *v == 0.0 ? 0 : 1;
        }
        ds.labels.push_back(y);
    }

    ds.features.rows = ds.labels.size();
    ds.features.data = std::move(values);
    if (ds.labels.empty()) throw DatasetError(source + ": no data rows");
    return ds;
}

inline Dataset load_csv(const std::string& path, const DatasetSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open dataset file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), schema, path);
}

struct DataPart {
    Matrix X;
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
};

struct Split {
    DataPart train;
    DataPart validation;
    DataPart test;
    std::uint64_t seed = 0;
    // Row indices into the source dataset.
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> validation_rows;
    std::vector<std::size_t> test_rows;
};

/// Seeded shuffle; the last floor(n * test_fraction) rows become the test part
/// and, of the rest, the last floor(m * val_fraction_of_train) the validation part.
inline Split shuffle_split(const Dataset& ds, std::uint64_t seed, double test_fraction = 0.25,
                           double val_fraction_of_train = 0.20) {
    const std::size_t n = ds.size();
    if (n < 10) throw DatasetError("dataset '" + ds.name + "' has " + std::to_string(n) + " instances; at least 10 required");
    if (!(test_fraction > 0.0 && test_fraction < 1.0) || !(val_fraction_of_train >= 0.0 && val_fraction_of_train < 1.0))
        throw DatasetError("split fractions out of range");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test_fraction));
    const std::size_t rest = n - n_test;
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(rest) * val_fraction_of_train));
    const std::size_t n_train = rest - n_val;

    Split s;
    s.seed = seed;
    s.train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.begin() + static_cast<std::ptrdiff_t>(rest));
    s.test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(rest), perm.end());

    auto fill = [&ds](DataPart& part, const std::vector<std::size_t>& rows) {
        part.X = ds.features.select_rows(rows);
        part.y.reserve(rows.size());
        for (auto r : rows) part.y.push_back(ds.labels[r]);
    };
    fill(s.train, s.train_rows);
    fill(s.validation, s.validation_rows);
    fill(s.test, s.test_rows);
    return s;
}

/// Per-feature z-score fitted on training rows only.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;  // 1 where the training deviation is degenerate

    static Standardizer fit(const Matrix& X) {
        Standardizer st;
        st.mean.assign(X.cols, 0.0);
        st.scale.assign(X.cols, 1.0);
        if (X.rows == 0) return st;
        for (std::size_t c = 0; c < X.cols; ++c) {
            double m = 0.0;
            for (std::size_t r = 0; r < X.rows; ++r) m += X(r, c);
            m /= static_cast<double>(X.rows);
            double var = 0.0;
            for (std::size_t r = 0; r < X.rows; ++r) var += (X(r, c) - m) * (X(r, c) - m);
            const double sd = std::sqrt(var / static_cast<double>(X.rows));
            st.mean[c] = m;
            st.scale[c] = sd < 1e-12 ? 1.0 : sd;
        }
        return st;
    }

    Matrix apply(Matrix X) const {
        for (std::size_t r = 0; r < X.rows; ++r)
            for (std::size_t c = 0; c < X.cols; ++c) X(r, c) = (X(r, c) - mean[c]) / scale[c];
        return X;
    }
};

inline Split standardize(Split s) {
    if (s.train.size() == 0) throw DatasetError("standardize: empty training part");
    const Standardizer st = Standardizer::fit(s.train.X);
    s.train.X = st.apply(std::move(s.train.X));
    s.validation.X = st.apply(std::move(s.validation.X));
    s.test.X = st.apply(std::move(s.test.X));
    return s;
}

}  // namespace geaf
