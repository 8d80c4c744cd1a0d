#include "factorkit/panel.hpp"
#include "factorkit/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace factorkit {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a])))
        ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1])))
        --b;
    return s.substr(a, b - a);
}

// One pass RFC-4180-style record splitter. Quoted fields may contain the
// delimiter, newlines and doubled-quote escapes.
std::vector<std::vector<std::string>> split_records(const std::string& text, char delim) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_has_content = false;

    const auto end_field = [&]() {
        row.push_back(field);
        field.clear();
    };
    const auto end_row = [&]() {
        end_field();
        records.push_back(row);
        row.clear();
        row_has_content = false;
    };

    for (std::size_t p = 0; p < text.size(); ++p) {
        const char c = text[p];
        if (in_quotes) {
            if (c == '"') {
                if (p + 1 < text.size() && text[p + 1] == '"') {
                    field.push_back('"');
                    ++p;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
            row_has_content = true;
        } else if (c == delim) {
            end_field();
            row_has_content = true;
        } else if (c == '\n') {
            if (row_has_content || !field.empty() || !row.empty())
                end_row();
        } else if (c == '\r') {
            // swallowed; \r\n and bare \r both terminate via the \n branch
            if (p + 1 >= text.size() || text[p + 1] != '\n') {
                if (row_has_content || !field.empty() || !row.empty())
                    end_row();
            }
        } else {
            field.push_back(c);
            row_has_content = true;
        }
    }
    if (row_has_content || !field.empty() || !row.empty())
        end_row();
    return records;
}

bool is_missing(const std::string& raw, const std::vector<std::string>& tokens) {
    const std::string t = lower(trim(raw));
    for (const auto& tok : tokens)
        if (t == lower(tok))
            return true;
    return false;
}

bool parse_double(const std::string& raw, double* out) {
    const std::string t = trim(raw);
    if (t.empty())
        return false;
    const char* begin = t.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + t.size())
        return false;
    *out = v;
    return true;
}

int parse_code(const std::string& raw, const std::string& where) {
    const std::string t = trim(raw);
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size() || v < 1 || v > 7)
        throw ValidationError("transform code must be an integer in 1..7, got '" + raw +
                              "' for " + where);
    return static_cast<int>(v);
}

int code_lag(int code) {
    switch (code) {
    case 1:
    case 4:
        return 0;
    case 2:
    case 5:
        return 1;
    default:
        return 2; // codes 3, 6, 7
    }
}

} // namespace

void Panel::validate() const {
    if (values.rows() != mask.rows() || values.cols() != mask.cols())
        throw ValidationError("panel values and mask shapes differ");
    if (static_cast<int>(series_names.size()) != N())
        throw ValidationError("panel has " + std::to_string(N()) + " columns but " +
                              std::to_string(series_names.size()) + " series names");
    if (T() < 2 || N() < 2)
        throw ValidationError("panel must be at least 2 x 2, got " + std::to_string(T()) +
                              " x " + std::to_string(N()));
    if (!transform_codes.empty() && static_cast<int>(transform_codes.size()) != N())
        throw ValidationError("transform codes must cover every series");
    for (int i = 0; i < N(); ++i) {
        const long obs = mask.col(i).count();
        if (obs < 2)
            throw ValidationError("series '" + series_names[i] + "' has " +
                                  std::to_string(obs) + " observed values, need at least 2");
    }
    if (!values.allFinite())
        for (int i = 0; i < N(); ++i)
            for (int t = 0; t < T(); ++t)
                if (mask(t, i) && !std::isfinite(values(t, i)))
                    throw ValidationError("non-finite value at row " + std::to_string(t + 1) +
                                          ", series '" + series_names[i] + "'");
}

Panel ingest_csv_text(const std::string& text, const IngestOptions& opts) {
    const auto records = split_records(text, opts.delimiter);
    if (records.size() < 2)
        throw ValidationError("CSV needs a header row and at least one data row");

    const std::vector<std::string>& header = records[0];
    const int n = static_cast<int>(header.size());

    Panel panel;
    panel.series_names.reserve(header.size());
    for (const auto& h : header)
        panel.series_names.push_back(trim(h));

    std::size_t first_data = 1;
    if (opts.codes_row) {
        if (records.size() < 3)
            throw ValidationError("CSV with a transform-code row needs at least one data row");
        const auto& codes = records[1];
        if (static_cast<int>(codes.size()) != n)
            throw ValidationError("transform-code row has " + std::to_string(codes.size()) +
                                  " fields, expected " + std::to_string(n));
        panel.transform_codes.reserve(codes.size());
        for (int i = 0; i < n; ++i)
            panel.transform_codes.push_back(
                parse_code(codes[i], "series '" + panel.series_names[i] + "'"));
        first_data = 2;
    }

    const int t_rows = static_cast<int>(records.size() - first_data);
    panel.values = Eigen::MatrixXd::Zero(t_rows, n);
    panel.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(t_rows, n, true);

    for (int t = 0; t < t_rows; ++t) {
        const auto& row = records[first_data + t];
        const std::size_t csv_row = first_data + t + 1; // 1-based, counting the header
        if (static_cast<int>(row.size()) != n)
            throw ValidationError("row " + std::to_string(csv_row) + " has " +
                                  std::to_string(row.size()) + " fields, expected " +
                                  std::to_string(n));
        for (int i = 0; i < n; ++i) {
            if (is_missing(row[i], opts.missing_tokens)) {
                panel.mask(t, i) = false;
                continue;
            }
            double v = 0.0;
            if (!parse_double(row[i], &v))
                throw ValidationError("row " + std::to_string(csv_row) + ", series '" +
                                      panel.series_names[i] + "': cannot parse '" + row[i] +
                                      "' as a number");
            panel.values(t, i) = v;
        }
    }

    panel.validate();
    return panel;
}

Panel ingest_csv(const std::string& path, const IngestOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return ingest_csv_text(buf.str(), opts);
}

void load_transform_codes(Panel& panel, const std::string& path, char delimiter) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    auto records = split_records(buf.str(), delimiter);
    if (records.empty())
        throw ValidationError("transform-code file '" + path + "' is empty");

    // Optional header: skip the first record when its second field is not a code.
    std::size_t start = 0;
    if (records[0].size() >= 2) {
        const std::string t = trim(records[0][1]);
        char* end = nullptr;
        std::strtol(t.c_str(), &end, 10);
        if (t.empty() || end != t.c_str() + t.size())
            start = 1;
    }

    std::unordered_map<std::string, int> codes;
    for (std::size_t k = start; k < records.size(); ++k) {
        const auto& row = records[k];
        if (row.size() != 2)
            throw ValidationError("transform-code row " + std::to_string(k + 1) +
                                  " must have exactly (series_name, code)");
        const std::string name = trim(row[0]);
        if (codes.count(name))
            throw ValidationError("duplicate transform code for series '" + name + "'");
        codes[name] = parse_code(row[1], "series '" + name + "'");
    }

    panel.transform_codes.assign(panel.N(), 0);
    for (int i = 0; i < panel.N(); ++i) {
        const auto it = codes.find(panel.series_names[i]);
        if (it == codes.end())
            throw ValidationError("no transform code for series '" + panel.series_names[i] + "'");
        panel.transform_codes[i] = it->second;
        codes.erase(it);
    }
    if (!codes.empty())
        throw ValidationError("transform code for unknown series '" + codes.begin()->first + "'");
}

Panel apply_transforms(const Panel& in) {
    if (in.transform_codes.empty())
        throw ValidationError("panel carries no transform codes");
    return apply_transforms(in, in.transform_codes);
}

Panel apply_transforms(const Panel& in, const std::vector<int>& codes) {
    in.validate();
    if (static_cast<int>(codes.size()) != in.N())
        throw ValidationError("got " + std::to_string(codes.size()) + " transform codes for " +
                              std::to_string(in.N()) + " series");
    int max_lag = 0;
    for (int i = 0; i < in.N(); ++i) {
        if (codes[i] < 1 || codes[i] > 7)
            throw ValidationError("transform code for series '" + in.series_names[i] +
                                  "' must be in 1..7, got " + std::to_string(codes[i]));
        max_lag = std::max(max_lag, code_lag(codes[i]));
    }

    const int t_full = in.T();
    const int n = in.N();
    if (t_full - max_lag < 2)
        throw ValidationError("panel too short: transforms drop " + std::to_string(max_lag) +
                              " leading rows of " + std::to_string(t_full));

    // Work on the full time grid, then drop the common leading rows.
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t_full, n);
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> omask(t_full, n);
    omask.setConstant(false);

    for (int i = 0; i < n; ++i) {
        const int code = codes[i];
        const bool needs_log = (code == 4 || code == 5 || code == 6);
        Eigen::VectorXd base = in.values.col(i);
        if (needs_log) {
            for (int t = 0; t < t_full; ++t) {
                if (!in.mask(t, i))
                    continue;
                if (base(t) <= 0.0)
                    throw ValidationError("log transform needs positive values: row " +
                                          std::to_string(t + 1) + ", series '" +
                                          in.series_names[i] + "' is " + std::to_string(base(t)));
                base(t) = std::log(base(t));
            }
        }
        const auto obs = [&](int t) { return t >= 0 && in.mask(t, i); };
        for (int t = 0; t < t_full; ++t) {
            switch (code) {
            case 1:
            case 4:
                if (obs(t)) {
                    out(t, i) = base(t);
                    omask(t, i) = true;
                }
                break;
            case 2:
            case 5:
                if (obs(t) && obs(t - 1)) {
                    out(t, i) = base(t) - base(t - 1);
                    omask(t, i) = true;
                }
                break;
            case 3:
            case 6:
                if (obs(t) && obs(t - 1) && obs(t - 2)) {
                    out(t, i) = base(t) - 2.0 * base(t - 1) + base(t - 2);
                    omask(t, i) = true;
                }
                break;
            case 7:
                if (obs(t) && obs(t - 1) && obs(t - 2)) {
                    if (base(t - 1) == 0.0 || base(t - 2) == 0.0)
                        throw ValidationError("percent-change transform hits a zero value: row " +
                                              std::to_string(t) + ", series '" +
                                              in.series_names[i] + "'");
                    out(t, i) = (base(t) / base(t - 1) - 1.0) - (base(t - 1) / base(t - 2) - 1.0);
                    omask(t, i) = true;
                }
                break;
            default:
                break;
            }
        }
    }

    Panel result;
    result.values = out.bottomRows(t_full - max_lag);
    result.mask = omask.bottomRows(t_full - max_lag);
    result.series_names = in.series_names;
    result.validate();
    return result;
}

std::pair<Panel, StandardizationInfo> standardize(const Panel& in, VarianceConvention conv) {
    in.validate();
    const int t_rows = in.T(), n = in.N();

    StandardizationInfo info;
    info.convention = conv;
    info.means.resize(n);
    info.sds.resize(n);

    Panel out = in;
    out.transform_codes.clear();
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        long count = 0;
        for (int t = 0; t < t_rows; ++t) {
            if (in.mask(t, i)) {
                sum += in.values(t, i);
                ++count;
            }
        }
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (int t = 0; t < t_rows; ++t)
            if (in.mask(t, i))
                ss += (in.values(t, i) - mean) * (in.values(t, i) - mean);
        const double denom =
            (conv == VarianceConvention::population) ? static_cast<double>(count)
                                                     : static_cast<double>(count - 1);
        const double sd = std::sqrt(ss / denom);
        if (!(sd > 1e-14 * std::max(1.0, std::abs(mean))))
            throw ValidationError("series '" + in.series_names[i] +
                                  "' has zero variance, cannot standardize");
        info.means(i) = mean;
        info.sds(i) = sd;
        out.values.col(i) = (in.values.col(i).array() - mean) / sd;
    }
    return {std::move(out), std::move(info)};
}

ScaledData scale(const Panel& standardized) {
    standardized.validate();
    if (!standardized.complete())
        throw ValidationError("cannot scale a panel with missing cells");
    ScaledData z;
    z.scale = std::sqrt(static_cast<double>(standardized.N()) *
                        static_cast<double>(standardized.T()));
    z.Z = standardized.values / z.scale;
    return z;
}

Eigen::MatrixXd destandardize(const Eigen::MatrixXd& values, const StandardizationInfo& info) {
    if (values.cols() != info.means.size())
        throw ValidationError("destandardize: matrix has " + std::to_string(values.cols()) +
                              " columns, info covers " + std::to_string(info.means.size()));
    Eigen::MatrixXd out = values;
    for (int i = 0; i < out.cols(); ++i)
        out.col(i) = out.col(i).array() * info.sds(i) + info.means(i);
    return out;
}

} // namespace factorkit
