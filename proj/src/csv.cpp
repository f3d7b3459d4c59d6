#include "stopsafe/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stopsafe::csv {

namespace {

std::vector<std::string> split_line(const std::string& line, std::size_t row_number) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == ',') {
            out.push_back(field);
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    if (quoted) {
        throw MalformedRow("unterminated quote", row_number);
    }
    out.push_back(field);
    return out;
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

// Days since 1970-01-01 for a civil date (proleptic Gregorian).
int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

}  // namespace

std::optional<int64_t> parse_timestamp(const std::string& text) {
    if (text.empty()) return std::nullopt;
    // Plain integer epoch.
    {
        int64_t v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec == std::errc() && ptr == text.data() + text.size()) return v;
    }
    int y, mo, d, h, mi, s;
    char sep;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &s) == 7 &&
        (sep == 'T' || sep == ' ')) {
        if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) return std::nullopt;
        static const int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        int dm = mdays[mo - 1] + (mo == 2 && is_leap(y) ? 1 : 0);
        if (d > dm) return std::nullopt;
        return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
    }
    return std::nullopt;
}

Table Table::read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path);
}

Table Table::from_string(const std::string& content, const std::string& source_name) {
    Table t;
    t.source_ = source_name;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        std::size_t eol = content.find('\n', pos);
        std::string line = content.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        pos = eol == std::string::npos ? content.size() + 1 : eol + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
        if (line.empty()) continue;
        if (t.header_.empty()) {
            t.header_ = split_line(line, line_no);
            for (std::size_t i = 0; i < t.header_.size(); ++i) t.index_[t.header_[i]] = i;
        } else {
            Row r;
            r.fields = split_line(line, line_no);
            r.row_number = line_no;
            if (r.fields.size() != t.header_.size()) {
                throw MalformedRow(source_name + ": row " + std::to_string(line_no) + " has " +
                                       std::to_string(r.fields.size()) + " fields, expected " +
                                       std::to_string(t.header_.size()),
                                   line_no);
            }
            t.rows_.push_back(std::move(r));
        }
    }
    if (t.header_.empty()) throw MissingColumn(source_name + ": file has no header row");
    return t;
}

void Table::require_columns(const std::vector<std::string>& names) const {
    std::string missing;
    for (const auto& n : names) {
        if (!index_.count(n)) {
            if (!missing.empty()) missing += ", ";
            missing += n;
        }
    }
    if (!missing.empty()) {
        throw MissingColumn(source_ + ": missing required column(s): " + missing);
    }
}

bool Table::has_column(const std::string& name) const { return index_.count(name) > 0; }

std::size_t Table::column(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw MissingColumn(source_ + ": missing required column(s): " + name);
    return it->second;
}

const std::string& Table::cell(const Row& row, std::size_t col) const { return row.fields.at(col); }

void Table::fail_row(const Row& row, const std::string& what) const {
    throw MalformedRow(source_ + ": row " + std::to_string(row.row_number) + ": " + what, row.row_number);
}

double Table::get_double(const Row& row, std::size_t col) const {
    const std::string& s = cell(row, col);
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) fail_row(row, "not a number: '" + s + "'");
        return v;
    } catch (const MalformedRow&) {
        throw;
    } catch (const std::exception&) {
        fail_row(row, "not a number: '" + s + "'");
    }
}

int64_t Table::get_int(const Row& row, std::size_t col) const {
    const std::string& s = cell(row, col);
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail_row(row, "not an integer: '" + s + "'");
    return v;
}

int64_t Table::get_timestamp(const Row& row, std::size_t col) const {
    const std::string& s = cell(row, col);
    auto v = parse_timestamp(s);
    if (!v) fail_row(row, "not a timestamp: '" + s + "'");
    return *v;
}

std::string Table::get_string(const Row& row, std::size_t col) const { return cell(row, col); }

std::optional<double> Table::get_optional_double(const Row& row, std::size_t col) const {
    if (cell(row, col).empty()) return std::nullopt;
    return get_double(row, col);
}

struct Writer::Impl {
    std::ofstream out;
};

Writer::Writer(const std::string& path) : impl_(new Impl) {
    impl_->out.open(path, std::ios::binary);
    if (!impl_->out) {
        delete impl_;
        throw IoError("cannot open file for writing: " + path);
    }
}

Writer::~Writer() { delete impl_; }

void Writer::write_row(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            line += '"';
            for (char c : f) {
                if (c == '"') line += "\"\"";
                else line += c;
            }
            line += '"';
        } else {
            line += f;
        }
    }
    line += '\n';
    impl_->out << line;
    if (!impl_->out) throw IoError("write failed");
}

std::string format_double(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    std::string s(buf);
    // Trim trailing zeros but keep one digit after the point.
    if (s.find('.') != std::string::npos) {
        std::size_t last = s.find_last_not_of('0');
        if (s[last] == '.') ++last;
        s.erase(last + 1);
    }
    return s;
}

}  // namespace stopsafe::csv
