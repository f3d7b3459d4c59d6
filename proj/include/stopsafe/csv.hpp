#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stopsafe/errors.hpp"

namespace stopsafe::csv {

class MissingColumn : public Error {
public:
    using Error::Error;
};

class MalformedRow : public Error {
public:
    MalformedRow(const std::string& msg, std::size_t row) : Error(msg), row_number(row) {}
    std::size_t row_number;
};

// One parsed data row. `row_number` is the 1-based line in the source file
// (header = line 1), kept for provenance in error messages and audits.
struct Row {
    std::vector<std::string> fields;
    std::size_t row_number = 0;
};

// Minimal RFC-4180 style table reader: UTF-8, comma separated, mandatory
// header row, double-quote escaping. Column lookups go through the header.
class Table {
public:
    static Table read_file(const std::string& path);
    static Table from_string(const std::string& content, const std::string& source_name = "<memory>");

    const std::string& source() const { return source_; }
    const std::vector<std::string>& header() const { return header_; }
    const std::vector<Row>& rows() const { return rows_; }

    // Throws MissingColumn listing every absent name.
    void require_columns(const std::vector<std::string>& names) const;

    bool has_column(const std::string& name) const;
    std::size_t column(const std::string& name) const;

    const std::string& cell(const Row& row, std::size_t col) const;

    // Typed accessors; throw MalformedRow with the row number on bad input.
    double get_double(const Row& row, std::size_t col) const;
    int64_t get_int(const Row& row, std::size_t col) const;
    // Integer epoch seconds or ISO-8601 (YYYY-MM-DD[T ]HH:MM:SS with optional Z).
    int64_t get_timestamp(const Row& row, std::size_t col) const;
    std::string get_string(const Row& row, std::size_t col) const;
    // Empty cell -> nullopt.
    std::optional<double> get_optional_double(const Row& row, std::size_t col) const;

    [[noreturn]] void fail_row(const Row& row, const std::string& what) const;

private:
    std::string source_;
    std::vector<std::string> header_;
    std::map<std::string, std::size_t> index_;
    std::vector<Row> rows_;
};

// Writer with fixed, locale-independent numeric formatting so emitted
// artifacts are byte-stable across runs.
class Writer {
public:
    explicit Writer(const std::string& path);
    ~Writer();
    Writer(const Writer&) = delete;
    Writer& operator=(const Writer&) = delete;

    void write_row(const std::vector<std::string>& fields);

private:
    struct Impl;
    Impl* impl_;
};

std::string format_double(double v, int precision = 6);

// Parses "YYYY-MM-DD HH:MM:SS" / "YYYY-MM-DDTHH:MM:SSZ" or a plain integer
// into epoch seconds. Returns nullopt when the text matches neither form.
std::optional<int64_t> parse_timestamp(const std::string& text);

}  // namespace stopsafe::csv
