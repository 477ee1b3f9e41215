#include "intentscope/csv.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace intentscope {

int CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

std::size_t CsvTable::require_column(std::string_view name) const {
    const int idx = column(name);
    if (idx < 0) throw CsvError("missing column '" + std::string(name) + "'", 1);
    return static_cast<std::size_t>(idx);
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_has_content = false;
    std::size_t line = 1;
    std::size_t row_start = 1;
    char c = 0;

    auto end_row = [&] {
        row.push_back(std::move(field));
        field.clear();
        if (row_has_content || row.size() > 1 || !row.front().empty()) {
            if (table.header.empty()) {
                table.header = std::move(row);
            } else {
                table.rows.push_back(std::move(row));
                table.lines.push_back(row_start);
            }
        }
        row.clear();
        row_has_content = false;
    };

    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                row_has_content = true;
                break;
            case ',':
                row.push_back(std::move(field));
                field.clear();
                row_has_content = true;
                break;
            case '\r':
                break;
            case '\n':
                end_row();
                ++line;
                row_start = line;
                break;
            default:
                field.push_back(c);
        }
    }
    if (in_quotes) throw CsvError("unterminated quoted field", row_start);
    if (!field.empty() || !row.empty() || row_has_content) end_row();

    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        if (table.rows[i].size() > table.header.size()) {
            throw CsvError("row has more fields than header", table.lines[i]);
        }
    }
    return table;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open CSV file: " + path);
    return read_csv(in);
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << csv_escape(fields[i]);
    }
    out << '\n';
}

}  // namespace intentscope
