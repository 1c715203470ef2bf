#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "json.hpp"
#include "unilap/errors.hpp"

namespace unilap::jsonl {

// Streams a JSONL file line by line. `fn(line_number, line)` is called for
// every non-empty line; line numbers are 1-based. Throws DataError if the
// file cannot be opened.
inline void for_each_line(const std::filesystem::path& path,
                          const std::function<void(std::size_t, const std::string&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open file: " + path.string());
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        fn(lineno, line);
    }
}

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) {
            throw DataError("cannot open file for writing: " + path.string());
        }
    }

    void write(const nlohmann::ordered_json& record) {
        out_ << record.dump() << '\n';
        if (!out_) {
            throw DataError("write failed");
        }
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

}  // namespace unilap::jsonl
