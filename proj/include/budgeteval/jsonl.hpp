#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "json.hpp"

namespace budgeteval::jsonl {

using json = nlohmann::json;

/// Streams a line-delimited JSON file, calling fn(line_number, record) for
/// every non-blank line (line numbers are 1-based). Throws ParseError with
/// the line number on invalid JSON, ValidationError if a line is not an
/// object.
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::size_t, const json&)>& fn);

/// Writes one record per line. Overwrites the file.
void write_records(const std::filesystem::path& path, const std::vector<json>& records);

}  // namespace budgeteval::jsonl
