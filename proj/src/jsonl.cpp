#include "budgeteval/jsonl.hpp"

#include <fstream>
#include <string>

#include "budgeteval/errors.hpp"

namespace budgeteval::jsonl {

void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw InfraError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded())
      throw ParseError(path.filename().string() + ":" + std::to_string(line_no) +
                       ": invalid JSON");
    if (!record.is_object())
      throw ValidationError(path.filename().string() + ":" + std::to_string(line_no) +
                            ": expected a JSON object");
    fn(line_no, record);
  }
}

void write_records(const std::filesystem::path& path, const std::vector<json>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InfraError("cannot write " + path.string());
  for (const json& record : records) out << record.dump() << '\n';
}

}  // namespace budgeteval::jsonl
