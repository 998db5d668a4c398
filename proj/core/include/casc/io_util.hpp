#pragma once
// Small file helpers: outputs are written atomically (temp file + rename).

#include <string>

namespace casc {

void atomic_write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

} // namespace casc
