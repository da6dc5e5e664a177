#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <istream>
#include <string>
#include <string_view>

namespace idfprobe {

/// "%.17g": enough digits for a bit-exact decimal round trip of a double.
std::string FormatExact(double v);

std::string ReadFile(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view data);

/// Calls `fn(line_number, key, text)` for every `key<TAB>text` line. Text is
/// everything after the first tab. Blank lines are skipped; a trailing '\r'
/// is dropped. Throws std::runtime_error("line N: ...") for lines without a
/// tab or with an empty key.
void ForEachTsvRecord(
    std::istream& in,
    const std::function<void(std::size_t, std::string_view, std::string_view)>&
        fn);

}  // namespace idfprobe
