#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace xlit {

/// Reads a whole file. Throws IoError when the file cannot be opened or read.
std::string read_file(const std::string& path);

/// Reads a UTF-8 text file into lines, splitting on LF and tolerating a
/// trailing CR per line. Throws IoError / EncodingError.
std::vector<std::string> read_lines(const std::string& path);

void write_file(const std::string& path, const std::string& content);

/// Hex SHA-256 of a byte string. Used for manifests and config digests.
std::string sha256_hex(const std::string& data);

std::string sha256_file_hex(const std::string& path);

/// Shortest-round-trip-ish decimal formatting used for all emitted reports,
/// so identical doubles always serialize to identical bytes.
std::string format_double(double v);

}  // namespace xlit
