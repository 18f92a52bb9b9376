// Copyright 2026 The NIRM Trajectory Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nirm::io {

/// Raised for unreadable, truncated or tampered artifacts. The message
/// always names the file (and tensor, where applicable).
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

/// Writes via a temporary file and rename, creating parent directories.
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Appends little-endian IEEE-754 binary64 encodings.
void append_f64le(std::vector<std::uint8_t>& out, std::span<const double> values);
/// Decodes count values starting at byte offset.
std::vector<double> read_f64le(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t count);

/// Shortest text form that parses back to the same double.
std::string format_double(double x);
/// Fixed-point text with the given number of decimals.
std::string format_fixed(double x, int decimals);

}  // namespace nirm::io
