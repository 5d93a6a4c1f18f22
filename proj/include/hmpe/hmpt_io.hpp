#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "hmpe/tensor.hpp"

namespace hmpe {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// HMPT layout: "HMPT", u8 rank, rank x u32 LE dims, product(dims) x f32 LE.
std::vector<std::uint8_t> encode_hmpt(const Tensor& t);
Tensor decode_hmpt(std::span<const std::uint8_t> bytes);

void write_hmpt(const std::filesystem::path& path, const Tensor& t);
Tensor read_hmpt(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace hmpe
