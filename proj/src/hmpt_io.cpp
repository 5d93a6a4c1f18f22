#include "hmpe/hmpt_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace hmpe {

namespace {

constexpr char kMagic[4] = {'H', 'M', 'P', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_hmpt(const Tensor& t) {
  if (t.rank() == 0 || t.rank() > std::numeric_limits<std::uint8_t>::max())
    throw FormatError("HMPT: rank must be in [1, 255]");
  std::vector<std::uint8_t> out;
  out.reserve(5 + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("HMPT: dimension exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_hmpt(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("HMPT: bad magic");
  const std::size_t rank = bytes[4];
  if (rank == 0) throw FormatError("HMPT: rank 0");
  if (bytes.size() < 5 + 4 * rank) throw FormatError("HMPT: truncated header");
  Shape shape(rank);
  std::size_t numel = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(bytes, 5 + 4 * i);
    if (shape[i] == 0) throw FormatError("HMPT: zero dimension");
    numel *= shape[i];
  }
  const std::size_t payload = 5 + 4 * rank;
  if (bytes.size() != payload + 4 * numel) {
    throw FormatError("HMPT: payload size " + std::to_string(bytes.size() - payload) + " does not match shape " +
                      shape_to_string(shape));
  }
  std::vector<float> data(numel);
  for (std::size_t i = 0; i < numel; ++i) data[i] = std::bit_cast<float>(get_u32(bytes, payload + 4 * i));
  return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_hmpt(const std::filesystem::path& path, const Tensor& t) { write_file_bytes(path, encode_hmpt(t)); }

Tensor read_hmpt(const std::filesystem::path& path) {
  try {
    return decode_hmpt(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace hmpe
