#include "sketchforge/core/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "sketchforge/core/errors.hpp"

namespace sf {

namespace {

constexpr char kMagic[8] = {'S', 'K', 'F', 'A', 'R', 'C', 'H', '\0'};
constexpr std::size_t kPreamble = 8 + 4 + 8;

static_assert(std::endian::native == std::endian::little, "archive writer assumes little-endian");

template <typename T> void put(std::vector<std::uint8_t> &out, T v) {
  const auto *p = reinterpret_cast<const std::uint8_t *>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T> T get(std::span<const std::uint8_t> in, std::size_t offset) {
  T v;
  std::memcpy(&v, in.data() + offset, sizeof(T));
  return v;
}

} // namespace

std::vector<std::uint8_t> Archive::serialize() const {
  nlohmann::json header;
  header["meta"] = meta;
  auto &index = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto &[name, t] : tensors) {
    const Shape &s = t.shape();
    const std::uint64_t nbytes = t.size() * sizeof(double);
    index.push_back({{"name", name},
                     {"dtype", "f64"},
                     {"shape", {s.n, s.c, s.h, s.w}},
                     {"offset", offset},
                     {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPreamble + text.size() + offset);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto &[name, t] : tensors) {
    const auto *p = reinterpret_cast<const std::uint8_t *>(t.data());
    out.insert(out.end(), p, p + t.size() * sizeof(double));
  }
  return out;
}

Archive Archive::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreamble || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a sketchforge archive (bad magic)");
  const auto version = get<std::uint32_t>(bytes, 8);
  if (version != kFormatVersion)
    throw CheckpointError(fmt::format("unsupported archive version {}", version));
  const auto header_len = get<std::uint64_t>(bytes, 12);
  if (header_len > bytes.size() - kPreamble)
    throw CheckpointError("truncated archive header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreamble,
                                   bytes.begin() + kPreamble + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception &e) {
    throw CheckpointError(std::string("archive header is not valid JSON: ") + e.what());
  }

  Archive a;
  const std::size_t blob = kPreamble + header_len;
  try {
    a.meta = header.at("meta");
    for (const auto &entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      if (entry.at("dtype").get<std::string>() != "f64")
        throw CheckpointError("tensor " + name + ": unsupported dtype");
      const auto dims = entry.at("shape").get<std::vector<int>>();
      if (dims.size() != 4)
        throw CheckpointError("tensor " + name + ": expected rank 4");
      const Shape s{dims[0], dims[1], dims[2], dims[3]};
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
      if (nbytes != s.numel() * sizeof(double))
        throw CheckpointError("tensor " + name + ": size does not match shape");
      if (offset > bytes.size() - blob || nbytes > bytes.size() - blob - offset)
        throw CheckpointError("tensor " + name + ": data truncated");
      std::vector<double> values(s.numel());
      std::memcpy(values.data(), bytes.data() + blob + offset, nbytes);
      a.tensors.emplace(name, Tensor(s, std::move(values)));
    }
  } catch (const nlohmann::json::exception &e) {
    throw CheckpointError(std::string("malformed archive index: ") + e.what());
  }
  return a;
}

void Archive::save(const std::filesystem::path &path) const {
  const auto bytes = serialize();
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out)
      throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  try {
    return deserialize(bytes);
  } catch (const CheckpointError &e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

const Tensor &Archive::tensor(const std::string &name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end())
    throw CheckpointError("archive has no tensor '" + name + "'");
  return it->second;
}

} // namespace sf
