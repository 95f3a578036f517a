#include "gunet/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

namespace gunet {

namespace {

constexpr char kMagic[4] = {'G', 'U', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  buf.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw ConfigError("cannot open checkpoint file '" + path + "'");
  }

  std::uint64_t offset() const { return offset_; }
  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

  void read_bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw CorruptFileError("truncated checkpoint while reading " + std::string(what) + " in '" +
                                 path_ + "'",
                             offset_);
    }
    offset_ += n;
  }

  std::uint32_t read_u32(const char* what) {
    std::uint8_t b[4];
    read_bytes(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint8_t read_u8(const char* what) {
    std::uint8_t b;
    read_bytes(&b, 1, what);
    return b;
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::uint64_t offset_ = 0;
};

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  throw StateError("unreachable dtype");
}

void write_checkpoint(const std::string& path, std::vector<CheckpointRecord> records) {
  std::set<std::string> names;
  for (const auto& rec : records) {
    if (rec.name.empty()) throw ConfigError("checkpoint record names must be non-empty");
    if (!names.insert(rec.name).second) {
      throw ConfigError("duplicate checkpoint record name '" + rec.name + "'");
    }
    if (rec.payload.size() !=
        static_cast<std::size_t>(rec.element_count()) * dtype_size(rec.dtype)) {
      throw StateError("record '" + rec.name + "' payload does not match dims");
    }
  }
  std::sort(records.begin(), records.end(),
            [](const CheckpointRecord& a, const CheckpointRecord& b) { return a.name < b.name; });

  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);
  for (const auto& rec : records) {
    put_u32(buf, static_cast<std::uint32_t>(rec.name.size()));
    buf.insert(buf.end(), rec.name.begin(), rec.name.end());
    buf.push_back(static_cast<std::uint8_t>(rec.dtype));
    buf.push_back(static_cast<std::uint8_t>(rec.dims.size()));
    for (auto d : rec.dims) {
      if (d < 0 || d > std::numeric_limits<std::uint32_t>::max()) {
        throw StateError("record '" + rec.name + "' has a dimension outside u32 range");
      }
      put_u32(buf, static_cast<std::uint32_t>(d));
    }
    buf.insert(buf.end(), rec.payload.begin(), rec.payload.end());
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.read_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw CorruptFileError("bad magic in '" + path + "'", 0);
  }
  std::uint64_t version_at = r.offset();
  std::uint32_t version = r.read_u32("version");
  if (version != kVersion) {
    throw CorruptFileError("unsupported checkpoint version " + std::to_string(version) + " in '" +
                               path + "'",
                           version_at);
  }
  std::vector<CheckpointRecord> records;
  while (!r.at_eof()) {
    CheckpointRecord rec;
    std::uint32_t name_len = r.read_u32("record name length");
    rec.name.resize(name_len);
    if (name_len > 0) r.read_bytes(rec.name.data(), name_len, "record name");
    std::uint64_t dtype_at = r.offset();
    std::uint8_t dtype = r.read_u8("dtype code");
    if (dtype > static_cast<std::uint8_t>(DType::u8)) {
      throw CorruptFileError("unknown dtype code " + std::to_string(dtype) + " for record '" +
                                 rec.name + "' in '" + path + "'",
                             dtype_at);
    }
    rec.dtype = static_cast<DType>(dtype);
    std::uint8_t rank = r.read_u8("rank");
    std::size_t count = 1;
    for (int i = 0; i < rank; ++i) {
      std::uint32_t d = r.read_u32("dimension");
      rec.dims.push_back(static_cast<std::int64_t>(d));
      count *= d;
    }
    rec.payload.resize(count * dtype_size(rec.dtype));
    if (!rec.payload.empty()) r.read_bytes(rec.payload.data(), rec.payload.size(), "payload");
    records.push_back(std::move(rec));
  }
  return records;
}

CheckpointRecord make_text_record(const std::string& name, const std::string& text) {
  CheckpointRecord rec;
  rec.name = name;
  rec.dtype = DType::u8;
  rec.dims = {static_cast<std::int64_t>(text.size())};
  rec.payload.assign(text.begin(), text.end());
  return rec;
}

std::string text_from_record(const CheckpointRecord& rec) {
  if (rec.dtype != DType::u8) throw StateError("record '" + rec.name + "' is not a text record");
  return std::string(rec.payload.begin(), rec.payload.end());
}

}  // namespace gunet
