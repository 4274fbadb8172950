#include "pdda/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace pdda {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'D', 'A'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw Error("checkpoint truncated at offset " + std::to_string(pos_) + " reading " + what +
                  " (" + std::to_string(n) + " bytes wanted, " +
                  std::to_string(bytes_.size() - pos_) + " left)");
    }
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }

  const std::uint8_t* take(std::size_t n, const char* what) {
    need(n, what);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

[[noreturn]] void bad(std::size_t offset, const std::string& msg) {
  throw Error("checkpoint: " + msg + " at offset " + std::to_string(offset));
}

std::uint8_t to_byte(double v) {
  const double p = std::round((v + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(p, 0.0, 255.0));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NamedArrays& arrays) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kCheckpointVersion);
  put_u64(out, arrays.size());
  for (const auto& [name, t] : arrays) {
    if (t.size() != numel(t.shape)) throw Error("checkpoint: array '" + name + "' is inconsistent");
    put_u64(out, name.size());
    out.insert(out.end(), name.begin(), name.end());
    put_u64(out, t.shape.size());
    for (auto d : t.shape) put_u64(out, d);
    for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

NamedArrays decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::uint8_t* magic = r.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) bad(0, "bad magic");
  const std::size_t version_at = r.offset();
  const auto version = r.u8("version");
  if (version != kCheckpointVersion) {
    bad(version_at, "unsupported version " + std::to_string(version));
  }
  const std::uint64_t count = r.u64("array count");
  NamedArrays out;
  for (std::uint64_t a = 0; a < count; ++a) {
    const std::uint64_t len = r.u64("name length");
    const auto* name_bytes = r.take(len, "name");
    std::string name(reinterpret_cast<const char*>(name_bytes), len);
    const std::size_t rank_at = r.offset();
    const std::uint64_t rank = r.u64("rank");
    if (rank == 0 || rank > 8) bad(rank_at, "array '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t n = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
      const std::size_t dim_at = r.offset();
      const std::uint64_t d = r.u64("dimension");
      if (d == 0 || n > (std::uint64_t{1} << 40) / d) {
        bad(dim_at, "array '" + name + "' has invalid dimension " + std::to_string(d));
      }
      n *= d;
      shape.push_back(d);
    }
    r.need(8 * n, "payload");
    std::vector<double> values(n);
    for (auto& v : values) v = std::bit_cast<double>(r.u64("payload"));
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) {
    bad(r.offset(), std::to_string(bytes.size() - r.offset()) +
                        " trailing bytes after the declared " + std::to_string(count) + " arrays");
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

void save_checkpoint(const std::filesystem::path& path, const NamedArrays& arrays) {
  for (const auto& [name, t] : arrays) {
    if (!t.all_finite()) throw Error("checkpoint: array '" + name + "' is not finite");
  }
  write_file(path, encode_checkpoint(arrays));
}

NamedArrays load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_pgm(const Tensor& image) {
  if (image.shape.size() < 2) throw Error("pgm: image needs two dimensions");
  for (std::size_t i = 0; i + 2 < image.shape.size(); ++i) {
    if (image.shape[i] != 1) throw Error("pgm: expected a single image, got " + to_string(image.shape));
  }
  const std::size_t h = image.shape[image.shape.size() - 2], w = image.shape.back();
  const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : image.data) out.push_back(to_byte(v));
  return out;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  write_file(path, encode_pgm(image));
}

Tensor decode_pgm(const std::vector<std::uint8_t>& bytes) {
  // Header: magic, width, height, maxval separated by whitespace (with
  // optional # comments), then exactly one whitespace byte.
  std::size_t pos = 0;
  auto skip = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&](const char* what) {
    skip();
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') {
      t.push_back(static_cast<char>(bytes[pos++]));
    }
    if (t.empty()) throw Error(std::string("pgm: missing ") + what);
    return t;
  };
  auto number = [&](const char* what) {
    const std::string t = token(what);
    if (t.find_first_not_of("0123456789") != std::string::npos || t.size() > 9) {
      throw Error(std::string("pgm: bad ") + what + " '" + t + "'");
    }
    return static_cast<std::size_t>(std::stoul(t));
  };
  if (token("magic") != "P5") throw Error("pgm: not a binary PGM (P5)");
  const std::size_t w = number("width"), h = number("height"), maxval = number("maxval");
  if (w == 0 || h == 0) throw Error("pgm: empty image");
  if (maxval != 255) throw Error("pgm: only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error("pgm: malformed header");
  ++pos;
  if (bytes.size() - pos != w * h) {
    throw Error("pgm: expected " + std::to_string(w * h) + " pixel bytes, found " +
                std::to_string(bytes.size() - pos));
  }
  Tensor out = Tensor::zeros({1, h, w});
  for (std::size_t i = 0; i < w * h; ++i) out[i] = bytes[pos + i] / 127.5 - 1.0;
  return out;
}

Tensor read_pgm(const std::filesystem::path& path) {
  try {
    return decode_pgm(read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace pdda
