#include "ucim/tensor_file.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace ucim {

namespace {

constexpr char kMagic[4] = {'U', 'C', 'I', 'M'};
constexpr char kAlignMagic[4] = {'A', 'L', 'G', 'N'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeFp16 = 0;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v));
    u16(static_cast<std::uint16_t>(v >> 16));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == b_.size(); }

  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) throw ParseError(std::string("truncated ") + what, pos_);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  bool magic(const char (&m)[4]) {
    need(4, "magic");
    if (std::memcmp(b_.data() + pos_, m, 4) != 0) return false;
    pos_ += 4;
    return true;
  }
  std::string str(std::size_t n) {
    need(n, "name");
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

const Tensor* TensorFile::find(const std::string& name) const {
  for (const Tensor& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

ParseError::ParseError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

std::vector<std::uint8_t> serialize(const TensorFile& f) {
  if (f.tensors.size() > 0xFFFF) throw std::invalid_argument("serialize: too many tensors");
  Writer w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.u16(static_cast<std::uint16_t>(f.tensors.size()));
  for (const Tensor& t : f.tensors) {
    if (t.name.size() > 0xFFFF) throw std::invalid_argument("serialize: tensor name too long");
    if (t.dims.size() > 0xFF) throw std::invalid_argument("serialize: rank exceeds 255");
    if (t.data.size() != t.element_count()) throw std::invalid_argument("serialize: data does not match dims");
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(kDtypeFp16);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) w.u32(d);
    for (Half h : t.data) w.u16(h.bits);
  }
  if (f.align) {
    w.bytes(kAlignMagic, 4);
    w.u32(static_cast<std::uint32_t>(f.align->size()));
    for (const AlignEntry& e : *f.align) {
      w.u16(e.layer_id);
      w.u32(e.block_id);
      w.u8(static_cast<std::uint8_t>(e.e_shared));
      w.u8(e.index);
    }
  }
  return w.take();
}

TensorFile parse_tensor_file(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (!r.magic(kMagic)) throw ParseError("bad magic", 0);
  const std::size_t version_at = r.offset();
  if (r.u16("version") != kVersion) throw ParseError("unsupported version", version_at);
  const std::uint16_t count = r.u16("tensor count");

  TensorFile f;
  for (std::uint16_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = r.str(r.u16("name length"));
    const std::size_t dtype_at = r.offset();
    if (r.u8("dtype") != kDtypeFp16) throw ParseError("unsupported dtype", dtype_at);
    const std::uint8_t rank = r.u8("rank");
    for (std::uint8_t d = 0; d < rank; ++d) t.dims.push_back(r.u32("dims"));
    const std::size_t n = t.element_count();
    if (n > bytes.size()) throw ParseError("truncated payload", r.offset());
    r.need(n * 2, "payload");
    t.data.resize(n);
    for (Half& h : t.data) h.bits = r.u16("payload");
    f.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) {
    const std::size_t at = r.offset();
    if (!r.magic(kAlignMagic)) throw ParseError("unexpected trailing bytes", at);
    const std::uint32_t entries = r.u32("entry count");
    r.need(std::size_t{entries} * 8, "ALGN entries");
    std::vector<AlignEntry> align(entries);
    for (AlignEntry& e : align) {
      e.layer_id = r.u16("layer id");
      e.block_id = r.u32("block id");
      e.e_shared = static_cast<std::int8_t>(r.u8("e_shared"));
      e.index = r.u8("index");
    }
    f.align = std::move(align);
    if (!r.at_end()) throw ParseError("unexpected trailing bytes", r.offset());
  }
  return f;
}

void save_tensor_file(const std::filesystem::path& path, const TensorFile& f) {
  const std::vector<std::uint8_t> bytes = serialize(f);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

TensorFile load_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_tensor_file(bytes);
}

}  // namespace ucim
