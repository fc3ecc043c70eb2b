#include "earco/vector_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <mutex>

#include "earco/error.hpp"

namespace earco {

VectorIndex::VectorIndex(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::kPrecondition, "index dim must be positive");
}

VectorIndex::VectorIndex(const VectorIndex& other) {
  std::shared_lock lock(other.mutex_);
  dim_ = other.dim_;
  ids_ = other.ids_;
  data_ = other.data_;
  rows_ = other.rows_;
}

VectorIndex& VectorIndex::operator=(const VectorIndex& other) {
  if (this != &other) {
    VectorIndex copy(other);
    *this = std::move(copy);
  }
  return *this;
}

VectorIndex::VectorIndex(VectorIndex&& other) noexcept
    : dim_(other.dim_),
      ids_(std::move(other.ids_)),
      data_(std::move(other.data_)),
      rows_(std::move(other.rows_)) {}

VectorIndex& VectorIndex::operator=(VectorIndex&& other) noexcept {
  dim_ = other.dim_;
  ids_ = std::move(other.ids_);
  data_ = std::move(other.data_);
  rows_ = std::move(other.rows_);
  return *this;
}

std::size_t VectorIndex::size() const {
  std::shared_lock lock(mutex_);
  return ids_.size();
}

bool VectorIndex::contains(std::string_view id) const {
  std::shared_lock lock(mutex_);
  return rows_.contains(std::string(id));
}

std::vector<std::string> VectorIndex::ids() const {
  std::shared_lock lock(mutex_);
  return ids_;
}

EmbeddingVector VectorIndex::vector(std::string_view id) const {
  std::shared_lock lock(mutex_);
  const auto it = rows_.find(std::string(id));
  if (it == rows_.end()) throw Error(ErrorCode::kLookup, "no vector for id '" + std::string(id) + "'");
  const auto* row = data_.data() + it->second * dim_;
  return EmbeddingVector(std::vector<float>(row, row + dim_));
}

void VectorIndex::add(const std::string& id, const EmbeddingVector& vector) {
  if (vector.dim() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "vector dim " + std::to_string(vector.dim()) +
                                                   " does not match index dim " +
                                                   std::to_string(dim_));
  }
  std::unique_lock lock(mutex_);
  if (rows_.contains(id)) throw Error(ErrorCode::kDuplicate, "index already holds id '" + id + "'");
  rows_.emplace(id, ids_.size());
  ids_.push_back(id);
  const auto values = vector.values();
  data_.insert(data_.end(), values.begin(), values.end());
}

std::vector<QueryResult> VectorIndex::search_top_k(const EmbeddingVector& query,
                                                   std::size_t k) const {
  if (k == 0) throw Error(ErrorCode::kPrecondition, "k must be at least 1");
  if (query.dim() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "query dim " + std::to_string(query.dim()) +
                                                   " does not match index dim " +
                                                   std::to_string(dim_));
  }
  std::shared_lock lock(mutex_);
  if (ids_.empty()) throw Error(ErrorCode::kEmptyIndex, "search on an empty index");

  struct Scored {
    double sq;
    std::size_t row;
  };
  std::vector<Scored> scored(ids_.size());
  const auto q = query.values();
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    const float* row = data_.data() + r * dim_;
    double sum = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double diff = static_cast<double>(row[d]) - static_cast<double>(q[d]);
      sum += diff * diff;
    }
    scored[r] = {sum, r};
  }
  const auto better = [this](const Scored& a, const Scored& b) {
    if (a.sq != b.sq) return a.sq < b.sq;
    return ids_[a.row] < ids_[b.row];
  };
  const auto take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), better);

  std::vector<QueryResult> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({ids_[scored[i].row], std::sqrt(scored[i].sq)});
  }
  return out;
}

bool VectorIndex::operator==(const VectorIndex& other) const {
  if (this == &other) return true;
  std::shared_lock a(mutex_);
  std::shared_lock b(other.mutex_);
  return dim_ == other.dim_ && ids_ == other.ids_ &&
         std::equal(data_.begin(), data_.end(), other.data_.begin(), other.data_.end(),
                    [](float x, float y) {
                      return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
                    });
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagicPrefix[] = "EARCIDX";
constexpr char kVersion = '1';

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw Error(ErrorCode::kCorruptFile, "index file is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
  std::string out(kMagicPrefix);
  out.push_back(kVersion);
  put_u32(out, static_cast<std::uint32_t>(index.dim()));
  const auto ids = index.ids();
  put_u64(out, ids.size());
  for (const auto& id : ids) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out += id;
    const auto vec = index.vector(id);
    for (const float v : vec.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot write index '" + path.string() + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::kIo, "short write to index '" + path.string() + "'");
}

VectorIndex load_index(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open index '" + path.string() + "'");
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r(buf);
  const auto magic = r.bytes(8);
  if (magic.compare(0, 7, kMagicPrefix) != 0) {
    throw Error(ErrorCode::kCorruptFile, "'" + path.string() + "' is not an index file");
  }
  if (magic[7] != kVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                std::string("index version '") + magic[7] + "' is not supported");
  }
  const auto dim = r.u32();
  if (dim == 0) throw Error(ErrorCode::kCorruptFile, "index header declares dim 0");
  const auto count = r.u64();
  VectorIndex index(dim);
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto id_len = r.u32();
    auto id = r.bytes(id_len);
    r.need(std::size_t{dim} * 4);
    std::vector<float> values(dim);
    for (auto& v : values) v = std::bit_cast<float>(r.u32());
    try {
      index.add(id, EmbeddingVector(std::move(values)));
    } catch (const Error& err) {
      throw Error(ErrorCode::kCorruptFile, std::string("bad index entry: ") + err.what());
    }
  }
  if (!r.done()) throw Error(ErrorCode::kCorruptFile, "trailing bytes after index entries");
  return index;
}

}  // namespace earco
