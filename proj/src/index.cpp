#include "spvp/index.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "spvp/binary_io.hpp"

namespace spvp {

namespace {

constexpr char kIndexMagic[] = "PVIX";
constexpr std::uint16_t kIndexVersion = 1;
constexpr std::size_t kScanChunk = 4096;
constexpr std::uint8_t kMaxMethodTag = static_cast<std::uint8_t>(Method::kGem);

struct Candidate {
  double dist2;
  std::size_t row;
};

// Bounded max-heap keeping the best `cap` candidates under (dist2, id).
class TopN {
  struct Less {
    const DescriptorIndex* index;
    bool operator()(const Candidate& a, const Candidate& b) const {
      if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
      return index->id(a.row) < index->id(b.row);
    }
  };

 public:
  TopN(std::size_t cap, const DescriptorIndex* index) : cap_(cap), index_(index) {}

  void offer(Candidate c) {
    if (heap_.size() < cap_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end(), less());
    } else if (less()(c, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), less());
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end(), less());
    }
  }

  void merge(const TopN& other) {
    for (const Candidate& c : other.heap_) offer(c);
  }

  std::vector<Candidate> sorted() const {
    std::vector<Candidate> out = heap_;
    std::sort(out.begin(), out.end(), less());
    return out;
  }

 private:
  Less less() const { return Less{index_}; }

  std::size_t cap_;
  const DescriptorIndex* index_;
  std::vector<Candidate> heap_;
};

void check_query(const DescriptorIndex& index, const Descriptor& query, std::size_t top_n) {
  if (top_n == 0) throw UsageError("search: top-n must be >= 1");
  if (index.count() == 0) throw InsufficientDataError("search: index is empty");
  if (query.dim() != index.dim()) {
    throw DimensionError("search: query '" + query.image_id + "' has dimension " +
                         std::to_string(query.dim()) + ", index has " + std::to_string(index.dim()));
  }
}

RankedResult to_result(const DescriptorIndex& index, const std::string& query_id, const TopN& top) {
  RankedResult result{query_id, {}};
  for (const Candidate& c : top.sorted()) result.hits.push_back({index.id(c.row), std::sqrt(c.dist2)});
  return result;
}

}  // namespace

DescriptorIndex::DescriptorIndex(Method method, std::size_t dim) : method_(method), dim_(dim) {
  if (dim_ == 0) throw DimensionError("index: descriptor dimension must be >= 1");
}

void DescriptorIndex::add(const Descriptor& descriptor) {
  if (descriptor.method != method_) {
    throw DataError("index: descriptor '" + descriptor.image_id + "' uses method " +
                    std::string(method_name(descriptor.method)) + ", index holds " +
                    std::string(method_name(method_)));
  }
  if (descriptor.dim() != dim_) {
    throw DimensionError("index: descriptor '" + descriptor.image_id + "' has dimension " +
                         std::to_string(descriptor.dim()) + ", index has " + std::to_string(dim_));
  }
  if (descriptor.image_id.empty()) throw DataError("index: empty image id");
  if (!all_finite(descriptor.values)) {
    throw DataError("index: descriptor '" + descriptor.image_id + "' has non-finite values");
  }
  if (!rows_.emplace(descriptor.image_id, ids_.size()).second) {
    throw DataError("index: duplicate image id '" + descriptor.image_id + "'");
  }
  ids_.push_back(descriptor.image_id);
  values_.insert(values_.end(), descriptor.values.begin(), descriptor.values.end());
}

std::span<const float> DescriptorIndex::values(const std::string& id) const {
  const auto it = rows_.find(id);
  if (it == rows_.end()) throw DataError("index: unknown image id '" + id + "'");
  return values(it->second);
}

std::size_t DescriptorIndex::memory_bytes() const {
  std::size_t bytes = values_.capacity() * sizeof(float) + ids_.capacity() * sizeof(std::string);
  for (const std::string& id : ids_) {
    if (id.capacity() > 15) bytes += id.capacity() + 1;
  }
  // Hash node: key, value, next pointer and cached hash, plus the bucket array.
  bytes += rows_.size() * (sizeof(std::string) + 3 * sizeof(std::size_t)) +
           rows_.bucket_count() * sizeof(void*);
  return bytes;
}

DescriptorIndex build_index(std::span<const Descriptor> descriptors) {
  if (descriptors.empty()) throw InsufficientDataError("index: no descriptors to index");
  DescriptorIndex index(descriptors.front().method, descriptors.front().dim());
  for (const Descriptor& d : descriptors) index.add(d);
  return index;
}

RankedResult search_knn(const DescriptorIndex& index, const Descriptor& query, std::size_t top_n) {
  return search_batch(index, std::span<const Descriptor>(&query, 1), top_n).front();
}

std::vector<RankedResult> search_batch(const DescriptorIndex& index,
                                       std::span<const Descriptor> queries, std::size_t top_n) {
  for (const Descriptor& q : queries) check_query(index, q, top_n);
  const std::size_t chunks = chunk_count(index.count(), kScanChunk);
  std::vector<std::vector<TopN>> partial(chunks);
  parallel_chunks(index.count(), kScanChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
    std::vector<TopN>& tops = partial[c];
    tops.assign(queries.size(), TopN(top_n, &index));
    for (std::size_t row = begin; row < end; ++row) {
      const auto v = index.values(row);
      for (std::size_t q = 0; q < queries.size(); ++q) {
        tops[q].offer({squared_distance(queries[q].values, v), row});
      }
    }
  });

  std::vector<RankedResult> results;
  results.reserve(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    TopN merged(top_n, &index);
    for (const auto& tops : partial) merged.merge(tops[q]);
    results.push_back(to_result(index, queries[q].image_id, merged));
  }
  return results;
}

std::vector<std::uint8_t> encode_index(const DescriptorIndex& index) {
  io::ByteWriter w(kIndexMagic, kIndexVersion);
  w.u8(static_cast<std::uint8_t>(index.method()));
  w.u32(static_cast<std::uint32_t>(index.dim()));
  w.u64(index.count());
  for (std::size_t row = 0; row < index.count(); ++row) {
    const std::string& id = index.id(row);
    if (id.size() > 0xFFFF) throw DataError("index: image id longer than 65535 bytes");
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.bytes(id);
    w.f32s(index.values(row));
  }
  return std::move(w).finish();
}

DescriptorIndex decode_index(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes), kIndexMagic, "index");
  if (r.version() != kIndexVersion) {
    throw DataError("index: unsupported version " + std::to_string(r.version()));
  }
  const std::uint8_t tag = r.u8();
  if (tag > kMaxMethodTag) throw DataError("index: unknown method tag " + std::to_string(tag));
  const std::uint32_t dim = r.u32();
  const std::uint64_t count = r.u64();
  if (dim == 0) throw DataError("index: zero descriptor dimension");
  // Each entry needs at least its length prefix and values.
  if (count > r.remaining() / (2 + 4ULL * dim)) throw DataError("index: entry count exceeds payload");
  DescriptorIndex index(static_cast<Method>(tag), dim);
  Descriptor d;
  d.method = index.method();
  d.values.resize(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    d.image_id = r.bytes(r.u16());
    r.f32s(d.values);
    index.add(d);
  }
  r.expect_end();
  return index;
}

void save_index(const DescriptorIndex& index, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_index(index));
}

DescriptorIndex load_index(const std::filesystem::path& path) {
  return decode_index(io::read_file(path));
}

std::vector<Descriptor> index_descriptors(const DescriptorIndex& index) {
  std::vector<Descriptor> out;
  out.reserve(index.count());
  for (std::size_t row = 0; row < index.count(); ++row) {
    const auto v = index.values(row);
    out.push_back({index.id(row), index.method(), {v.begin(), v.end()}});
  }
  return out;
}

void save_results(std::span<const RankedResult> results, const std::filesystem::path& path) {
  std::string text = "query_id\trank\timage_id\tdistance\n";
  char buf[64];
  for (const RankedResult& r : results) {
    for (std::size_t k = 0; k < r.hits.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.9g", r.hits[k].distance);
      text += r.query_id + '\t' + std::to_string(k + 1) + '\t' + r.hits[k].image_id + '\t' + buf + '\n';
    }
  }
  io::write_text_atomic(path, text);
}

std::vector<RankedResult> load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open results '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "query_id\trank\timage_id\tdistance") {
    throw DataError("results '" + path.string() + "': missing header");
  }
  std::vector<RankedResult> results;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    const auto bad = [&] {
      return DataError("results '" + path.string() + "' line " + std::to_string(line_no) +
                       ": malformed record");
    };
    if (fields.size() != 4) throw bad();
    std::size_t rank = 0;
    const auto [p, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), rank);
    if (ec != std::errc() || p != fields[1].data() + fields[1].size()) throw bad();
    double dist = 0.0;
    try {
      dist = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw bad();
    }
    if (results.empty() || results.back().query_id != fields[0]) {
      results.push_back({fields[0], {}});
    }
    RankedResult& r = results.back();
    if (rank != r.hits.size() + 1) throw bad();
    r.hits.push_back({fields[2], dist});
  }
  return results;
}

}  // namespace spvp
