#include "demo/collective.hpp"

#include <bit>
#include <cstring>
#include <ostream>
#include <string>
#include <utility>

namespace demo {

namespace {

static_assert(std::endian::native == std::endian::little,
              "wire encoding assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::size_t reserve) { out_.reserve(reserve); }

  template <class U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::size_t size() const { return out_.size(); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, in_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw MalformedPayload(std::string("truncated ") + what + ": need " + std::to_string(n) +
                                 " bytes, have " + std::to_string(in_.size() - pos_),
                             pos_);
    }
  }
  const std::uint8_t* cursor() const { return in_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'D', 'E', 'M', 'O'};
constexpr char kDenseMagic[4] = {'D', 'G', 'R', 'D'};

}  // namespace

std::uint8_t index_width_for(std::size_t chunk_volume) { return chunk_volume <= 65536 ? 2 : 4; }

std::uint64_t PayloadEntry::data_bytes() const {
  return static_cast<std::uint64_t>(freq.size()) * index_width +
         static_cast<std::uint64_t>(ampl.size()) * kAmplitudeBytes;
}

PayloadEntry to_entry(const CompressedComponents& c) {
  if (c.k > 0xFFFF) throw InvalidK("k=" + std::to_string(c.k) + " does not fit the u16 wire field");
  PayloadEntry e;
  e.tensor_id = c.tensor_id;
  e.k = static_cast<std::uint16_t>(c.k);
  e.chunk_count = static_cast<std::uint32_t>(c.geometry.chunk_count());
  e.index_width = index_width_for(c.geometry.chunk_volume());
  e.freq = c.freq;
  e.ampl = c.ampl;
  return e;
}

CompressedComponents to_components(const PayloadEntry& e, const ChunkGeometry& g,
                                   std::size_t expected_k) {
  if (e.chunk_count != g.chunk_count() || e.index_width != index_width_for(g.chunk_volume())) {
    throw GeometryMismatch("tensor " + std::to_string(e.tensor_id) + ": payload has " +
                           std::to_string(e.chunk_count) + " chunks, local geometry has " +
                           std::to_string(g.chunk_count()));
  }
  if (e.k != expected_k) {
    throw KMismatch("tensor " + std::to_string(e.tensor_id) + ": payload k=" +
                    std::to_string(e.k) + ", expected " + std::to_string(expected_k));
  }
  CompressedComponents c;
  c.tensor_id = e.tensor_id;
  c.geometry = g;
  c.k = e.k;
  c.freq = e.freq;
  c.ampl = e.ampl;
  return c;
}

std::vector<std::uint8_t> serialize(const SyncPayload& p) {
  std::size_t total = kPayloadHeaderBytes;
  for (const auto& e : p.entries) total += kTensorHeaderBytes + e.data_bytes();

  Writer w(total);
  w.put_bytes(kMagic, 4);
  w.put<std::uint8_t>(kWireVersion);
  w.put<std::uint16_t>(p.rank);
  w.put<std::uint32_t>(p.step);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.entries.size()));
  bool first = true;
  std::uint32_t prev_id = 0;
  for (const auto& e : p.entries) {
    if (!first && e.tensor_id <= prev_id) throw Error("payload tensor ids must strictly increase");
    first = false;
    prev_id = e.tensor_id;
    const std::size_t n = static_cast<std::size_t>(e.chunk_count) * e.k;
    if (e.freq.size() != n || e.ampl.size() != n) {
      throw Error("payload entry arrays do not match chunk_count * k");
    }
    if (e.index_width != 2 && e.index_width != 4) throw Error("index width must be 2 or 4");
    w.put<std::uint32_t>(e.tensor_id);
    w.put<std::uint16_t>(e.k);
    w.put<std::uint32_t>(e.chunk_count);
    w.put<std::uint8_t>(e.index_width);
    if (e.index_width == 2) {
      for (std::uint32_t f : e.freq) {
        if (f > 0xFFFF) throw Error("frequency index does not fit a 2-byte field");
        w.put<std::uint16_t>(static_cast<std::uint16_t>(f));
      }
    } else {
      for (std::uint32_t f : e.freq) w.put<std::uint32_t>(f);
    }
    w.put_bytes(e.ampl.data(), e.ampl.size() * sizeof(float));
  }
  return w.take();
}

SyncPayload deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(r.cursor(), kMagic, 4) != 0) throw MalformedPayload("bad magic", 0);
  r.skip(4);
  const auto version = r.get<std::uint8_t>("version");
  if (version != kWireVersion) {
    throw MalformedPayload("unsupported version " + std::to_string(version), r.pos() - 1);
  }
  SyncPayload p;
  p.rank = r.get<std::uint16_t>("rank");
  p.step = r.get<std::uint32_t>("step");
  const auto count = r.get<std::uint32_t>("tensor_count");
  // Each section needs at least its header, which bounds a hostile count.
  if (count > (bytes.size() - r.pos()) / kTensorHeaderBytes) {
    throw MalformedPayload("tensor_count " + std::to_string(count) + " exceeds message size",
                           r.pos() - 4);
  }
  p.entries.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t section = r.pos();
    PayloadEntry e;
    e.tensor_id = r.get<std::uint32_t>("tensor_id");
    if (!p.entries.empty() && e.tensor_id <= p.entries.back().tensor_id) {
      throw MalformedPayload("tensor ids not strictly increasing", section);
    }
    e.k = r.get<std::uint16_t>("k");
    e.chunk_count = r.get<std::uint32_t>("chunk_count");
    e.index_width = r.get<std::uint8_t>("index_width");
    if (e.index_width != 2 && e.index_width != 4) {
      throw MalformedPayload("index width " + std::to_string(e.index_width) + " not in {2,4}",
                             r.pos() - 1);
    }
    const std::uint64_t n = static_cast<std::uint64_t>(e.chunk_count) * e.k;
    r.need(n * (e.index_width + kAmplitudeBytes), "tensor data");
    e.freq.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      e.freq[i] = e.index_width == 2 ? r.get<std::uint16_t>("index") : r.get<std::uint32_t>("index");
    }
    e.ampl.resize(n);
    std::memcpy(e.ampl.data(), r.cursor(), n * sizeof(float));
    r.skip(n * sizeof(float));
    p.entries.push_back(std::move(e));
  }
  if (!r.done()) throw MalformedPayload("trailing bytes after last tensor", r.pos());
  return p;
}

TrafficEstimate bytes_per_step(std::span<const ChunkGeometry> model_geometry, std::size_t k,
                               int world_size) {
  TrafficEstimate est;
  std::uint64_t frame = kPayloadHeaderBytes;
  for (const auto& g : model_geometry) {
    const std::uint64_t kk = effective_topk(k, g);
    const std::uint64_t data =
        g.chunk_count() * kk * (index_width_for(g.chunk_volume()) + kAmplitudeBytes);
    est.payload_bytes += data;
    frame += kTensorHeaderBytes + data;
  }
  est.frame_bytes = frame;
  const std::uint64_t peers = world_size > 1 ? static_cast<std::uint64_t>(world_size - 1) : 0;
  est.bytes_sent = peers * frame;
  est.bytes_received = peers * frame;
  return est;
}

std::uint64_t dense_gradient_bytes(std::span<const ChunkGeometry> model_geometry,
                                   std::size_t bytes_per_element) {
  std::uint64_t n = 0;
  for (const auto& g : model_geometry) n += volume(g.tensor_shape());
  return n * bytes_per_element;
}

std::uint64_t StepTraffic::payload_bytes() const {
  std::uint64_t total = 0;
  for (auto b : payload_bytes_per_tensor) total += b;
  return total;
}

void CommLedger::record(StepTraffic t) {
  total_sent_ += t.bytes_sent;
  total_received_ += t.bytes_received;
  steps_.push_back(std::move(t));
}

void CommLedger::write_csv(std::ostream& os, bool header) const {
  if (header) os << "step,rank,bytes_sent,bytes_received\n";
  for (const auto& s : steps_) {
    os << s.step << ',' << s.rank << ',' << s.bytes_sent << ',' << s.bytes_received << '\n';
  }
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

Collective::Collective(int rank, int world_size) : rank_(rank), world_size_(world_size) {
  if (world_size < 1) throw Error("world size must be >= 1");
  if (rank < 0 || rank >= world_size) {
    throw Error("rank " + std::to_string(rank) + " outside [0, " + std::to_string(world_size) +
                ")");
  }
  if (world_size > 0xFFFF) throw Error("world size does not fit the u16 rank field");
}

std::vector<std::vector<std::uint8_t>> Collective::exchange_and_account(
    std::span<const std::uint8_t> frame, std::uint64_t step,
    std::vector<std::uint64_t> payload_bytes_per_tensor) {
  auto frames = world_size_ == 1 ? std::vector<std::vector<std::uint8_t>>{{frame.begin(), frame.end()}}
                                 : exchange(frame);
  if (frames.size() != static_cast<std::size_t>(world_size_)) {
    throw TransportError("exchange returned " + std::to_string(frames.size()) + " frames");
  }
  StepTraffic t;
  t.step = step;
  t.rank = rank_;
  t.bytes_sent = static_cast<std::uint64_t>(world_size_ - 1) * frame.size();
  std::uint64_t digest = 0xcbf29ce484222325ull;
  for (int r = 0; r < world_size_; ++r) {
    if (r != rank_) t.bytes_received += frames[r].size();
    digest = fnv1a(frames[r], digest);
  }
  t.digest = digest;
  t.payload_bytes_per_tensor = std::move(payload_bytes_per_tensor);
  ledger_.record(std::move(t));
  return frames;
}

std::vector<SyncPayload> Collective::all_gather(const SyncPayload& payload) {
  if (payload.rank != rank_) throw Error("payload rank does not match collective rank");
  const auto frame = serialize(payload);
  std::vector<std::uint64_t> per_tensor;
  per_tensor.reserve(payload.entries.size());
  for (const auto& e : payload.entries) per_tensor.push_back(e.data_bytes());

  auto frames = exchange_and_account(frame, payload.step, std::move(per_tensor));
  std::vector<SyncPayload> gathered;
  gathered.reserve(frames.size());
  for (std::size_t r = 0; r < frames.size(); ++r) {
    SyncPayload p = deserialize(frames[r]);
    if (p.rank != r) {
      throw TransportError("frame in slot " + std::to_string(r) + " came from rank " +
                           std::to_string(p.rank));
    }
    if (p.step != payload.step) {
      throw StepMismatch("rank " + std::to_string(r) + " is at step " + std::to_string(p.step) +
                         ", expected " + std::to_string(payload.step));
    }
    gathered.push_back(std::move(p));
  }
  return gathered;
}

template <Real T>
void Collective::all_reduce_mean(std::span<DenseTensor<T>> tensors, std::uint32_t step) {
  std::uint64_t elements = 0;
  for (const auto& t : tensors) elements += t.size();

  Writer w(4 + 1 + 2 + 4 + 1 + 8 + elements * sizeof(T));
  w.put_bytes(kDenseMagic, 4);
  w.put<std::uint8_t>(kWireVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(rank_));
  w.put<std::uint32_t>(step);
  w.put<std::uint8_t>(sizeof(T));
  w.put<std::uint64_t>(elements);
  for (const auto& t : tensors) w.put_bytes(t.data().data(), t.size() * sizeof(T));
  const auto frame = w.take();
  constexpr std::size_t kDenseHeader = 20;

  std::vector<std::uint64_t> per_tensor;
  for (const auto& t : tensors) per_tensor.push_back(t.size() * sizeof(T));
  auto frames = exchange_and_account(frame, step, std::move(per_tensor));

  std::vector<double> sum(elements, 0.0);
  for (std::size_t r = 0; r < frames.size(); ++r) {
    Reader rd(frames[r]);
    rd.need(4, "magic");
    if (std::memcmp(rd.cursor(), kDenseMagic, 4) != 0) throw MalformedPayload("bad magic", 0);
    rd.skip(4);
    rd.get<std::uint8_t>("version");
    const auto from = rd.get<std::uint16_t>("rank");
    const auto their_step = rd.get<std::uint32_t>("step");
    const auto width = rd.get<std::uint8_t>("dtype");
    const auto count = rd.get<std::uint64_t>("count");
    if (from != r) throw TransportError("dense frame from unexpected rank");
    if (their_step != step) {
      throw StepMismatch("rank " + std::to_string(r) + " is at step " +
                         std::to_string(their_step) + ", expected " + std::to_string(step));
    }
    if (width != sizeof(T) || count != elements) {
      throw MalformedPayload("dense frame layout differs from local tensors", kDenseHeader);
    }
    rd.need(count * sizeof(T), "dense data");
    const T* values = reinterpret_cast<const T*>(rd.cursor());
    for (std::uint64_t i = 0; i < count; ++i) {
      T v;
      std::memcpy(&v, values + i, sizeof(T));
      sum[i] += static_cast<double>(v);
    }
  }
  const double w_inv = static_cast<double>(world_size_);
  std::size_t at = 0;
  for (auto& t : tensors) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(sum[at++] / w_inv);
  }
}

template void Collective::all_reduce_mean(std::span<DenseTensor<float>>, std::uint32_t);
template void Collective::all_reduce_mean(std::span<DenseTensor<double>>, std::uint32_t);

InMemoryHub::InMemoryHub(int world_size, std::chrono::milliseconds timeout)
    : world_size_(world_size),
      timeout_(timeout),
      slots_(static_cast<std::size_t>(world_size)),
      filled_(static_cast<std::size_t>(world_size), false) {
  if (world_size < 1) throw Error("world size must be >= 1");
}

std::vector<std::vector<std::uint8_t>> InMemoryHub::exchange(int rank,
                                                             std::span<const std::uint8_t> frame) {
  std::unique_lock lock(mutex_);
  if (aborted_) throw PeerDisconnected("in-memory group was aborted");
  if (filled_[rank]) throw StepMismatch("rank " + std::to_string(rank) + " entered a barrier twice");
  slots_[rank].assign(frame.begin(), frame.end());
  filled_[rank] = true;
  if (++arrived_ == world_size_) {
    published_ = std::make_shared<const Round>(std::move(slots_));
    slots_ = Round(static_cast<std::size_t>(world_size_));
    filled_.assign(filled_.size(), false);
    arrived_ = 0;
    ++generation_;
    cv_.notify_all();
    return *published_;
  }
  // The round cannot be replaced before this worker joins the next one, so
  // published_ is still ours when the wait returns.
  const std::uint64_t mine = generation_;
  const bool done = cv_.wait_for(lock, timeout_, [&] { return generation_ != mine || aborted_; });
  if (generation_ != mine) return *published_;
  if (aborted_) throw PeerDisconnected("in-memory group was aborted while waiting");
  if (!done) {
    throw Timeout("barrier timed out after " + std::to_string(timeout_.count()) + " ms with " +
                  std::to_string(arrived_) + "/" + std::to_string(world_size_) + " arrivals");
  }
  throw TransportError("barrier woke without completing");
}

void InMemoryHub::abort() {
  std::lock_guard lock(mutex_);
  aborted_ = true;
  cv_.notify_all();
}

InMemoryCollective::InMemoryCollective(std::shared_ptr<InMemoryHub> hub, int rank)
    : Collective(rank, hub->world_size()), hub_(std::move(hub)) {}

std::vector<std::vector<std::uint8_t>> InMemoryCollective::exchange(
    std::span<const std::uint8_t> frame) {
  return hub_->exchange(rank(), frame);
}

}  // namespace demo
