#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "demo/compaction.hpp"
#include "demo/tensor.hpp"

namespace demo {

// ---------------------------------------------------------------------------
// Wire format (all integers little-endian):
//
//   header  : "DEMO" | version u8 (=1) | rank u16 | step u32 | tensor_count u32
//   tensor  : tensor_id u32 | k u16 | chunk_count u32 | index_width u8 (2 or 4)
//             | chunk_count*k indices (index_width bytes each)
//             | chunk_count*k amplitudes (IEEE-754 binary32)
//
// Indices are 2 bytes when the chunk volume is <= 65536, 4 bytes otherwise.
// ---------------------------------------------------------------------------

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kPayloadHeaderBytes = 15;
inline constexpr std::size_t kTensorHeaderBytes = 11;
inline constexpr std::size_t kAmplitudeBytes = 4;

std::uint8_t index_width_for(std::size_t chunk_volume);

// One tensor's section of a payload, as it appears on the wire. Geometry is
// not transmitted; every worker derives it from the shared model shapes.
struct PayloadEntry {
  std::uint32_t tensor_id = 0;
  std::uint16_t k = 0;
  std::uint32_t chunk_count = 0;
  std::uint8_t index_width = 2;
  std::vector<std::uint32_t> freq;
  std::vector<float> ampl;

  std::uint64_t data_bytes() const;  // indices + amplitudes, excluding the section header

  bool operator==(const PayloadEntry&) const = default;
};

PayloadEntry to_entry(const CompressedComponents& c);
// Rebinds a received entry to the local geometry. Throws GeometryMismatch or
// KMismatch if the entry does not fit it.
CompressedComponents to_components(const PayloadEntry& e, const ChunkGeometry& g,
                                   std::size_t expected_k);

struct SyncPayload {
  std::uint16_t rank = 0;
  std::uint32_t step = 0;
  std::vector<PayloadEntry> entries;  // strictly increasing tensor_id

  bool operator==(const SyncPayload&) const = default;
};

std::vector<std::uint8_t> serialize(const SyncPayload& p);
// Throws MalformedPayload carrying the byte offset of the first problem.
SyncPayload deserialize(std::span<const std::uint8_t> bytes);

// Analytic traffic of one DeMo step for one worker in a full-mesh all-gather.
struct TrafficEstimate {
  std::uint64_t payload_bytes = 0;   // index + amplitude bytes of all tensors
  std::uint64_t frame_bytes = 0;     // serialized payload including headers
  std::uint64_t bytes_sent = 0;      // frame_bytes to each of the W-1 peers
  std::uint64_t bytes_received = 0;  // one frame from each of the W-1 peers
};

TrafficEstimate bytes_per_step(std::span<const ChunkGeometry> model_geometry, std::size_t k,
                               int world_size);

// Bytes a full-precision gradient all-reduce would carry per worker
// (bytes_per_element * parameter count).
std::uint64_t dense_gradient_bytes(std::span<const ChunkGeometry> model_geometry,
                                   std::size_t bytes_per_element = 4);

// ---------------------------------------------------------------------------
// Traffic accounting
// ---------------------------------------------------------------------------

struct StepTraffic {
  std::uint64_t step = 0;
  int rank = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::vector<std::uint64_t> payload_bytes_per_tensor;
  std::uint64_t digest = 0;  // FNV-1a over all gathered frames, rank order

  std::uint64_t payload_bytes() const;
};

class CommLedger {
 public:
  void record(StepTraffic t);

  const std::vector<StepTraffic>& steps() const { return steps_; }
  std::uint64_t total_sent() const { return total_sent_; }
  std::uint64_t total_received() const { return total_received_; }

  // Columns: step,rank,bytes_sent,bytes_received
  void write_csv(std::ostream& os, bool header = true) const;

 private:
  std::vector<StepTraffic> steps_;
  std::uint64_t total_sent_ = 0;
  std::uint64_t total_received_ = 0;
};

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

// ---------------------------------------------------------------------------
// Collectives
// ---------------------------------------------------------------------------

// A fixed group of W workers. all_gather is a barrier: it returns only once
// every rank has contributed for the same step, and the result is ordered
// by rank regardless of arrival order.
class Collective {
 public:
  Collective(int rank, int world_size);
  virtual ~Collective() = default;

  Collective(const Collective&) = delete;
  Collective& operator=(const Collective&) = delete;

  int rank() const { return rank_; }
  int world_size() const { return world_size_; }

  std::vector<SyncPayload> all_gather(const SyncPayload& payload);

  // Rank-ordered sum divided by W, for the fully synchronized baselines.
  template <Real T>
  void all_reduce_mean(std::span<DenseTensor<T>> tensors, std::uint32_t step);

  const CommLedger& ledger() const { return ledger_; }

 protected:
  // Sends `frame` to every peer and returns all W frames, own frame at
  // index rank().
  virtual std::vector<std::vector<std::uint8_t>> exchange(std::span<const std::uint8_t> frame) = 0;

 private:
  std::vector<std::vector<std::uint8_t>> exchange_and_account(
      std::span<const std::uint8_t> frame, std::uint64_t step,
      std::vector<std::uint64_t> payload_bytes_per_tensor);

  int rank_;
  int world_size_;
  CommLedger ledger_;
};

// Rendezvous point shared by the workers of an in-process group.
class InMemoryHub {
 public:
  explicit InMemoryHub(int world_size,
                       std::chrono::milliseconds timeout = std::chrono::seconds(30));

  int world_size() const { return world_size_; }

  std::vector<std::vector<std::uint8_t>> exchange(int rank, std::span<const std::uint8_t> frame);

  // Wakes every waiting worker with PeerDisconnected; later calls fail too.
  void abort();

 private:
  using Round = std::vector<std::vector<std::uint8_t>>;

  int world_size_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  std::condition_variable cv_;
  Round slots_;
  std::vector<bool> filled_;
  int arrived_ = 0;
  std::uint64_t generation_ = 0;
  std::shared_ptr<const Round> published_;
  bool aborted_ = false;
};

class InMemoryCollective final : public Collective {
 public:
  InMemoryCollective(std::shared_ptr<InMemoryHub> hub, int rank);

 protected:
  std::vector<std::vector<std::uint8_t>> exchange(std::span<const std::uint8_t> frame) override;

 private:
  std::shared_ptr<InMemoryHub> hub_;
};

}  // namespace demo
