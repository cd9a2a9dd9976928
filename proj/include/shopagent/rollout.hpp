#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <thread>

#include "shopagent/ppo.hpp"

namespace shopagent::rollout {

using env::ActionSpec;
using model::ContextEncoding;
using model::ModelParameters;
using model::Vocabulary;
using Snapshot = std::shared_ptr<const ModelParameters<float>>;

/// Scoring work for one stream. An empty action set asks for the value only.
struct ScoreRequest {
  std::uint32_t stream = 0;
  ContextEncoding context;
  std::vector<ActionSpec> actions;  // may hold the open query slot
  std::uint64_t query_seed = 0;     // seeds query sampling for this request only

  bool operator==(const ScoreRequest&) const = default;
};

struct ScoreResponse {
  std::uint32_t stream = 0;
  policy::ScoredActionSet dist;
  double value = 0.0;

  bool operator==(const ScoreResponse&) const = default;
};

/// What every worker computes for a request under a snapshot.
ScoreResponse score_request(const ModelParameters<float>& params, const Vocabulary& vocab, const ScoreRequest& req);

/// A stateless scorer bound to one parameter snapshot at a time.
class Worker {
 public:
  virtual ~Worker() = default;
  virtual void load(const Snapshot& snapshot) = 0;
  /// Starts scoring; the future carries the response or the failure.
  virtual std::future<ScoreResponse> submit(const ScoreRequest& req) = 0;
  virtual std::string name() const = 0;
};

/// Serves requests in order on a private thread. Subclasses decide how a
/// request is scored.
class QueuedWorker : public Worker {
 public:
  explicit QueuedWorker(std::string name);
  ~QueuedWorker() override;

  void load(const Snapshot& snapshot) override;
  std::future<ScoreResponse> submit(const ScoreRequest& req) override;
  std::string name() const override { return name_; }

  // Fault injection for tests.
  void set_delay(std::chrono::milliseconds d) { delay_ms_.store(d.count()); }
  void fail_next(int n) { fail_next_.store(n); }
  void fail_loads(bool on) { fail_loads_.store(on); }
  std::size_t served() const { return served_.load(); }

 protected:
  /// Must be called by the most-derived destructor before members go away.
  void shutdown();
  virtual void do_load(const Snapshot& snapshot) = 0;
  virtual ScoreResponse do_score(const ScoreRequest& req) = 0;

 private:
  struct Job {
    bool is_load = false;
    ScoreRequest req;
    Snapshot snapshot;
    std::promise<ScoreResponse> done;
  };
  void run();
  std::future<ScoreResponse> enqueue(std::shared_ptr<Job> job);

  std::string name_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::shared_ptr<Job>> queue_;
  bool stop_ = false;
  std::atomic<long> delay_ms_{0};
  std::atomic<int> fail_next_{0};
  std::atomic<bool> fail_loads_{false};
  std::atomic<std::size_t> served_{0};
  std::thread thread_;
};

/// Scores with the model in this process.
class LocalWorker : public QueuedWorker {
 public:
  LocalWorker(std::shared_ptr<const Vocabulary> vocab, std::string name);
  ~LocalWorker() override;

 protected:
  void do_load(const Snapshot& snapshot) override { snapshot_ = snapshot; }
  ScoreResponse do_score(const ScoreRequest& req) override;

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  Snapshot snapshot_;
};

// Inter-process framing: u32 payload length | u8 kind | payload, little-endian.
enum class FrameKind : std::uint8_t {
  LoadSnapshot = 1,
  Score = 2,
  Shutdown = 3,
  Ack = 0x81,
  ScoreResult = 0x82,
  Error = 0x83,
};

struct Frame {
  FrameKind kind = FrameKind::Ack;
  std::string payload;
};

std::string encode_request(const ScoreRequest& req);
ScoreRequest decode_request(const std::string& payload);
std::string encode_response(const ScoreResponse& resp);
ScoreResponse decode_response(const std::string& payload);

void write_frame(int fd, const Frame& frame);
/// Blocks for one frame; throws RuntimeAbort on a closed or broken stream.
Frame read_frame(int fd);

/// Serves scoring frames on `fd` until Shutdown or end of stream.
void serve(int fd, const Vocabulary& vocab);

/// Worker reached over a local socket. The serving side runs in a thread on
/// the other end of a socket pair; any process holding that end could serve.
class SocketWorker : public QueuedWorker {
 public:
  SocketWorker(std::shared_ptr<const Vocabulary> vocab, std::string name);
  ~SocketWorker() override;

 protected:
  void do_load(const Snapshot& snapshot) override;
  ScoreResponse do_score(const ScoreRequest& req) override;

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  int fd_ = -1;
  int peer_fd_ = -1;
  std::thread server_;
};

struct DispatchOptions {
  std::chrono::milliseconds timeout{30000};
};

/// Master side: owns the workers and routes requests.
class WorkerPool {
 public:
  explicit WorkerPool(std::vector<std::unique_ptr<Worker>> workers, DispatchOptions options = {});

  std::size_t size() const { return workers_.size(); }
  Worker& worker(std::size_t i) { return *workers_[i]; }
  /// Worker index a request is routed to.
  std::size_t assignment(std::uint32_t stream) const { return stream % workers_.size(); }

  /// Round-robin by stream id; responses come back in request order. A
  /// failed or timed-out request is retried once on the next worker.
  std::vector<ScoreResponse> dispatch(const std::vector<ScoreRequest>& requests);

  /// Installs a snapshot on every worker. Rejected while a collection is in
  /// flight; throws RuntimeAbort naming the workers that failed to load.
  void refresh_snapshot(const Snapshot& snapshot);
  const Snapshot& snapshot() const { return snapshot_; }

  /// Marks a collection in flight (see refresh_snapshot).
  void begin_collection();
  void end_collection();
  bool collecting() const { return collecting_.load(); }

 private:
  std::vector<std::unique_ptr<Worker>> workers_;
  DispatchOptions options_;
  Snapshot snapshot_;
  std::atomic<bool> collecting_{false};
};

std::unique_ptr<WorkerPool> make_local_pool(std::shared_ptr<const Vocabulary> vocab, int n_workers,
                                            DispatchOptions options = {});
std::unique_ptr<WorkerPool> make_socket_pool(std::shared_ptr<const Vocabulary> vocab, int n_workers,
                                             DispatchOptions options = {});

struct CollectorConfig {
  int n_streams = 16;
  int horizon = env::kDefaultHorizon;
  model::ContextOptions context;
  std::optional<std::string> goal_category;  // nullopt: all categories
};

/// Owns the parallel environment sessions and fills rollout buffers.
class Collector {
 public:
  Collector(std::shared_ptr<const env::Catalog> catalog, std::shared_ptr<const Vocabulary> vocab,
            CollectorConfig cfg, std::uint64_t seed);

  /// steps_per_env lockstep rounds over every stream with the pool's current
  /// snapshot. Episodes that end are restarted with a fresh training goal.
  ppo::RolloutBuffer collect(WorkerPool& pool, int steps_per_env, const policy::DecodingConfig& decoding);

  long env_steps() const { return env_steps_; }
  long rounds() const { return rounds_; }

 private:
  struct Stream {
    std::unique_ptr<env::ShopEnv> env;
    std::optional<env::Observation> prev;
    env::Observation cur;
    Rng select_rng;
  };
  void restart(Stream& s);

  std::shared_ptr<const env::Catalog> catalog_;
  std::shared_ptr<const Vocabulary> vocab_;
  CollectorConfig cfg_;
  std::uint64_t seed_;
  env::GoalStream goals_;
  std::vector<Stream> streams_;
  long env_steps_ = 0;
  long rounds_ = 0;
};

}  // namespace shopagent::rollout
