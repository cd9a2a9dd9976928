#include "shopagent/rollout.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

#include "shopagent/bytes.hpp"
#include "shopagent/checkpoint.hpp"

namespace shopagent::rollout {

ScoreResponse score_request(const ModelParameters<float>& params, const Vocabulary& vocab, const ScoreRequest& req) {
  ScoreResponse resp;
  resp.stream = req.stream;
  if (req.actions.empty()) {
    resp.value = model::estimate_value(params, req.context);
    return resp;
  }
  std::vector<ActionSpec> actions = req.actions;
  Rng query_rng(req.query_seed);
  for (auto& a : actions)
    if (a.is_query_slot()) a.surface = policy::sample_query(params, vocab, req.context, query_rng);

  model::Tape<float> tape(false);
  model::Forward<float> fwd(params, tape);
  auto g = policy::build_action_graph(fwd, vocab, req.context, actions);
  const auto mv = tape.values(g.means);
  resp.dist = policy::distribution_from_means(std::move(actions), std::vector<double>(mv.begin(), mv.end()));
  resp.value = tape.item(fwd.value(g.encoded));
  return resp;
}

// ---------------------------------------------------------------------------
// Queued workers

QueuedWorker::QueuedWorker(std::string name) : name_(std::move(name)), thread_([this] { run(); }) {}

QueuedWorker::~QueuedWorker() { shutdown(); }

void QueuedWorker::shutdown() {
  {
    std::lock_guard lock(mu_);
    if (stop_ && !thread_.joinable()) return;
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

std::future<ScoreResponse> QueuedWorker::enqueue(std::shared_ptr<Job> job) {
  auto fut = job->done.get_future();
  {
    std::lock_guard lock(mu_);
    require(!stop_, "worker " + name_ + " is shut down");
    queue_.push_back(std::move(job));
  }
  cv_.notify_one();
  return fut;
}

void QueuedWorker::load(const Snapshot& snapshot) {
  require(snapshot != nullptr, "cannot load an empty snapshot");
  auto job = std::make_shared<Job>();
  job->is_load = true;
  job->snapshot = snapshot;
  enqueue(std::move(job)).get();
}

std::future<ScoreResponse> QueuedWorker::submit(const ScoreRequest& req) {
  auto job = std::make_shared<Job>();
  job->req = req;
  return enqueue(std::move(job));
}

void QueuedWorker::run() {
  for (;;) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      if (job->is_load) {
        if (fail_loads_.load()) throw RuntimeAbort("worker " + name_ + " refused the snapshot");
        do_load(job->snapshot);
        job->done.set_value({});
        continue;
      }
      if (const long ms = delay_ms_.load(); ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
      if (fail_next_.load() > 0) {
        fail_next_.fetch_sub(1);
        throw RuntimeAbort("worker " + name_ + " injected failure");
      }
      auto resp = do_score(job->req);
      served_.fetch_add(1);
      job->done.set_value(std::move(resp));
    } catch (...) {
      job->done.set_exception(std::current_exception());
    }
  }
}

LocalWorker::LocalWorker(std::shared_ptr<const Vocabulary> vocab, std::string name)
    : QueuedWorker(std::move(name)), vocab_(std::move(vocab)) {}

LocalWorker::~LocalWorker() { shutdown(); }

ScoreResponse LocalWorker::do_score(const ScoreRequest& req) {
  if (!snapshot_) throw RuntimeAbort("worker " + name() + " has no snapshot");
  return score_request(*snapshot_, *vocab_, req);
}

// ---------------------------------------------------------------------------
// Wire format

namespace {

void put_actions(bytes::Writer& w, const std::vector<ActionSpec>& actions) {
  w.u32(static_cast<std::uint32_t>(actions.size()));
  for (const auto& a : actions) {
    w.u8(static_cast<std::uint8_t>(a.kind));
    w.u32(static_cast<std::uint32_t>(a.surface.size()));
    for (const auto& t : a.surface) w.str(t);
  }
}

std::vector<ActionSpec> get_actions(bytes::Reader& r) {
  std::vector<ActionSpec> out(r.u32());
  for (auto& a : out) {
    const std::uint8_t kind = r.u8();
    require(kind <= 1, "frame: unknown action kind");
    a.kind = static_cast<env::ActionKind>(kind);
    a.surface.resize(r.u32());
    for (auto& t : a.surface) t = r.str();
  }
  return out;
}

void write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::write(fd, data, n);
    if (k < 0 && errno == EINTR) continue;
    if (k <= 0) throw RuntimeAbort(std::string("frame write failed: ") + std::strerror(errno));
    data += k;
    n -= static_cast<std::size_t>(k);
  }
}

bool read_all(int fd, char* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t k = ::read(fd, data + got, n - got);
    if (k < 0 && errno == EINTR) continue;
    if (k < 0) throw RuntimeAbort(std::string("frame read failed: ") + std::strerror(errno));
    if (k == 0) {
      if (got == 0) return false;
      throw RuntimeAbort("frame truncated by end of stream");
    }
    got += static_cast<std::size_t>(k);
  }
  return true;
}

}  // namespace

std::string encode_request(const ScoreRequest& req) {
  bytes::Writer w;
  w.u32(req.stream);
  w.u64(req.query_seed);
  w.u32(static_cast<std::uint32_t>(req.context.token_ids.size()));
  for (auto id : req.context.token_ids) w.i32(id);
  for (auto s : req.context.segments) w.u8(s);
  put_actions(w, req.actions);
  return w.take();
}

ScoreRequest decode_request(const std::string& payload) {
  bytes::Reader r(payload);
  ScoreRequest req;
  req.stream = r.u32();
  req.query_seed = r.u64();
  const std::uint32_t n = r.u32();
  req.context.token_ids.resize(n);
  req.context.segments.resize(n);
  for (auto& id : req.context.token_ids) id = r.i32();
  for (auto& s : req.context.segments) s = r.u8();
  req.actions = get_actions(r);
  require(r.done(), "frame: trailing bytes after request");
  return req;
}

std::string encode_response(const ScoreResponse& resp) {
  bytes::Writer w;
  w.u32(resp.stream);
  put_actions(w, resp.dist.actions);
  for (double x : resp.dist.mean_logprobs) w.f64(x);
  for (double x : resp.dist.probs) w.f64(x);
  w.f64(resp.value);
  return w.take();
}

ScoreResponse decode_response(const std::string& payload) {
  bytes::Reader r(payload);
  ScoreResponse resp;
  resp.stream = r.u32();
  resp.dist.actions = get_actions(r);
  const std::size_t n = resp.dist.actions.size();
  resp.dist.mean_logprobs.resize(n);
  resp.dist.probs.resize(n);
  for (auto& x : resp.dist.mean_logprobs) x = r.f64();
  for (auto& x : resp.dist.probs) x = r.f64();
  resp.value = r.f64();
  require(r.done(), "frame: trailing bytes after response");
  return resp;
}

void write_frame(int fd, const Frame& frame) {
  bytes::Writer w;
  w.u32(static_cast<std::uint32_t>(frame.payload.size()));
  w.u8(static_cast<std::uint8_t>(frame.kind));
  std::string head = w.take();
  write_all(fd, head.data(), head.size());
  write_all(fd, frame.payload.data(), frame.payload.size());
}

Frame read_frame(int fd) {
  char head[5];
  if (!read_all(fd, head, sizeof head)) throw RuntimeAbort("frame stream closed");
  bytes::Reader r(std::string_view(head, sizeof head));
  const std::uint32_t len = r.u32();
  Frame f;
  f.kind = static_cast<FrameKind>(r.u8());
  f.payload.resize(len);
  if (len > 0 && !read_all(fd, f.payload.data(), len)) throw RuntimeAbort("frame truncated by end of stream");
  return f;
}

void serve(int fd, const Vocabulary& vocab) {
  std::shared_ptr<const ModelParameters<float>> params;
  for (;;) {
    Frame in;
    try {
      in = read_frame(fd);
    } catch (const RuntimeAbort&) {
      return;  // peer went away
    }
    try {
      switch (in.kind) {
        case FrameKind::LoadSnapshot:
          params = std::make_shared<const ModelParameters<float>>(model::checkpoint_from_bytes(in.payload));
          write_frame(fd, {FrameKind::Ack, {}});
          break;
        case FrameKind::Score: {
          if (!params) throw RuntimeAbort("no snapshot loaded");
          write_frame(fd, {FrameKind::ScoreResult, encode_response(score_request(*params, vocab, decode_request(in.payload)))});
          break;
        }
        case FrameKind::Shutdown:
          write_frame(fd, {FrameKind::Ack, {}});
          return;
        default:
          throw ContractViolation("unexpected frame kind " + std::to_string(static_cast<int>(in.kind)));
      }
    } catch (const std::exception& e) {
      write_frame(fd, {FrameKind::Error, e.what()});
    }
  }
}

SocketWorker::SocketWorker(std::shared_ptr<const Vocabulary> vocab, std::string name)
    : QueuedWorker(std::move(name)), vocab_(std::move(vocab)) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
    throw RuntimeAbort(std::string("socketpair failed: ") + std::strerror(errno));
  fd_ = fds[0];
  peer_fd_ = fds[1];
  server_ = std::thread([fd = peer_fd_, vocab = vocab_] { serve(fd, *vocab); });
}

SocketWorker::~SocketWorker() {
  shutdown();
  try {
    write_frame(fd_, {FrameKind::Shutdown, {}});
    read_frame(fd_);
  } catch (...) {
  }
  if (server_.joinable()) server_.join();
  ::close(fd_);
  ::close(peer_fd_);
}

void SocketWorker::do_load(const Snapshot& snapshot) {
  write_frame(fd_, {FrameKind::LoadSnapshot, model::checkpoint_bytes(*snapshot)});
  const Frame reply = read_frame(fd_);
  if (reply.kind != FrameKind::Ack) throw RuntimeAbort("worker " + name() + " rejected snapshot: " + reply.payload);
}

ScoreResponse SocketWorker::do_score(const ScoreRequest& req) {
  write_frame(fd_, {FrameKind::Score, encode_request(req)});
  const Frame reply = read_frame(fd_);
  if (reply.kind != FrameKind::ScoreResult) throw RuntimeAbort("worker " + name() + ": " + reply.payload);
  return decode_response(reply.payload);
}

// ---------------------------------------------------------------------------
// Pool

WorkerPool::WorkerPool(std::vector<std::unique_ptr<Worker>> workers, DispatchOptions options)
    : workers_(std::move(workers)), options_(options) {
  require(!workers_.empty(), "worker pool needs at least one worker");
}

std::vector<ScoreResponse> WorkerPool::dispatch(const std::vector<ScoreRequest>& requests) {
  require(snapshot_ != nullptr, "dispatch before any snapshot was installed");
  std::vector<std::future<ScoreResponse>> pending;
  pending.reserve(requests.size());
  for (const auto& req : requests) pending.push_back(workers_[assignment(req.stream)]->submit(req));

  auto await = [&](std::future<ScoreResponse>& f, std::string& why) -> std::optional<ScoreResponse> {
    if (f.wait_for(options_.timeout) != std::future_status::ready) {
      why = "timed out";
      return std::nullopt;
    }
    try {
      return f.get();
    } catch (const std::exception& e) {
      why = e.what();
      return std::nullopt;
    }
  };

  std::vector<ScoreResponse> out;
  out.reserve(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    std::string why;
    auto resp = await(pending[i], why);
    if (!resp) {
      const std::size_t first = assignment(requests[i].stream);
      const std::size_t second = (first + 1) % workers_.size();
      auto retry = workers_[second]->submit(requests[i]);
      std::string why2;
      resp = await(retry, why2);
      if (!resp)
        throw RuntimeAbort("dispatch: stream " + std::to_string(requests[i].stream) + " failed on " +
                           workers_[first]->name() + " (" + why + ") and " + workers_[second]->name() + " (" +
                           why2 + ")");
    }
    require(resp->stream == requests[i].stream, "dispatch: response matched to the wrong stream");
    out.push_back(std::move(*resp));
  }
  return out;
}

void WorkerPool::refresh_snapshot(const Snapshot& snapshot) {
  require(!collecting_.load(), "refresh_snapshot while a collection is in flight");
  require(snapshot != nullptr, "refresh_snapshot needs parameters");
  std::vector<std::string> failed;
  for (auto& w : workers_) {
    try {
      w->load(snapshot);
    } catch (const std::exception&) {
      failed.push_back(w->name());
    }
  }
  if (!failed.empty()) {
    std::string names;
    for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
    snapshot_.reset();
    throw RuntimeAbort("snapshot refresh failed on: " + names);
  }
  snapshot_ = snapshot;
}

void WorkerPool::begin_collection() {
  bool expected = false;
  require(collecting_.compare_exchange_strong(expected, true), "a collection is already in flight");
}

void WorkerPool::end_collection() { collecting_.store(false); }

std::unique_ptr<WorkerPool> make_local_pool(std::shared_ptr<const Vocabulary> vocab, int n_workers,
                                            DispatchOptions options) {
  require(n_workers >= 1, "need at least one worker");
  std::vector<std::unique_ptr<Worker>> ws;
  for (int i = 0; i < n_workers; ++i) ws.push_back(std::make_unique<LocalWorker>(vocab, "local-" + std::to_string(i)));
  return std::make_unique<WorkerPool>(std::move(ws), options);
}

std::unique_ptr<WorkerPool> make_socket_pool(std::shared_ptr<const Vocabulary> vocab, int n_workers,
                                             DispatchOptions options) {
  require(n_workers >= 1, "need at least one worker");
  std::vector<std::unique_ptr<Worker>> ws;
  for (int i = 0; i < n_workers; ++i)
    ws.push_back(std::make_unique<SocketWorker>(vocab, "socket-" + std::to_string(i)));
  return std::make_unique<WorkerPool>(std::move(ws), options);
}

// ---------------------------------------------------------------------------
// Collector

Collector::Collector(std::shared_ptr<const env::Catalog> catalog, std::shared_ptr<const Vocabulary> vocab,
                     CollectorConfig cfg, std::uint64_t seed)
    : catalog_(std::move(catalog)),
      vocab_(std::move(vocab)),
      cfg_(std::move(cfg)),
      seed_(seed),
      goals_(*catalog_, seed, env::GoalPurpose::Train, cfg_.goal_category) {
  require(cfg_.n_streams >= 1, "collector needs at least one stream");
  for (int s = 0; s < cfg_.n_streams; ++s) {
    Stream st;
    st.env = std::make_unique<env::ShopEnv>(catalog_, cfg_.horizon);
    st.select_rng = Rng(mix_seed(seed, 0x5e1ec7 + static_cast<std::uint64_t>(s)));
    streams_.push_back(std::move(st));
    restart(streams_.back());
  }
}

void Collector::restart(Stream& s) {
  s.cur = s.env->reset(goals_.next());
  s.prev.reset();
}

ppo::RolloutBuffer Collector::collect(WorkerPool& pool, int steps_per_env, const policy::DecodingConfig& decoding) {
  require(steps_per_env >= 1, "collect needs at least one step per stream");
  const Snapshot snapshot = pool.snapshot();
  require(snapshot != nullptr, "collect before any snapshot was installed");
  pool.begin_collection();
  struct Guard {
    WorkerPool& p;
    ~Guard() { p.end_collection(); }
  } guard{pool};

  ppo::RolloutBuffer buf;
  buf.streams.resize(streams_.size());
  for (int step = 0; step < steps_per_env; ++step) {
    ++rounds_;
    std::vector<ScoreRequest> reqs;
    reqs.reserve(streams_.size());
    for (std::size_t s = 0; s < streams_.size(); ++s) {
      const Stream& st = streams_[s];
      ScoreRequest r;
      r.stream = static_cast<std::uint32_t>(s);
      r.context = model::policy_context(*vocab_, st.env->state().instruction.goal_text,
                                        st.prev ? &*st.prev : nullptr, st.cur, cfg_.context);
      r.actions = st.cur.actions;
      r.query_seed = mix_seed(mix_seed(seed_, static_cast<std::uint64_t>(rounds_)), s);
      reqs.push_back(std::move(r));
    }
    auto resps = pool.dispatch(reqs);

    for (std::size_t s = 0; s < streams_.size(); ++s) {
      Stream& st = streams_[s];
      const ScoreResponse& resp = resps[s];
      const std::size_t idx = policy::select(resp.dist, decoding, st.select_rng);
      ppo::Transition tr;
      tr.context = std::move(reqs[s].context);
      tr.action_set = resp.dist.actions;
      tr.action_index = static_cast<int>(idx);
      tr.logprob_old = std::log(resp.dist.probs[idx]);
      tr.value_old = resp.value;
      const auto result = st.env->step(resp.dist.actions[idx]);
      ++env_steps_;
      tr.reward = result.reward;
      tr.done = result.done;
      buf.streams[s].push_back(std::move(tr));
      if (result.done) {
        buf.episode_rewards.push_back(result.reward);
        restart(st);
      } else {
        st.prev = std::move(st.cur);
        st.cur = result.observation;
      }
    }
  }

  buf.bootstrap_values.resize(streams_.size(), 0.0);
  for (std::size_t s = 0; s < streams_.size(); ++s) {
    if (buf.streams[s].back().done) continue;
    const Stream& st = streams_[s];
    buf.bootstrap_values[s] = model::estimate_value(
        *snapshot, model::policy_context(*vocab_, st.env->state().instruction.goal_text,
                                         st.prev ? &*st.prev : nullptr, st.cur, cfg_.context));
  }
  return buf;
}

}  // namespace shopagent::rollout
