#include <gtest/gtest.h>

#include <sys/socket.h>
#include <unistd.h>

#include <thread>

#include "shopagent/rollout.hpp"
#include "support.hpp"

using namespace shopagent;
using namespace shopagent::rollout;
using namespace std::chrono_literals;

namespace {

Snapshot small_snapshot(std::uint64_t seed = 7) {
  return std::make_shared<const model::ModelParameters<float>>(
      model::initialize_parameters<float>(fixture::small_config(*fixture::standard_vocab()), seed));
}

ppo::RolloutBuffer collect_with(WorkerPool& pool, std::uint64_t seed, int steps = 40, int rounds = 1) {
  pool.refresh_snapshot(small_snapshot());
  Collector col(fixture::standard_catalog(), fixture::standard_vocab(), {}, seed);
  ppo::RolloutBuffer last;
  for (int r = 0; r < rounds; ++r) last = col.collect(pool, steps, {policy::Decoding::Sample});
  return last;
}

std::vector<ScoreRequest> some_requests(std::size_t n) {
  const auto catalog = fixture::standard_catalog();
  const auto vocab = fixture::standard_vocab();
  env::GoalStream goals(*catalog, 4, env::GoalPurpose::Train);
  std::vector<ScoreRequest> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto goal = goals.next();
    const auto obs = env::render(*catalog, goal, env::PageState{});
    ScoreRequest r;
    r.stream = static_cast<std::uint32_t>(i);
    r.context = model::encode_context(*vocab, goal.goal_text, nullptr, obs);
    r.actions = i % 3 == 2 ? std::vector<env::ActionSpec>{} : obs.actions;
    r.query_seed = 1000 + i;
    out.push_back(std::move(r));
  }
  return out;
}

// Workers with fault-injection hooks, kept reachable after the pool takes ownership.
struct Harness {
  std::vector<QueuedWorker*> raw;
  std::unique_ptr<WorkerPool> pool;

  Harness(int n, DispatchOptions opts = {}) {
    std::vector<std::unique_ptr<Worker>> ws;
    for (int i = 0; i < n; ++i) {
      auto w = std::make_unique<LocalWorker>(fixture::standard_vocab(), "w" + std::to_string(i));
      raw.push_back(w.get());
      ws.push_back(std::move(w));
    }
    pool = std::make_unique<WorkerPool>(std::move(ws), opts);
    pool->refresh_snapshot(small_snapshot());
  }
};

}  // namespace

TEST(Collector, FillsOneFullBuffer) {
  auto pool = make_local_pool(fixture::standard_vocab(), 1);
  const auto buf = collect_with(*pool, 1);
  EXPECT_EQ(buf.size(), 640u);
  ASSERT_EQ(buf.streams.size(), 16u);
  ASSERT_EQ(buf.bootstrap_values.size(), 16u);
  for (std::size_t s = 0; s < 16; ++s) {
    EXPECT_EQ(buf.streams[s].size(), 40u);
    if (buf.streams[s].back().done) EXPECT_EQ(buf.bootstrap_values[s], 0.0);
    for (const auto& t : buf.streams[s]) {
      ASSERT_LT(static_cast<std::size_t>(t.action_index), t.action_set.size());
      for (const auto& a : t.action_set) EXPECT_FALSE(a.is_query_slot());
      EXPECT_LE(t.logprob_old, 0.0);
      EXPECT_TRUE(t.done || t.reward == 0.0);
    }
  }
}

TEST(Collector, RecordsSnapshotScoresAndValues) {
  auto pool = make_local_pool(fixture::standard_vocab(), 1);
  const auto buf = collect_with(*pool, 2);
  const auto params = *pool->snapshot();
  const auto vocab = fixture::standard_vocab();
  for (std::size_t s = 0; s < 4; ++s)
    for (const auto& t : buf.streams[s]) {
      const auto dist = policy::action_distribution(params, *vocab, t.context, t.action_set);
      EXPECT_NEAR(t.logprob_old, std::log(dist.probs[static_cast<std::size_t>(t.action_index)]), 1e-6);
      EXPECT_NEAR(t.value_old, model::estimate_value(params, t.context), 1e-6);
    }
}

TEST(Collector, DeterministicAndWorkerCountInvariant) {
  auto one = make_local_pool(fixture::standard_vocab(), 1);
  const auto ref = collect_with(*one, 3, 20, 2);
  auto again = make_local_pool(fixture::standard_vocab(), 1);
  EXPECT_EQ(collect_with(*again, 3, 20, 2), ref);
  for (int n : {2, 4}) {
    auto pool = make_local_pool(fixture::standard_vocab(), n);
    EXPECT_EQ(collect_with(*pool, 3, 20, 2), ref) << n << " workers";
  }
  auto other = make_local_pool(fixture::standard_vocab(), 1);
  EXPECT_NE(collect_with(*other, 4, 20, 2), ref);
}

TEST(Collector, SocketWorkersMatchLocalWorkers) {
  auto local = make_local_pool(fixture::standard_vocab(), 2);
  auto remote = make_socket_pool(fixture::standard_vocab(), 2);
  EXPECT_EQ(collect_with(*remote, 5, 10), collect_with(*local, 5, 10));
}

TEST(Dispatch, RoundRobinAssignment) {
  Harness h(4);
  const auto reqs = some_requests(16);
  const auto resp = h.pool->dispatch(reqs);
  for (auto* w : h.raw) EXPECT_EQ(w->served(), 4u);
  for (std::uint32_t s = 0; s < 16; ++s) EXPECT_EQ(h.pool->assignment(s), s % 4);
  ASSERT_EQ(resp.size(), reqs.size());
  for (std::size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(resp[i].stream, reqs[i].stream);
}

TEST(Dispatch, ConsolidatesInRequestOrderDespiteDelays) {
  Harness fast(3), slow(3);
  slow.raw[0]->set_delay(30ms);
  slow.raw[2]->set_delay(10ms);
  const auto reqs = some_requests(9);
  EXPECT_EQ(slow.pool->dispatch(reqs), fast.pool->dispatch(reqs));
  const auto params = *fast.pool->snapshot();
  const auto resp = fast.pool->dispatch(reqs);
  for (std::size_t i = 0; i < reqs.size(); ++i)
    EXPECT_EQ(resp[i], score_request(params, *fixture::standard_vocab(), reqs[i]));
}

TEST(Dispatch, ValueOnlyRequests) {
  Harness h(1);
  auto reqs = some_requests(3);
  const auto resp = h.pool->dispatch(reqs);
  EXPECT_TRUE(resp[2].dist.actions.empty());
  EXPECT_NEAR(resp[2].value, model::estimate_value(*h.pool->snapshot(), reqs[2].context), 1e-12);
  EXPECT_FALSE(resp[0].dist.actions.empty());
}

TEST(Dispatch, RetriesOnTheNextWorker) {
  Harness h(3);
  const auto reqs = some_requests(6);
  const auto ref = h.pool->dispatch(reqs);
  h.raw[1]->fail_next(1);
  EXPECT_EQ(h.pool->dispatch(reqs), ref);
  EXPECT_EQ(h.raw[2]->served(), 2u + 3u);
}

TEST(Dispatch, TimeoutRetriesThenAborts) {
  Harness h(2, DispatchOptions{50ms});
  const auto reqs = some_requests(2);
  const auto ref = h.pool->dispatch(reqs);
  h.raw[0]->set_delay(200ms);
  EXPECT_EQ(h.pool->dispatch(reqs), ref);
  h.raw[1]->set_delay(200ms);
  EXPECT_THROW(h.pool->dispatch(reqs), RuntimeAbort);
  h.raw[0]->set_delay(0ms);
  h.raw[1]->set_delay(0ms);
  std::this_thread::sleep_for(500ms);  // let the abandoned jobs drain
}

TEST(Dispatch, DoubleFailureAborts) {
  Harness h(2);
  h.raw[0]->fail_next(1);
  h.raw[1]->fail_next(1);
  EXPECT_THROW(h.pool->dispatch(some_requests(1)), RuntimeAbort);
}

TEST(Snapshot, RefreshIsRejectedDuringCollection) {
  Harness h(2);
  h.pool->begin_collection();
  EXPECT_THROW(h.pool->refresh_snapshot(small_snapshot(8)), ContractViolation);
  h.pool->end_collection();
  h.pool->refresh_snapshot(small_snapshot(8));
  EXPECT_EQ(*h.pool->snapshot(), *small_snapshot(8));
}

TEST(Snapshot, PartialLoadFailureNamesTheWorker) {
  Harness h(3);
  h.raw[1]->fail_loads(true);
  try {
    h.pool->refresh_snapshot(small_snapshot(9));
    FAIL() << "expected an abort";
  } catch (const RuntimeAbort& e) {
    EXPECT_NE(std::string(e.what()).find("w1"), std::string::npos);
  }
}

TEST(Wire, CodecsRoundTrip) {
  const auto reqs = some_requests(4);
  const auto params = *small_snapshot();
  for (const auto& r : reqs) {
    EXPECT_EQ(decode_request(encode_request(r)), r);
    const auto resp = score_request(params, *fixture::standard_vocab(), r);
    EXPECT_EQ(decode_response(encode_response(resp)), resp);
  }
  EXPECT_ANY_THROW(decode_request(encode_request(reqs[0]).substr(0, 5)));
}

TEST(Wire, FramesOverASocketPair) {
  int fds[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  const std::string big(1 << 20, 'x');
  std::thread writer([&] {
    write_frame(fds[0], {FrameKind::Score, "abc"});
    write_frame(fds[0], {FrameKind::LoadSnapshot, big});
  });
  const auto a = read_frame(fds[1]);
  EXPECT_EQ(a.kind, FrameKind::Score);
  EXPECT_EQ(a.payload, "abc");
  const auto b = read_frame(fds[1]);
  writer.join();
  EXPECT_EQ(b.kind, FrameKind::LoadSnapshot);
  EXPECT_EQ(b.payload, big);
  ::close(fds[0]);
  EXPECT_THROW(read_frame(fds[1]), RuntimeAbort);
  ::close(fds[1]);
}
