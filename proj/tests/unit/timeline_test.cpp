#include "flexkv/timeline.hpp"

#include <gtest/gtest.h>

#include "flexkv/rpc.hpp"

namespace flexkv {
namespace {

TEST(TimelineTest, SingleEventMovesClock) {
  Timeline tl;
  tl.schedule(5.0, [] {});
  auto ids = tl.step();
  EXPECT_EQ(ids.size(), 1u);
  EXPECT_DOUBLE_EQ(tl.now(), 5.0);
  EXPECT_TRUE(tl.empty());
}

TEST(TimelineTest, TiesFireInIdOrder) {
  Timeline tl;
  std::vector<std::uint64_t> order;
  for (int i = 0; i < 8; ++i) tl.reserve_id();
  tl.schedule_with_id(5.0, 7, [&] { order.push_back(7); });
  tl.schedule_with_id(5.0, 3, [&] { order.push_back(3); });
  auto ids = tl.step();
  EXPECT_EQ(order, (std::vector<std::uint64_t>{3, 7}));
  EXPECT_EQ(ids, (std::vector<std::uint64_t>{3, 7}));
}

TEST(TimelineTest, EarlierTimeWinsOverLowerId) {
  Timeline tl;
  std::vector<int> order;
  tl.schedule(2.0, [&] { order.push_back(2); });
  tl.schedule(1.0, [&] { order.push_back(1); });
  tl.run();
  EXPECT_EQ(order, (std::vector<int>{1, 2}));
}

TEST(TimelineTest, SameInstantEventsScheduledWhileFiringJoinTheStep) {
  Timeline tl;
  int fired = 0;
  tl.schedule(1.0, [&] {
    ++fired;
    tl.schedule(1.0, [&] { ++fired; });
  });
  tl.step();
  EXPECT_EQ(fired, 2);
}

TEST(TimelineTest, RunStopsOnPredicate) {
  Timeline tl;
  int fired = 0;
  for (int i = 1; i <= 10; ++i) tl.schedule(i, [&] { ++fired; });
  tl.run([&] { return fired >= 3; });
  EXPECT_EQ(fired, 3);
}

TEST(TimelineTest, EmptyQueueStepReturnsNothing) {
  Timeline tl;
  EXPECT_TRUE(tl.empty());
  tl.run();
  EXPECT_DOUBLE_EQ(tl.now(), 0.0);
}

Task<int> add_later(Timeline& tl, int a, int b) {
  co_await tl.sleep(2.0);
  co_return a + b;
}

TEST(TaskTest, AwaitChainAndSpawn) {
  Timeline tl;
  int out = 0;
  auto outer = [](Timeline& tl, int& out) -> Task<void> {
    out = co_await add_later(tl, 2, 3);
    out += co_await add_later(tl, 1, 1);
  };
  tl.spawn(outer(tl, out));
  tl.run();
  EXPECT_EQ(out, 7);
  EXPECT_DOUBLE_EQ(tl.now(), 4.0);
}

TEST(TaskTest, NodeCrashedIsSwallowedOtherErrorsAreFatal) {
  Timeline tl;
  auto crashes = [](Timeline& tl) -> Task<void> {
    co_await tl.sleep(1.0);
    throw NodeCrashed(3);
  };
  auto breaks = [](Timeline& tl) -> Task<void> {
    co_await tl.sleep(2.0);
    throw std::logic_error("bug");
  };
  tl.spawn(crashes(tl));
  tl.run();
  tl.spawn(breaks(tl));
  EXPECT_THROW(tl.run(), std::logic_error);
}

TEST(TaskTest, ClearDestroysSuspendedTasks) {
  int destroyed = 0;
  struct Probe {
    int* n;
    ~Probe() { ++*n; }
  };
  {
    Timeline tl;
    auto waits = [](Timeline& tl, int* n) -> Task<void> {
      Probe p{n};
      co_await tl.sleep(100.0);
    };
    tl.spawn(waits(tl, &destroyed));
    EXPECT_EQ(destroyed, 0);
    tl.clear();
    EXPECT_EQ(destroyed, 1);
  }
  EXPECT_EQ(destroyed, 1);
}

TEST(OneShotTest, FinishResumesWaiterOnce) {
  Timeline tl;
  OneShot<int> box;
  std::optional<int> got;
  auto waiter = [](OneShot<int>& b, std::optional<int>& got) -> Task<void> {
    got = co_await b.wait();
  };
  tl.spawn(waiter(box, got));
  tl.run();
  EXPECT_FALSE(got);
  box.finish(4);
  box.finish(5);
  EXPECT_EQ(got, 4);
}

TEST(FifoServerTest, QueuesBehindBusyServer) {
  FifoServer s(1);
  EXPECT_DOUBLE_EQ(s.reserve(0.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(s.reserve(1.0, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(s.reserve(10.0, 1.0), 10.0);
  EXPECT_DOUBLE_EQ(s.busy_time(), 5.0);
  FifoServer two(2);
  EXPECT_DOUBLE_EQ(two.reserve(0.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(two.reserve(0.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(two.reserve(0.0, 2.0), 2.0);
}

}  // namespace
}  // namespace flexkv
