#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "evstream/netsim.hpp"

using namespace evstream;

TEST_CASE("constant-bandwidth transmit time is exact", "[netsim]") {
  auto link = LinkTrace::constant(8'000'000);  // 8 Mbps
  CHECK(transmit_duration(1000, link, 0) == 1000);
  CHECK(transmit_duration(1000, link, 123'456) == 1000);
  CHECK(transmit_duration(0, link, 0) == 0);
}

TEST_CASE("sub-bit remainders round up to the next microsecond", "[netsim]") {
  auto link = LinkTrace::constant(1'000'000);  // 1 bit per us
  CHECK(transmit_duration(1, link, 0) == 8);
  auto odd = LinkTrace::constant(3'000'000);
  CHECK(transmit_duration(1, odd, 0) == 3);  // ceil(8/3)
}

TEST_CASE("piecewise bandwidth integrates across the step", "[netsim]") {
  LinkTrace link;
  link.segments = {{0, 8'000'000}, {1000, 16'000'000}};
  // Start 500 us before the step: 4000 bits at 8 Mbps, 4000 at 16 Mbps.
  CHECK(transmit_duration(1000, link, 500) == 750);
  // Entirely in the second segment.
  CHECK(transmit_duration(1000, link, 1000) == 500);
  // Entirely in the first.
  CHECK(transmit_duration(100, link, 0) == 100);
}

TEST_CASE("ideal links serialize instantly", "[netsim]") {
  auto link = LinkTrace::ideal(250);
  CHECK(transmit_duration(1 << 30, link, 7) == 0);
  CHECK(link.propagation_delay_us == 250);
}

TEST_CASE("trace validation catches bad segments", "[netsim]") {
  LinkTrace t;
  CHECK_THROWS_AS(validate_trace(t), ValidationError);
  t.segments = {{5, 1000}};
  CHECK_THROWS_AS(validate_trace(t), ValidationError);
  t.segments = {{0, 0}};
  CHECK_THROWS_AS(validate_trace(t), ValidationError);
  t.segments = {{0, 10}, {10, 20}, {10, 30}};
  CHECK_THROWS_AS(validate_trace(t), ValidationError);
}

TEST_CASE("simultaneous actions run in insertion order", "[netsim]") {
  Scheduler sched;
  std::vector<int> order;
  sched.schedule(10, [&] { order.push_back(1); });
  sched.schedule(10, [&] { order.push_back(2); });
  sched.schedule(5, [&] { order.push_back(0); });
  sched.run_until(10);
  CHECK(order == std::vector<int>{0, 1, 2});
  CHECK(sched.now() == 10);
}

TEST_CASE("run_until does not execute future actions", "[netsim]") {
  Scheduler sched;
  bool ran = false;
  sched.schedule(5, [&] { ran = true; });
  sched.run_until(0);
  CHECK(!ran);
  CHECK(sched.now() == 0);
  sched.run_until(5);
  CHECK(ran);
}

TEST_CASE("scheduling in the past is a logic error", "[netsim]") {
  Scheduler sched;
  sched.schedule(10, [] {});
  sched.run_until(20);
  CHECK_THROWS_AS(sched.schedule(15, [] {}), std::logic_error);
  CHECK_NOTHROW(sched.schedule(20, [] {}));
}

TEST_CASE("actions may reschedule at the current instant", "[netsim]") {
  Scheduler sched;
  std::vector<int> order;
  sched.schedule(10, [&] {
    order.push_back(1);
    sched.schedule(10, [&] { order.push_back(2); });
  });
  sched.run_until(10);
  CHECK(order == std::vector<int>{1, 2});
}

TEST_CASE("identical runs produce identical trace hashes", "[netsim]") {
  auto run = [] {
    Scheduler sched;
    for (uint64_t i = 0; i < 100; ++i)
      sched.schedule(i * 7 % 50, [] {});
    sched.run_all();
    return sched.trace_hash();
  };
  CHECK(run() == run());

  Scheduler different;
  different.schedule(1, [] {});
  different.run_all();
  CHECK(different.trace_hash() != run());
}

TEST_CASE("link serializes one payload at a time", "[netsim]") {
  Link link(LinkTrace::constant(8'000'000, 100));
  REQUIRE(link.idle(0));
  auto first = link.begin_send(1000, 0);
  CHECK(first.completion_us == 1000);
  CHECK(first.arrival_us == 1100);
  CHECK(!link.idle(999));
  CHECK(link.idle(1000));
  CHECK_THROWS_AS(link.begin_send(1, 500), std::logic_error);
  auto second = link.begin_send(1000, 1000);
  CHECK(second.completion_us == 2000);
}

TEST_CASE("link respects bandwidth over any interval", "[netsim]") {
  // Send back-to-back payloads and check the delivered bits never exceed the
  // integral of the bandwidth.
  Link link(LinkTrace::constant(8'000'000));
  uint64_t now = 0;
  uint64_t bits = 0;
  for (int i = 0; i < 50; ++i) {
    auto times = link.begin_send(1000, now);
    bits += 8000;
    now = times.completion_us;
    CHECK(bits <= 8 * now);  // 8 bits per us capacity
  }
  CHECK(now == 50'000);
}
