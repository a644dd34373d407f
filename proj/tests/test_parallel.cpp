#include <doctest.h>

#include <atomic>
#include <vector>

#include "dataclone/errors.hpp"
#include "dataclone/parallel.hpp"
#include "helpers.hpp"

using namespace dataclone;

TEST_CASE("worker_threads reports at least one worker") {
  CHECK(worker_threads() >= 1);
  CHECK(worker_threads() == worker_threads());  // latched once
}

TEST_CASE("parallel_for visits every index exactly once") {
  const size_t n = 10000;
  std::vector<int> hits(n, 0);
  parallel_for(n, [&](size_t i) { hits[i] += 1; });
  for (size_t i = 0; i < n; ++i) REQUIRE(hits[i] == 1);
}

TEST_CASE("parallel_for handles empty and single-element ranges") {
  std::atomic<int> calls{0};
  parallel_for(0, [&](size_t) { calls += 1; });
  CHECK(calls == 0);
  parallel_for(1, [&](size_t i) {
    CHECK(i == 0);
    calls += 1;
  });
  CHECK(calls == 1);
}

TEST_CASE("exceptions from workers propagate to the caller") {
  CHECK_FAILS_WITH(parallel_for(64,
                                [&](size_t i) {
                                  if (i == 13) fail(ErrorCode::InvalidArgument, "boom");
                                }),
                   ErrorCode::InvalidArgument);
}
