#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

#include "densescan/errors.hpp"

namespace densescan {

struct PipelineConfig {
  int producers = 1;
  int queue_capacity = 4;
  bool deterministic = true;  // consumer sees items in sequence order
};

struct PipelineStats {
  std::size_t items = 0;
  double wall_seconds = 0;
  double items_per_second = 0;
  double consumer_idle_fraction = 0;  // time the consumer spent waiting / wall
  double producer_utilization = 0;    // produce busy time / (P * wall)
  std::size_t max_in_flight = 0;      // peak produced-but-unconsumed; <= queue_capacity
};

// Runs `consume(i, produce(i))` for i in [0, item_count) with P producer
// threads and the calling thread as the single consumer. produce must be pure
// per item; consume runs sequentially on the caller. With the deterministic
// flag the observable effects are bit-exact to the plain sequential loop:
// consume runs in sequence order and stops at the first failing item. A
// producer exception cancels the run (no new items start; started ones
// finish) and the smallest-index error is rethrown.
template <typename Produce, typename Consume>
PipelineStats run_pipeline(std::size_t item_count, Produce&& produce, Consume&& consume,
                           const PipelineConfig& config) {
  using Result = std::invoke_result_t<Produce&, std::size_t>;
  static_assert(std::is_move_constructible_v<Result>);

  if (config.producers < 1 || config.queue_capacity < 1) {
    throw RangeError("pipeline needs at least one producer and capacity one");
  }

  PipelineStats stats;
  stats.items = item_count;
  if (item_count == 0) return stats;

  enum class SlotState : std::uint8_t { Empty, Reserved, Filled };
  struct Slot {
    SlotState state = SlotState::Empty;
    std::size_t index = 0;
    std::optional<Result> value;
    std::exception_ptr error;
  };

  const std::size_t capacity = static_cast<std::size_t>(config.queue_capacity);
  std::vector<Slot> slots(capacity);

  std::mutex mu;
  std::condition_variable cv_space;  // producers wait for admission
  std::condition_variable cv_fill;   // consumer waits for a filled slot
  std::atomic<std::size_t> next_ticket{0};
  std::atomic<bool> cancelled{false};
  std::size_t filled_count = 0;
  std::size_t consumed = 0;
  int producers_alive = config.producers;
  std::atomic<std::int64_t> busy_ns{0};

  const auto t_start = std::chrono::steady_clock::now();

  // Tickets are taken in increasing order and a taken ticket is always
  // produced; cancellation only stops new tickets. This keeps the produced
  // index set a dense prefix, which the drain logic below relies on.
  auto producer_loop = [&] {
    while (!cancelled.load(std::memory_order_relaxed)) {
      const std::size_t i = next_ticket.fetch_add(1, std::memory_order_relaxed);
      if (i >= item_count) break;

      Slot* slot = nullptr;
      {
        std::unique_lock<std::mutex> lock(mu);
        Slot& s = slots[i % capacity];
        // Admission window: at most `capacity` tickets past the consumer may
        // run. This also forces slot claims into ticket order, so the ordered
        // consumer can never be starved by a later ticket squatting its slot.
        cv_space.wait(lock,
                      [&] { return s.state == SlotState::Empty && i < consumed + capacity; });
        s.state = SlotState::Reserved;
        s.index = i;
        slot = &s;
      }

      const auto p0 = std::chrono::steady_clock::now();
      std::optional<Result> value;
      std::exception_ptr error;
      try {
        value.emplace(produce(i));
      } catch (...) {
        error = std::current_exception();
      }
      busy_ns.fetch_add(
          std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - p0)
              .count(),
          std::memory_order_relaxed);

      {
        std::lock_guard<std::mutex> lock(mu);
        slot->value = std::move(value);
        slot->error = error;
        slot->state = SlotState::Filled;
        filled_count++;
        stats.max_in_flight = std::max(stats.max_in_flight, filled_count);
        if (error) cancelled.store(true, std::memory_order_relaxed);
      }
      cv_fill.notify_all();
    }
    {
      std::lock_guard<std::mutex> lock(mu);
      producers_alive--;
    }
    cv_fill.notify_all();
  };

  std::vector<std::thread> producers;
  producers.reserve(config.producers);
  for (int p = 0; p < config.producers; ++p) producers.emplace_back(producer_loop);

  std::exception_ptr first_error;
  std::size_t first_error_index = item_count;
  std::int64_t idle_ns = 0;

  auto note_error = [&](std::size_t index, std::exception_ptr e) {
    if (index < first_error_index) {
      first_error_index = index;
      first_error = e;
    }
  };

  if (config.deterministic) {
    bool draining = false;
    for (std::size_t i = 0; i < item_count; ++i) {
      Slot& s = slots[i % capacity];
      std::optional<Result> value;
      std::exception_ptr error;
      {
        std::unique_lock<std::mutex> lock(mu);
        const auto w0 = std::chrono::steady_clock::now();
        cv_fill.wait(lock, [&] {
          return (s.state == SlotState::Filled && s.index == i) ||
                 (producers_alive == 0 && filled_count == 0);
        });
        idle_ns += std::chrono::duration_cast<std::chrono::nanoseconds>(
                       std::chrono::steady_clock::now() - w0)
                       .count();
        if (!(s.state == SlotState::Filled && s.index == i)) break;  // ticket i never taken
        value = std::move(s.value);
        error = s.error;
        s.value.reset();
        s.error = nullptr;
        s.state = SlotState::Empty;
        filled_count--;
        consumed++;
      }
      cv_space.notify_all();
      if (error) {
        note_error(i, error);
        draining = true;  // keep freeing slots so started producers can finish
        continue;
      }
      if (!draining) consume(i, std::move(*value));
    }
  } else {
    std::size_t done = 0;
    while (true) {
      std::optional<Result> value;
      std::size_t index = 0;
      bool have_item = false;
      {
        std::unique_lock<std::mutex> lock(mu);
        const auto w0 = std::chrono::steady_clock::now();
        cv_fill.wait(lock,
                     [&] { return filled_count > 0 || (producers_alive == 0 && filled_count == 0); });
        idle_ns += std::chrono::duration_cast<std::chrono::nanoseconds>(
                       std::chrono::steady_clock::now() - w0)
                       .count();
        for (auto& s : slots) {
          if (s.state == SlotState::Filled) {
            if (s.error) note_error(s.index, s.error);
            value = std::move(s.value);
            index = s.index;
            have_item = !s.error;
            s.value.reset();
            s.error = nullptr;
            s.state = SlotState::Empty;
            filled_count--;
            consumed++;
            done++;
            break;
          }
        }
        if (!value && !have_item && filled_count == 0 && producers_alive == 0) break;
      }
      cv_space.notify_all();
      if (have_item && !first_error) consume(index, std::move(*value));
      if (done == item_count) break;
    }
  }

  for (auto& t : producers) t.join();

  const auto t_end = std::chrono::steady_clock::now();
  stats.wall_seconds =
      std::chrono::duration_cast<std::chrono::duration<double>>(t_end - t_start).count();
  if (stats.wall_seconds > 0) {
    stats.items_per_second = static_cast<double>(item_count) / stats.wall_seconds;
    stats.consumer_idle_fraction =
        std::min(1.0, static_cast<double>(idle_ns) * 1e-9 / stats.wall_seconds);
    stats.producer_utilization =
        std::min(1.0, static_cast<double>(busy_ns.load()) * 1e-9 /
                          (stats.wall_seconds * config.producers));
  }

  if (first_error) std::rethrow_exception(first_error);
  return stats;
}

}  // namespace densescan
