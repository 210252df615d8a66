#include "drbo/diagnostics.hpp"

#include <array>
#include <atomic>
#include <iostream>
#include <mutex>

namespace drbo {

namespace {

constexpr std::uint64_t kPrintLimit = 5;

std::array<std::atomic<std::uint64_t>, static_cast<std::size_t>(Event::kCount)> g_counts{};
std::atomic<bool> g_verbose{false};
std::mutex g_print_mutex;

}  // namespace

std::string_view event_name(Event e) {
  switch (e) {
    case Event::kPseudoInverse: return "pseudo_inverse";
    case Event::kMseFloor: return "mse_floor";
    case Event::kLogisticRidge: return "logistic_ridge";
    case Event::kNonFiniteLoss: return "non_finite_loss";
    case Event::kCiTestSkipped: return "ci_test_skipped";
    case Event::kJitterEscalated: return "jitter_escalated";
    case Event::kCount: break;
  }
  return "unknown";
}

void log_event(Event e, std::string_view message) {
  const auto seen = g_counts[static_cast<std::size_t>(e)].fetch_add(1, std::memory_order_relaxed);
  if (g_verbose.load(std::memory_order_relaxed) && seen < kPrintLimit) {
    std::lock_guard lock(g_print_mutex);
    std::cerr << "[drbo] " << event_name(e) << ": " << message << '\n';
  }
}

std::uint64_t event_count(Event e) {
  return g_counts[static_cast<std::size_t>(e)].load(std::memory_order_relaxed);
}

void reset_event_counts() {
  for (auto& c : g_counts) c.store(0, std::memory_order_relaxed);
}

void set_verbose(bool on) { g_verbose.store(on, std::memory_order_relaxed); }

}  // namespace drbo
