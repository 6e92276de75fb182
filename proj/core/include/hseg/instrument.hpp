#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace hseg::instrument {

struct OpCount {
  std::uint64_t calls = 0;
  std::uint64_t flops = 0;
  std::uint64_t bytes = 0;
};

/// Per-op counters, keyed by op name.
using Report = std::map<std::string, OpCount, std::less<>>;

// No-op unless a Scope is active on this thread.
void record(std::string_view op, std::uint64_t flops, std::uint64_t bytes);

/// Collects counters recorded on the current thread while alive. Scopes nest;
/// the innermost one receives the counts.
class Scope {
 public:
  Scope();
  ~Scope();
  Scope(const Scope&) = delete;
  Scope& operator=(const Scope&) = delete;

  const Report& report() const noexcept { return report_; }

 private:
  friend void record(std::string_view op, std::uint64_t flops, std::uint64_t bytes);

  Report report_;
  Scope* parent_;
};

}  // namespace hseg::instrument
