#include "hseg/instrument.hpp"

namespace hseg::instrument {

namespace {
thread_local Scope* current = nullptr;
}

Scope::Scope() : parent_(current) { current = this; }

Scope::~Scope() { current = parent_; }

void record(std::string_view op, std::uint64_t flops, std::uint64_t bytes) {
  if (current == nullptr) return;
  auto& report = current->report_;
  auto it = report.find(op);
  if (it == report.end()) it = report.emplace(std::string(op), OpCount{}).first;
  it->second.calls += 1;
  it->second.flops += flops;
  it->second.bytes += bytes;
}

}  // namespace hseg::instrument
