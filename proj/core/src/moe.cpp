#include "hseg/moe.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <string>

#include "hseg/error.hpp"
#include "hseg/parallel.hpp"

namespace hseg::moe {

namespace {

constexpr std::size_t kTaskRows = 64;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_ffn(const ExpertFfn& f, std::size_t d, std::size_t hidden) {
  if (f.fc1.weight.shape() != Shape{d, hidden} || f.fc1.bias.shape() != Shape{hidden} ||
      f.fc2.weight.shape() != Shape{hidden, d} || f.fc2.bias.shape() != Shape{d}) {
    throw DimensionError("ExpertBank: expert layer shapes differ from [" + std::to_string(d) +
                         " -> " + std::to_string(hidden) + " -> " + std::to_string(d) + "]");
  }
}

// y[n] = x[k] * w[k x n] + bias, accumulated over k in order like gemm.
void vec_mat(const float* x, const Tensor& w, const Tensor& bias, float* y) {
  const std::size_t k = w.dim(0), n = w.dim(1);
  std::fill(y, y + n, 0.0f);
  for (std::size_t t = 0; t < k; ++t) {
    const float xt = x[t];
    const float* wr = w.data() + t * n;
    for (std::size_t j = 0; j < n; ++j) y[j] += xt * wr[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] += bias[j];
}

// Rows [0, rows) of src through ffn into dst; `hidden` is rows x 4d scratch.
void ffn_block(const float* src, float* dst, std::size_t rows, const ExpertFfn& ffn,
               float* hidden) {
  const std::size_t d = ffn.model_dim(), hd = ffn.hidden_dim();
  kernels::gemm(src, ffn.fc1.weight.data(), hidden, rows, d, hd);
  for (std::size_t i = 0; i < rows; ++i) {
    float* h = hidden + i * hd;
    for (std::size_t j = 0; j < hd; ++j) h[j] = kernels::gelu(h[j] + ffn.fc1.bias[j]);
  }
  kernels::gemm(hidden, ffn.fc2.weight.data(), dst, rows, hd, d);
  for (std::size_t i = 0; i < rows; ++i) {
    float* y = dst + i * d;
    for (std::size_t j = 0; j < d; ++j) y[j] += ffn.fc2.bias[j];
  }
}

void combine(const float* shared, const float* routed, float s_shared, float s_routed,
             std::size_t d, float* out) {
  const float ws = std::exp(s_shared), wr = std::exp(s_routed);
  const float denom = ws + wr;
  for (std::size_t j = 0; j < d; ++j) out[j] = (ws * shared[j] + wr * routed[j]) / denom;
}

void check_input(const Tensor& x, const routing::EdgeMap& em, const ExpertBank& bank) {
  if (x.rank() != 2 || x.dim(0) != em.tokens() || x.dim(1) != bank.model_dim()) {
    throw DimensionError("hmoe: tokens " + shape_string(x.shape()) + " vs " +
                         std::to_string(em.tokens()) + " x " + std::to_string(bank.model_dim()));
  }
  bank.validate();
}

}  // namespace

void ExpertBank::validate() const {
  if (routed.empty()) throw DimensionError("ExpertBank: need at least one routed expert");
  const std::size_t d = shared.fc1.weight.rank() == 2 ? shared.model_dim() : 0;
  const std::size_t hidden = d ? shared.hidden_dim() : 0;
  check_ffn(shared, d, hidden);
  for (const ExpertFfn& f : routed) check_ffn(f, d, hidden);
  if (centroids.shape() != Shape{routed.size() + 1, d}) {
    throw DimensionError("ExpertBank: centroids must be [(M+1) x d], got " +
                         shape_string(centroids.shape()));
  }
}

Tensor affinity(const Tensor& x, const Tensor& centroids) {
  if (x.rank() != 2 || centroids.rank() != 2 || x.dim(1) != centroids.dim(1)) {
    throw DimensionError("affinity: tokens " + shape_string(x.shape()) + " vs centroids " +
                         shape_string(centroids.shape()));
  }
  Tensor s = kernels::matmul(x, transpose(centroids));
  for (float& v : s.values()) v = kernels::sigmoid(v);
  return s;
}

std::vector<std::uint32_t> route_top1(const Tensor& scores) {
  if (scores.rank() != 2 || scores.dim(1) < 2) {
    throw DimensionError("route_top1: scores must be [N x (M+1)] with M >= 1");
  }
  const std::size_t m = scores.dim(1) - 1;
  std::vector<std::uint32_t> out(scores.dim(0));
  for (std::size_t t = 0; t < scores.dim(0); ++t) {
    const float* s = scores.data() + t * scores.dim(1);
    std::size_t best = 0;
    for (std::size_t i = 0; i <= m; ++i) {
      if (!std::isfinite(s[i])) throw NumericError("route_top1: non-finite score");
      if (i < m && s[i] > s[best]) best = i;
    }
    out[t] = static_cast<std::uint32_t>(best);
  }
  return out;
}

ExpertDispatch build_dispatch(std::span<const std::uint32_t> assignments, std::size_t experts) {
  ExpertDispatch d;
  d.group_offsets.assign(experts + 1, 0);
  for (std::uint32_t a : assignments) {
    if (a >= experts) {
      throw InputError("build_dispatch: expert id " + std::to_string(a) + " outside [0," +
                       std::to_string(experts) + ")");
    }
    ++d.group_offsets[a + 1];
  }
  for (std::size_t i = 0; i < experts; ++i) d.group_offsets[i + 1] += d.group_offsets[i];

  std::vector<std::size_t> cursor(d.group_offsets.begin(), d.group_offsets.end() - 1);
  d.perm.resize(assignments.size());
  d.inverse_perm.resize(assignments.size());
  for (std::size_t t = 0; t < assignments.size(); ++t) {
    const std::size_t pos = cursor[assignments[t]]++;
    d.perm[pos] = t;
    d.inverse_perm[t] = pos;
  }
  return d;
}

std::vector<float> ffn_token(std::span<const float> x, const ExpertFfn& ffn) {
  if (x.size() != ffn.model_dim()) throw DimensionError("ffn_token: token width mismatch");
  std::vector<float> hidden(ffn.hidden_dim());
  std::vector<float> out(ffn.model_dim());
  vec_mat(x.data(), ffn.fc1.weight, ffn.fc1.bias, hidden.data());
  kernels::gelu_inplace(hidden);
  vec_mat(hidden.data(), ffn.fc2.weight, ffn.fc2.bias, out.data());
  return out;
}

Tensor ffn_rows(const Tensor& x, const ExpertFfn& ffn) {
  if (x.rank() != 2 || x.dim(1) != ffn.model_dim()) {
    throw DimensionError("ffn_rows: rows " + shape_string(x.shape()) + " vs model dim " +
                         std::to_string(ffn.model_dim()));
  }
  Tensor y({x.dim(0), ffn.model_dim()});
  std::vector<float> hidden(kTaskRows * ffn.hidden_dim());
  for (std::size_t r0 = 0; r0 < x.dim(0); r0 += kTaskRows) {
    const std::size_t rows = std::min(kTaskRows, x.dim(0) - r0);
    ffn_block(x.data() + r0 * x.dim(1), y.data() + r0 * ffn.model_dim(), rows, ffn,
              hidden.data());
  }
  return y;
}

std::vector<float> hmoe_token(std::span<const float> x, const ExpertBank& bank,
                              const std::optional<TokenRoute>& route) {
  std::vector<float> shared = ffn_token(x, bank.shared);
  if (!route) return shared;
  if (route->expert >= bank.experts()) throw InputError("hmoe_token: expert id out of range");
  const std::vector<float> routed = ffn_token(x, bank.routed[route->expert]);
  std::vector<float> out(shared.size());
  combine(shared.data(), routed.data(), route->shared_score, route->score, out.size(),
          out.data());
  return out;
}

Tensor hmoe_sequential(const Tensor& x, const routing::EdgeMap& em, const ExpertBank& bank) {
  check_input(x, em, bank);
  const std::size_t d = x.dim(1), m = bank.experts();
  Tensor out(x.shape());
  std::vector<float> s(m + 1);
  for (std::size_t t = 0; t < x.dim(0); ++t) {
    const float* xt = x.data() + t * d;
    std::optional<TokenRoute> route;
    if (em.flags[t]) {
      for (std::size_t i = 0; i <= m; ++i) {
        const float* e = bank.centroids.data() + i * d;
        float dot = 0.0f;
        for (std::size_t j = 0; j < d; ++j) dot += xt[j] * e[j];
        s[i] = kernels::sigmoid(dot);
      }
      std::uint32_t best = 0;
      for (std::uint32_t i = 1; i < m; ++i)
        if (s[i] > s[best]) best = i;
      route = TokenRoute{best, s[best], s[m]};
    }
    const std::vector<float> y = hmoe_token({xt, d}, bank, route);
    std::memcpy(out.data() + t * d, y.data(), d * sizeof(float));
  }
  return out;
}

Tensor hmoe_parallel(const Tensor& x, const routing::EdgeMap& em, const ExpertBank& bank,
                     std::size_t threads, MoeProfile* profile) {
  const auto start = Clock::now();
  check_input(x, em, bank);
  const std::size_t l = x.dim(0), d = x.dim(1), m = bank.experts();
  const std::size_t ne = em.edge_idx.size();

  auto t0 = Clock::now();
  const Tensor xe = routing::gather_rows(x, em.edge_idx);
  double gather_ms = ms_since(t0);

  t0 = Clock::now();
  const Tensor scores = affinity(xe, bank.centroids);
  const std::vector<std::uint32_t> assign = route_top1(scores);
  const double route_ms = ms_since(t0);

  t0 = Clock::now();
  const ExpertDispatch disp = build_dispatch(assign, m);
  const double sort_ms = ms_since(t0);

  t0 = Clock::now();
  const Tensor xp = routing::gather_rows(xe, disp.perm);
  gather_ms += ms_since(t0);

  // One task per 64-row chunk of the shared batch and of each expert group.
  struct Task {
    const ExpertFfn* ffn;
    const float* src;
    float* dst;
    std::size_t rows;
  };
  Tensor shared_out({l, d});
  Tensor routed_out({ne, d});
  std::vector<Task> tasks;
  for (std::size_t r0 = 0; r0 < l; r0 += kTaskRows) {
    tasks.push_back({&bank.shared, x.data() + r0 * d, shared_out.data() + r0 * d,
                     std::min(kTaskRows, l - r0)});
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t r0 = disp.group_offsets[i]; r0 < disp.group_offsets[i + 1];
         r0 += kTaskRows) {
      tasks.push_back({&bank.routed[i], xp.data() + r0 * d, routed_out.data() + r0 * d,
                       std::min(kTaskRows, disp.group_offsets[i + 1] - r0)});
    }
  }

  t0 = Clock::now();
  parallel_for(tasks.size(), threads, [&](std::size_t k) {
    const Task& task = tasks[k];
    std::vector<float> hidden(task.rows * task.ffn->hidden_dim());
    ffn_block(task.src, task.dst, task.rows, *task.ffn, hidden.data());
  });
  const double matmul_ms = ms_since(t0);

  t0 = Clock::now();
  Tensor out = std::move(shared_out);
  std::vector<float> row(d);
  for (std::size_t j = 0; j < ne; ++j) {
    const std::size_t pos = disp.inverse_perm[j];
    const float* sj = scores.data() + j * (m + 1);
    float* dst = out.data() + em.edge_idx[j] * d;
    combine(dst, routed_out.data() + pos * d, sj[m], sj[assign[j]], d, row.data());
    std::memcpy(dst, row.data(), d * sizeof(float));
  }
  const double scatter_ms = ms_since(t0);

  if (profile != nullptr) {
    profile->group_sizes.resize(m);
    for (std::size_t i = 0; i < m; ++i) profile->group_sizes[i] = disp.group_size(i);
    profile->threads = threads;
    profile->route_ms = route_ms;
    profile->sort_ms = sort_ms;
    profile->gather_ms = gather_ms;
    profile->matmul_ms = matmul_ms;
    profile->scatter_ms = scatter_ms;
    profile->total_ms = ms_since(start);
  }
  return out;
}

}  // namespace hseg::moe
