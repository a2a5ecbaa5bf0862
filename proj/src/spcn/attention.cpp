// SPDX-License-Identifier: Apache-2.0
#include "winbev/spcn/attention.hpp"

#include <algorithm>
#include <cmath>

#include "winbev/errors.hpp"

namespace winbev {

namespace {

template <typename T>
ops::Tn<T> as_batched(const ops::Tn<T>& x, const char* what) {
  if (x.rank() == 3) return x;
  if (x.rank() == 2) return ops::reshape(x, {1, x.dim(0), x.dim(1)});
  throw DimensionError(std::string("attention ") + what + " must be [N, d] or [B, N, d], got " + shape_str(x.shape()));
}

template <typename T>
ops::Tn<T> restore_rank(const ops::Tn<T>& out, std::size_t rank) {
  return rank == 3 ? out : ops::reshape(out, {out.dim(1), out.dim(2)});
}

template <typename T>
void check_qkv(const ops::Tn<T>& q, const ops::Tn<T>& k, const ops::Tn<T>& v, bool same_length) {
  const bool ok = q.dim(0) == k.dim(0) && k.dim(0) == v.dim(0) && q.dim(2) == k.dim(2) && k.dim(1) == v.dim(1) &&
                  (!same_length || q.dim(1) == k.dim(1));
  if (!ok) {
    throw DimensionError("attention operands disagree: Q " + shape_str(q.shape()) + ", K " + shape_str(k.shape()) +
                         ", V " + shape_str(v.shape()));
  }
}

void report(OpCounter* counter, const std::string& kernel, std::size_t n, std::size_t d, const OpCounter& local) {
  if (counter) counter->add(kernel, n, d, local.total());
}

}  // namespace

template <typename T>
ops::Tn<T> linear_attention(const ops::Tn<T>& q_in, const ops::Tn<T>& k_in, const ops::Tn<T>& v_in, bool normalize,
                            OpCounter* counter, const std::string& kernel) {
  const auto q = as_batched(q_in, "Q");
  const auto k = as_batched(k_in, "K");
  const auto v = as_batched(v_in, "V");
  check_qkv(q, k, v, false);
  OpCounter local;
  const auto fq = ops::elu_plus_one(q);
  const auto fk = ops::elu_plus_one(k);
  auto kv = ops::bmm(fk, v, true, false, &local);  // [B, d, dv]
  auto out = ops::bmm(fq, kv, false, false, &local);
  if (normalize) {
    auto ksum = ops::sum_axis(fk, 1, true);                // [B, 1, d]
    auto den = ops::bmm(fq, ksum, false, true, &local);  // [B, N, 1]
    out = ops::div(out, den);
  }
  report(counter, kernel, q.dim(1), q.dim(2), local);
  return restore_rank(out, q_in.rank());
}

template <typename T>
ops::Tn<T> linear_attention_naive(const ops::Tn<T>& q_in, const ops::Tn<T>& k_in, const ops::Tn<T>& v_in,
                                  bool normalize, OpCounter* counter, const std::string& kernel) {
  const auto q = as_batched(q_in, "Q");
  const auto k = as_batched(k_in, "K");
  const auto v = as_batched(v_in, "V");
  check_qkv(q, k, v, false);
  OpCounter local;
  auto a = ops::bmm(ops::elu_plus_one(q), ops::elu_plus_one(k), false, true, &local);  // [B, N, N]
  auto out = ops::bmm(a, v, false, false, &local);
  if (normalize) out = ops::div(out, ops::sum_axis(a, 2, true));
  report(counter, kernel, q.dim(1), q.dim(2), local);
  return restore_rank(out, q_in.rank());
}

template <typename T>
ops::Tn<T> softmax_attention(const ops::Tn<T>& q_in, const ops::Tn<T>& k_in, const ops::Tn<T>& v_in,
                             OpCounter* counter, const std::string& kernel) {
  const auto q = as_batched(q_in, "Q");
  const auto k = as_batched(k_in, "K");
  const auto v = as_batched(v_in, "V");
  check_qkv(q, k, v, false);
  OpCounter local;
  auto scores = ops::scale(ops::bmm(q, k, false, true, &local), 1.0 / std::sqrt(static_cast<double>(q.dim(2))));
  auto out = ops::bmm(ops::softmax_last(scores), v, false, false, &local);
  report(counter, kernel, q.dim(1), q.dim(2), local);
  return restore_rank(out, q_in.rank());
}

#define WINBEV_INSTANTIATE_ATTENTION(T)                                                                           \
  template ops::Tn<T> linear_attention<T>(const ops::Tn<T>&, const ops::Tn<T>&, const ops::Tn<T>&, bool,          \
                                          OpCounter*, const std::string&);                                         \
  template ops::Tn<T> linear_attention_naive<T>(const ops::Tn<T>&, const ops::Tn<T>&, const ops::Tn<T>&, bool,    \
                                                OpCounter*, const std::string&);                                   \
  template ops::Tn<T> softmax_attention<T>(const ops::Tn<T>&, const ops::Tn<T>&, const ops::Tn<T>&, OpCounter*, \
                                           const std::string&);

WINBEV_INSTANTIATE_ATTENTION(float)
WINBEV_INSTANTIATE_ATTENTION(double)

}  // namespace winbev
