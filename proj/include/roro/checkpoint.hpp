#pragma once

// Versioned binary checkpoints for the router, the parametric judge and the
// parametric rubric generator. Layout: "RORO", u32 version, length-prefixed
// kind tag, then kind-specific fields. Integers are u64 and reals are IEEE
// doubles, both little-endian; round trips are bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "roro/core.hpp"
#include "roro/criteria.hpp"
#include "roro/io.hpp"
#include "roro/routing.hpp"
#include "roro/rubric.hpp"

namespace roro {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointWriter {
 public:
  explicit CheckpointWriter(std::string_view kind) {
    buf_ = "RORO";
    u32(kCheckpointVersion);
    str(kind);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(std::string_view s) {
    u64(s.size());
    buf_.append(s);
  }
  void vec(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  const std::string& bytes() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

class CheckpointReader {
 public:
  CheckpointReader(std::string bytes, std::string_view expected_kind) : buf_(std::move(bytes)) {
    if (buf_.size() < 4 || buf_.compare(0, 4, "RORO") != 0) throw Error("checkpoint: bad magic");
    pos_ = 4;
    const auto ver = u32();
    if (ver != kCheckpointVersion) throw Error("checkpoint: unsupported version " + std::to_string(ver));
    const auto kind = str();
    if (kind != expected_kind)
      throw Error("checkpoint: expected kind '" + std::string(expected_kind) + "', found '" + kind + "'");
  }
  std::uint32_t u32() { return take<std::uint32_t>(); }
  std::uint64_t u64() { return take<std::uint64_t>(); }
  double f64() { return take<double>(); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> vec() {
    const auto n = u64();
    need(n * sizeof(double));
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  void finish() const {
    if (pos_ != buf_.size()) throw Error("checkpoint: trailing bytes");
  }

 private:
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) throw Error("checkpoint: truncated");
  }
  template <class T>
  T take() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

inline std::string encode_router(const RouterPolicy& p) {
  CheckpointWriter w("router");
  w.u64(p.hidden);
  p.for_each_array([&](const std::vector<double>& a) { w.vec(a); });
  return w.bytes();
}

inline RouterPolicy decode_router(std::string bytes) {
  CheckpointReader r(std::move(bytes), "router");
  RouterPolicy p(r.u64());
  p.for_each_array([&](std::vector<double>& a) {
    auto v = r.vec();
    if (v.size() != a.size()) throw Error("checkpoint: router array size mismatch");
    a = std::move(v);
  });
  r.finish();
  return p;
}

inline std::string encode_judge(const JudgeModel& j) {
  CheckpointWriter w("judge");
  w.vec(j.params);
  return w.bytes();
}

inline JudgeModel decode_judge(std::string bytes) {
  CheckpointReader r(std::move(bytes), "judge");
  JudgeModel j;
  j.params = r.vec();
  if (j.params.size() != kJudgeFeatures) throw Error("checkpoint: judge feature count mismatch");
  r.finish();
  return j;
}

inline std::string encode_rubricor(const RubricorModel& g) {
  CheckpointWriter w("rubricor");
  w.u64(g.vocab.size());
  for (auto k : g.vocab) w.u64(static_cast<std::uint64_t>(k));
  w.u64(g.min_size);
  w.u64(g.max_size);
  w.vec(g.kind_logits);
  w.vec(g.size_logits);
  w.vec(g.threshold_grid);
  w.u64(g.threshold_logits.size());
  for (const auto& t : g.threshold_logits) w.vec(t);
  w.vec(g.window_grid);
  w.vec(g.window_logits);
  return w.bytes();
}

inline RubricorModel decode_rubricor(std::string bytes) {
  CheckpointReader r(std::move(bytes), "rubricor");
  RubricorModel g;
  const auto nv = r.u64();
  for (std::uint64_t i = 0; i < nv; ++i) {
    const auto k = r.u64();
    if (k >= kNumScoredKinds) throw Error("checkpoint: invalid criterion kind");
    g.vocab.push_back(static_cast<CriterionKind>(k));
  }
  g.min_size = r.u64();
  g.max_size = r.u64();
  g.kind_logits = r.vec();
  g.size_logits = r.vec();
  g.threshold_grid = r.vec();
  const auto nt = r.u64();
  for (std::uint64_t i = 0; i < nt; ++i) g.threshold_logits.push_back(r.vec());
  g.window_grid = r.vec();
  g.window_logits = r.vec();
  r.finish();
  g.check();
  return g;
}

inline void save_router(const std::filesystem::path& p, const RouterPolicy& pol) { atomic_write_file(p, encode_router(pol)); }
inline RouterPolicy load_router(const std::filesystem::path& p) { return decode_router(read_file(p)); }
inline void save_judge(const std::filesystem::path& p, const JudgeModel& j) { atomic_write_file(p, encode_judge(j)); }
inline JudgeModel load_judge(const std::filesystem::path& p) { return decode_judge(read_file(p)); }
inline void save_rubricor(const std::filesystem::path& p, const RubricorModel& g) {
  atomic_write_file(p, encode_rubricor(g));
}
inline RubricorModel load_rubricor(const std::filesystem::path& p) { return decode_rubricor(read_file(p)); }

}  // namespace roro
