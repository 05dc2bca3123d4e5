#include "stereo/common.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace stereo {

[[noreturn]] void fail_shape(const std::string& msg) {
  throw std::invalid_argument("shape error: " + msg);
}
[[noreturn]] void fail_config(const std::string& msg) {
  throw std::invalid_argument("config error: " + msg);
}
[[noreturn]] void fail_state(const std::string& msg) {
  throw std::logic_error("state error: " + msg);
}

namespace {

class Pool {
 public:
  explicit Pool(int n) { start(n); }
  ~Pool() { stop(); }

  int size() const { return static_cast<int>(workers_.size()) + 1; }

  void run(i64 n, const std::function<void(i64, i64)>& fn) {
    const int nt = size();
    if (n <= 0) return;
    if (nt == 1 || n < 2 * nt) {
      fn(0, n);
      return;
    }
    const i64 chunk = (n + nt - 1) / nt;
    {
      std::unique_lock<std::mutex> lk(m_);
      job_ = &fn;
      job_n_ = n;
      job_chunk_ = chunk;
      remaining_ = nt - 1;
      ++epoch_;
    }
    cv_.notify_all();
    // The calling thread takes the first chunk.
    fn(0, std::min<i64>(chunk, n));
    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [&] { return remaining_ == 0; });
    job_ = nullptr;
  }

  void resize(int n) {
    stop();
    start(n);
  }

 private:
  void start(int n) {
    quit_ = false;
    epoch_ = 0;
    for (int i = 1; i < n; ++i) {
      workers_.emplace_back([this, i] { worker(i); });
    }
  }
  void stop() {
    {
      std::unique_lock<std::mutex> lk(m_);
      quit_ = true;
      ++epoch_;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
    workers_.clear();
  }
  void worker(int idx) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(i64, i64)>* job = nullptr;
      i64 n = 0, chunk = 0;
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return epoch_ != seen; });
        seen = epoch_;
        if (quit_) return;
        job = job_;
        n = job_n_;
        chunk = job_chunk_;
      }
      if (job) {
        const i64 b = std::min<i64>(idx * chunk, n);
        const i64 e = std::min<i64>(b + chunk, n);
        if (b < e) (*job)(b, e);
        std::unique_lock<std::mutex> lk(m_);
        if (--remaining_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex m_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(i64, i64)>* job_ = nullptr;
  i64 job_n_ = 0, job_chunk_ = 0;
  int remaining_ = 0;
  std::uint64_t epoch_ = 0;
  bool quit_ = false;
};

Pool& pool() {
  static Pool p(static_cast<int>(std::thread::hardware_concurrency() > 0
                                     ? std::thread::hardware_concurrency()
                                     : 1));
  return p;
}

}  // namespace

void set_thread_count(int n) {
  if (n < 1) fail_config("thread count must be >= 1");
  pool().resize(n);
}

int thread_count() { return pool().size(); }

void parallel_for(i64 n, const std::function<void(i64, i64)>& fn) {
  pool().run(n, fn);
}

real pairwise_sum(const real* data, i64 n) {
  if (n == 0) return 0;
  if (n <= 8) {
    real s = 0;
    for (i64 i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const i64 half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

real pairwise_sum(const std::vector<real>& v) {
  return pairwise_sum(v.data(), static_cast<i64>(v.size()));
}

}  // namespace stereo
