#include "sonn/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <thread>
#include <vector>

namespace sonn {

namespace {

thread_local bool tl_inside_pool = false;

class Pool {
 public:
  ~Pool() {
    std::unique_lock lock(control_);
    join_workers();
  }

  void resize(int n) {
    std::unique_lock lock(control_);
    join_workers();
    target_ = std::max(n, 1);
  }

  int size() {
    std::unique_lock lock(control_);
    return target_;
  }

  void run(std::size_t n,
           const std::function<void(std::size_t, std::size_t)>& body) {
    std::unique_lock lock(control_);
    spawn_workers();
    std::uint64_t gen;
    {
      std::lock_guard g(m_);
      body_ = &body;
      total_ = n;
      parts_ = std::min<std::size_t>(n, static_cast<std::size_t>(target_));
      next_part_ = 0;
      pending_ = parts_;
      gen = ++generation_;
    }
    cv_work_.notify_all();
    work(gen);  // The calling thread participates.
    std::unique_lock g(m_);
    cv_done_.wait(g, [&] { return pending_ == 0; });
    body_ = nullptr;
  }

 private:
  void spawn_workers() {
    while (static_cast<int>(workers_.size()) < target_ - 1) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  // Caller holds control_.
  void join_workers() {
    {
      std::lock_guard g(m_);
      stop_ = true;
    }
    cv_work_.notify_all();
    for (auto& t : workers_) t.join();
    workers_.clear();
    std::lock_guard g(m_);
    stop_ = false;
  }

  void worker_loop() {
    tl_inside_pool = true;
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock g(m_);
        cv_work_.wait(g, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      work(seen);
    }
  }

  // Executes parts of job `gen` until the job is drained or superseded. The
  // generation check keeps a late-waking worker from ever touching a newer
  // job's state.
  void work(std::uint64_t gen) {
    const bool was_inside = tl_inside_pool;
    tl_inside_pool = true;
    for (;;) {
      const std::function<void(std::size_t, std::size_t)>* body;
      std::size_t begin, end;
      {
        std::lock_guard g(m_);
        if (generation_ != gen || next_part_ >= parts_) break;
        const std::size_t part = next_part_++;
        begin = part * total_ / parts_;
        end = (part + 1) * total_ / parts_;
        body = body_;
      }
      if (begin < end) (*body)(begin, end);
      std::lock_guard g(m_);
      if (--pending_ == 0) cv_done_.notify_all();
    }
    tl_inside_pool = was_inside;
  }

  std::mutex control_;  // serializes run()/resize() callers
  std::vector<std::thread> workers_;
  int target_ = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));

  std::mutex m_;
  std::condition_variable cv_work_, cv_done_;
  const std::function<void(std::size_t, std::size_t)>* body_ = nullptr;
  std::size_t total_ = 0;
  std::size_t parts_ = 0;
  std::size_t next_part_ = 0;
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

Pool& pool() {
  static Pool p;
  return p;
}

}  // namespace

void set_threads(int n) {
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  pool().resize(std::max(n, 1));
}

int thread_count() { return pool().size(); }

void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  if (n == 1 || tl_inside_pool || pool().size() <= 1) {
    const bool was_inside = tl_inside_pool;
    tl_inside_pool = true;
    body(0, n);
    tl_inside_pool = was_inside;
    return;
  }
  pool().run(n, body);
}

}  // namespace sonn
