#include "util.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

namespace hamlet {

namespace {

std::atomic<int> g_threads{1};
thread_local bool t_in_pool = false;

/// Persistent worker pool. Chunk ownership is fixed by worker index, so
/// results never depend on scheduling. Nested parallel_for calls from inside a
/// pool job run inline on the calling worker.
class WorkerPool {
public:
    static WorkerPool& instance() {
        static WorkerPool pool;
        return pool;
    }

    void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn, int want) {
        ensure_workers(want - 1);
        const std::size_t lanes = std::min<std::size_t>(static_cast<std::size_t>(want), n);
        const std::size_t chunk = (n + lanes - 1) / lanes;
        {
            std::unique_lock<std::mutex> lock(m_);
            job_ = &fn;
            job_n_ = n;
            job_chunk_ = chunk;
            job_lanes_ = lanes;
            pending_ = static_cast<int>(lanes > 0 ? lanes - 1 : 0);
            error_ = nullptr;
            ++generation_;
        }
        cv_.notify_all();
        // Lane 0 runs on the caller; mark it pool-resident so nested
        // parallel_for calls inline instead of re-entering the pool.
        std::exception_ptr lane0_error;
        if (lanes > 0) {
            t_in_pool = true;
            try {
                fn(0, std::min(n, chunk));
            } catch (...) {
                lane0_error = std::current_exception();
            }
            t_in_pool = false;
        }
        std::unique_lock<std::mutex> lock(m_);
        cv_done_.wait(lock, [&] { return pending_ == 0; });
        job_ = nullptr;
        std::exception_ptr err = lane0_error ? lane0_error : error_;
        error_ = nullptr;
        lock.unlock();
        if (err) std::rethrow_exception(err);
    }

private:
    WorkerPool() = default;
    ~WorkerPool() {
        {
            std::unique_lock<std::mutex> lock(m_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

    void ensure_workers(int needed) {
        std::unique_lock<std::mutex> lock(m_);
        while (static_cast<int>(workers_.size()) < needed) {
            const std::size_t id = workers_.size() + 1;  // lane index
            workers_.emplace_back([this, id] { worker_loop(id); });
        }
    }

    void worker_loop(std::size_t lane) {
        t_in_pool = true;
        std::uint64_t seen = 0;
        while (true) {
            std::unique_lock<std::mutex> lock(m_);
            cv_.wait(lock, [&] { return generation_ != seen; });
            seen = generation_;
            if (stop_) return;
            if (!job_ || lane >= job_lanes_) continue;
            const auto* fn = job_;
            const std::size_t begin = lane * job_chunk_;
            const std::size_t end = std::min(job_n_, begin + job_chunk_);
            lock.unlock();
            std::exception_ptr err;
            if (begin < end) {
                try {
                    (*fn)(begin, end);
                } catch (...) {
                    err = std::current_exception();
                }
            }
            lock.lock();
            if (err && !error_) error_ = err;
            if (--pending_ == 0) cv_done_.notify_one();
        }
    }

    std::mutex m_;
    std::condition_variable cv_, cv_done_;
    std::vector<std::thread> workers_;
    const std::function<void(std::size_t, std::size_t)>* job_ = nullptr;
    std::size_t job_n_ = 0, job_chunk_ = 0, job_lanes_ = 0;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
    std::exception_ptr error_;
};

}  // namespace

int num_threads() { return g_threads.load(std::memory_order_relaxed); }

void set_num_threads(int n) {
    if (n < 1) n = 1;
    g_threads.store(n, std::memory_order_relaxed);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    const int t = num_threads();
    if (t <= 1 || n < 2 || t_in_pool) {
        fn(0, n);
        return;
    }
    WorkerPool::instance().run(n, fn, t);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("short write: " + path);
}

std::uint64_t file_digest(const std::string& path) { return fnv1a(read_file(path)); }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace hamlet
