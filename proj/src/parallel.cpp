#include "robct/parallel.hpp"

#include <tbb/global_control.h>
#include <tbb/info.h>
#include <tbb/parallel_for.h>

#include <memory>
#include <mutex>

namespace robct {

namespace {
std::mutex control_mutex;
std::unique_ptr<tbb::global_control> control;
int requested = 0;
}  // namespace

void set_thread_count(int n) {
    std::lock_guard lock(control_mutex);
    control.reset();
    requested = n > 0 ? n : 0;
    if (requested > 0) {
        control = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                                        static_cast<std::size_t>(requested));
    }
}

int thread_count() {
    std::lock_guard lock(control_mutex);
    return requested > 0 ? requested : tbb::info::default_concurrency();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n), [&](const tbb::blocked_range<std::size_t>& r) {
        for (std::size_t i = r.begin(); i != r.end(); ++i) fn(i);
    });
}

}  // namespace robct
