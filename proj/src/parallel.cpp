#include "rpf/parallel.hpp"

#include <cstdlib>
#include <string>

namespace rpf {

int default_thread_count() {
    if (char const* env = std::getenv("RPF_THREADS")) {
        try {
            int n = std::stoi(env);
            if (n > 0) return n;
        } catch (std::exception const&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace rpf
