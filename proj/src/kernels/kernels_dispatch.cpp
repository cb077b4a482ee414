#include "kernels_internal.hpp"

#include <cstdlib>
#include <cstring>
#include <vector>

namespace pscore::kernels {

const std::vector<const Ops*>& available() {
    static const std::vector<const Ops*> tables = [] {
        std::vector<const Ops*> v;
        v.push_back(&scalar());
#if defined(__x86_64__) || defined(__i386__)
        if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
            v.push_back(&avx2());
#endif
#if defined(__aarch64__)
        v.push_back(&neon());
#endif
        return v;
    }();
    return tables;
}

const Ops& active() {
    static const Ops* chosen = [] {
        const auto& tables = available();
        if (const char* name = std::getenv("PSCORE_KERNELS")) {
            for (const Ops* t : tables)
                if (std::strcmp(t->name, name) == 0) return t;
            // Unknown or unsupported name: fall through to the default so a
            // stale environment variable cannot disable the program.
        }
        return tables.back();
    }();
    return *chosen;
}

} // namespace pscore::kernels
