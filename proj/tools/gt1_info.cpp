// Prints the header and value summary of GT1 tensor files, or the entry
// table of a GT1 archive. Handy when poking at datasets and checkpoints.
//
//   gt1-info data/frame_000000.gt1 run/model.gt1

#include <cmath>
#include <cstdio>
#include <string>

#include "searth/gt1.hpp"

using namespace searth;

namespace {

template <class T>
void print_summary(const std::vector<T>& v) {
    if (v.empty()) {
        std::printf("  empty payload\n");
        return;
    }
    double lo = v[0], hi = v[0], sum = 0.0;
    int64_t non_finite = 0;
    for (T x : v) {
        const double d = static_cast<double>(x);
        if (!std::isfinite(d)) {
            ++non_finite;
            continue;
        }
        lo = std::min(lo, d);
        hi = std::max(hi, d);
        sum += d;
    }
    std::printf("  min %.6g  max %.6g  mean %.6g", lo, hi,
                sum / static_cast<double>(v.size()));
    if (non_finite) std::printf("  (%lld non-finite!)", (long long)non_finite);
    std::printf("\n");
}

void describe(const std::string& name, const Gt1Tensor& t) {
    std::printf("%s: %s [", name.c_str(), t.dtype == Gt1Dtype::f32 ? "f32" : "f64");
    for (size_t i = 0; i < t.dims.size(); ++i)
        std::printf("%s%lld", i ? "," : "", (long long)t.dims[i]);
    std::printf("] (%lld values)\n", (long long)t.element_count());
    if (t.dtype == Gt1Dtype::f32) print_summary(t.f32);
    else print_summary(t.f64);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: gt1-info <file.gt1> [more files...]\n");
        return 2;
    }
    int rc = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string path = argv[i];
        try {
            describe(path, gt1_read(path));
        } catch (const std::exception&) {
            // not a bare tensor: try the archive layout before giving up
            try {
                auto entries = gt1_read_archive(path);
                std::printf("%s: archive with %zu entries\n", path.c_str(), entries.size());
                for (auto& [name, t] : entries) describe("  " + name, t);
            } catch (const std::exception& e) {
                std::fprintf(stderr, "%s: %s\n", path.c_str(), e.what());
                rc = 1;
            }
        }
    }
    return rc;
}
