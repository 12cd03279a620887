#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace searth {

// Error hierarchy. The CLI maps these onto process exit codes:
// usage 2, config 3, io 4, numeric 5.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Operand shapes do not conform for an op. Message names the op and shapes.
struct ShapeError : ConfigError {
    using ConfigError::ConfigError;
};

enum class IoCode {
    open_failed,
    bad_magic,
    bad_version,
    bad_dtype,
    bad_dims,
    truncated,
    malformed,
};

struct IoError : Error {
    IoCode code;
    IoError(IoCode c, const std::string& msg) : Error(msg), code(c) {}
};

const char* io_code_name(IoCode c);

// Non-finite values, divergent training, failed numeric preconditions.
struct NumericError : Error {
    using Error::Error;
};

// Runs fn(i) for i in [0, n). Work is split into contiguous static chunks,
// one thread per chunk, so every element is computed by exactly one thread
// with a fixed inner order: results are identical for any thread count.
// Thread count comes from SEARTH_THREADS (default: hardware concurrency).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

int thread_count();

}  // namespace searth
