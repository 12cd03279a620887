#pragma once

#include <string>

#include "searth/model.hpp"
#include "searth/training.hpp"

namespace searth {

// Named-tensor archive at `path` plus a JSON sidecar at `path` + ".json"
// carrying the model config, channel stats, optimizer scalars, and the
// completed-iteration counter. Optimizer moments live in the archive under
// "optm/<name>" and "optv/<name>". Save/load/save is byte-identical and a
// loaded state resumes training bit-exactly.
template <class T>
void checkpoint_save(const std::string& path, ModelParams<T>& params, const Optimizer<T>* opt,
                     int64_t iteration);

// `opt`/`iteration` may be null when the caller only wants weights. Loading
// optimizer state from a checkpoint that has none leaves `opt` untouched.
template <class T>
ModelParams<T> checkpoint_load(const std::string& path, Optimizer<T>* opt = nullptr,
                               int64_t* iteration = nullptr);

// Sidecar-only peek, for choosing the element type before a full load.
ModelConfig checkpoint_peek_config(const std::string& path);

}  // namespace searth
