#pragma once

namespace kgc {

/// Entry point of the `kgc` tool. Returns the process exit code:
/// 0 success, 1 gradcheck failure, 2 config/contract/IO error, 3 numeric failure.
int run_cli(int argc, char** argv);

/// Applies KGC_THREADS (if set) to OpenMP and Eigen.
void apply_thread_limit();

}  // namespace kgc
