#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace lbp {

// Sample path: (time, state) records at jump times (discrete) or grid times
// (continuous). After absorbed_at the state is 0; cap_hit marks truncation by
// t_max or z_cap.
struct Trajectory {
    std::vector<double> t;
    std::vector<double> z;
    std::optional<double> absorbed_at;
    bool cap_hit = false;
};

// Reproducibility contract of every stochastic command: replica r draws from
// the substream split(seed-root, r).
struct RunConfig {
    std::uint64_t seed = 20240901;
    long replicas = 10000;
    double t_max = 100.0;
    double z_cap = 1e12;
    double dt = 1e-3;       // continuous-setting step / grid spacing
    double x_inf = 1000.0;  // proxy initial state for "started at infinity"
    double burn_in = 0.0;   // occupation-measure warmup
    int threads = 0;        // 0: hardware concurrency
    // deterministic-functional tolerances
    double tol = 1e-10;
    double tol_phi = 1e-12;
    double tol_res = 1e-6;
    double tol_w = 1e-8;
};

} // namespace lbp
