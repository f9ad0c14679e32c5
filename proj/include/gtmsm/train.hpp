// Minibatch training loop with the linear warm-anneal schedule, periodic
// checkpoints, and an append-only metrics log.
#pragma once

#include "gtmsm/model.hpp"
#include "gtmsm/optim.hpp"

#include <string>

namespace gtmsm {

struct TrainOptions {
    std::string out_dir;          // checkpoints + metrics.log
    std::string resume_ckpt;      // optional checkpoint directory
    bool grad_check_first = false;
    int64_t updates_override = -1; // -1: use cfg.updates
    bool quiet = false;
};

struct TrainResult {
    int64_t updates_done = 0;
    bool aborted_nan = false;
    std::string last_checkpoint;
    double final_objective = 0.0;
};

// Metrics log line format (tab separated):
//   update  objective  reconstruction  kl  lr  wall_seconds
TrainResult train(Model& m, const Dataset& data, const TrainOptions& opt);

// Episode sliced to the training split (tau from the model config).
Episode training_episode(const Model& m, const Dataset& data, size_t index);

} // namespace gtmsm
