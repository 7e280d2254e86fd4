#pragma once

#include <cstdio>
#include <span>
#include <string>

namespace mgfd {

/// One row of a training log, serialized as "epoch,train_loss,val_acc".
struct EpochLogRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;
};

inline std::string training_log_csv(std::span<const EpochLogRow> log) {
    std::string csv = "epoch,train_loss,val_acc\n";
    char buf[96];
    for (const EpochLogRow& row : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", row.epoch, row.train_loss,
                      row.val_acc);
        csv += buf;
    }
    return csv;
}

}  // namespace mgfd
