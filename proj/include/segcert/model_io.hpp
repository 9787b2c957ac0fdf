#ifndef SEGCERT_MODEL_IO_HPP
#define SEGCERT_MODEL_IO_HPP

#include <string>

#include "segcert/lipnet.hpp"

namespace segcert {

// Model persistence: a JSON manifest (model.json) listing layer kinds and
// hyperparameters, plus one SEGT real32 tensor file per weight array.
// Weights are quantized to real32 at save time and the stored per-layer
// bounds are recomputed from the quantized values, so the bounds certify
// exactly the weights on disk and save(load(dir)) is byte-identical.
void save_model(const ToyModel& model, const std::string& dir);
ToyModel load_model(const std::string& dir);

}  // namespace segcert

#endif
