#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idfprobe/bundle.h"
#include "idfprobe/idf_table.h"
#include "idfprobe/queries.h"

namespace idfprobe {

/// Where the IDF signal is planted in dimension 0.
enum class PlantMode { kAll, kEmbeddingsOnly, kNone };
/// Distribution of the non-designated attention heads.
enum class HeadMode { kUniform, kRandom };

struct SynthSpec {
  std::vector<TokenizedQuery> queries;
  int hidden_dim = 8;
  int layer_count = 2;
  int head_count = 4;
  double noise_sigma = 0.0;
  std::uint64_t seed = 42;
  /// 1-based head whose CLS row is proportional to the IDF vector; 0 = none.
  int designated_head = 1;
  PlantMode plant = PlantMode::kAll;
  HeadMode other_heads = HeadMode::kUniform;
  std::string model_name = "synthetic";
};

/// Deterministic test bundle. Planted representations carry
/// idf(x_i) + N(0, sigma^2) in dimension 0; every other coordinate, and
/// dimension 0 where nothing is planted, is standard normal. The designated
/// head's row is idf_i / sum(idf) on content positions and 0 elsewhere.
ActivationBundle SynthBundle(const SynthSpec& spec, const IdfTable& idf);

}  // namespace idfprobe
