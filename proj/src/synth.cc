#include "idfprobe/synth.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "idfprobe/rng.h"

namespace idfprobe {
namespace {

std::vector<float> Representation(const TokenizedQuery& q, const IdfTable& idf,
                                  int d, bool planted, double sigma,
                                  SplitMix64& rng) {
  const std::size_t t = q.token_ids.size();
  std::vector<float> out(t * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < t; ++i) {
    float* row = out.data() + i * d;
    row[0] = planted ? static_cast<float>(idf.idf(q.token_ids[i]) +
                                          sigma * rng.Gaussian())
                     : static_cast<float>(rng.Gaussian());
    for (int j = 1; j < d; ++j) row[j] = static_cast<float>(rng.Gaussian());
  }
  return out;
}

void FillIdfRow(const TokenizedQuery& q, const IdfTable& idf, float* row) {
  const std::size_t t = q.token_ids.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    if (q.content_mask[i]) sum += idf.idf(q.token_ids[i]);
  }
  if (sum <= 0.0) {
    std::fill(row, row + t, 1.0f / static_cast<float>(t));
    return;
  }
  for (std::size_t i = 0; i < t; ++i) {
    row[i] = q.content_mask[i]
                 ? static_cast<float>(idf.idf(q.token_ids[i]) / sum)
                 : 0.0f;
  }
}

void FillRandomRow(std::size_t t, float* row, SplitMix64& rng) {
  std::vector<double> logits(t);
  for (auto& l : logits) l = rng.Gaussian();
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (auto& l : logits) sum += (l = std::exp(l - top));
  for (std::size_t i = 0; i < t; ++i) row[i] = static_cast<float>(logits[i] / sum);
}

}  // namespace

ActivationBundle SynthBundle(const SynthSpec& spec, const IdfTable& idf) {
  if (spec.hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
  if (spec.layer_count < 0 || spec.head_count < 0) {
    throw std::invalid_argument("layer and head counts must be >= 0");
  }
  if (spec.designated_head < 0 || spec.designated_head > spec.head_count) {
    throw std::invalid_argument("designated head out of range");
  }
  SplitMix64 rng(spec.seed);
  BundleBuilder builder(spec.model_name, spec.hidden_dim, spec.layer_count,
                        spec.head_count, idf.vocab_hash());
  const int d = spec.hidden_dim;
  for (const TokenizedQuery& q : spec.queries) {
    const auto t = static_cast<std::int64_t>(q.token_ids.size());
    builder.AddQuery(QueryEntry{q.query_id, q.token_ids, q.content_mask, false});

    builder.AddTensor(EmbeddingRecordName(q.query_id), {t, d},
                      Representation(q, idf, d, spec.plant != PlantMode::kNone,
                                     spec.noise_sigma, rng));
    for (int l = 1; l <= spec.layer_count; ++l) {
      builder.AddTensor(LayerRecordName(q.query_id, l), {t, d},
                        Representation(q, idf, d, spec.plant == PlantMode::kAll,
                                       spec.noise_sigma, rng));
    }
    if (t == 0) {
      builder.AddTensor(AttentionRecordName(q.query_id), {spec.head_count, 0}, {});
      continue;
    }
    std::vector<float> attn(static_cast<std::size_t>(spec.head_count * t));
    for (int h = 0; h < spec.head_count; ++h) {
      float* row = attn.data() + h * t;
      if (h + 1 == spec.designated_head) {
        FillIdfRow(q, idf, row);
      } else if (spec.other_heads == HeadMode::kRandom) {
        FillRandomRow(static_cast<std::size_t>(t), row, rng);
      } else {
        std::fill(row, row + t, 1.0f / static_cast<float>(t));
      }
    }
    builder.AddTensor(AttentionRecordName(q.query_id), {spec.head_count, t}, attn);
  }
  return std::move(builder).Build();
}

}  // namespace idfprobe
