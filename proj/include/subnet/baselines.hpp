#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "subnet/data.hpp"
#include "subnet/optim.hpp"

namespace subnet {

enum class Variant {
  parameter_init_oe,
  parameter_init_no_overlap,
  parameter_init_overlap,
  encoder_no_overlap,
  encoder_overlap,
};

inline constexpr Variant kAllVariants[] = {
    Variant::parameter_init_oe,     Variant::parameter_init_no_overlap,
    Variant::parameter_init_overlap, Variant::encoder_no_overlap,
    Variant::encoder_overlap,
};

// Identifier used in configs, e.g. "encoder-overlap".
const char* to_string(Variant v) noexcept;
Variant variant_from_string(const std::string& name);
// Row label of the comparison table, e.g. "Encoder init overlap".
const char* table_label(Variant v) noexcept;

// `base` with the init strategy and spacing of `v`; everything else is shared.
// Overlap variants use d = 1, no-overlap variants d = T.
TrainConfig variant_config(Variant v, const TrainConfig& base);

struct VariantResult {
  Variant variant;
  SubnetModel model;
  TrainReport report;
  double test_nrms = 0.0;
};

VariantResult run_variant(Variant v, const TrainConfig& base, const DataSplits& data,
                          const EpochCallback& on_epoch = {});

// Rows (variant label, NRMS in percent) sorted by NRMS, ties by label.
void save_compare_csv(const std::vector<VariantResult>& results,
                      const std::filesystem::path& path);

// epoch, wallclock_s, train_loss, val_metric for one variant.
void save_curve_csv(const VariantResult& result, const std::filesystem::path& path);

}  // namespace subnet
