#include "subnet/baselines.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>

#include "subnet/analysis.hpp"
#include "subnet/error.hpp"
#include "subnet/log.hpp"

namespace subnet {

const char* to_string(Variant v) noexcept {
  switch (v) {
    case Variant::parameter_init_oe: return "parameter-init-OE";
    case Variant::parameter_init_no_overlap: return "parameter-init-no-overlap";
    case Variant::parameter_init_overlap: return "parameter-init-overlap";
    case Variant::encoder_no_overlap: return "encoder-no-overlap";
    case Variant::encoder_overlap: return "encoder-overlap";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  for (Variant v : kAllVariants) {
    if (name == to_string(v)) return v;
  }
  fail(ErrorKind::config, "unknown variant '" + name +
                              "' (expected parameter-init-OE, parameter-init-no-overlap, "
                              "parameter-init-overlap, encoder-no-overlap or encoder-overlap)");
}

const char* table_label(Variant v) noexcept {
  switch (v) {
    case Variant::parameter_init_oe: return "Parameter init OE";
    case Variant::parameter_init_no_overlap: return "Parameter init no-overlap";
    case Variant::parameter_init_overlap: return "Parameter init overlap";
    case Variant::encoder_no_overlap: return "Encoder init no-overlap";
    case Variant::encoder_overlap: return "Encoder init overlap";
  }
  return "unknown";
}

TrainConfig variant_config(Variant v, const TrainConfig& base) {
  TrainConfig c = base;
  switch (v) {
    case Variant::parameter_init_oe:
      c.init = InitStrategy::full_record;
      c.spacing = 1;
      break;
    case Variant::parameter_init_no_overlap:
      c.init = InitStrategy::trainable_states;
      c.spacing = c.horizon;
      break;
    case Variant::parameter_init_overlap:
      c.init = InitStrategy::trainable_states;
      c.spacing = 1;
      break;
    case Variant::encoder_no_overlap:
      c.init = InitStrategy::encoder;
      c.spacing = c.horizon;
      break;
    case Variant::encoder_overlap:
      c.init = InitStrategy::encoder;
      c.spacing = 1;
      break;
  }
  if (c.init != InitStrategy::encoder) c.validation = ValidationMetric::simulation_nrms;
  return c;
}

VariantResult run_variant(Variant v, const TrainConfig& base, const DataSplits& data,
                          const EpochCallback& on_epoch) {
  // One diverging variant must not abort the whole comparison.
  TrainConfig config = variant_config(v, base);
  config.stop_on_divergence = true;
  TrainResult r = train(config, data.train, data.val, on_epoch);
  VariantResult out{v, std::move(r.model), std::move(r.report), 0.0};
  // A diverging simulation ranks last instead of aborting the whole comparison.
  try {
    out.test_nrms = simulation_nrms(out.model, data.test);
  } catch (const RolloutDivergence& e) {
    warn(std::string(to_string(v)) + ": test simulation diverged: " + e.what());
    out.test_nrms = std::numeric_limits<double>::infinity();
  }
  return out;
}

void save_compare_csv(const std::vector<VariantResult>& results,
                      const std::filesystem::path& path) {
  std::vector<const VariantResult*> rows;
  for (const auto& r : results) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const VariantResult* a, const VariantResult* b) {
    if (a->test_nrms != b->test_nrms) return a->test_nrms < b->test_nrms;
    return std::string(table_label(a->variant)) < table_label(b->variant);
  });
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << "variant,nrms_percent\n";
  char buf[128];
  for (const VariantResult* r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6g\n", table_label(r->variant), 100.0 * r->test_nrms);
    out << buf;
  }
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

void save_curve_csv(const VariantResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << "epoch,wallclock_s,train_loss,val_metric\n";
  char buf[128];
  for (const EpochRecord& e : result.report.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.17g,%.17g\n", e.epoch, e.wallclock_s, e.train_loss,
                  e.val_metric);
    out << buf;
  }
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

}  // namespace subnet
