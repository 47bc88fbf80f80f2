#include <gtest/gtest.h>

#include "cimsim/hardware.hpp"
#include "cimsim/pruner.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace cimsim;

namespace {

const char* kMinimal = R"({
  "name": "mini",
  "macro": {"array": [1024, 32], "subarray": [32, 32]},
  "organization": [2, 2],
  "units": [
    {"name": "sub", "kind": "cim_subarray", "energy_per_access": 1.0},
    {"name": "sa", "kind": "shift_adder", "energy_per_access": 0.1},
    {"name": "acc", "kind": "accumulator"},
    {"name": "pre", "kind": "preprocess"},
    {"name": "post", "kind": "postprocess"}],
  "buffers": [{"name": "gb", "capacity_bits": 1048576, "width_bits": 256}]
})";

SparseMask mask_from_rows(const std::vector<std::string>& rows) {
  SparseMask m = SparseMask::dense("t", {rows.size(), rows[0].size()});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m.bit(r, c) = rows[r][c] == '1';
  return m;
}

}  // namespace

TEST(Hardware, MarsPreset) {
  const auto hw = testing_util::hardware("mars");
  EXPECT_EQ(hw.macro_count(), 8u);
  EXPECT_EQ(hw.subarrays_per_macro(), 16u);
  EXPECT_EQ(hw.macro_array.rows / hw.subarray.rows, 16u);
  EXPECT_EQ(hw.macro_array.cols / hw.subarray.cols, 1u);
}

TEST(Hardware, SdpPreset) { EXPECT_EQ(testing_util::hardware("sdp").macro_count(), 512u); }

TEST(Hardware, SubarrayMustDivideMacro) {
  std::string doc = kMinimal;
  doc.replace(doc.find("[32, 32]"), 8, "[48, 48]");
  try {
    parse_hardware(doc);
    FAIL();
  } catch (const SemanticError& e) {
    EXPECT_NE(std::string(e.what()).find("does not divide"), std::string::npos);
  }
}

TEST(Hardware, UnitCounts) {
  const auto hw = parse_hardware(kMinimal);
  EXPECT_EQ(hw.subarrays_per_macro(), 32u);
  EXPECT_EQ(hw.unit_of(UnitKind::cim_subarray)->count, 128u);
  EXPECT_EQ(hw.unit_of(UnitKind::shift_adder)->count, 32u * 4u);
  EXPECT_EQ(hw.unit_of(UnitKind::accumulator)->count, 32u * 4u);
  EXPECT_EQ(hw.unit_of(UnitKind::preprocess)->location, Location::outside);
  EXPECT_EQ(hw.unit_of(UnitKind::postprocess)->count, 1u);
  // the lone global buffer picks up every role
  for (const char* r : {"weights", "inputs", "outputs"}) EXPECT_NE(hw.buffer_for(r), nullptr);
}

TEST(Hardware, CountAuditOverRandomOrganizations) {
  Rng rng(11);
  auto base = parse_hardware(kMinimal);
  for (int i = 0; i < 50; ++i) {
    std::vector<std::size_t> org;
    const std::size_t rank = 1 + rng.below(3);
    for (std::size_t k = 0; k < rank; ++k) org.push_back(1 + rng.below(5));
    base.organization = org;
    const auto hw = infer_unit_counts(base);
    for (const auto& u : hw.compute)
      if (u.location == Location::in_macro)
        EXPECT_EQ(u.count, default_units_per_macro(u.kind, hw) * hw.macro_count());
  }
}

TEST(Hardware, SchemaAndSemanticErrors) {
  EXPECT_THROW(parse_hardware("{}"), SchemaError);
  EXPECT_THROW(parse_hardware(R"({"macro":{"array":[4],"subarray":[2,2]},"organization":[1]})"), SchemaError);
  std::string bad_kind = kMinimal;
  bad_kind.replace(bad_kind.find("\"shift_adder\""), 13, "\"warp_drive\"");
  EXPECT_THROW(parse_hardware(bad_kind), SchemaError);
  std::string neg = kMinimal;
  neg.replace(neg.find("1.0"), 3, "-1.0");
  EXPECT_THROW(parse_hardware(neg), SemanticError);
  std::string zero_org = kMinimal;
  zero_org.replace(zero_org.find("[2, 2]"), 6, "[2, 0]");
  EXPECT_THROW(parse_hardware(zero_org), SemanticError);
}

TEST(Hardware, SupportRowWiseIndexOnly) {
  const auto hw = parse_hardware(kMinimal);
  SparsitySummary s;
  s.any_weight_sparsity = true;
  s.max_index_bits = 1000;
  const auto sup = infer_sparsity_support(hw, s);
  ASSERT_TRUE(sup.index_memory.has_value());
  EXPECT_GE(sup.index_memory->capacity_bits, 1000u);
  EXPECT_TRUE(sup.compute.empty());
}

TEST(Hardware, SupportIntraAddsMux) {
  const auto hw = parse_hardware(kMinimal);
  SparsitySummary s;
  s.any_weight_sparsity = true;
  s.any_intra = true;
  s.max_intra_m = 2;
  const auto sup = infer_sparsity_support(hw, s);
  ASSERT_EQ(sup.compute.size(), 1u);
  EXPECT_EQ(sup.compute[0].kind, UnitKind::index_mux);
  EXPECT_EQ(sup.compute[0].dims.rows, 2u);
  EXPECT_EQ(sup.compute[0].count, 1024u * 4u);
  EXPECT_EQ(sup.mux_ways, 2u);
}

TEST(Hardware, SupportMisalignedAndZeroDetect) {
  auto hw = parse_hardware(kMinimal);
  hw.input_sparsity_enabled = true;
  SparsitySummary s;
  s.any_weight_sparsity = true;
  s.any_misaligned_full = true;
  const auto sup = infer_sparsity_support(hw, s);
  std::vector<std::string> names;
  for (const auto& u : sup.compute) names.push_back(u.name);
  EXPECT_EQ(names, (std::vector<std::string>{"extra_accumulator", "zero_detect"}));
  const auto merged = with_support(hw, sup);
  EXPECT_EQ(merged.compute.size(), hw.compute.size() + 2);
  EXPECT_EQ(merged.memory.size(), hw.memory.size() + 1);
}

TEST(Hardware, DenseNoSupport) {
  EXPECT_TRUE(infer_sparsity_support(parse_hardware(kMinimal), SparsitySummary{}).empty());
}

TEST(Hardware, IndexStorageExamples) {
  const FlexBlockSpec full{{{PatternKind::full_block, 1, 2, 0.5, {}}}};
  EXPECT_EQ(index_storage(mask_from_rows({"1100", "0011", "1100"}), full, 16, 0), 48u);
  const FlexBlockSpec hybrid{{{PatternKind::intra_block, 2, 1, 0.5, {}}, {PatternKind::full_block, 2, 1, 0.5, {}}}};
  // finest block is (2,1): two non-zero blocks with two kept elements each
  EXPECT_EQ(index_storage(mask_from_rows({"1010", "1010"}), hybrid, 8, 1), 16u + 4u);
  EXPECT_EQ(index_storage(mask_from_rows({"0000", "0000"}), full, 16, 0), 0u);
}

TEST(Hardware, IndexStorageMatchesMetadata) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const double r1 = 0.2 + 0.6 * rng.unit();
    const FlexBlockSpec spec = seed % 2 ? FlexBlockSpec{{{PatternKind::intra_block, 4, 1, 0.5, {}},
                                                         {PatternKind::full_block, 4, 8, r1, {}}}}
                                        : FlexBlockSpec{{{PatternKind::full_block, 2, 4, r1, {}}}};
    const auto mask = random_mask(spec, {32, 32}, seed);
    const auto w = default_index_widths(spec, {32, 32});
    EXPECT_EQ(index_storage(mask, spec, w.block_bits, w.elem_bits),
              oracle::index_bits_from_metadata(mask, spec, w.block_bits, w.elem_bits));
  }
}

TEST(Hardware, DefaultIndexWidths) {
  const FlexBlockSpec spec{{{PatternKind::intra_block, 4, 1, 0.5, {}}, {PatternKind::full_block, 4, 8, 0.5, {}}}};
  const auto w = default_index_widths(spec, {64, 64});
  EXPECT_EQ(w.block_bits, 10u);  // 1024 blocks of 4x1
  EXPECT_EQ(w.elem_bits, 2u);
}

TEST(Hardware, BufferThroughput) {
  MemoryUnit m;
  m.width_bits = 256;
  m.bandwidth = 2;
  EXPECT_EQ(m.bytes_per_cycle(), 64.0);
  EXPECT_EQ(m.accesses_for_bytes(33), 2u);
  EXPECT_EQ(m.accesses_for_bytes(32), 1u);
}
