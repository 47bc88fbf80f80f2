#include <gtest/gtest.h>

#include <set>

#include "cimsim/mapper.hpp"
#include "cimsim/pruner.hpp"

using namespace cimsim;

namespace {

HardwareSpec mini_hw(std::vector<std::size_t> org, Dims2 macro = {64, 64}, Dims2 sub = {32, 32}) {
  HardwareSpec hw;
  hw.name = "mini";
  hw.macro_array = macro;
  hw.subarray = sub;
  hw.organization = std::move(org);
  hw.compute.push_back({"sub", UnitKind::cim_subarray, {1, 1}, 1.0, 0.0, Location::in_macro, {}, 0, false});
  MemoryUnit gb;
  gb.name = "gb";
  gb.capacity_bits = 1 << 24;
  gb.width_bits = 256;
  gb.roles = {"weights", "inputs", "outputs"};
  hw.memory.push_back(gb);
  return infer_unit_counts(hw);
}

Schedule make_schedule(const HardwareSpec& hw) {
  Schedule s;
  s.macros = hw.macro_count();
  s.macro_cells = static_cast<std::uint64_t>(hw.macro_array.rows) * hw.macro_array.cols;
  return s;
}

LayerPlan make_layer(const SparseMask& mask, const FlexBlockSpec* spec, Compression c, Dims2 t,
                     const HardwareSpec& hw, std::uint64_t features, RearrangeSpec r = {}) {
  LayerPlan lp;
  lp.node = "L";
  lp.matrix = mask.dims;
  lp.features = features;
  lp.output_elements = mask.dims.cols * features;
  lp.nnz = mask.nnz();
  auto cm = compress(mask, c, spec, nullptr, false);
  cm = rearrange(cm, r.method, r.slice_size, r.axis);
  lp.tiling = tile_layout(cm, t, hw);
  return lp;
}

SpatialPlan plan_for(const MappingSpec& m, const HardwareSpec& hw) {
  SpatialPlan p;
  const auto rep = validate_mapping(m, hw, &p);
  EXPECT_TRUE(rep.ok()) << rep.str();
  return p;
}

Schedule schedule_dense(Dims2 matrix, const HardwareSpec& hw, const MappingSpec& m, std::uint64_t features) {
  auto s = make_schedule(hw);
  s.layers.push_back(make_layer(SparseMask::dense("L", matrix), nullptr, Compression::row_wise, m.tile_for(hw), hw,
                                features));
  schedule_layer(s, 0, hw, plan_for(m, hw));
  return s;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Matrix w(r, c);
  Rng rng(seed);
  for (auto& v : w.data()) v = rng.unit() * 2.0 - 1.0;
  return w;
}

Matrix masked(const Matrix& w, const SparseMask& m) {
  Matrix out = w;
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c)
      if (!m.bit(r, c)) out(r, c) = 0.0;
  return out;
}

double step_occupancy(const Schedule& s, const Step& st) {
  return static_cast<double>(st.occupied_cell_passes) /
         static_cast<double>(s.macros * s.macro_cells * st.passes);
}

}  // namespace

TEST(Mapper, RowWiseDropsPrunedRow) {
  SparseMask m = SparseMask::dense("t", {4, 4});
  for (std::size_t c = 0; c < 4; ++c) m.bit(2, c) = 0;
  const FlexBlockSpec spec{{{PatternKind::full_block, 1, 4, 0.25, {}}}};
  const auto w = random_matrix(4, 4, 1);
  const auto cm = compress(m, Compression::row_wise, &spec, &w);
  ASSERT_EQ(cm.lanes.size(), 1u);
  EXPECT_EQ(cm.lanes[0].height, 3u);
  EXPECT_EQ(cm.lanes[0].width(), 4u);
  EXPECT_EQ(decompress(cm), masked(w, m));
}

TEST(Mapper, ColumnWiseIntra) {
  const auto w = random_matrix(4, 2, 2);
  const BlockPattern p{PatternKind::intra_block, 2, 1, 0.5, {}};
  const FlexBlockSpec spec{{p}};
  const auto mask = prune_intrablock(w, p, Criterion::l1);
  const auto cm = compress(mask, Compression::column_wise, &spec, &w);
  ASSERT_EQ(cm.lanes.size(), 2u);
  for (const auto& l : cm.lanes) EXPECT_EQ(l.height, 2u);
  EXPECT_EQ(decompress(cm), masked(w, mask));
}

TEST(Mapper, DenseIsIdentity) {
  const auto w = random_matrix(5, 3, 3);
  const auto cm = compress(SparseMask::dense("t", {5, 3}), Compression::row_wise, nullptr, &w);
  ASSERT_EQ(cm.lanes.size(), 1u);
  EXPECT_EQ(cm.lanes[0].height, 5u);
  EXPECT_EQ(cm.lanes[0].values, w.data());
  EXPECT_EQ(decompress(cm), w);
}

TEST(Mapper, OrientationConflicts) {
  const FlexBlockSpec col{{{PatternKind::full_block, 4, 1, 0.5, {}}}};
  EXPECT_FALSE(check_orientation(Compression::row_wise, &col, {8, 8}).ok());
  const FlexBlockSpec in{{{PatternKind::intra_block, 2, 1, 0.5, {}}}};
  EXPECT_FALSE(check_orientation(Compression::row_wise, &in, {8, 8}).ok());
  EXPECT_TRUE(check_orientation(Compression::column_wise, &in, {8, 8}).ok());
  EXPECT_THROW(compress(random_mask(col, {8, 8}, 1), Compression::row_wise, &col), SemanticError);
  EXPECT_EQ(resolve_orientation(Compression::automatic, &col, {8, 8}), Compression::column_wise);
  EXPECT_EQ(resolve_orientation(Compression::automatic, nullptr, {8, 8}), Compression::row_wise);
}

namespace {

CompressedMatrix ragged(const std::vector<std::size_t>& heights) {
  CompressedMatrix cm;
  cm.orientation = Compression::column_wise;
  cm.original = {*std::max_element(heights.begin(), heights.end()), heights.size()};
  for (std::size_t i = 0; i < heights.size(); ++i) {
    Lane l;
    l.columns = {static_cast<std::uint32_t>(i)};
    l.height = heights[i];
    cm.lanes.push_back(l);
  }
  return cm;
}

}  // namespace

TEST(Mapper, RearrangePad) {
  const auto out = rearrange(ragged({3, 1, 2}), RearrangeMethod::pad, 0);
  for (const auto& l : out.lanes) EXPECT_EQ(l.filled_height(), 3u);
  EXPECT_EQ(out.fill_cells(), 3u);
}

TEST(Mapper, RearrangeSlice) {
  const auto out = rearrange(ragged({4, 2}), RearrangeMethod::slice, 2);
  ASSERT_EQ(out.lanes.size(), 3u);
  for (const auto& l : out.lanes) EXPECT_EQ(l.filled_height(), 2u);
  EXPECT_EQ(out.fill_cells(), 0u);
  EXPECT_THROW(rearrange(ragged({4, 2}), RearrangeMethod::slice, 0), SemanticError);
}

TEST(Mapper, RearrangeEqualLanesIdentity) {
  const auto in = ragged({3, 3});
  const auto out = rearrange(in, RearrangeMethod::pad, 0);
  EXPECT_EQ(out.fill_cells(), 0u);
  EXPECT_EQ(out.lanes.size(), in.lanes.size());
}

TEST(Mapper, TileGrid) {
  auto s = tile({64, 64}, {32, 32});
  EXPECT_EQ(s.tiles, 4u);
  EXPECT_EQ(s.padding_cells, 0u);
  s = tile({70, 64}, {32, 32});
  EXPECT_EQ(s.tiles, 6u);
  EXPECT_EQ(s.padded_tiles, 2u);
  EXPECT_EQ(s.padding_rows, 26u);
  EXPECT_EQ(s.padding_cells, 26u * 64u);
  EXPECT_EQ(tile({5, 7}, {1, 1}).tiles, 35u);
  EXPECT_THROW(tile({5, 7}, {0, 1}), SemanticError);
}

TEST(Mapper, RoundTripThroughRearrange) {
  const FlexBlockSpec specs[] = {
      {{{PatternKind::full_block, 1, 16, 0.5, {}}}},
      {{{PatternKind::full_block, 16, 1, 0.7, {}}}},
      {{{PatternKind::intra_block, 2, 1, 0.5, {}}, {PatternKind::full_block, 2, 16, 0.6, {}}}},
      {{{PatternKind::intra_block, 4, 1, 0.75, {}}}},
  };
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    const auto& spec = specs[seed % 4];
    const auto w = random_matrix(64, 64, seed);
    const auto mask = random_mask(spec, {64, 64}, seed);
    const auto cm = compress(mask, Compression::automatic, &spec, &w);
    const Matrix expect = masked(w, mask);
    EXPECT_EQ(decompress(cm), expect);
    EXPECT_EQ(decompress(rearrange(cm, RearrangeMethod::pad, 0)), expect);
    EXPECT_EQ(decompress(rearrange(cm, RearrangeMethod::slice, 7)), expect);
    EXPECT_EQ(decompress(rearrange(cm, RearrangeMethod::slice, 3, LaneAxis::row)), expect);
  }
}

TEST(Mapper, ExactFitOneStep) {
  const auto hw = mini_hw({2, 2});
  const auto s = schedule_dense({128, 128}, hw, MappingSpec{}, 8);
  ASSERT_EQ(s.steps.size(), 1u);
  std::set<std::size_t> macros;
  for (const auto& p : s.steps[0].placements) macros.insert(p.macro);
  EXPECT_EQ(macros, (std::set<std::size_t>{0, 1, 2, 3}));
  EXPECT_DOUBLE_EQ(utilization(s), 1.0);
}

TEST(Mapper, SixTilesOnFourMacros) {
  const auto hw = mini_hw({2, 2});
  const auto s = schedule_dense({128, 192}, hw, MappingSpec{}, 8);
  ASSERT_EQ(s.steps.size(), 2u);
  EXPECT_EQ(s.steps[0].placements.size(), 4u);
  EXPECT_EQ(s.steps[1].placements.size(), 2u);
  EXPECT_DOUBLE_EQ(step_occupancy(s, s.steps[1]), 0.5);
  EXPECT_DOUBLE_EQ(step_occupancy(s, s.steps[0]), 1.0);
}

TEST(Mapper, HalfMacrosIdle) {
  const auto hw = mini_hw({2, 2});
  EXPECT_DOUBLE_EQ(utilization(schedule_dense({128, 64}, hw, MappingSpec{}, 8)), 0.5);
}

TEST(Mapper, DuplicateHalvesFeatureExtent) {
  const auto hw = mini_hw({2, 2});
  MappingSpec unroll;
  unroll.loopnest = {{LoopDim::weight, 0, Binding::temporal, "", SpatialMode::unroll},
                     {LoopDim::weight, 0, Binding::spatial, "org.0", SpatialMode::unroll}};
  MappingSpec dup = unroll;
  dup.loopnest.push_back({LoopDim::feature, 0, Binding::spatial, "org.1", SpatialMode::duplicate});
  const auto a = schedule_dense({128, 64}, hw, unroll, 10);
  const auto b = schedule_dense({128, 64}, hw, dup, 10);
  ASSERT_EQ(a.steps.size(), 1u);
  ASSERT_EQ(b.steps.size(), 1u);
  EXPECT_EQ(b.steps[0].placements.size(), 2 * a.steps[0].placements.size());
  EXPECT_EQ(a.steps[0].passes, 10u);
  EXPECT_EQ(b.steps[0].passes, 5u);
  EXPECT_EQ(a.total_mac_work(), b.total_mac_work());
  EXPECT_EQ(b.steps[0].weight_bytes, 2 * a.steps[0].weight_bytes);
  EXPECT_GT(utilization(b), utilization(a));
}

TEST(Mapper, DuplicateRemainderGoesLow) {
  const auto hw = mini_hw({2, 2});
  MappingSpec dup;
  dup.loopnest = {{LoopDim::weight, 0, Binding::temporal, "", SpatialMode::unroll},
                  {LoopDim::weight, 0, Binding::spatial, "org.0", SpatialMode::unroll},
                  {LoopDim::feature, 0, Binding::spatial, "org.1", SpatialMode::duplicate}};
  const auto s = schedule_dense({64, 64}, hw, dup, 7);
  ASSERT_EQ(s.steps[0].placements.size(), 2u);
  EXPECT_EQ(s.steps[0].placements[0].features, 4u);
  EXPECT_EQ(s.steps[0].placements[1].features, 3u);
  EXPECT_EQ(s.steps[0].placements[0].macro, 0u);
  EXPECT_EQ(s.steps[0].placements[1].macro, 1u);
}

TEST(Mapper, MissingTemporalLoopErrors) {
  const auto hw = mini_hw({2, 2});
  MappingSpec m;
  m.loopnest = {{LoopDim::weight, 0, Binding::spatial, "org.0", SpatialMode::unroll}};
  auto s = make_schedule(hw);
  s.layers.push_back(make_layer(SparseMask::dense("L", {256, 64}), nullptr, Compression::row_wise, m.tile_for(hw),
                                hw, 4));
  EXPECT_THROW(schedule_layer(s, 0, hw, plan_for(m, hw)), SemanticError);
}

TEST(Mapper, ValidationErrors) {
  const auto hw = mini_hw({2, 2});
  auto bad = [&](MappingSpec m, const std::string& needle) {
    const auto rep = validate_mapping(m, hw);
    EXPECT_FALSE(rep.ok());
    EXPECT_NE(rep.str().find(needle), std::string::npos) << rep.str();
  };
  MappingSpec m;
  m.tile = {128, 64};
  bad(m, "larger than the macro");
  m = {};
  m.loopnest = {{LoopDim::weight, 3, Binding::spatial, "org.0", SpatialMode::unroll}};
  bad(m, "exceeds axis size");
  m.loopnest = {{LoopDim::weight, 0, Binding::spatial, "org.0", SpatialMode::duplicate}};
  bad(m, "only unroll");
  m.loopnest = {{LoopDim::feature, 0, Binding::spatial, "org.0", SpatialMode::unroll}};
  bad(m, "only duplicate");
  m.loopnest = {{LoopDim::weight, 0, Binding::spatial, "org.0", SpatialMode::unroll},
                {LoopDim::feature, 0, Binding::spatial, "org.0", SpatialMode::duplicate}};
  bad(m, "more than once");
  m.loopnest = {{LoopDim::weight, 0, Binding::spatial, "org.5", SpatialMode::unroll}};
  bad(m, "names no organization axis");
  m.loopnest = {{LoopDim::weight, 0, Binding::spatial, "moon", SpatialMode::unroll}};
  bad(m, "unknown spatial target");
  m = {};
  m.mapping_dict[OpKind::pool] = "gpu";
  bad(m, "unknown destination");
}

TEST(Mapper, ArraySlotsHoldSeveralTiles) {
  const auto hw = mini_hw({2});
  MappingSpec m;
  m.tile = {32, 64};
  m.loopnest = {{LoopDim::weight, 0, Binding::temporal, "", SpatialMode::unroll},
                {LoopDim::weight, 0, Binding::spatial, "org.0", SpatialMode::unroll},
                {LoopDim::weight, 0, Binding::spatial, "array.row", SpatialMode::unroll}};
  const auto s = schedule_dense({128, 64}, hw, m, 4);
  ASSERT_EQ(s.steps.size(), 1u);
  EXPECT_EQ(s.steps[0].placements.size(), 4u);
  EXPECT_DOUBLE_EQ(utilization(s), 1.0);
}

TEST(Mapper, MappingJson) {
  const auto m = parse_mapping(R"({"name":"x","flatten":{"conv":["K_h","K_w","C_in"]},"compression":"column_wise",
    "tile":[32,32],"rearrange":{"method":"slice","slice_size":16},
    "loopnest":[{"dim":"W","binding":"temporal"},{"dim":"F","binding":"spatial","target":"org.0"}],
    "mapping_dict":{"pool":"postprocess"}})");
  EXPECT_EQ(m.compression, Compression::column_wise);
  EXPECT_EQ(m.tile, (Dims2{32, 32}));
  EXPECT_EQ(m.rearrange.slice_size, 16u);
  EXPECT_EQ(m.loopnest[1].mode, SpatialMode::duplicate);
  EXPECT_EQ(m.flatten_for(OpKind::conv).front(), "K_h");
  EXPECT_EQ(m.destination(OpKind::fc), "cim_macro");
  EXPECT_EQ(m.destination(OpKind::elementwise), "postprocess");
  EXPECT_THROW(parse_mapping(R"({"compression":"diagonal"})"), SchemaError);
  EXPECT_THROW(parse_mapping(R"({"rearrange":{"method":"slice","slice_size":0}})"), SemanticError);
  EXPECT_THROW(parse_mapping(R"({"loopnest":[{"dim":"Z"}]})"), SchemaError);
}

TEST(Mapper, RaggedBelowSliced) {
  const auto hw = mini_hw({2, 2});
  const FlexBlockSpec spec{{{PatternKind::full_block, 16, 1, 0.6, {}}}};
  const auto mask = random_mask(spec, {256, 128}, 5);
  MappingSpec m;
  const auto plan = plan_for(m, hw);
  auto run = [&](RearrangeSpec r) {
    auto s = make_schedule(hw);
    s.layers.push_back(make_layer(mask, &spec, Compression::column_wise, m.tile_for(hw), hw, 8, r));
    schedule_layer(s, 0, hw, plan);
    return s;
  };
  const auto plain = run({});
  const auto sliced = run({RearrangeMethod::slice, 64, LaneAxis::column});
  EXPECT_LT(utilization(plain), utilization(sliced));
  EXPECT_EQ(plain.total_mac_work(), sliced.total_mac_work());
}

TEST(Mapper, ScheduleInvariants) {
  Rng rng(99);
  for (int it = 0; it < 40; ++it) {
    const std::vector<std::size_t> org{1 + rng.below(3), 1 + rng.below(3)};
    const auto hw = mini_hw(org);
    const std::size_t rows = 16 * (1 + rng.below(12)), cols = 16 * (1 + rng.below(12));
    const FlexBlockSpec spec{{{PatternKind::full_block, 1, 16, 0.1 + 0.8 * rng.unit(), {}}}};
    const auto mask = random_mask(spec, {rows, cols}, it);
    MappingSpec m;
    m.loopnest = {{LoopDim::weight, 0, Binding::temporal, "", SpatialMode::unroll},
                  {LoopDim::weight, 0, Binding::spatial, "org.0", SpatialMode::unroll}};
    if (rng.below(2)) m.loopnest.push_back({LoopDim::feature, 0, Binding::spatial, "org.1", SpatialMode::duplicate});
    const std::uint64_t features = 1 + rng.below(20);
    auto s = make_schedule(hw);
    s.layers.push_back(make_layer(mask, &spec, Compression::row_wise, m.tile_for(hw), hw, features));
    schedule_layer(s, 0, hw, plan_for(m, hw));
    EXPECT_EQ(s.total_mac_work(), mask.nnz() * features);
    const double u = utilization(s);
    EXPECT_GE(u, 0.0);
    EXPECT_LE(u, 1.0);
    for (const auto& st : s.steps) {
      std::set<std::pair<std::size_t, std::size_t>> seen;
      for (const auto& p : st.placements) EXPECT_TRUE(seen.insert({p.macro, p.tile}).second);
      std::set<std::size_t> macros;
      for (const auto& p : st.placements) EXPECT_TRUE(macros.insert(p.macro).second);
      for (const auto& p : st.placements) EXPECT_LT(p.macro, hw.macro_count());
    }
  }
}
