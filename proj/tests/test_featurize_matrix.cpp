#include <string>
#include <vector>

#include "deepmaps/featurize.hpp"
#include "deepmaps/grid.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace deepmaps;
using namespace deepmaps::feat;

namespace {

/// Tiny 3x2 world with identifiable values: static channel c at (x, y) is
/// 100*c + 10*y + x; dynamic channel c at (x, y, t) adds 1000*t.
struct TinyWorld {
    StaticVolume statics;
    DynamicSeries dynamics;
    FeatureMap static_map;
    std::vector<FeatureMap> dynamic_maps;
    std::vector<std::string> macro_names{"macro_out0_1", "macro_out0_2"};
    std::vector<MacroRow> macro_rows;

    TinyWorld(int num_static, int num_dynamic, int hours) {
        statics.width = 3;
        statics.height = 2;
        for (int c = 0; c < num_static; ++c) {
            std::vector<double> plane(6);
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 3; ++x)
                    plane[static_cast<std::size_t>(y) * 3 + x] = 100.0 * c + 10.0 * y + x;
            statics.planes.push_back(plane);
            statics.names.push_back("geo_s" + std::to_string(c));
            statics.categories.push_back("geography");
        }
        dynamics.width = 3;
        dynamics.height = 2;
        dynamics.num_hours = hours;
        for (int c = 0; c < num_dynamic; ++c) {
            dynamics.names.push_back("dyn" + std::to_string(c));
            dynamics.categories.push_back("other");
        }
        dynamics.planes.resize(static_cast<std::size_t>(hours));
        for (int t = 0; t < hours; ++t) {
            for (int c = 0; c < num_dynamic; ++c) {
                std::vector<double> plane(6);
                for (int y = 0; y < 2; ++y)
                    for (int x = 0; x < 3; ++x)
                        plane[static_cast<std::size_t>(y) * 3 + x] =
                            1000.0 * t + 100.0 * c + 10.0 * y + x;
                dynamics.planes[static_cast<std::size_t>(t)].push_back(std::move(plane));
            }
        }
        // one convolved channel per family bucket keeps N small but real
        static_map.width = 3;
        static_map.height = 2;
        static_map.names = {"nbr_a0", "nbr_b0"};
        static_map.planes = {{0, 1, 2, 3, 4, 5}, {5, 4, 3, 2, 1, 0}};
        for (int t = 0; t < hours; ++t) {
            FeatureMap fm;
            fm.width = 3;
            fm.height = 2;
            fm.names = {"nbr_c0", "nbr_d0", "nbr_e0"};
            fm.planes = {{t + 0.0, t + 1.0, t + 2.0, t + 3.0, t + 4.0, t + 5.0},
                         {t + 10.0, t + 11.0, t + 12.0, t + 13.0, t + 14.0, t + 15.0},
                         {t + 20.0, t + 21.0, t + 22.0, t + 23.0, t + 24.0, t + 25.0}};
            dynamic_maps.push_back(std::move(fm));
        }
        for (int t = 0; t < hours; ++t) {
            MacroRow row;
            row.valid = true;
            row.values = {50.0 + t, 60.0 + t};
            macro_rows.push_back(row);
        }
    }

    FeatureInputs inputs() const {
        FeatureInputs in;
        in.static_volume = &statics;
        in.dynamic_series = &dynamics;
        in.static_map = &static_map;
        in.dynamic_maps = &dynamic_maps;
        in.macro_names = &macro_names;
        in.macro_rows = &macro_rows;
        return in;
    }
};

}  // namespace

TEST_SUITE("featurize_matrix") {

TEST_CASE("local selection counts raw channels: 30 static + 20 dynamic = 50") {
    TinyWorld world(30, 20, 2);
    const std::vector<SampleKey> keys{{0, 0, 0}, {1, 1, 1}};
    const FeatureMatrix m = assemble_matrix(keys, world.inputs(), parse_selection("L"));
    CHECK(m.num_columns() == 50);
    CHECK(m.rows() == 2);
}

TEST_CASE("neighboring selection counts convolved channels: 2L + 3M") {
    // eight filters per family bucket: 2*8 static + 3*8 dynamic = 40
    TinyWorld world(2, 2, 1);
    world.static_map.names.clear();
    world.static_map.planes.clear();
    for (int i = 0; i < 16; ++i) {
        world.static_map.names.push_back("nbr_x" + std::to_string(i));
        world.static_map.planes.push_back(std::vector<double>(6, 1.0));
    }
    world.dynamic_maps[0].names.clear();
    world.dynamic_maps[0].planes.clear();
    for (int i = 0; i < 24; ++i) {
        world.dynamic_maps[0].names.push_back("nbr_y" + std::to_string(i));
        world.dynamic_maps[0].planes.push_back(std::vector<double>(6, 2.0));
    }
    const FeatureMatrix m =
        assemble_matrix({{0, 0, 0}}, world.inputs(), parse_selection("N"));
    CHECK(m.num_columns() == 40);
}

TEST_CASE("assembled values read the right cell, hour, and macro row") {
    TinyWorld world(2, 1, 3);
    const std::vector<SampleKey> keys{{2, 1, 0}, {0, 0, 2}};
    const FeatureMatrix m = assemble_matrix(keys, world.inputs(), parse_selection("L+M+N"));
    REQUIRE(m.rows() == 2);
    // row 0 = (2,1,0): static geo_s1 = 100 + 10 + 2; dynamic dyn0 = 0 + 12
    CHECK(m.cell_value(m.column_index("geo_s0"), 0) == 12.0);
    CHECK(m.cell_value(m.column_index("geo_s1"), 0) == 112.0);
    CHECK(m.cell_value(m.column_index("dyn0"), 0) == 12.0);
    CHECK(m.cell_value(m.column_index("nbr_a0"), 0) == 5.0);
    CHECK(m.cell_value(m.column_index("nbr_d0"), 0) == 15.0);
    CHECK(m.cell_value(m.column_index("macro_out0_1"), 0) == 50.0);
    // row 1 = (0,0,2): dynamic adds 1000*t, macro adds t
    CHECK(m.cell_value(m.column_index("dyn0"), 1) == 2000.0);
    CHECK(m.cell_value(m.column_index("nbr_c0"), 1) == 2.0);
    CHECK(m.cell_value(m.column_index("macro_out0_2"), 1) == 62.0);
    // macro values are constant across cells within one hour
    const FeatureMatrix hour0 = assemble_matrix(
        {{0, 0, 0}, {1, 0, 0}, {2, 1, 0}}, world.inputs(), parse_selection("M"));
    const int mc = hour0.column_index("macro_out0_1");
    for (std::size_t r = 0; r < hour0.rows(); ++r) CHECK(hour0.cell_value(mc, r) == 50.0);
}

TEST_CASE("keys are sorted and deduplicated; macro gaps drop rows") {
    TinyWorld world(1, 1, 3);
    world.macro_rows[1].valid = false;
    const std::vector<SampleKey> keys{{1, 0, 1}, {0, 0, 0}, {0, 0, 0}, {2, 0, 2}};
    AssembleStats stats;
    const FeatureMatrix m =
        assemble_matrix(keys, world.inputs(), parse_selection("L+M"), &stats);
    CHECK(stats.rows_in == 3);            // duplicate collapsed
    CHECK(stats.rows_dropped_macro == 1); // hour 1 masked
    REQUIRE(m.rows() == 2);
    CHECK(m.keys[0] == SampleKey{0, 0, 0});
    CHECK(m.keys[1] == SampleKey{2, 0, 2});

    // without M the masked hour stays
    const FeatureMatrix l_only = assemble_matrix(keys, world.inputs(), parse_selection("L"));
    CHECK(l_only.rows() == 3);
}

TEST_CASE("selections require their inputs") {
    TinyWorld world(1, 1, 1);
    FeatureInputs missing = world.inputs();
    missing.static_map = nullptr;
    CHECK_THROWS_AS(assemble_matrix({{0, 0, 0}}, missing, parse_selection("N")), ConfigError);
    CHECK_NOTHROW(assemble_matrix({{0, 0, 0}}, missing, parse_selection("L+M")));
    CHECK_THROWS_AS(assemble_matrix({{0, 0, 0}}, world.inputs(), Selection{}), ConfigError);
}

TEST_CASE("filter_matrix keeps rows and selected groups only") {
    TinyWorld world(2, 1, 2);
    FeatureMatrix full =
        assemble_matrix({{0, 0, 0}, {1, 0, 1}}, world.inputs(), parse_selection("L+M+N"));
    full.response = {1.5, 2.5};
    const FeatureMatrix lm = filter_matrix(full, parse_selection("L+M"));
    CHECK(lm.rows() == 2);
    CHECK(lm.num_columns() == 3 + 2);  // 2 static + 1 dynamic + 2 macro
    CHECK(lm.response == full.response);
    for (const auto& col : lm.columns) CHECK(col.group != FeatureGroup::N);

    FeatureMatrix l_only = filter_matrix(full, parse_selection("L"));
    CHECK_THROWS_AS(filter_matrix(l_only, parse_selection("L+N")), InputError);
}

TEST_CASE("matrix CSV export round-trips values, groups, and response") {
    testutil::TempDir dir("matrix");
    TinyWorld world(2, 1, 2);
    FeatureMatrix m =
        assemble_matrix({{0, 0, 0}, {2, 1, 1}}, world.inputs(), parse_selection("L+M+N"));
    m.response = {3.25, 7.75};

    const std::string csv_path = dir.file("features.csv");
    const std::string sidecar_path = dir.file("features_columns.csv");
    export_matrix_csv(m, csv_path, "cafe0123cafe0123");
    export_matrix_sidecar(m, sidecar_path, "cafe0123cafe0123");

    const FeatureMatrix back = load_matrix_csv(csv_path, sidecar_path);
    REQUIRE(back.rows() == m.rows());
    REQUIRE(back.num_columns() == m.num_columns());
    CHECK(back.keys == m.keys);
    CHECK(back.response == m.response);
    for (int c = 0; c < m.num_columns(); ++c) {
        CHECK(back.columns[static_cast<std::size_t>(c)].name ==
              m.columns[static_cast<std::size_t>(c)].name);
        CHECK(back.columns[static_cast<std::size_t>(c)].group ==
              m.columns[static_cast<std::size_t>(c)].group);
        CHECK(back.columns[static_cast<std::size_t>(c)].category ==
              m.columns[static_cast<std::size_t>(c)].category);
        for (std::size_t r = 0; r < m.rows(); ++r)
            CHECK(back.cell_value(c, r) == m.cell_value(c, r));
    }
}

}  // TEST_SUITE("featurize_matrix")
