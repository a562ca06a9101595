#include <doctest.h>

#include "mmgl/cli/artifact.hpp"
#include "mmgl/cli/commands.hpp"
#include "mmgl/data/csv.hpp"
#include "mmgl/error.hpp"

#include "test_util.hpp"

#include <initializer_list>
#include <string>
#include <vector>

using namespace mmgl;
using mmgl::test::read_file;
using mmgl::test::TempDir;
using mmgl::test::write_file;

namespace {

int mmgl_main(std::initializer_list<std::string> args) {
    std::vector<std::string> owned = {"mmgl", "--log-level", "off"};
    owned.insert(owned.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const std::string& a : owned) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::size_t count_lines(const std::filesystem::path& p) {
    const std::string s = read_file(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Small synthetic dataset plus a short training config inside `dir`.
void make_inputs(const TempDir& dir, int epochs = 5, const std::string& extra = "") {
    write_file(dir / "synth.json", R"({"preset": "complementary", "num_patients": 48, "seed": 4})");
    REQUIRE(mmgl_main({"synth", "--config", (dir / "synth.json").string(), "--out", (dir / "data").string()}) == 0);
    write_file(dir / "cfg.json", "{\"epochs\": " + std::to_string(epochs) + ", \"folds\": 3" + extra + "}");
}

}  // namespace

TEST_CASE("synth: same seed gives byte-identical files, loadable without edits") {
    TempDir dir;
    REQUIRE(mmgl_main({"synth", "--preset", "default", "--seed", "9", "--out", (dir / "a").string()}) == 0);
    REQUIRE(mmgl_main({"synth", "--preset", "default", "--seed", "9", "--out", (dir / "b").string()}) == 0);
    CHECK(read_file(dir / "a" / "features.csv") == read_file(dir / "b" / "features.csv"));
    CHECK(read_file(dir / "a" / "schema.json") == read_file(dir / "b" / "schema.json"));
    const auto ds = data::load_csv(dir / "a" / "features.csv", dir / "a" / "schema.json");
    CHECK(ds.num_patients() == 300);
}

TEST_CASE("synth: tadpole-like preset shapes") {
    TempDir dir;
    REQUIRE(mmgl_main({"synth", "--preset", "tadpole-like", "--out", dir.path().string()}) == 0);
    const auto ds = data::load_csv(dir / "features.csv", dir / "schema.json");
    CHECK(ds.num_patients() == 685);
    CHECK(ds.features.cols() == 366);
    CHECK(ds.num_classes() == 3);
}

TEST_CASE("exit codes partition failure classes") {
    CHECK(cli::exit_code(ConfigError("x")) == 2);
    CHECK(cli::exit_code(ParameterError("x")) == 2);
    CHECK(cli::exit_code(DataError("x")) == 3);
    CHECK(cli::exit_code(SchemaError("x")) == 3);
    CHECK(cli::exit_code(ParseError("x")) == 3);
    CHECK(cli::exit_code(DimensionError("x")) == 3);
    CHECK(cli::exit_code(NumericalError("x")) == 4);
    CHECK(cli::exit_code(UsageError("x")) == 1);
    CHECK(cli::exit_code(std::runtime_error("x")) == 1);

    TempDir dir;
    make_inputs(dir);
    const std::string data = (dir / "data").string();
    CHECK(mmgl_main({"frobnicate"}) == 2);
    CHECK(mmgl_main({"train", "--data", data}) == 2);
    write_file(dir / "bad.json", R"({"epochs": 5, "learning_rate": 0.1})");
    CHECK(mmgl_main({"train", "--data", data, "--config", (dir / "bad.json").string(), "--out",
                     (dir / "o").string()}) == 2);
    CHECK(mmgl_main({"cv", "--data", data, "--eval-mode", "sideways", "--out", (dir / "o").string()}) == 2);
    CHECK(mmgl_main({"export", "pictures", "--model", "m.json", "--out", "x.csv"}) == 2);
}

TEST_CASE("train: missing schema file is a data error naming the path") {
    TempDir dir;
    make_inputs(dir);
    std::filesystem::remove(dir / "data" / "schema.json");
    CHECK(mmgl_main({"train", "--data", (dir / "data").string(), "--config", (dir / "cfg.json").string(), "--out",
                     (dir / "o").string()}) == 3);
    cli::RunSpec spec;
    spec.command = "train";
    spec.data_dir = dir / "data";
    spec.out_dir = dir / "o";
    try {
        cli::cmd_train(spec);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find((dir / "data" / "schema.json").string()) != std::string::npos);
    }
}

TEST_CASE("train: divergence exits with the numerical code") {
    TempDir dir;
    make_inputs(dir, 50, ", \"lr\": 1e300");
    CHECK(mmgl_main({"train", "--data", (dir / "data").string(), "--config", (dir / "cfg.json").string(), "--out",
                     (dir / "o").string()}) == 4);
}

TEST_CASE("train: outputs, manifest rerun and exports") {
    TempDir dir;
    make_inputs(dir);
    const auto out = dir / "run";
    REQUIRE(mmgl_main({"train", "--data", (dir / "data").string(), "--config", (dir / "cfg.json").string(), "--out",
                       out.string()}) == 0);
    for (const char* f : {"model.json", "metrics.csv", "history.csv", "manifest.json"}) {
        CHECK(std::filesystem::exists(out / f));
    }
    CHECK(count_lines(out / "history.csv") == 6);

    SUBCASE("rerun from the manifest reproduces every output") {
        const auto again = dir / "again";
        REQUIRE(mmgl_main({"train", "--manifest", (out / "manifest.json").string(), "--out", again.string()}) == 0);
        for (const char* f : {"model.json", "metrics.csv", "history.csv"}) CHECK(read_file(out / f) == read_file(again / f));
    }
    SUBCASE("manifest refuses changed data") {
        write_file(dir / "data" / "features.csv", read_file(dir / "data" / "features.csv") + "\n");
        CHECK(mmgl_main({"train", "--manifest", (out / "manifest.json").string(), "--out", (dir / "x").string()}) == 3);
    }
    SUBCASE("artifact rebuilds the same model") {
        const cli::ModelArtifact a = cli::load_artifact(out / "model.json");
        const auto model = a.model();
        const auto raw = data::load_csv(dir / "data" / "features.csv", dir / "data" / "schema.json");
        const Matrix x = a.preprocessing.apply(raw.features, raw.missing);
        CHECK(model->fuse(x) == a.h);
    }
    SUBCASE("graph export: upper-triangle nonzeros plus N self-loops") {
        const auto edges = dir / "exp" / "graph.csv";
        REQUIRE(mmgl_main({"export", "graph", "--model", (out / "model.json").string(), "--out", edges.string()}) == 0);
        const cli::ModelArtifact a = cli::load_artifact(out / "model.json");
        const Matrix adj = a.adjacency();
        std::size_t upper = 0;
        for (Eigen::Index i = 0; i < adj.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < adj.cols(); ++j) upper += adj(i, j) != 0.0;
        }
        const csv::Table t = csv::read(edges);
        CHECK(t.header == std::vector<std::string>{"src", "dst", "weight"});
        CHECK(t.rows.size() == upper + static_cast<std::size_t>(adj.rows()));
        CHECK(count_lines(cli::nodes_path(edges)) == static_cast<std::size_t>(adj.rows()) + 1);
    }
    SUBCASE("fuse-map export is M x M with modality names") {
        const auto p = dir / "fm.csv";
        REQUIRE(mmgl_main({"export", "fuse-map", "--model", (out / "model.json").string(), "--out", p.string()}) == 0);
        const csv::Table t = csv::read(p);
        CHECK(t.header == std::vector<std::string>{"imaging", "biomarker", "cognitive"});
        REQUIRE(t.rows.size() == 3);
        for (std::size_t j = 0; j < 3; ++j) {
            double col = 0.0;
            for (std::size_t i = 0; i < 3; ++i) col += std::stod(t.rows[i][j]);
            CHECK(col == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    SUBCASE("embeddings export is N x d") {
        const auto p = dir / "emb.csv";
        REQUIRE(mmgl_main({"export", "embeddings", "--model", (out / "model.json").string(), "--out", p.string()}) == 0);
        const csv::Table t = csv::read(p);
        CHECK(t.rows.size() == 48);
        CHECK(t.header.size() == 16);
    }
    SUBCASE("predict: one distribution per input row") {
        const auto p = dir / "pred.csv";
        REQUIRE(mmgl_main({"predict", "--model", (out / "model.json").string(), "--input",
                           (dir / "data" / "features.csv").string(), "--out", p.string()}) == 0);
        const csv::Table t = csv::read(p);
        REQUIRE(t.rows.size() == 48);
        CHECK(t.header.size() == 5);
        for (const auto& row : t.rows) {
            double s = 0.0;
            for (std::size_t c = 2; c < row.size(); ++c) s += std::stod(row[c]);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("export: fuse-map needs an attention model") {
    TempDir dir;
    make_inputs(dir, 3, ", \"fusion\": \"concat\"");
    REQUIRE(mmgl_main({"train", "--data", (dir / "data").string(), "--config", (dir / "cfg.json").string(), "--out",
                       (dir / "run").string()}) == 0);
    CHECK(mmgl_main({"export", "fuse-map", "--model", (dir / "run" / "model.json").string(), "--out",
                     (dir / "fm.csv").string()}) == 2);
}

TEST_CASE("cv and ablate: byte-identical reruns and matching cells") {
    TempDir dir;
    make_inputs(dir);
    const std::string data = (dir / "data").string(), cfg = (dir / "cfg.json").string();
    REQUIRE(mmgl_main({"cv", "--data", data, "--config", cfg, "--out", (dir / "cv1").string()}) == 0);
    REQUIRE(mmgl_main({"cv", "--data", data, "--config", cfg, "--out", (dir / "cv2").string()}) == 0);
    CHECK(read_file(dir / "cv1" / "metrics.csv") == read_file(dir / "cv2" / "metrics.csv"));
    CHECK(read_file(dir / "cv1" / "predictions.csv") == read_file(dir / "cv2" / "predictions.csv"));
    CHECK(count_lines(dir / "cv1" / "metrics.csv") == 1 + 3 + 3);
    CHECK(std::filesystem::exists(dir / "cv1" / "history_fold2.csv"));

    REQUIRE(mmgl_main({"ablate", "--data", data, "--config", cfg, "--grid", "maff:learned,concat:knn", "--out",
                       (dir / "ab").string()}) == 0);
    const csv::Table ab = csv::read(dir / "ab" / "ablation.csv");
    REQUIRE(ab.rows.size() == 2);
    const csv::Table cv = csv::read(dir / "cv1" / "metrics.csv");
    CHECK(ab.rows[0][2] == cv.rows[3][1]);  // acc mean
    CHECK(ab.rows[0][5] == cv.rows[3][2]);  // auc mean
    CHECK(ab.rows[1][0] == "concat");
    CHECK(ab.rows[1][1] == "knn");

    SUBCASE("--folds overrides the config") {
        REQUIRE(mmgl_main({"cv", "--data", data, "--config", cfg, "--folds", "4", "--out", (dir / "cv4").string()}) == 0);
        CHECK(count_lines(dir / "cv4" / "metrics.csv") == 1 + 4 + 3);
    }
}
