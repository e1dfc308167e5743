#include "doctest.h"

#include <fstream>

#include "pileup/errors.hpp"
#include "pileup/io.hpp"

using namespace pileup;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "pileup-io-tests";
    fs::create_directories(dir);
    return dir / name;
}

void put(const fs::path& p, const std::string& text)
{
    std::ofstream(p, std::ios::binary) << text;
}

std::size_t error_line(const fs::path& p)
{
    try {
        ingest_signal(p, 1.0, 1.0);
    } catch (const FormatError& e) {
        return e.line();
    }
    return 0;
}

} // namespace

TEST_CASE("real numbers round trip through their decimal form")
{
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0})
        CHECK(std::stod(format_real(v)) == v);
}

TEST_CASE("signal files round trip with their sidecar")
{
    SampledSignal s;
    s.samples = {0.0, 1.5, -2.25, 1.0 / 3.0, 1e-17, 42.0};
    s.grid = SamplingGrid(6, 0.25);
    s.noise_sigma = 0.7;
    const auto path = scratch("round.csv");
    write_signal(path, s);
    CHECK(sidecar_path(path) == scratch("round.json"));
    CHECK(fs::exists(sidecar_path(path)));

    const auto back = load_signal(path);
    CHECK(back.samples == s.samples);
    CHECK(back.grid.dt == 0.25);
    CHECK(back.noise_sigma == 0.7);
    CHECK_FALSE(back.padded);

    const auto over = load_signal(path, 2.0, 3.0);
    CHECK(over.grid.dt == 2.0);
    CHECK(over.noise_sigma == 3.0);

    fs::remove(sidecar_path(path));
    CHECK_THROWS_AS(load_signal(path), ParameterError);
    CHECK(load_signal(path, 1.0, 1.0).samples == s.samples);
}

TEST_CASE("odd sample counts are padded with one zero")
{
    const auto path = scratch("odd.csv");
    put(path, "index,value\n0,1\n1,2\n2,3\n");
    const auto s = ingest_signal(path, 1.0, 1.0);
    CHECK(s.samples == std::vector<double>{1.0, 2.0, 3.0, 0.0});
    CHECK(s.padded);
    CHECK(s.grid.n_samples == 4);
}

TEST_CASE("malformed signal files report the offending line")
{
    const auto path = scratch("bad.csv");
    put(path, "index,value\n0,1\n1,abc\n");
    CHECK(error_line(path) == 3);
    put(path, "index,value\n0,1\n2,1\n");
    CHECK(error_line(path) == 3);
    put(path, "index,value\n0,1,3\n");
    CHECK(error_line(path) == 2);
    put(path, "i,v\n0,1\n");
    CHECK(error_line(path) == 1);
    put(path, "index,value\n0,nan\n");
    CHECK(error_line(path) == 2);
    put(path, "");
    CHECK_THROWS_AS(ingest_signal(path, 1.0, 1.0), FormatError);
    put(path, "index,value\n");
    CHECK_THROWS_AS(ingest_signal(path, 1.0, 1.0), FormatError);
    CHECK_THROWS_AS(ingest_signal(scratch("missing.csv"), 1.0, 1.0), IoError);
}

TEST_CASE("ground truth files round trip")
{
    GroundTruth bank;
    bank.arrivals = {1.25, 7.0, 30.5};
    bank.energies = {50.1, 49.9, 1.0 / 3.0};
    bank.shapes = {DictionaryShape{0}, DictionaryShape{4}, DictionaryShape{2}};
    const auto p1 = scratch("bank.csv");
    write_truth(p1, bank);
    const auto b = read_truth(p1);
    CHECK(b.arrivals == bank.arrivals);
    CHECK(b.energies == bank.energies);
    CHECK(std::get<DictionaryShape>(b.shapes[1]).shape_index == 4);

    GroundTruth cont;
    cont.arrivals = {0.5, 2.0};
    cont.energies = {3.0, 4.0};
    cont.shapes = {ShapeParams{1.1, 0.3}, ShapeParams{9.9, 1.7}};
    const auto p2 = scratch("cont.csv");
    write_truth(p2, cont);
    const auto c = read_truth(p2);
    CHECK(std::get<ShapeParams>(c.shapes[1]) == ShapeParams{9.9, 1.7});

    put(p2, "t,energy,column\n2,1,0\n1,1,0\n");
    CHECK_THROWS_AS(read_truth(p2), FormatError);
    put(p2, "t,energy\n");
    CHECK_THROWS_AS(read_truth(p2), FormatError);
}

TEST_CASE("shape grid specifications")
{
    const auto g = parse_shape_grid(Json::parse(
        R"({"theta1": {"from": 1, "to": 3, "step": 0.5}, "theta2": [1, 2], "tau": 7})"));
    CHECK(g.pairs.size() == 10);
    CHECK(g.tau == 7);
    CHECK(parse_shape_grid(Json::parse(R"({"theta1": 2, "theta2": 1, "tau": 3})")).pairs.size() == 1);
    CHECK_THROWS_AS(parse_shape_grid(Json::parse(R"({"theta1": 2, "theta2": 1})")), ParameterError);
    CHECK_THROWS_AS(parse_shape_grid(Json::parse(R"({"theta1": 2, "theta2": 1, "tau": 0})")),
                    ParameterError);
    CHECK_THROWS_AS(parse_shape_grid(Json::parse(R"({"theta2": 1, "tau": 3})")), ParameterError);
    CHECK_THROWS_AS(parse_shape_grid(Json::parse(R"({"theta1": {"from": 1}, "theta2": 1, "tau": 3})")),
                    ParameterError);

    const auto path = scratch("grid.json");
    put(path, R"({"shape_grid": {"theta1": [1], "theta2": [1, 2, 3], "tau": 4}})");
    CHECK(load_shape_grid(path).pairs.size() == 3);
    put(path, "{not json");
    CHECK_THROWS_AS(load_shape_grid(path), FormatError);
}
