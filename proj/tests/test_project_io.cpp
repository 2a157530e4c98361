#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oma/project_io.hpp"
#include "test_helpers.hpp"

using namespace oma;
using namespace oma::testing;
namespace fs = std::filesystem;

namespace {
struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("oma_io_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};
}  // namespace

TEST_CASE("record CSV round-trips bit-exactly") {
    TempDir tmp;
    Rng rng(1);
    Eigen::MatrixXd samples(2, 64);
    for (Eigen::Index c = 0; c < 2; ++c)
        for (Eigen::Index j = 0; j < 64; ++j) samples(c, j) = rng.normal() * 1e-3;
    const TimeHistory original(samples, 0.005, 1);
    const std::string path = (tmp.path / "rec.csv").string();
    write_record_csv(path, original);
    const TimeHistory loaded = read_record_csv(path);
    CHECK(loaded.dt == original.dt);
    CHECK(loaded.response_order == 1);
    CHECK((loaded.samples - original.samples).cwiseAbs().maxCoeff() == 0.0);

    // and writing again produces byte-identical output
    const std::string copy = (tmp.path / "rec2.csv").string();
    write_record_csv(copy, loaded);
    std::ifstream a(path), b(copy);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}

TEST_CASE("record CSV rejects malformed input") {
    TempDir tmp;
    const std::string path = (tmp.path / "bad.csv").string();
    {
        std::ofstream out(path);
        out << "# dt=0.01 q=0 channels=2\n1.0,2.0\n3.0\n";
    }
    CHECK_THROWS_AS(read_record_csv(path), std::runtime_error);
    {
        std::ofstream out(path);
        out << "no header\n1.0,2.0\n";
    }
    CHECK_THROWS_AS(read_record_csv(path), std::runtime_error);
    {
        std::ofstream out(path);
        out << "# dt=0.01 q=0 channels=1\n1.0\npotato\n";
    }
    CHECK_THROWS_AS(read_record_csv(path), std::runtime_error);
}

TEST_CASE("config parser: sections, overrides, comments, lists") {
    const auto cfg = ConfigFile::parse_text(
        "# top comment\n"
        "[project]\n"
        "dt = 0.005   # trailing comment\n"
        "datasets = a.csv, b.csv c.csv\n"
        "dt = 0.01\n"
        "[band.1]\n"
        "f_lb = 3.2\n"
        "f_ub = 5.2\n"
        "[band.2]\n"
        "f_lb = 12\n"
        "f_ub = 14\n"
        "[algorithm]\n"
        "chart = off\n");
    CHECK(cfg.get_double("project", "dt") == 0.01);  // later key wins
    CHECK(cfg.get_list("project", "datasets") ==
          std::vector<std::string>{"a.csv", "b.csv", "c.csv"});
    CHECK(cfg.sections_matching("band") == std::vector<std::string>{"band.1", "band.2"});
    CHECK(cfg.get_flag_or("algorithm", "chart", true) == false);
    CHECK(cfg.get_int_or("algorithm", "ns", 2000) == 2000);
    CHECK_THROWS_AS(cfg.get("project", "missing"), std::runtime_error);
    CHECK_THROWS_AS(ConfigFile::parse_text("[x]\njust a line\n"), std::runtime_error);
}
