#include "fixture_recorder.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Record replay fixtures for the synthetic task from the simulated model"};
    std::filesystem::path synthetic = CSICL_DATA_DIR "/fixtures/synthetic";
    std::filesystem::path out;
    std::filesystem::path work;
    app.add_option("--synthetic-dir", synthetic, "Directory with registry and run configs");
    app.add_option("--out", out, "Fixture directory to write (default <synthetic-dir>/replay)");
    app.add_option("--work-dir", work, "Scratch directory (default: a temp dir)");
    CLI11_PARSE(app, argc, argv);
    if (out.empty()) out = synthetic / "replay";
    if (work.empty()) work = std::filesystem::temp_directory_path() / "csicl-record-fixtures";
    try {
        std::filesystem::remove_all(work);
        const auto fresh = work / "replay";
        const auto calls = csicl::sim::record_synthetic_fixtures(synthetic, fresh, work);
        std::filesystem::remove_all(out);
        std::filesystem::copy(fresh, out);
        std::cout << "recorded " << calls << " simulated calls into " << out << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
