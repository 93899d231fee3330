#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace geoflow {

/// `[section]` headers followed by `key = value` lines; `#` starts a comment.
struct ConfigFile {
    std::map<std::string, std::map<std::string, std::string>> sections;
};

ConfigFile parse_config(std::istream& in);
ConfigFile read_config(const std::string& path);

struct RunConfig {
    std::string command;  ///< mesh | spectrum | heat-kernel | kato | flow | continuity
    std::optional<std::uint64_t> seed;
    std::string output;
    int threads = 1;

    struct Mesh {
        std::string kind = "icosphere";  ///< icosphere | cone_sphere | flat_torus | tetrahedral | file
        int subdivisions = 2;
        double cone_angle = 4.71238898038469;  ///< 1.5 pi
        int torus_n = 32;
        double torus_side = 6.283185307179586;
        std::string path;
    } mesh;

    struct Coefficients {
        std::string kind = "identity";  ///< identity | random_symmetric | random_complex | ambient_complex
        double kappa = 0.5;
        double Lambda = 2.0;
        bool multiplier = false;
        double multiplier_kappa = 0.5;
    } coefficients;

    struct Spectrum {
        int modes = 10;
    } spectrum;

    struct HeatKernel {
        std::vector<double> times{0.01, 0.1, 1.0};
        std::vector<int> vertices{0};
        int modes = -1;
    } heat_kernel;

    struct Kato {
        std::vector<int> levels{1, 2, 3};
        std::vector<double> magnitudes{1e-4, 1e-3, 1e-2, 1e-1};
        int eigen_probes = 10;
        int random_probes = 10;
        int coercivity_modes = 8;
    } kato;

    struct Flow {
        std::vector<double> times{0.02, 0.04, 0.06, 0.08, 0.1};
        int vertex = 0;
        int exclusion_rings = 2;
        double continuity_time = 0.1;
        bool full = true;  ///< compute g_t on all of N (needed for the continuity table)
    } flow;

    struct Continuity {
        std::vector<double> magnitudes{0.3, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
        std::vector<double> sqrt_magnitudes{1e-1, 1e-2, 1e-3, 1e-4};
        double margin = 0.4;
        double kernel_time = 1.0;
    } continuity;
};

/// Builds and range-checks a run configuration; throws ValidationError.
RunConfig make_run_config(const ConfigFile& file);

/// Effective configuration as sectioned key/value text (echoed into the summary).
ConfigFile echo_config(const RunConfig& cfg);

struct RunOutcome {
    int exit_code = 0;  ///< 0 success, 1 validation failure, 2 numerical check failure
    std::vector<std::string> failed_checks;
    std::string message;
};

/// Runs the command and writes its artifacts into cfg.output. Nothing is written when
/// validation fails.
RunOutcome run(const RunConfig& cfg);

/// Command-line front end: --config, --out, --threads, --seed.
int cli_main(int argc, char** argv);

} // namespace geoflow
