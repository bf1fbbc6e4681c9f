#pragma once

#include <string>
#include <vector>

#include "bilevel/foe.hpp"
#include "bilevel/image.hpp"
#include "bilevel/tvdisc.hpp"

namespace bilevel::metio {

/// P2/P5 grayscale reader; values are mapped to [0,1] by the header maxval.
Image read_pgm(const std::string& path);

/// Binary P5 writer: clips to [0,1], quantizes by round(v * maxval).
/// maxval above 255 switches to 16-bit big-endian samples.
void write_pgm(const Image& img, const std::string& path, int maxval = 255);

/// Signed-error visualization as binary PPM: +1 is pure red, -1 pure blue,
/// zero error white, channels interpolated linearly.
void write_error_map(const Image& u, const Image& g, const std::string& path);

// --- learned-parameter container ----------------------------------------------

/// Versioned little-endian container for learned parameters. Round-trips are
/// bitwise exact.
inline constexpr char kFilterBankMagic[5] = {'B', 'L', 'R', 'F', '1'};

enum class FilterBankKind : unsigned char { FoE = 0, TVDisc = 1 };

struct FilterBank {
    FilterBankKind kind = FilterBankKind::FoE;
    foe::FoEParams foe_params;       // payload when kind == FoE
    tvdisc::FilterFamily tv_family;  // payload when kind == TVDisc

    static FilterBank from_foe(foe::FoEParams params);
    static FilterBank from_tv(tvdisc::FilterFamily family);
};

void write_filter_bank(const FilterBank& bank, const std::string& path);
FilterBank read_filter_bank(const std::string& path);

/// Writes the JSON metadata sidecar next to a bank file (path + ".json").
void write_sidecar(const std::string& bank_path, const std::string& json_text);
/// Reads the sidecar if present; returns an empty string otherwise.
std::string read_sidecar(const std::string& bank_path);

// --- metrics -----------------------------------------------------------------

struct MetricsRow {
    std::string task;
    std::string setting;
    int filter_count = 0;
    std::string symmetry;
    std::string split;
    double psnr_mean = 0.0;
};

/// UTF-8 CSV with header task,setting,L,symmetry,split,psnr_mean; floats are
/// printed with 17 significant digits so re-parsing reproduces them exactly.
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);

/// Shortest-exact float formatting used across all CSV output.
std::string format_float(double v);

}  // namespace bilevel::metio
