#include "se/cli/manifest.hpp"

#include <fstream>
#include <set>

#include "se/errors.hpp"
#include "se/io/csv.hpp"

namespace se::cli {

namespace {

std::optional<double> optional_number(const std::string& field, const std::string& where) {
  if (field.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": '" + field + "' is not a number");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& field) {
  const std::filesystem::path p(field);
  return p.is_absolute() ? p : base / p;
}

std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
  const auto rel = std::filesystem::proximate(p, base);
  return rel.generic_string();
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path, bool require_noisy) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || io::split_csv_line(line) != io::split_csv_line(kManifestHeader)) {
    throw DataError(path.string() + ": expected header '" + kManifestHeader + "'");
  }
  Manifest m;
  std::set<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = io::split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 6) throw DataError(where + ": expected 6 fields, got " + std::to_string(f.size()));
    ManifestEntry e;
    e.id = f[0];
    if (e.id.empty() || !ids.insert(e.id).second) throw DataError(where + ": empty or duplicate id '" + e.id + "'");
    e.clean = resolve(base, f[1]);
    if (!std::filesystem::exists(e.clean)) throw DataError(where + ": missing clean file " + e.clean.string());
    if (!f[2].empty()) {
      e.noisy = resolve(base, f[2]);
      if (!std::filesystem::exists(*e.noisy)) throw DataError(where + ": missing noisy file " + e.noisy->string());
    } else if (require_noisy) {
      throw DataError(where + ": entry '" + e.id + "' has no noisy file");
    }
    e.snr_db = optional_number(f[3], where);
    e.sigma_true = optional_number(f[4], where);
    const auto seed = optional_number(f[5], where);
    e.seed = seed ? static_cast<std::uint64_t>(*seed) : 0;
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  const std::filesystem::path base = std::filesystem::absolute(path).parent_path();
  io::CsvWriter csv(path, io::split_csv_line(kManifestHeader));
  for (const auto& e : manifest.entries) {
    csv.cell(e.id).cell(relative_to(std::filesystem::absolute(e.clean), base));
    csv.cell(e.noisy ? relative_to(std::filesystem::absolute(*e.noisy), base) : std::string());
    csv.cell(e.snr_db ? io::format_double(*e.snr_db) : std::string());
    csv.cell(e.sigma_true ? io::format_double(*e.sigma_true) : std::string());
    csv.cell(std::to_string(e.seed));
    csv.end_row();
  }
  csv.close();
}

}  // namespace se::cli
