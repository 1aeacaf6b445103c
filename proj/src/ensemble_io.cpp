#include "ppde/ensemble_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ppde/errors.hpp"

namespace ppde {

namespace {

void put_le(std::ofstream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_le(std::ifstream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw ValidationError("ensemble", "truncated binary dump");
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

MeasureKind kind_from_string(const std::string& s) {
  for (auto k : {MeasureKind::base, MeasureKind::drifted, MeasureKind::conditional,
                 MeasureKind::tree, MeasureKind::external})
    if (to_string(k) == s) return k;
  throw ValidationError("measure", "unknown measure kind '" + s + "'");
}

}  // namespace

nlohmann::json ensemble_metadata(const PathEnsemble& e) {
  return {
      {"format", "columnar-f64le"},
      {"grid", {{"T", e.grid().horizon()}, {"n", e.steps()}}},
      {"dim", e.dim()},
      {"N", e.size()},
      {"seed", e.seed()},
      {"measure",
       {{"kind", to_string(e.tag().kind)},
        {"detail", e.tag().detail},
        {"prefix_index", e.tag().prefix_index}}},
      {"columns",
       {{"paths", (e.steps() + 1) * e.dim()},
        {"weights", 1},
        {"increments", e.has_increments() ? e.steps() * e.dim() : 0}}},
      {"column_order", "index-major, component-minor"},
      {"first_random_step", e.first_random_step()},
  };
}

void write_ensemble(const PathEnsemble& e, const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  auto meta = stem;
  meta += ".json";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw ValidationError("output", "cannot open " + bin.string());
  const std::size_t n = e.steps(), d = e.dim(), N = e.size();
  for (std::size_t i = 0; i <= n; ++i)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t k = 0; k < N; ++k) put_le(out, e.path(k)(i, c));
  for (std::size_t k = 0; k < N; ++k) put_le(out, e.weight(k));
  if (e.has_increments())
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t k = 0; k < N; ++k) put_le(out, e.increment(k, i)[c]);
  std::ofstream(meta) << ensemble_metadata(e).dump(2) << "\n";
}

PathEnsemble read_ensemble(const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  auto meta_path = stem;
  meta_path += ".json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw ValidationError("input", "cannot open " + meta_path.string());
  const auto meta = nlohmann::json::parse(meta_in);
  const TimeGrid grid(meta.at("grid").at("T").get<double>(),
                      meta.at("grid").at("n").get<std::size_t>());
  const auto d = meta.at("dim").get<std::size_t>();
  const auto N = meta.at("N").get<std::size_t>();
  const std::size_t n = grid.steps();

  std::ifstream in(bin, std::ios::binary);
  if (!in) throw ValidationError("input", "cannot open " + bin.string());
  std::vector<double> values(N * (n + 1) * d);
  for (std::size_t i = 0; i <= n; ++i)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t k = 0; k < N; ++k) values[(k * (n + 1) + i) * d + c] = get_le(in);
  std::vector<double> weights(N);
  for (auto& w : weights) w = get_le(in);
  std::vector<double> increments;
  if (meta.at("columns").at("increments").get<std::size_t>() > 0) {
    increments.resize(N * n * d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t k = 0; k < N; ++k) increments[(k * n + i) * d + c] = get_le(in);
  }
  MeasureTag tag{kind_from_string(meta.at("measure").at("kind").get<std::string>()),
                 meta.at("measure").at("detail").get<std::string>(),
                 meta.at("measure").at("prefix_index").get<std::size_t>()};
  return {grid, d, N, std::move(values), std::move(weights), meta.at("seed").get<std::uint64_t>(),
          std::move(tag), std::move(increments), meta.at("first_random_step").get<std::size_t>()};
}

}  // namespace ppde
