#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "cmc/geometry.hpp"

namespace cmc {

// Directory format: header.json (geometry, role, dtype "f32le") next to
// data.raw (little-endian float32, row-major, slice-major). `extra` is stored
// under the header's "meta" key and returned by read_header().
void write_stack(const std::filesystem::path& dir, const SliceStack& stack,
                 const nlohmann::json& extra = nlohmann::json::object());
SliceStack read_stack(const std::filesystem::path& dir);

void write_volume(const std::filesystem::path& dir, const Volume& vol,
                  const nlohmann::json& extra = nlohmann::json::object());
Volume read_volume(const std::filesystem::path& dir);

// Single planar image stored as a one-slice stack.
void write_image(const std::filesystem::path& dir, const PlanarImage& img,
                 const nlohmann::json& extra = nlohmann::json::object());
PlanarImage read_image(const std::filesystem::path& dir);

nlohmann::json read_header(const std::filesystem::path& dir);

nlohmann::json pose_to_json(const PlanePose& pose);
PlanePose pose_from_json(const nlohmann::json& j);

// 8-bit binary PGM, min-max windowed.
void export_pgm(const std::filesystem::path& path, const PlanarImage& img);
// RGB PNG: grey intensity with the PSM's 0.5 iso-contour drawn in red.
void export_overlay_png(const std::filesystem::path& path, const PlanarImage& intensity,
                        const PlanarImage& psm);

std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes);
std::uint32_t file_crc32(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cmc
