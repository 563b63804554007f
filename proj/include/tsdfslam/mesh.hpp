#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "tsdfslam/image.hpp"
#include "tsdfslam/tsdf_volume.hpp"

namespace tsdfslam {

// Indexed triangle mesh with per-vertex colors. Positions are stored in
// single precision so PLY snapshots round-trip bit-exactly.
struct Mesh {
    std::vector<Eigen::Vector3f> vertices;
    std::vector<Rgb8> colors;  // one per vertex
    std::vector<Eigen::Vector3i> faces;
};

// Marching cubes over the zero level set. Cells participate only when all
// eight corners have weight >= min_weight; vertices on shared cell edges are
// emitted once. Triangles are wound so their normals point toward positive
// distance (outward, into free space). Runs per block in parallel, merged in
// sorted block order, so the output is independent of the thread count.
Mesh ExtractMesh(const TsdfVolume& volume, int min_weight = 2, int threads = 1);

// Binary little-endian PLY with float x/y/z, uchar red/green/blue per vertex
// (colors omitted when the mesh has none) and uchar-counted int index lists.
void WritePly(const std::string& path, const Mesh& mesh);
Mesh ReadPly(const std::string& path);

void WritePointCloudPly(const std::string& path, const std::vector<Eigen::Vector3f>& points);

}  // namespace tsdfslam
