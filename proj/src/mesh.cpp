#include "tsdfslam/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "tsdfslam/mc_tables.hpp"
#include "tsdfslam/parallel.hpp"

namespace tsdfslam {

namespace {

// Corner numbering of the lookup tables: 0..3 wind counterclockwise around
// the z=0 face starting at the cell origin, 4..7 the same on the z=1 face.
constexpr int kCornerOffset[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                     {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeEnds[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                  {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
// Global identity of each edge: axis it runs along plus the corner at its
// lower end, so that neighboring cells agree on shared vertices.
constexpr int kEdgeAxis[12] = {0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2};
constexpr int kEdgeLowCorner[12] = {0, 1, 3, 0, 4, 5, 7, 4, 0, 1, 2, 3};

std::uint64_t EdgeKey(const Eigen::Vector3i& voxel, int axis) {
    constexpr std::uint64_t kBias = 1u << 20;  // supports +-10 km of volume
    const std::uint64_t x = (static_cast<std::uint64_t>(voxel.x() + kBias)) & 0x1FFFFF;
    const std::uint64_t y = (static_cast<std::uint64_t>(voxel.y() + kBias)) & 0x1FFFFF;
    const std::uint64_t z = (static_cast<std::uint64_t>(voxel.z() + kBias)) & 0x1FFFFF;
    return (((z << 21 | y) << 21) | x) << 2 | static_cast<std::uint64_t>(axis);
}

struct BlockMesh {
    std::vector<std::uint64_t> vertex_keys;
    std::vector<Eigen::Vector3f> vertices;
    std::vector<Rgb8> colors;
    std::vector<Eigen::Vector3i> faces;  // local indices
};

float LerpChannel(std::uint8_t a, std::uint8_t b, double t) {
    return static_cast<float>(a + (static_cast<double>(b) - a) * t);
}

BlockMesh ExtractBlock(const TsdfVolume& volume, const VoxelBlock& block, int min_weight) {
    const int side = volume.config().block_side;
    BlockMesh out;
    std::unordered_map<std::uint64_t, int> local;
    const Voxel* corners[8];
    double sdf[8];
    const Eigen::Vector3i block_base = block.coord * side;
    for (int z = 0; z < side; ++z) {
        for (int y = 0; y < side; ++y) {
            for (int x = 0; x < side; ++x) {
                const Eigen::Vector3i base = block_base + Eigen::Vector3i(x, y, z);
                bool complete = true;
                for (int k = 0; k < 8 && complete; ++k) {
                    const Eigen::Vector3i vc = base + Eigen::Vector3i(kCornerOffset[k][0],
                                                                      kCornerOffset[k][1],
                                                                      kCornerOffset[k][2]);
                    const Voxel* v;
                    if (vc.x() < block_base.x() + side && vc.y() < block_base.y() + side &&
                        vc.z() < block_base.z() + side) {
                        const Eigen::Vector3i l = vc - block_base;
                        v = &block.voxels[(static_cast<std::size_t>(l.z()) * side + l.y()) * side +
                                          l.x()];
                    } else {
                        v = volume.VoxelHandle(vc);
                    }
                    if (!v || v->weight < min_weight) {
                        complete = false;
                        break;
                    }
                    corners[k] = v;
                    sdf[k] = static_cast<double>(v->sdf);
                }
                if (!complete) continue;
                int cube = 0;
                for (int k = 0; k < 8; ++k) {
                    if (sdf[k] < 0.0) cube |= 1 << k;
                }
                if (kMcEdgeTable[cube] == 0) continue;
                int edge_vertex[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(kMcEdgeTable[cube] & (1 << e))) continue;
                    const Eigen::Vector3i low =
                        base + Eigen::Vector3i(kCornerOffset[kEdgeLowCorner[e]][0],
                                               kCornerOffset[kEdgeLowCorner[e]][1],
                                               kCornerOffset[kEdgeLowCorner[e]][2]);
                    const std::uint64_t key = EdgeKey(low, kEdgeAxis[e]);
                    const auto found = local.find(key);
                    if (found != local.end()) {
                        edge_vertex[e] = found->second;
                        continue;
                    }
                    // Interpolate in canonical (lower-to-upper) direction so
                    // both adjacent cells compute the identical vertex.
                    int a = kEdgeEnds[e][0];
                    int b = kEdgeEnds[e][1];
                    if (kCornerOffset[a][kEdgeAxis[e]] > kCornerOffset[b][kEdgeAxis[e]]) {
                        std::swap(a, b);
                    }
                    const double denom = sdf[b] - sdf[a];
                    const double t =
                        std::abs(denom) < 1e-12 ? 0.5 : std::clamp(-sdf[a] / denom, 0.0, 1.0);
                    const Eigen::Vector3d pa = volume.VoxelCenter(
                        base + Eigen::Vector3i(kCornerOffset[a][0], kCornerOffset[a][1],
                                               kCornerOffset[a][2]));
                    Eigen::Vector3d p = pa;
                    p[kEdgeAxis[e]] += t * volume.config().voxel_size;
                    const int idx = static_cast<int>(out.vertices.size());
                    out.vertex_keys.push_back(key);
                    out.vertices.push_back(p.cast<float>());
                    out.colors.push_back(Rgb8{
                        static_cast<std::uint8_t>(
                            std::lround(LerpChannel(corners[a]->r, corners[b]->r, t))),
                        static_cast<std::uint8_t>(
                            std::lround(LerpChannel(corners[a]->g, corners[b]->g, t))),
                        static_cast<std::uint8_t>(
                            std::lround(LerpChannel(corners[a]->b, corners[b]->b, t)))});
                    local.emplace(key, idx);
                    edge_vertex[e] = idx;
                }
                for (const int* tri = kMcTriTable[cube]; *tri != -1; tri += 3) {
                    // Table winding faces the negative side; flip so normals
                    // point toward positive distance (free space).
                    const int i0 = edge_vertex[tri[0]];
                    const int i1 = edge_vertex[tri[2]];
                    const int i2 = edge_vertex[tri[1]];
                    if (i0 == i1 || i1 == i2 || i0 == i2) continue;
                    const Eigen::Vector3f e1 = out.vertices[i1] - out.vertices[i0];
                    const Eigen::Vector3f e2 = out.vertices[i2] - out.vertices[i0];
                    if (0.5 * e1.cross(e2).cast<double>().norm() <= 1e-12) continue;
                    out.faces.emplace_back(i0, i1, i2);
                }
            }
        }
    }
    return out;
}

}  // namespace

Mesh ExtractMesh(const TsdfVolume& volume, int min_weight, int threads) {
    const std::vector<VoxelBlock>& blocks = volume.blocks();
    std::vector<std::size_t> order(blocks.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Eigen::Vector3i& ca = blocks[a].coord;
        const Eigen::Vector3i& cb = blocks[b].coord;
        return std::tie(ca.x(), ca.y(), ca.z()) < std::tie(cb.x(), cb.y(), cb.z());
    });

    std::vector<BlockMesh> parts(blocks.size());
    ParallelFor(order.size(), threads,
                [&](std::size_t i) { parts[i] = ExtractBlock(volume, blocks[order[i]], min_weight); });

    Mesh mesh;
    std::unordered_map<std::uint64_t, int> global;
    for (const BlockMesh& part : parts) {
        std::vector<int> remap(part.vertices.size());
        for (std::size_t i = 0; i < part.vertices.size(); ++i) {
            const auto [it, inserted] =
                global.emplace(part.vertex_keys[i], static_cast<int>(mesh.vertices.size()));
            if (inserted) {
                mesh.vertices.push_back(part.vertices[i]);
                mesh.colors.push_back(part.colors[i]);
            }
            remap[i] = it->second;
        }
        for (const Eigen::Vector3i& f : part.faces) {
            mesh.faces.emplace_back(remap[f.x()], remap[f.y()], remap[f.z()]);
        }
    }
    return mesh;
}

namespace {

template <typename T>
void WriteRaw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void WritePly(const std::string& path, const Mesh& mesh) {
    if (!mesh.colors.empty() && mesh.colors.size() != mesh.vertices.size()) {
        throw std::invalid_argument("color count does not match vertex count");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const bool colored = !mesh.colors.empty();
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    if (colored) {
        out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    out << "element face " << mesh.faces.size() << "\n";
    out << "property list uchar int vertex_indices\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        WriteRaw(out, mesh.vertices[i].x());
        WriteRaw(out, mesh.vertices[i].y());
        WriteRaw(out, mesh.vertices[i].z());
        if (colored) {
            WriteRaw(out, mesh.colors[i].r);
            WriteRaw(out, mesh.colors[i].g);
            WriteRaw(out, mesh.colors[i].b);
        }
    }
    for (const Eigen::Vector3i& f : mesh.faces) {
        WriteRaw(out, static_cast<std::uint8_t>(3));
        WriteRaw(out, static_cast<std::int32_t>(f.x()));
        WriteRaw(out, static_cast<std::int32_t>(f.y()));
        WriteRaw(out, static_cast<std::int32_t>(f.z()));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void WritePointCloudPly(const std::string& path, const std::vector<Eigen::Vector3f>& points) {
    Mesh cloud;
    cloud.vertices = points;
    WritePly(path, cloud);
}

Mesh ReadPly(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open PLY: " + path);
    std::string line;
    std::getline(in, line);
    if (line != "ply") throw std::runtime_error("not a PLY file: " + path);
    std::size_t vertex_count = 0, face_count = 0;
    bool colored = false;
    bool binary = false;
    std::string current_element;
    std::vector<std::string> vertex_props;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "comment") continue;
        if (word == "format") {
            ls >> word;
            if (word == "binary_little_endian") {
                binary = true;
            } else if (word != "ascii") {
                throw std::runtime_error("unsupported PLY format in " + path);
            }
        } else if (word == "element") {
            std::size_t count = 0;
            ls >> current_element >> count;
            if (current_element == "vertex") {
                vertex_count = count;
            } else if (current_element == "face") {
                face_count = count;
            } else {
                throw std::runtime_error("unsupported PLY element in " + path);
            }
        } else if (word == "property") {
            if (current_element == "vertex") {
                std::string type, name;
                ls >> type >> name;
                vertex_props.push_back(type + " " + name);
            }
        } else if (word == "end_header") {
            break;
        }
    }
    const std::vector<std::string> plain = {"float x", "float y", "float z"};
    const std::vector<std::string> rgb = {"float x",    "float y",     "float z",
                                          "uchar red",  "uchar green", "uchar blue"};
    if (vertex_props == rgb) {
        colored = true;
    } else if (vertex_props != plain) {
        throw std::runtime_error("unsupported PLY vertex layout in " + path);
    }

    Mesh mesh;
    mesh.vertices.resize(vertex_count);
    if (colored) mesh.colors.resize(vertex_count);
    mesh.faces.reserve(face_count);
    if (binary) {
        for (std::size_t i = 0; i < vertex_count; ++i) {
            float xyz[3];
            in.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
            mesh.vertices[i] = Eigen::Vector3f(xyz[0], xyz[1], xyz[2]);
            if (colored) {
                std::uint8_t c[3];
                in.read(reinterpret_cast<char*>(c), 3);
                mesh.colors[i] = Rgb8{c[0], c[1], c[2]};
            }
        }
        for (std::size_t i = 0; i < face_count; ++i) {
            std::uint8_t n = 0;
            in.read(reinterpret_cast<char*>(&n), 1);
            if (n != 3) throw std::runtime_error("non-triangular PLY face in " + path);
            std::int32_t idx[3];
            in.read(reinterpret_cast<char*>(idx), sizeof(idx));
            mesh.faces.emplace_back(idx[0], idx[1], idx[2]);
        }
    } else {
        for (std::size_t i = 0; i < vertex_count; ++i) {
            float x, y, z;
            in >> x >> y >> z;
            mesh.vertices[i] = Eigen::Vector3f(x, y, z);
            if (colored) {
                int r, g, b;
                in >> r >> g >> b;
                mesh.colors[i] = Rgb8{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                      static_cast<std::uint8_t>(b)};
            }
        }
        for (std::size_t i = 0; i < face_count; ++i) {
            int n, a, b, c;
            in >> n >> a >> b >> c;
            if (n != 3) throw std::runtime_error("non-triangular PLY face in " + path);
            mesh.faces.emplace_back(a, b, c);
        }
    }
    if (!in) throw std::runtime_error("truncated PLY: " + path);
    return mesh;
}

}  // namespace tsdfslam
