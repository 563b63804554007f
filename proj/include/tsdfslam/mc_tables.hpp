#pragma once

namespace tsdfslam {

extern const int kMcEdgeTable[256];
extern const int kMcTriTable[256][16];

}  // namespace tsdfslam
