#include "gunet/group.hpp"

#include <map>
#include <mutex>

namespace gunet {

GroupSpec GroupSpec::from_name(const std::string& name) {
  if (name == "p1") return p1();
  if (name == "p4") return p4();
  if (name == "p4m") return p4m();
  throw ConfigError("unknown group '" + name + "' (expected p1, p4 or p4m)");
}

void validate_element(GroupElement g, GroupSpec spec) {
  if (g.mirror < 0 || g.mirror > 1 || g.rotation < 0 || g.rotation > 3) {
    throw InvalidElementError("group element out of range (m=" + std::to_string(g.mirror) +
                              ", r=" + std::to_string(g.rotation) + ")");
  }
  switch (spec.kind) {
    case GroupKind::p1:
      if (g.mirror != 0 || g.rotation != 0) {
        throw InvalidElementError("p1 admits only the identity element");
      }
      break;
    case GroupKind::p4:
      if (g.mirror != 0) {
        throw InvalidElementError("p4 has no mirrored elements");
      }
      break;
    case GroupKind::p4m:
      break;
  }
}

std::vector<GroupElement> group_elements(GroupSpec spec) {
  std::vector<GroupElement> out;
  out.reserve(static_cast<std::size_t>(spec.stabilizer_size()));
  int mirrors = spec.kind == GroupKind::p4m ? 2 : 1;
  int rotations = spec.kind == GroupKind::p1 ? 1 : 4;
  for (int m = 0; m < mirrors; ++m) {
    for (int r = 0; r < rotations; ++r) {
      out.push_back({m, r});
    }
  }
  return out;
}

int element_index(GroupElement g, GroupSpec spec) {
  validate_element(g, spec);
  return g.mirror * 4 + g.rotation;
}

GroupElement element_at(int index, GroupSpec spec) {
  if (index < 0 || index >= spec.stabilizer_size()) {
    throw InvalidElementError("orientation index " + std::to_string(index) + " out of range for " +
                              spec.name());
  }
  return {index / 4, index % 4};
}

GroupElement compose(GroupElement g1, GroupElement g2, GroupSpec spec) {
  validate_element(g1, spec);
  validate_element(g2, spec);
  int mirror = g1.mirror ^ g2.mirror;
  int r1 = g2.mirror ? -g1.rotation : g1.rotation;
  int rotation = ((r1 + g2.rotation) % 4 + 4) % 4;
  return {mirror, rotation};
}

GroupElement inverse(GroupElement g, GroupSpec spec) {
  validate_element(g, spec);
  if (g.mirror) return g;  // mirrored elements are involutions
  return {0, (4 - g.rotation) % 4};
}

Coord act_on_coords(GroupElement g, Coord p, std::int64_t h, std::int64_t w) {
  if (p.row < 0 || p.row >= h || p.col < 0 || p.col >= w) {
    throw ShapeError("act_on_coords: point outside extent");
  }
  if (g.rotation % 2 != 0 && h != w) {
    throw ShapeError("quarter-turn rotation requires a square extent");
  }
  std::int64_t i = p.row, j = p.col;
  for (int t = 0; t < g.rotation; ++t) {
    std::int64_t ni = j;
    std::int64_t nj = w - 1 - i;
    i = ni;
    j = nj;
  }
  if (g.mirror) j = w - 1 - j;
  return {i, j};
}

IndexTable build_index_table(GroupSpec spec, int kernel_size) {
  if (kernel_size <= 0 || kernel_size % 2 == 0) {
    throw ShapeError("index table kernel size must be odd and positive");
  }
  const int S = spec.stabilizer_size();
  const std::int64_t k = kernel_size;
  IndexTable table;
  table.group = spec;
  table.kernel_size = kernel_size;
  table.planar.resize(static_cast<std::size_t>(S));
  table.full.resize(static_cast<std::size_t>(S));
  auto elems = group_elements(spec);
  for (int so = 0; so < S; ++so) {
    GroupElement inv_out = inverse(elems[static_cast<std::size_t>(so)], spec);
    auto& planar_row = table.planar[static_cast<std::size_t>(so)];
    planar_row.resize(static_cast<std::size_t>(k * k));
    for (std::int64_t i = 0; i < k; ++i) {
      for (std::int64_t j = 0; j < k; ++j) {
        Coord src = act_on_coords(inv_out, {i, j}, k, k);
        planar_row[static_cast<std::size_t>(i * k + j)] =
            static_cast<std::int32_t>(src.row * k + src.col);
      }
    }
    auto& full_row = table.full[static_cast<std::size_t>(so)];
    full_row.resize(static_cast<std::size_t>(S) * static_cast<std::size_t>(k * k));
    for (int si = 0; si < S; ++si) {
      int src_orient = element_index(compose(inv_out, elems[static_cast<std::size_t>(si)], spec), spec);
      for (std::int64_t t = 0; t < k * k; ++t) {
        full_row[static_cast<std::size_t>(si * k * k + t)] =
            static_cast<std::int32_t>(src_orient * k * k + planar_row[static_cast<std::size_t>(t)]);
      }
    }
  }
  return table;
}

std::shared_ptr<const IndexTable> shared_index_table(GroupSpec spec, int kernel_size) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const IndexTable>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(static_cast<int>(spec.kind), kernel_size);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto table = std::make_shared<const IndexTable>(build_index_table(spec, kernel_size));
  cache.emplace(key, table);
  return table;
}

}  // namespace gunet
