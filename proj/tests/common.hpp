#pragma once

#include <filesystem>
#include <memory>

#include "ep/collision.hpp"
#include "ep/fluid.hpp"

#ifndef EP_TEST_CACHE
#define EP_TEST_CACHE ""
#endif

// Default-grid collision tables shared by every test, cached in the build tree.
inline std::shared_ptr<const ep::Collision> test_collision() {
  static const auto col = [] {
    ep::CollisionConfig cfg;
    cfg.cache_dir = EP_TEST_CACHE;
    return ep::Collision::build_or_load(cfg);
  }();
  return col;
}

inline const ep::AijResult& test_aij() {
  static const ep::AijResult a = test_collision()->solve_Aij();
  return a;
}
