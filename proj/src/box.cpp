#include "sodetr/box.hpp"

namespace sodetr {

namespace {

// Marks which of `grid` cells along [lo, lo + grid * cell) have centers in [b0, b1].
std::vector<char> cover(double lo, double cell, int grid, double b0, double b1) {
  std::vector<char> inside(static_cast<std::size_t>(grid));
  for (int i = 0; i < grid; ++i) {
    const double c = lo + (i + 0.5) * cell;
    inside[static_cast<std::size_t>(i)] = c >= b0 && c <= b1;
  }
  return inside;
}

}  // namespace

double raster_iou_oracle(const BoxD& a, const BoxD& b, int grid) {
  validate(a);
  validate(b);
  if (grid < 1) throw GeometryError("raster grid must be positive");
  const double x0 = std::min(a.x1(), b.x1()), x1 = std::max(a.x2(), b.x2());
  const double y0 = std::min(a.y1(), b.y1()), y1 = std::max(a.y2(), b.y2());
  const double cw = (x1 - x0) / grid, ch = (y1 - y0) / grid;
  const auto ax = cover(x0, cw, grid, a.x1(), a.x2()), bx = cover(x0, cw, grid, b.x1(), b.x2());
  const auto ay = cover(y0, ch, grid, a.y1(), a.y2()), by = cover(y0, ch, grid, b.y1(), b.y2());
  // Axis-aligned boxes: a cell is inside iff its column and its row are.
  long long nax = 0, nbx = 0, nix = 0, nay = 0, nby = 0, niy = 0;
  for (int i = 0; i < grid; ++i) {
    nax += ax[i];
    nbx += bx[i];
    nix += ax[i] && bx[i];
    nay += ay[i];
    nby += by[i];
    niy += ay[i] && by[i];
  }
  const double inter = double(nix) * double(niy);
  const double uni = double(nax) * double(nay) + double(nbx) * double(nby) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace sodetr
