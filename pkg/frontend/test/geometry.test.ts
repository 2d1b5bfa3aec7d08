import { describe, expect, it } from "vitest";

import {
  canvasToImage,
  dragToNormalizedBox,
  imageToCanvas,
  isValidNormalizedBox,
  normalizedToCanvasRect,
  type Viewport,
} from "../src/geometry.js";

function view(
  scale: number,
  imageWidth: number,
  imageHeight: number,
  offsetX = 0,
  offsetY = 0,
): Viewport {
  return { scale, offsetX, offsetY, imageWidth, imageHeight };
}

describe("dragToNormalizedBox", () => {
  it("scales a drag on a half-size rendering of a 2000x2000 image", () => {
    // 1000x1000 canvas rendering of a 2000x2000 image: scale 0.5
    const v = view(0.5, 2000, 2000);
    const box = dragToNormalizedBox({ x: 100, y: 100 }, { x: 200, y: 200 }, v);
    expect(box).not.toBeNull();
    expect(box!.x_min).toBeCloseTo(0.1, 10);
    expect(box!.y_min).toBeCloseTo(0.1, 10);
    expect(box!.x_max).toBeCloseTo(0.2, 10);
    expect(box!.y_max).toBeCloseTo(0.2, 10);
  });

  it("discards zero-motion drags", () => {
    const v = view(1, 100, 100);
    expect(dragToNormalizedBox({ x: 10, y: 10 }, { x: 10, y: 10 }, v)).toBeNull();
  });

  it("discards drags under 4 square canvas pixels", () => {
    const v = view(1, 100, 100);
    expect(dragToNormalizedBox({ x: 10, y: 10 }, { x: 11, y: 13 }, v)).toBeNull();
    expect(dragToNormalizedBox({ x: 10, y: 10 }, { x: 12, y: 12 }, v)).not.toBeNull();
  });

  it("reorders right-to-left drags so min < max", () => {
    const v = view(1, 100, 100);
    const box = dragToNormalizedBox({ x: 80, y: 70 }, { x: 20, y: 10 }, v);
    expect(box).not.toBeNull();
    expect(box!.x_min).toBeLessThan(box!.x_max);
    expect(box!.y_min).toBeLessThan(box!.y_max);
    expect(isValidNormalizedBox(box!)).toBe(true);
  });

  it("clamps drags that leave the image", () => {
    const v = view(1, 100, 100, 10, 10); // image sits at offset (10, 10)
    const box = dragToNormalizedBox({ x: 0, y: 0 }, { x: 60, y: 60 }, v);
    expect(box).not.toBeNull();
    expect(box!.x_min).toBe(0);
    expect(box!.y_min).toBe(0);
    expect(box!.x_max).toBeCloseTo(0.5, 10);
  });
});

describe("round trips", () => {
  it("canvas -> image -> canvas is the identity", () => {
    const v = view(0.37, 640, 480, 12.5, -3.25);
    const p = { x: 123.4, y: 56.7 };
    const back = imageToCanvas(canvasToImage(p, v), v);
    expect(back.x).toBeCloseTo(p.x, 9);
    expect(back.y).toBeCloseTo(p.y, 9);
  });

  it("drag -> normalized -> canvas rect stays within half a pixel at any zoom", () => {
    // deterministic pseudo-random cases across zoom levels from 5% to 800%
    let seed = 42;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) % 2147483648;
      return seed / 2147483648;
    };
    for (let i = 0; i < 500; i++) {
      const zoomScale = 0.05 + rand() * 7.95;
      const v = view(
        zoomScale,
        Math.floor(100 + rand() * 3900),
        Math.floor(100 + rand() * 3900),
        rand() * 200 - 100,
        rand() * 200 - 100,
      );
      const maxX = v.imageWidth * v.scale + v.offsetX;
      const maxY = v.imageHeight * v.scale + v.offsetY;
      const x0 = v.offsetX + rand() * (maxX - v.offsetX) * 0.8;
      const y0 = v.offsetY + rand() * (maxY - v.offsetY) * 0.8;
      const x1 = Math.min(x0 + 3 + rand() * 50, maxX);
      const y1 = Math.min(y0 + 3 + rand() * 50, maxY);
      const box = dragToNormalizedBox({ x: x0, y: y0 }, { x: x1, y: y1 }, v);
      if (box === null) {
        continue; // degenerate after clamping; nothing to check
      }
      const rect = normalizedToCanvasRect(box, v);
      expect(Math.abs(rect.left - x0)).toBeLessThanOrEqual(0.5);
      expect(Math.abs(rect.top - y0)).toBeLessThanOrEqual(0.5);
      expect(Math.abs(rect.left + rect.width - x1)).toBeLessThanOrEqual(0.5);
      expect(Math.abs(rect.top + rect.height - y1)).toBeLessThanOrEqual(0.5);
    }
  });

  it("normalized coordinates survive the api json encoding within 1e-6", () => {
    const v = view(0.73, 1234, 987, 4, 9);
    const box = dragToNormalizedBox({ x: 50.3, y: 60.9 }, { x: 200.7, y: 180.1 }, v)!;
    const wire = JSON.parse(JSON.stringify(box));
    for (const key of ["x_min", "y_min", "x_max", "y_max"] as const) {
      expect(Math.abs(wire[key] - box[key])).toBeLessThanOrEqual(1e-6);
    }
  });
});
