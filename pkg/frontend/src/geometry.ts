/**
 * Box math between three coordinate frames:
 *  - canvas pixels (where drag gestures happen, zoom/pan applied),
 *  - image pixels (the stored raster),
 *  - normalized [0, 1] coordinates (what travels over the API).
 */

export interface NormalizedBox {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
}

export interface Point {
  x: number;
  y: number;
}

/** How the image is currently rendered into the canvas. */
export interface Viewport {
  /** canvas pixels per image pixel */
  scale: number;
  /** canvas position of the image's top-left corner */
  offsetX: number;
  offsetY: number;
  imageWidth: number;
  imageHeight: number;
}

/** Drags smaller than this many square canvas pixels are accidental clicks. */
export const MIN_DRAG_AREA_PX = 4;

export function canvasToImage(p: Point, view: Viewport): Point {
  return {
    x: (p.x - view.offsetX) / view.scale,
    y: (p.y - view.offsetY) / view.scale,
  };
}

export function imageToCanvas(p: Point, view: Viewport): Point {
  return {
    x: p.x * view.scale + view.offsetX,
    y: p.y * view.scale + view.offsetY,
  };
}

const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);

/**
 * Turn a drag gesture (canvas pixels) into a normalized box.
 *
 * Corners are reordered so x_min < x_max and y_min < y_max, coordinates are
 * clamped to the image, and degenerate drags (area under MIN_DRAG_AREA_PX
 * canvas px^2) return null and should be discarded silently.
 */
export function dragToNormalizedBox(
  start: Point,
  end: Point,
  view: Viewport,
): NormalizedBox | null {
  const areaPx = Math.abs(end.x - start.x) * Math.abs(end.y - start.y);
  if (areaPx < MIN_DRAG_AREA_PX) {
    return null;
  }
  const a = canvasToImage(start, view);
  const b = canvasToImage(end, view);
  const x0 = clamp(Math.min(a.x, b.x), 0, view.imageWidth);
  const x1 = clamp(Math.max(a.x, b.x), 0, view.imageWidth);
  const y0 = clamp(Math.min(a.y, b.y), 0, view.imageHeight);
  const y1 = clamp(Math.max(a.y, b.y), 0, view.imageHeight);
  if (x1 - x0 <= 0 || y1 - y0 <= 0) {
    return null;
  }
  return {
    x_min: x0 / view.imageWidth,
    y_min: y0 / view.imageHeight,
    x_max: x1 / view.imageWidth,
    y_max: y1 / view.imageHeight,
  };
}

/** Canvas-pixel rectangle for rendering a normalized box. */
export function normalizedToCanvasRect(
  box: NormalizedBox,
  view: Viewport,
): { left: number; top: number; width: number; height: number } {
  const tl = imageToCanvas(
    { x: box.x_min * view.imageWidth, y: box.y_min * view.imageHeight },
    view,
  );
  const br = imageToCanvas(
    { x: box.x_max * view.imageWidth, y: box.y_max * view.imageHeight },
    view,
  );
  return { left: tl.x, top: tl.y, width: br.x - tl.x, height: br.y - tl.y };
}

export function isValidNormalizedBox(box: NormalizedBox): boolean {
  return (
    box.x_min >= 0 && box.y_min >= 0 && box.x_max <= 1 && box.y_max <= 1 &&
    box.x_min < box.x_max && box.y_min < box.y_max
  );
}
